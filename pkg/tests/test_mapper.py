import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmigrate.agent import MockBackend, PromptLibrary
from cmigrate.depgraph import build_schedule
from cmigrate.mapper import (
    AGENT,
    STATIC_EXACT,
    STATIC_NORMALIZED,
    FunctionMapping,
    MapperConfig,
    MappingTable,
    agent_match,
    map_all,
    normalize_name,
    static_match,
    static_search,
    validate_mapping,
)
from cmigrate.rustscan import RustIndex
from cmigrate.scanner import scan_repository

from mapper_corpus import corpus


def write_tree(root, files):
    for rel, text in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    return root


def _prompts():
    return PromptLibrary()


def map_step(c_path, name, payload, repeat=False):
    return {"match": {"role": "map", "prompt_contains": [f"C FUNCTION: {c_path}::{name}\n"]},
            "repeat": repeat, "actions": [{"action": "emit_text", "text": "Looking around."},
                                          {"action": "emit_json", "value": payload}]}


def test_normalize_examples():
    assert normalize_name("bitset_get") == "bitsetget"
    assert normalize_name("NFA-Get_Size") == "nfagetsize"
    assert normalize_name("len") == "len"


@given(st.from_regex(r"[A-Za-z][A-Za-z0-9_\-]{0,15}", fullmatch=True))
def test_normalize_is_idempotent(name):
    n = normalize_name(name)
    assert normalize_name(n) == n and "_" not in n and "-" not in n and n == n.lower()


def test_static_examples():
    index = RustIndex.from_sources({
        "src/bitset.rs": "pub fn bitset_get() {}\npub fn bitset_get_fast() {}\n",
        "src/nfa.rs": "pub struct Nfa;\nimpl Nfa {\n    pub fn len(&self) -> usize { 0 }\n}\n",
    })
    assert static_match("bitset_get", index) == ("src/bitset.rs", "bitset_get", STATIC_EXACT)
    assert static_match("nfa_get_size", index) is None
    only_fast = RustIndex.from_sources({"src/bitset.rs": "pub fn bitset_get_fast() {}\n"})
    assert static_match("bitset_get", only_fast) is None


def test_static_normalized_and_ambiguous():
    index = RustIndex.from_sources({"src/a.rs": "pub fn BitsetGet() {}\n"})
    assert static_match("bitset_get", index) == ("src/a.rs", "BitsetGet", STATIC_NORMALIZED)
    dup = RustIndex.from_sources({"src/a.rs": "pub fn init() {}\n", "src/b.rs": "pub fn init() {}\n"})
    assert static_search("init", dup) == (None, "ambiguous")
    # an exact hit outranks a normalized one
    both = RustIndex.from_sources({"src/a.rs": "pub fn Init() {}\n", "src/b.rs": "pub fn init() {}\n"})
    assert static_match("init", both) == ("src/b.rs", "init", STATIC_EXACT)


def test_test_functions_are_not_targets():
    index = RustIndex.from_sources({"src/a.rs": "#[cfg(test)]\nmod tests {\n    #[test]\n    fn gcd() {}\n}\n"})
    assert static_match("gcd", index) is None


@pytest.mark.parametrize("case", corpus(), ids=lambda c: c["query"])
def test_adversarial_tier1(case):
    index = RustIndex.from_sources(case["files"])
    hit = static_match(case["query"], index)
    assert hit == case["expected"]
    if hit is not None:
        assert hit[1] not in case["traps"]


def test_corpus_shape():
    cases = corpus()
    assert len(cases) >= 50
    assert all(len(c["traps"]) >= 3 for c in cases)
    assert {c["kind"] for c in cases} == {"exact", "normalized", "absent"}


@pytest.fixture
def roots(tmp_path):
    c_root = write_tree(tmp_path / "c", {"nfa.c": "int nfa_get_size(void){return 0;}\nvoid nfa_free(void){}\n",
                                         "bitset.c": "int bitset_get(void){return 0;}\nint bitset_cnt(void){return 0;}\n"})
    rs = write_tree(tmp_path / "rs", {
        "src/lib.rs": "pub mod nfa;\npub mod bitset;\n",
        "src/nfa.rs": "pub struct Nfa;\nimpl Nfa {\n    pub fn len(&self) -> usize { 0 }\n}\n",
        "src/bitset.rs": "pub fn bitset_get() -> i32 { 0 }\npub fn count_ones() -> u32 { 0 }\n",
    })
    return c_root, rs


def test_validate_mapping(roots):
    c_root, rs = roots
    (rs.parent / "outside.rs").write_text("pub fn len() {}\n")
    assert not validate_mapping(FunctionMapping("nfa.c", "x", "../outside.rs", "len", AGENT), c_root, rs)
    ok = FunctionMapping("nfa.c", "nfa_get_size", "src/nfa.rs", "len", AGENT)
    assert validate_mapping(ok, c_root, rs)
    assert not validate_mapping(FunctionMapping("nfa.c", "x", "src/nfa_hallucinated.rs", "len", AGENT), c_root, rs)
    # declared, but in a different file
    assert not validate_mapping(FunctionMapping("nfa.c", "x", "src/nfa.rs", "bitset_get", AGENT), c_root, rs)
    assert not validate_mapping(FunctionMapping("gone.c", "x", None, None, AGENT), c_root, rs)
    assert validate_mapping(FunctionMapping("nfa.c", "nfa_free", None, None, AGENT), c_root, rs)
    assert not validate_mapping(FunctionMapping("nfa.c", "nfa_free", "src/nfa.rs", None, AGENT), c_root, rs)


def test_agent_match_method(roots):
    c_root, rs = roots
    agent = MockBackend.from_json([map_step("nfa.c", "nfa_get_size", {"rust_module": "src/nfa.rs", "rust_function": "Nfa::len"})])
    m = agent_match("int nfa_get_size(void)", "nfa.c", "nfa_get_size", c_root, rs, agent, _prompts(), MapperConfig())
    assert (m.rust_module, m.rust_function, m.tier, m.validated) == ("src/nfa.rs", "len", AGENT, True)


def test_agent_match_null(roots):
    c_root, rs = roots
    agent = MockBackend.from_json([map_step("nfa.c", "nfa_free", {"rust_module": None, "rust_function": None})])
    m = agent_match("void nfa_free(void)", "nfa.c", "nfa_free", c_root, rs, agent, _prompts(), MapperConfig())
    assert m.is_null and m.validated and m.tier == AGENT


def test_agent_match_exhausted(roots):
    c_root, rs = roots
    bad = {"rust_module": "src/nfa.rs", "rust_function": "size_of_nfa"}
    agent = MockBackend.from_json([map_step("nfa.c", "nfa_get_size", bad), map_step("nfa.c", "nfa_get_size", bad)])
    m = agent_match("int nfa_get_size(void)", "nfa.c", "nfa_get_size", c_root, rs, agent, _prompts(), MapperConfig(2))
    assert m.reason == "exhausted"
    assert agent.count("map") == 2
    # the retry prompt carries the rejection reason
    assert "rejected" in agent.calls[1][1]


def test_agent_match_recovers_after_garbage(roots):
    c_root, rs = roots
    agent = MockBackend.from_json([
        {"match": {"role": "map"}, "actions": [{"action": "emit_text", "text": "I think it's len"}]},
        map_step("nfa.c", "nfa_get_size", {"rust_module": "src/nfa.rs", "rust_function": "len"}),
    ])
    m = agent_match("int nfa_get_size(void)", "nfa.c", "nfa_get_size", c_root, rs, agent, _prompts(), MapperConfig())
    assert m.validated and agent.count("map") == 2


def test_agent_match_backend_error(roots):
    c_root, rs = roots
    agent = MockBackend.from_json([{"match": {"role": "map"}, "exit": 1, "actions": []}])
    m = agent_match("int f(void)", "nfa.c", "nfa_get_size", c_root, rs, agent, _prompts(), MapperConfig())
    assert m.reason == "backend_error"


@pytest.mark.parametrize("case", corpus()[:50], ids=lambda c: c["query"])
def test_hallucinations_rejected(case, tmp_path):
    c_root = write_tree(tmp_path / "c", {"q.c": f"int {case['query']}(void){{return 0;}}\n"})
    rs = write_tree(tmp_path / "rs", case["files"])
    steps = [map_step("q.c", case["query"], h) for h in case["hallucinations"]]
    agent = MockBackend.from_json(steps)
    m = agent_match("int q(void)", "q.c", case["query"], c_root, rs, agent, _prompts(),
                    MapperConfig(len(steps)))
    assert getattr(m, "reason", None) == "exhausted"
    assert agent.count("map") == len(steps)


def test_map_all_agent_calls(roots):
    c_root, rs = roots
    model = scan_repository(c_root)
    schedule = build_schedule(model)
    agent = MockBackend.from_json([
        map_step("nfa.c", "nfa_get_size", {"rust_module": "src/nfa.rs", "rust_function": "len"}),
        map_step("nfa.c", "nfa_free", {"rust_module": None, "rust_function": None}),
        map_step("bitset.c", "bitset_cnt", {"rust_module": "src/bitset.rs", "rust_function": "count_ones"}),
    ])
    table = map_all(schedule, model, c_root, rs, agent, _prompts(), MapperConfig())
    # hand-built expected table: one static hit, one method lift, one rename, one null
    got = {(e.c_function, e.rust_module, e.rust_function, e.tier) for e in table.entries}
    assert got == {
        ("bitset_get", "src/bitset.rs", "bitset_get", STATIC_EXACT),
        ("bitset_cnt", "src/bitset.rs", "count_ones", AGENT),
        ("nfa_get_size", "src/nfa.rs", "len", AGENT),
        ("nfa_free", None, None, AGENT),
    }
    assert agent.count("map") == 3
    assert table.unresolved == []
    again = MappingTable.from_dict(json.loads(table.to_json()))
    assert again.content_hash() == table.content_hash()
    # every committed target is findable by the exact search scoped to its module
    index = RustIndex(rs)
    for e in table.entries:
        if not e.is_null:
            assert index.files[e.rust_module].find(e.rust_function)


def test_map_all_static_only(roots):
    c_root, rs = roots
    model = scan_repository(c_root)
    table = map_all(build_schedule(model), model, c_root, rs, None, use_agent=False)
    assert [e.c_function for e in table.entries] == ["bitset_get"]
    assert {u.reason for u in table.unresolved} == {"not_found"}


def test_map_all_duplicate_target(tmp_path):
    c_root = write_tree(tmp_path / "c", {"a.c": "int a(void){return 0;}\nint b(void){return 0;}\n"})
    rs = write_tree(tmp_path / "rs", {"src/lib.rs": "pub fn a() -> i32 { 0 }\n"})
    model = scan_repository(c_root)
    agent = MockBackend.from_json([map_step("a.c", "b", {"rust_module": "src/lib.rs", "rust_function": "a"})])
    table = map_all(build_schedule(model), model, c_root, rs, agent, _prompts(), MapperConfig())
    assert [u.reason for u in table.unresolved] == ["duplicate_target"]
