import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmigrate.errors import DuplicateDefinition, EmptyRepository
from cmigrate.lexing import mask_c
from cmigrate.scanner import (
    MACRO_WRAPPED,
    STANDARD,
    STATIC_INLINE,
    ScanConfig,
    count_lines,
    detect_test_functions,
    extract_call_sites,
    extract_functions,
    extract_includes,
    make_source_file,
    scan_repository,
    scan_sources,
    slice_lines,
)


def test_minimal_repository(tmp_path):
    (tmp_path / "a.c").write_text("int f(void){return 0;}\n")
    model = scan_repository(tmp_path)
    assert len(model.files) == 1
    assert len(model.functions) == 1
    fn = model.functions[0]
    assert (fn.name, fn.flavor, fn.call_sites) == ("f", STANDARD, frozenset())


def test_cross_file_call_site():
    model = scan_sources({"util.c": "int g(int x){return x;}\n", "main.c": "int f(void){ g(1); return 0; }\n"})
    f = next(fn for fn in model.functions if fn.name == "f")
    assert f.call_sites == {"g"}


def test_empty_repository(tmp_path):
    (tmp_path / "README").write_text("nothing here")
    with pytest.raises(EmptyRepository):
        scan_repository(tmp_path)


def test_ignore_globs(tmp_path):
    (tmp_path / "vendor").mkdir()
    (tmp_path / "vendor" / "x.c").write_text("int x(void){return 1;}\n")
    (tmp_path / "a.c").write_text("int a(void){return 1;}\n")
    model = scan_repository(tmp_path, ScanConfig(ignore_globs=["vendor/*"]))
    assert [f.path for f in model.files] == ["a.c"]


def test_static_inline_in_header():
    f = make_source_file("m.h", "static inline int max2(int a,int b){return a>b?a:b;}\n")
    nodes = extract_functions(f)
    assert len(nodes) == 1 and nodes[0].flavor == STATIC_INLINE


def test_prototype_is_not_a_definition():
    assert extract_functions(make_source_file("p.h", "int f(void);\n")) == []


def test_wrapper_macro():
    f = make_source_file("w.c", "int EXPORT(init)(void){return 1;}\n")
    nodes = extract_functions(f, ScanConfig(wrapper_macros=["EXPORT"]))
    assert [(n.name, n.flavor) for n in nodes] == [("init", MACRO_WRAPPED)]
    # without the allowlist entry nothing is invented
    assert [n.name for n in extract_functions(f)] != ["init"]


def test_test_macro_wrapper_form():
    f = make_source_file("t_test.c", "TEST(push_pop) {\n  check(1);\n}\n")
    nodes = extract_functions(f, ScanConfig(wrapper_macros=["TEST"]))
    assert [(n.name, n.flavor) for n in nodes] == [("push_pop", MACRO_WRAPPED)]


def test_extern_c_block_is_transparent():
    text = 'extern "C" {\nint f(void) { return g(); }\n}\n'
    assert [n.name for n in extract_functions(make_source_file("x.c", text))] == ["f"]


def test_struct_and_initializer_are_not_functions():
    text = "struct P { int x; };\nint arr[] = { 1, 2 };\nint f(void) { return 0; }\n"
    assert [n.name for n in extract_functions(make_source_file("x.c", text))] == ["f"]


def test_unbalanced_braces_diagnostic():
    diags = []
    nodes = extract_functions(make_source_file("bad.c", "int f(void) { if (1) { return 0; }\n"), diagnostics=diags)
    assert nodes == [] and any("unbalanced" in d for d in diags)


def test_kr_definition_is_reported():
    diags = []
    text = "int add(a, b)\nint a; int b;\n{ return a + b; }\n"
    nodes = extract_functions(make_source_file("kr.c", text), diagnostics=diags)
    assert nodes == []
    assert any("K&R" in d for d in diags)


def test_duplicate_in_one_file_raises():
    with pytest.raises(DuplicateDefinition):
        scan_sources({"d.c": "int f(void){return 0;}\nint f(void){return 1;}\n"})


def test_duplicate_across_ifdef_branches_keeps_first():
    text = "#ifdef FAST\nint f(void){return 1;}\n#else\nint f(void){return 2;}\n#endif\n"
    model = scan_sources({"d.c": text})
    assert len(model.functions) == 1
    assert "return 1" in model.functions[0].body_text
    assert any("duplicate" in d for d in model.diagnostics)


def test_includes():
    files = {"src/main.c", "src/util.h"}
    f = make_source_file("src/main.c", '#include "util.h"\n#include <stdio.h>\n#include "missing.h"\n')
    diags = []
    edges = extract_includes(f, files, diags)
    assert [(e.from_path, e.to_path) for e in edges] == [("src/main.c", "src/util.h")]
    assert any("missing.h" in d for d in diags)


def test_include_relative_to_repo_root():
    f = make_source_file("tests/t.c", '#include "src/util.h"\n')
    edges = extract_includes(f, {"tests/t.c", "src/util.h"})
    assert [e.to_path for e in edges] == ["src/util.h"]


def test_call_sites_examples():
    assert extract_call_sites("{ g(1); h(); }", {"g", "h", "q"}) == {"g", "h"}
    assert extract_call_sites('{ /* g( ) */ char*s="h()"; }', {"g", "h"}) == set()
    assert extract_call_sites("{ f(n-1); }", {"f"}) == {"f"}


def test_call_sites_skip_keywords_and_members():
    calls = extract_call_sites("{ if (x) return sizeof(int); while (y) s->op(1); obj.fn(2); real(3); }")
    assert calls == {"real"}


def test_detect_test_functions():
    model = scan_sources({
        "tests/buffer_test.c": "void test_push(void){}\nvoid setup(void){}\n",
        "src/buffer.c": "void push(void){}\n",
    })
    tests = detect_test_functions(model, ScanConfig())
    assert ("tests/buffer_test.c", "test_push") in tests
    assert ("tests/buffer_test.c", "setup") in tests
    assert ("src/buffer.c", "push") not in tests


def test_test_manifest(tmp_path):
    (tmp_path / "check.c").write_text("void verify_all(void){}\nvoid helper(void){}\n")
    (tmp_path / "c_tests.manifest").write_text("# explicit list\ncheck.c:verify_all\n")
    model = scan_repository(tmp_path)
    assert model.test_functions == [("check.c", "verify_all")]


def test_type_items(cproj):
    model = scan_repository(cproj)
    kinds = {(t.kind, t.name) for t in model.type_items}
    assert ("macro_const", "STACK_CAP") in kinds
    assert ("struct", "Stack") in kinds
    # include guards carry no value and are not items
    assert not any(t.name.endswith("_H") for t in model.type_items)


def test_fixture_project(cproj):
    model = scan_repository(cproj)
    assert len(model.functions) == 17
    assert len(model.test_functions) == 4
    names = {fn.name: fn for fn in model.functions}
    assert names["max2"].flavor == STATIC_INLINE
    assert names["parse_expr"].call_sites == {"parse_term", "skip_ws"}
    assert names["gcd"].call_sites == {"gcd"}


def test_lossy_decoding(tmp_path):
    (tmp_path / "latin.c").write_bytes(b"/* caf\xe9 */\nint f(void){return 0;}\n")
    model = scan_repository(tmp_path)
    assert model.functions[0].name == "f"
    assert "�" in model.files[0].text


# --- properties ---------------------------------------------------------------

IDENTS = st.sampled_from(["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"])


@st.composite
def c_files(draw):
    names = draw(st.lists(IDENTS, min_size=1, max_size=6, unique=True))
    parts = []
    for name in names:
        stmts = []
        for _ in range(draw(st.integers(0, 4))):
            kind = draw(st.sampled_from(["call", "comment", "string", "if", "decl"]))
            callee = draw(IDENTS)
            if kind == "call":
                stmts.append(f"    {callee}(1);")
            elif kind == "comment":
                stmts.append(f"    /* {callee}(x) {{ */")
            elif kind == "string":
                stmts.append(f'    const char *s = "{callee}() }}";')
            elif kind == "if":
                stmts.append(f"    if (x) {{ {callee}(x); }}")
            else:
                stmts.append("    int y = 0;")
        if draw(st.booleans()):
            parts.append(f"int {name}(int x);\n")
        parts.append(f"int {name}(int x)\n{{\n" + "\n".join(stmts) + "\n    return 0;\n}\n")
    return "\n".join(parts)


@settings(max_examples=60, deadline=None)
@given(c_files())
def test_span_and_call_site_soundness(text):
    model = scan_sources({"gen.c": text})
    for fn in model.functions:
        assert fn.body_span[0] <= fn.body_span[1]
        assert slice_lines(text, fn.body_span) == fn.body_text
        stripped = mask_c(fn.body_text)
        for callee in fn.call_sites:
            assert re.search(rf"(?<![A-Za-z0-9_]){callee}\s*\(", stripped)


@settings(max_examples=40, deadline=None)
@given(c_files())
def test_scan_is_deterministic(text):
    a = scan_sources({"gen.c": text, "other.h": "int q(void);\n"}).to_json(include_text=True)
    b = scan_sources({"other.h": "int q(void);\n", "gen.c": text}).to_json(include_text=True)
    assert a == b


@settings(max_examples=40, deadline=None)
@given(c_files(), IDENTS)
def test_added_prototype_changes_no_function(text, name):
    before = scan_sources({"gen.c": text})
    after = scan_sources({"gen.c": f"int {name}(int x);\n" + text})
    strip = lambda m: [(f.name, f.signature_text, f.body_text, f.call_sites) for f in m.functions]  # noqa: E731
    assert strip(before) == strip(after)


@given(st.text(alphabet="ab\n", max_size=30))
def test_line_count(text):
    assert count_lines(text) == len(text.splitlines())
