import pytest

from cmigrate.errors import BuildFailed, PathOccupied, ToolchainMissing
from cmigrate.fsutil import tree_hash
from cmigrate.toolchain import Toolchain, crate_name, parse_check_output, parse_test_output

TESTS_OK = """
pub fn add(a: i32, b: i32) -> i32 { a + b }

#[cfg(test)]
mod tests {
    use super::*;
    #[test] fn one() { assert_eq!(add(1, 1), 2); }
    #[test] fn two() { assert_eq!(add(1, 2), 3); }
    #[test] fn three() { assert_eq!(add(0, 0), 0); }
}
"""


def test_crate_name():
    assert crate_name("My-Proj") == "my_proj"
    assert crate_name("9lives") == "c_9lives"
    assert crate_name("---") == "translated"


def test_parse_test_output():
    text = ("running 3 tests\ntest a::x ... ok\ntest a::y ... FAILED\ntest a::z ... ignored\n"
            "test result: FAILED. 1 passed; 1 failed; 1 ignored\n")
    assert parse_test_output(text) == (1, 1, 1, ["a::y"])


def test_parse_check_output_skips_noise(tmp_path):
    lines = [
        "not json",
        '{"reason":"compiler-artifact"}',
        '{"reason":"compiler-message","message":{"level":"error","message":"aborting due to 1 previous error","spans":[]}}',
        '{"reason":"compiler-message","message":{"level":"note","message":"fyi","spans":[]}}',
        '{"reason":"compiler-message","message":{"level":"error","message":"cannot find value `q`",'
        '"code":{"code":"E0425"},"spans":[{"is_primary":true,"file_name":"src/lib.rs","line_start":3}],'
        '"rendered":"error[E0425]"}}',
    ]
    diags, rendered, saw = parse_check_output("\n".join(lines), tmp_path)
    assert saw and rendered == ["error[E0425]"]
    assert [(d.level, d.code, d.file, d.line) for d in diags] == [("error", "E0425", "src/lib.rs", 3)]


def test_toolchain_missing(tmp_path):
    tc = Toolchain(check_cmd=["no-such-cargo-binary"])
    assert not tc.available()
    with pytest.raises(ToolchainMissing) as exc:
        tc.init_project(tmp_path / "x", "x")
    assert "rustup" in str(exc.value)


def test_path_occupied(tmp_path, toolchain):
    (tmp_path / "keep.txt").write_text("mine")
    with pytest.raises(PathOccupied):
        toolchain.init_project(tmp_path, "x")


@pytest.fixture(scope="module")
def crate(tmp_path_factory, cargo_target):
    tc = Toolchain(target_dir=cargo_target)
    path = tmp_path_factory.mktemp("crates") / "demo"
    tc.init_project(path, "demo")
    return path


@pytest.mark.cargo
def test_init_project(crate):
    assert (crate / "Cargo.toml").is_file()
    assert (crate / "src" / "lib.rs").read_text() == ""
    assert (crate / "Cargo.lock").is_file()


@pytest.mark.cargo
def test_check_placeholder_skeleton(crate, toolchain):
    (crate / "src/lib.rs").write_text("pub fn f(x: i32) -> i32 {\n    unimplemented!()\n}\n")
    outcome = toolchain.check(crate)
    assert outcome.ok and outcome.parsed


@pytest.mark.cargo
def test_check_error_has_location(crate, toolchain):
    (crate / "src/lib.rs").write_text("pub fn f() -> i32 {\n    undefined_thing\n}\n")
    outcome = toolchain.check(crate)
    assert not outcome.ok
    err = outcome.errors[0]
    assert err.file == "src/lib.rs" and err.line == 2


@pytest.mark.cargo
def test_check_warnings_only(crate, toolchain):
    (crate / "src/lib.rs").write_text("fn unused() {}\n")
    outcome = toolchain.check(crate)
    assert outcome.ok
    assert any(d.level == "warning" for d in outcome.diagnostics)


@pytest.mark.cargo
def test_check_is_read_only(crate, toolchain):
    (crate / "src/lib.rs").write_text(TESTS_OK)
    before = tree_hash(crate)
    toolchain.check(crate, all_targets=True)
    toolchain.run_tests(crate)
    assert tree_hash(crate) == before
    assert not (crate / "target").exists()


@pytest.mark.cargo
def test_run_tests(crate, toolchain):
    (crate / "src/lib.rs").write_text(TESTS_OK)
    outcome = toolchain.run_tests(crate)
    assert (outcome.ok, outcome.total, outcome.passed, outcome.failed) == (True, 3, 3, 0)
    assert sorted(toolchain.list_tests(crate)) == ["tests::one", "tests::three", "tests::two"]


@pytest.mark.cargo
def test_run_tests_one_failing(crate, toolchain):
    (crate / "src/lib.rs").write_text(TESTS_OK.replace("add(1, 2), 3", "add(1, 2), 4"))
    outcome = toolchain.run_tests(crate)
    assert not outcome.ok
    assert outcome.failed_names == ["tests::two"]


@pytest.mark.cargo
def test_run_tests_filter(crate, toolchain):
    (crate / "src/lib.rs").write_text(TESTS_OK)
    assert toolchain.run_tests(crate, filter="tests::three").total == 1


@pytest.mark.cargo
def test_run_tests_build_failure(crate, toolchain):
    (crate / "src/lib.rs").write_text(TESTS_OK.replace("a + b", "a + c"))
    with pytest.raises(BuildFailed):
        toolchain.run_tests(crate)
    assert toolchain.list_tests(crate) == []
