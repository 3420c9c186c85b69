import os
import shutil
from pathlib import Path

import pytest

for extra in ("/opt/cargo/bin", str(Path.home() / ".cargo" / "bin")):
    if os.path.isdir(extra) and extra not in os.environ.get("PATH", "").split(os.pathsep):
        os.environ["PATH"] = os.environ.get("PATH", "") + os.pathsep + extra

HAVE_CARGO = shutil.which("cargo") is not None

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_collection_modifyitems(config, items):
    if HAVE_CARGO:
        return
    skip = pytest.mark.skip(reason="cargo is not installed")
    for item in items:
        if "cargo" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def cproj() -> Path:
    return FIXTURES / "cproj"


@pytest.fixture(scope="session")
def cargo_target(tmp_path_factory) -> Path:
    """Shared build cache so the many small crates reuse compiled std artifacts."""
    return tmp_path_factory.mktemp("cargo-target")


@pytest.fixture
def toolchain(cargo_target):
    from cmigrate.toolchain import Toolchain

    return Toolchain(target_dir=cargo_target)


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
