import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adapmixed.harness import load_config, train_desk_models  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def desk_models(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_models")
    train_desk_models(out, n=16, seed=0)
    return out


@pytest.fixture(scope="session")
def desk_config():
    return load_config(ROOT / "configs" / "desk.yaml")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
