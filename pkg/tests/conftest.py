import os

import pytest

from qawa.cli import main


def run_toy_pipeline(root, seed=0, extra=()):
    """Write the toy corpus under ``root`` and run the full pipeline; returns (config, out dir)."""
    cfg = os.path.join(root, "toy.conf")
    assert main(["toy", str(root), "--seed", str(seed)]) == 0
    assert main(["pipeline", "--config", cfg, *extra]) == 0
    return cfg, os.path.join(root, "out")


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    return run_toy_pipeline(root)


# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
