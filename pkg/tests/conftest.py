import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"

# (criterion, passed, detail) rows appended by test_acceptance
ACCEPTANCE_RESULTS = []


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def storm_run(tmp_path_factory):
    """One ``pipeline --preset storm --seed 1`` run shared by the slow tests."""
    import time

    from gicmag.cli import main

    out = tmp_path_factory.mktemp("storm_run")
    t0 = time.perf_counter()
    status = main(["pipeline", "--preset", "storm", "--seed", "1", "--out-dir", str(out)])
    elapsed = time.perf_counter() - t0
    assert status == 0
    return out, elapsed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {crit}: {detail}")
