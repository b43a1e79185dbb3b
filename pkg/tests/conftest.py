import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from platoon_setm.engine import run  # noqa: E402
from platoon_setm.scenario import load_scenario, shipped_path  # noqa: E402

# one line per acceptance criterion, filled in by tests/test_acceptance.py
VERDICTS: dict[str, str] = {}


@pytest.fixture(scope="session")
def shipped():
    return load_scenario(shipped_path())


@pytest.fixture(scope="session")
def shipped_timed(shipped):
    t0 = time.perf_counter()
    log = run(shipped)
    return log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def shipped_log(shipped_timed):
    return shipped_timed[0]


@pytest.fixture(scope="session")
def periodic_log(shipped):
    return run(shipped, setm_enabled=False)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS, key=lambda k: int(k.split()[0])):
            terminalreporter.write_line(VERDICTS[key])
