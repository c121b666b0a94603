import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from patchsim.scenario import bundled, load_scenario  # noqa: E402
from patchsim.stepper import simulate  # noqa: E402

UNIQUENESS_SEEDS = (0, 1, 2, 3, 4)

# criterion number -> (passed, detail); printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


@pytest.fixture(scope="session")
def example1():
    return load_scenario(bundled("example1"))


@pytest.fixture(scope="session")
def example2():
    return load_scenario(bundled("example2"))


@pytest.fixture(scope="session")
def example1_run(example1):
    return simulate(example1)


@pytest.fixture(scope="session")
def example2_runs(example2):
    """Example 2 once per seed, each with a randomised first-step initial guess."""
    return {s: simulate(example2, rng=np.random.default_rng(s)) for s in UNIQUENESS_SEEDS}
