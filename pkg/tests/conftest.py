import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_log import RESULTS  # noqa: E402

from floquet_patch import presets  # noqa: E402
from floquet_patch.cycle import find_cycle  # noqa: E402
from floquet_patch.kinetics import KineticSystem  # noqa: E402


@pytest.fixture(scope="session")
def ex1():
    return presets.example1()


@pytest.fixture(scope="session")
def ex1_cycle(ex1):
    return find_cycle(ex1, np.array(presets.EXAMPLE1_SEED))


@pytest.fixture(scope="session")
def ex2_cycle_system():
    return presets.example2(presets.EXAMPLE2_S_CYCLE)


@pytest.fixture(scope="session")
def ex2_cycle(ex2_cycle_system):
    seed, sec = presets.example2_cycle_seed()
    return find_cycle(ex2_cycle_system, seed, section=sec, burn_in=0.0)


@pytest.fixture(scope="session")
def oscillator():
    return KineticSystem(("u", "v"), ("v", "-u"))


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
