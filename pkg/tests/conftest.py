import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_patch():
    from s2dl.cube import Patch, synth_cube
    patches = [Patch(0, 20, 0, 10, (1.0, 2.0, 3.0, 4.0)), Patch(0, 20, 10, 20, (4.0, 3.0, 2.0, 1.0))]
    return synth_cube(0, patches, 0.0)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
