import numpy as np
import pytest

from adalloc import config as C
from adalloc import presets

# Intervals printed for the ADMIRE example, in the order they were published.
# They are listed in vec (column-major) order of theta_v, so reshaping them
# row-major into m x r gives boxes on theta_v^T.
PRINTED_LO = np.array([-0.0129, 0.0307, -0.1357, -0.212, -0.3149, -0.217,
                       -0.0241, -0.4162, 0.1587, 0.0673, -0.001, -1.2755])
PRINTED_HI = np.array([0.0129, 0.5225, 0.1371, 0.0, -0.1113, -0.1416,
                       0.2363, -0.01, 0.1977, 0.0675, 0.001, -0.7641])
PRINTED_M = np.array([1.4, 1.4, 0.3])


def printed_boxes():
    """Published intervals as r x m (lo, hi) on theta_v."""
    return PRINTED_LO.reshape(4, 3).T.copy(), PRINTED_HI.reshape(4, 3).T.copy()


@pytest.fixture(scope="session")
def admire_plant():
    return presets.admire_plant()


@pytest.fixture(scope="session")
def admire_design():
    return C.run_design(C.resolve(preset="admire"))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
