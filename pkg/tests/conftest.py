import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

# Fixed 3-user 2x2 single-subcarrier network shared by several tests.
# H_FIXED[k][m] is the channel from transmitter m to receiver k.
H_FIXED = [[[[0.9+0.2j, -0.4+0.7j], [0.1-1.1j, 1.3+0.3j]],
            [[-0.6+0.5j, 0.8-0.2j], [0.4+0.9j, -0.3-0.7j]],
            [[1.1-0.3j, 0.2+0.6j], [-0.9+0.1j, 0.5+0.5j]]],
           [[[0.3+0.8j, -1.2+0.1j], [0.7-0.4j, 0.6+0.2j]],
            [[1.4+0.1j, 0.3-0.5j], [-0.2+0.6j, 0.9-0.8j]],
            [[-0.5-0.5j, 0.9+0.3j], [0.2-0.9j, -1.0+0.4j]]],
           [[[0.6-0.7j, 0.4+0.4j], [-1.1+0.2j, 0.3+1.0j]],
            [[0.8+0.6j, -0.7+0.1j], [0.5-0.3j, 1.2+0.2j]],
            [[-0.4+1.0j, 0.6-0.6j], [1.0+0.3j, 0.2+0.8j]]]]
F_FIXED = [[[0.6+0j], [0.64+0.48j]], [[0.8j], [0.6+0j]], [[0.28+0.96j], [0j]]]


@pytest.fixture
def fixed_set():
    from ialign.channel import ChannelSet, NetworkDims
    dims = NetworkDims.uniform(3)
    H = [[np.array(H_FIXED[k][m])[None] for m in range(3)] for k in range(3)]
    return ChannelSet(dims, H)


@pytest.fixture
def fixed_precoders():
    return [np.array(f)[None] for f in F_FIXED]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2])):
        terminalreporter.write_line(line)
