import numpy as np
import pytest

from pwtprune import kernels
from pwtprune.network import Network

TINY = (
    {"type": "conv", "out": 4, "k": 3},
    {"type": "conv", "out": 6, "k": 3},
    {"type": "pool"},
    {"type": "linear"},
)


def tiny_net(specs=TINY, shape=(1, 8, 8), classes=3, seed=0, dtype=np.float64):
    return Network.build(specs, shape, classes, np.random.default_rng(seed), dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.load_backend(request.param)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
