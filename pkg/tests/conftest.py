import numpy as np
import pytest

from unkadf.nn import available_backends, get_backend, set_backend

# acceptance verdict lines, filled by tests/test_acceptance.py
ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(params=available_backends())
def backend(request):
    """Run the test once per available LSTM kernel backend."""
    previous = get_backend()
    set_backend(request.param)
    yield request.param
    set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
