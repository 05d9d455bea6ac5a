import numpy as np
import pytest

from somgen import _pykernels
from somgen.kernels import compiled_available

BACKENDS = [pytest.param(_pykernels, id="python")]
if compiled_available():
    from somgen import _ckernels

    BACKENDS.append(pytest.param(_ckernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line and fail the test when the criterion fails."""

    def record(number, passed, detail):
        line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
