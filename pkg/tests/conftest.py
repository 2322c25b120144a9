import numpy as np
import pytest

from rpvl import kernels

BACKENDS = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])

# lines recorded by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
