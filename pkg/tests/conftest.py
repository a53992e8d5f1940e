import numpy as np
import pytest

from fdrlab.linalg import PAULI_X, PAULI_Y, PAULI_Z


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def paulis():
    return PAULI_X, PAULI_Y, PAULI_Z


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
