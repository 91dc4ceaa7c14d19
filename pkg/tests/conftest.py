import numpy as np
import pytest
from hypothesis import settings

from railyard.circuit import QuantumCircuit, cnot, single

settings.register_profile("railyard", max_examples=25, deadline=None)
settings.load_profile("railyard")


@pytest.fixture
def bell():
    return QuantumCircuit(2, (single("H", 0), cnot(0, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def kron_unitary(gate, n):
    """Full 2^n matrix of one gate, built from explicit Kronecker products."""
    I2 = np.eye(2)
    if not gate.is_cnot:
        out = np.array([[1.0]])
        for q in range(n):
            out = np.kron(out, gate.matrix if q == gate.target else I2)
        return out
    P0, P1, X = np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])
    a = b = np.array([[1.0]])
    for q in range(n):
        a = np.kron(a, P0 if q == gate.control else I2)
        b = np.kron(b, P1 if q == gate.control else (X if q == gate.target else I2))
    return a + b


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
