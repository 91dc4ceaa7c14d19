"""Compile small quantum circuits into railroad-switch clock Hamiltonians,
simulate the resulting quantum walks, and verify their structure."""

__version__ = "0.1.0"

from .circuit import QuantumCircuit, GateSpec, parse_circuit, cnot, single  # noqa: E402,F401
from .kernels import BACKEND  # noqa: E402,F401
