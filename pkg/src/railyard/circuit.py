"""Circuit IR, text parser, identity padding and a direct state-vector oracle.

Qubit 0 is the most significant bit of a computational-basis index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_SQ2 = 1.0 / np.sqrt(2.0)

GATES: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
}

UNITARY_TOL = 1e-9


class CircuitError(ValueError):
    """Invalid circuit content (indices, unitarity, structure)."""


class CircuitSyntaxError(CircuitError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class GateSpec:
    kind: str  # "single_qubit" | "cnot"
    target: int
    control: int | None = None
    matrix: np.ndarray | None = None
    name: str = "U"

    @property
    def is_cnot(self) -> bool:
        return self.kind == "cnot"

    @property
    def is_identity(self) -> bool:
        return self.kind == "single_qubit" and np.array_equal(self.matrix, GATES["I"])

    def __repr__(self) -> str:
        if self.is_cnot:
            return f"CNOT({self.control},{self.target})"
        return f"{self.name}({self.target})"


def single(name_or_matrix: str | np.ndarray, target: int) -> GateSpec:
    if isinstance(name_or_matrix, str):
        return GateSpec("single_qubit", target, matrix=GATES[name_or_matrix], name=name_or_matrix)
    m = np.asarray(name_or_matrix, dtype=complex)
    _check_unitary(m)
    return GateSpec("single_qubit", target, matrix=m, name="U")


def cnot(control: int, target: int) -> GateSpec:
    if control == target:
        raise CircuitError("CNOT control equals target")
    return GateSpec("cnot", target, control=control, name="CNOT")


def _check_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> None:
    if m.shape != (2, 2):
        raise CircuitError(f"gate matrix must be 2x2, got {m.shape}")
    err = np.max(np.abs(m.conj().T @ m - np.eye(2)))
    if err > tol:
        raise CircuitError(f"gate matrix is not unitary (deviation {err:.3g})")


@dataclass(frozen=True)
class QuantumCircuit:
    """Ordered single-qubit gates and CNOTs on ``n`` work qubits.

    ``n_payload`` counts the leading gates that make up the actual
    computation; the remaining gates (if any) are identity padding.
    """

    n: int
    gates: tuple[GateSpec, ...]
    n_payload: int = -1
    n_single: int = field(init=False)
    n_cnot: int = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise CircuitError("circuit needs at least one qubit")
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        for g in gates:
            for q in (g.target, g.control):
                if q is not None and not 0 <= q < self.n:
                    raise CircuitError(f"qubit index {q} out of range for n={self.n}")
            if g.is_cnot and g.control == g.target:
                raise CircuitError("CNOT control equals target")
        if self.n_payload < 0:
            object.__setattr__(self, "n_payload", len(gates))
        n_cnot = sum(g.is_cnot for g in gates)
        object.__setattr__(self, "n_cnot", n_cnot)
        object.__setattr__(self, "n_single", len(gates) - n_cnot)

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def payload(self) -> "QuantumCircuit":
        return QuantumCircuit(self.n, self.gates[: self.n_payload])

    def clock_steps(self, cnot_weight: int = 3, gate_weight: int = 1) -> int:
        """Number of clock-path edges the payload occupies."""
        return sum(
            cnot_weight if g.is_cnot else (1 if g.is_identity else gate_weight)
            for g in self.gates[: self.n_payload]
        )


def parse_circuit(text: str) -> QuantumCircuit:
    n: int | None = None
    gates: list[GateSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        if n is None:
            if head != "qubits" or len(tok) != 2:
                raise CircuitSyntaxError(lineno, "expected 'qubits <n>' header")
            n = _int(tok[1], lineno)
            if n < 1:
                raise CircuitSyntaxError(lineno, "qubit count must be positive")
            continue
        try:
            if head in GATES:
                if len(tok) != 2:
                    raise CircuitSyntaxError(lineno, f"{head} takes one qubit index")
                q = _index(tok[1], n, lineno)
                gates.append(single(head, q))
            elif head == "CNOT":
                if len(tok) != 3:
                    raise CircuitSyntaxError(lineno, "CNOT takes control and target")
                c, t = _index(tok[1], n, lineno), _index(tok[2], n, lineno)
                if c == t:
                    raise CircuitSyntaxError(lineno, "CNOT control equals target")
                gates.append(cnot(c, t))
            elif head == "U":
                if len(tok) != 10:
                    raise CircuitSyntaxError(lineno, "U takes a qubit index and 8 floats")
                q = _index(tok[1], n, lineno)
                try:
                    vals = [float(v) for v in tok[2:]]
                except ValueError:
                    raise CircuitSyntaxError(lineno, "malformed float in U gate") from None
                m = np.array(vals[0::2], dtype=float) + 1j * np.array(vals[1::2], dtype=float)
                gates.append(single(m.reshape(2, 2), q))
            else:
                raise CircuitSyntaxError(lineno, f"unknown gate {head!r}")
        except CircuitSyntaxError:
            raise
        except CircuitError as exc:
            raise CircuitSyntaxError(lineno, str(exc)) from None
    if n is None:
        raise CircuitSyntaxError(0, "missing 'qubits <n>' header")
    return QuantumCircuit(n, tuple(gates))


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CircuitSyntaxError(lineno, f"expected integer, got {tok!r}") from None


def _index(tok: str, n: int, lineno: int) -> int:
    q = _int(tok, lineno)
    if not 0 <= q < n:
        raise CircuitSyntaxError(lineno, f"qubit index {q} out of range for n={n}")
    return q


def format_circuit(circuit: QuantumCircuit) -> str:
    lines = [f"qubits {circuit.n}"]
    for g in circuit.gates:
        if g.is_cnot:
            lines.append(f"CNOT {g.control} {g.target}")
        elif g.name in GATES:
            lines.append(f"{g.name} {g.target}")
        else:
            flat = " ".join(f"{v.real!r} {v.imag!r}" for v in g.matrix.ravel())
            lines.append(f"U {g.target} {flat}")
    return "\n".join(lines) + "\n"


def pad_with_identities(circuit: QuantumCircuit, cnot_weight: int = 3,
                        gate_weight: int = 1) -> QuantumCircuit:
    """Append identities on qubit 0 so the clock path is three times the payload.

    The payload length is measured in clock steps (a CNOT costs
    ``cnot_weight`` edges), so that every node in the far two thirds of the
    path already carries the circuit output.  For circuits without CNOTs this
    is exactly ``2L`` identities.
    """
    if len(circuit) == 0:
        raise CircuitError("cannot pad an empty circuit")
    steps = circuit.clock_steps(cnot_weight, gate_weight)
    pad = tuple(single("I", 0) for _ in range(2 * steps))
    gates = circuit.gates[: circuit.n_payload] + pad
    return QuantumCircuit(circuit.n, gates, n_payload=circuit.n_payload)


def space_gadgets(circuit: QuantumCircuit, gap: int = 9, lead: int = 4,
                  gate_weight: int = 2) -> QuantumCircuit:
    """Insert identities so consecutive CNOTs are ``gap`` clock edges apart.

    Also guarantees ``lead`` edges before the first CNOT.  On the doubled
    cycle the two copies of the first gadget then sit ``2 * lead`` edges
    apart across the origin.  An odd ``lead`` lets the origin overlap a
    zero-energy state pinned between the two entry blind alleys, which traps
    a third of the walk; 4 is the even value closest to the regular pitch.
    Runs longer than the target are left alone.
    """
    out: list[GateSpec] = []
    edges = 0
    first = True
    for g in circuit.gates[: circuit.n_payload]:
        if g.is_cnot:
            need = lead if first else gap
            out.extend(single("I", 0) for _ in range(max(0, need - edges)))
            out.append(g)
            edges, first = 0, False
        else:
            out.append(g)
            edges += 1 if g.is_identity else gate_weight
    tail = circuit.gates[circuit.n_payload:]
    return QuantumCircuit(circuit.n, tuple(out) + tail, n_payload=len(out))


def basis_state(n: int, index: int = 0) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[index] = 1.0
    return v


def apply_gate(gate: GateSpec, state: np.ndarray, n: int) -> np.ndarray:
    psi = np.asarray(state, dtype=complex).reshape((2,) * n)
    if gate.is_cnot:
        out = psi.copy()
        sel = [slice(None)] * n
        sel[gate.control] = 1
        sub = out[tuple(sel)]
        # target axis index shifts when control axis precedes it
        ax = gate.target - (1 if gate.control < gate.target else 0)
        out[tuple(sel)] = np.flip(sub, axis=ax)
        return out.reshape(-1)
    out = np.tensordot(gate.matrix, psi, axes=([1], [gate.target]))
    return np.moveaxis(out, 0, gate.target).reshape(-1)


def apply_circuit_prefix(circuit: QuantumCircuit, t: int, state: np.ndarray) -> np.ndarray:
    """Return ``U_t ... U_1 |state>``; ``t = 0`` returns a copy of the input."""
    if not 0 <= t <= len(circuit):
        raise CircuitError(f"prefix length {t} outside [0, {len(circuit)}]")
    state = np.asarray(state, dtype=complex)
    if state.shape != (2**circuit.n,):
        raise CircuitError(f"state has shape {state.shape}, expected ({2**circuit.n},)")
    out = state.copy()
    for g in circuit.gates[:t]:
        out = apply_gate(g, out, circuit.n)
    return out


def prefix_states(circuit: QuantumCircuit, state: np.ndarray) -> list[np.ndarray]:
    """All prefixes ``[phi_0, ..., phi_L]`` in one pass."""
    out = [np.asarray(state, dtype=complex).copy()]
    for g in circuit.gates:
        out.append(apply_gate(g, out[-1], circuit.n))
    return out


def random_circuit(rng: np.random.Generator, n: int, n_gates: int,
                   min_cnots: int = 0, names: Sequence[str] = ("H", "X", "Y", "Z", "S", "T")
                   ) -> QuantumCircuit:
    """Random test circuit; single-qubit gates drawn from ``names`` or Haar."""
    kinds = ["cnot"] * min(min_cnots, n_gates) + [None] * (n_gates - min(min_cnots, n_gates))
    rng.shuffle(kinds)
    gates: list[GateSpec] = []
    for k in kinds:
        want_cnot = k == "cnot" or (k is None and n > 1 and rng.random() < 0.3)
        if want_cnot and n > 1:
            c, t = rng.choice(n, size=2, replace=False)
            gates.append(cnot(int(c), int(t)))
        elif rng.random() < 0.25:
            gates.append(single(haar_unitary(rng), int(rng.integers(n))))
        else:
            gates.append(single(str(rng.choice(list(names))), int(rng.integers(n))))
    return QuantumCircuit(n, tuple(gates))


def haar_unitary(rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def iter_cnots(circuit: QuantumCircuit) -> Iterable[tuple[int, GateSpec]]:
    return ((i, g) for i, g in enumerate(circuit.gates) if g.is_cnot)
