"""Schrodinger evolution, clock measurement and the random-time protocol."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .circuit import QuantumCircuit, apply_circuit_prefix, basis_state, pad_with_identities, space_gadgets
from .hamiltonian import (SINGLE_TRAIN, ClockSpace, SparseHermitianOperator, assemble, build_h3s,
                          build_h23, interpolate)
from .layout import (ClockLayout, LegalGraph, build_layout_3local, build_layout_qutrit, close_cycle,
                     enumerate_legal_graph)

DENSE_MAX = 4096
KRYLOV_TOL = 1e-9
NORM_TOL = 1e-10
KERNEL_ZERO = 1e-10


class EvolutionError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class SystemState:
    amplitudes: np.ndarray
    time: float = 0.0
    rep: str = SINGLE_TRAIN

    def __post_init__(self):
        nrm = float(np.linalg.norm(self.amplitudes))
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {nrm!r} is not 1")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


def initial_state(space: ClockSpace) -> SystemState:
    """``|0..0> (x) |train on the origin>``."""
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(0, (space.layout.origin, 1))] = 1.0
    return SystemState(v, 0.0, space.rep)


# ---------------------------------------------------------------------------
# propagation

def _spectral(H: SparseHermitianOperator, v: np.ndarray, tau: float) -> np.ndarray:
    w, V = H.eigh
    return V @ (np.exp(-1j * w * tau) * (V.conj().T @ v))


def _lanczos_step(H: SparseHermitianOperator, v: np.ndarray, dt: float, m: int,
                  threads: int | None) -> np.ndarray:
    beta0 = np.linalg.norm(v)
    Q = np.zeros((m + 1, v.shape[0]), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    Q[0] = v / beta0
    k = m
    for j in range(m):
        w = H.matvec(Q[j], threads)
        alpha[j] = np.vdot(Q[j], w).real
        w = w - alpha[j] * Q[j] - (beta[j - 1] * Q[j - 1] if j else 0)
        # full reorthogonalisation keeps the small basis honest
        w -= Q[: j + 1].T @ (Q[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-13:
            k = j + 1
            break
        Q[j + 1] = w / beta[j]
    T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    coef = sla.expm(-1j * dt * T)[:, 0]
    return beta0 * (Q[:k].T @ coef)


def _krylov(H, v, tau, tol, m, threads):
    t, dt = 0.0, min(tau, 1.0)
    floor = max(tau, 1.0) * 1e-12
    while t < tau - 1e-15 * max(tau, 1.0):
        dt = min(dt, tau - t)
        one = _lanczos_step(H, v, dt, m, threads)
        half = _lanczos_step(H, v, dt / 2, m, threads)
        two = _lanczos_step(H, half, dt / 2, m, threads)
        err = float(np.linalg.norm(one - two))
        drift = abs(float(np.linalg.norm(two)) - 1.0)
        if err <= tol * dt / max(tau, 1.0) and drift <= tol:
            v, t = two, t + dt
            dt *= 1.5
        else:
            dt /= 2
            if dt < floor:
                raise EvolutionError("Krylov propagation did not converge", err)
    return v


def evolve(H: SparseHermitianOperator, state: SystemState, tau: float, *,
           dense_max: int = DENSE_MAX, tol: float = KRYLOV_TOL, krylov_dim: int = 30,
           threads: int | None = None) -> SystemState:
    """``exp(-i H tau) |state>``.

    Dense spectral propagation up to ``dense_max``; otherwise adaptive
    Lanczos steps accepted only when a full step and two half steps agree.
    """
    if H.dim != state.dim:
        raise ValueError(f"dimension mismatch: operator {H.dim}, state {state.dim}")
    if tau < 0:
        raise ValueError("evolution time must be nonnegative")
    v = state.amplitudes
    if tau > 0:
        if H.dim <= dense_max:
            v = _spectral(H, v, tau)
        else:
            v = _krylov(H, v, float(tau), tol, krylov_dim, threads)
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > max(tol, 1e-12):
        raise EvolutionError("norm drift exceeded tolerance", abs(nrm - 1.0))
    return SystemState(v / nrm, state.time + tau, state.rep)


def train_distribution(state: SystemState, layout: ClockLayout) -> np.ndarray:
    """Probability of the train at each of ``layout.positions``."""
    if state.rep != SINGLE_TRAIN:
        raise ValueError("train_distribution needs the single_train representation")
    P = layout.train_positions
    if state.dim % P:
        raise ValueError("state does not match the layout")
    a = state.amplitudes.reshape(-1, P)
    return (np.abs(a) ** 2).sum(axis=0)


def site_distribution(state: SystemState, layout: ClockLayout) -> np.ndarray:
    """Train distribution summed over the active states of each site."""
    pos = train_distribution(state, layout)
    out = np.zeros(len(layout.sites))
    for (s, _), p in zip(layout.positions, pos):
        out[s] += p
    return out


def averaging_kernel(delta: np.ndarray, T: float) -> np.ndarray:
    """``(1/T) int_0^T exp(i delta t) dt``, exactly 1 at ``delta = 0``."""
    delta = np.asarray(delta, dtype=float)
    x = delta * T
    small = np.abs(delta) < KERNEL_ZERO
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0j, (np.exp(1j * safe) - 1.0) / (1j * safe))


def time_averaged_expectation(H: SparseHermitianOperator, psi: np.ndarray,
                              projectors: list[np.ndarray], T: float) -> list[float]:
    """Time averages over ``[0, T]`` of ``<psi(t)|Pi|psi(t)>`` for diagonal ``Pi``.

    Each projector is given as a 0/1 mask or as a general matrix.
    """
    w, V = H.eigh
    c = V.conj().T @ psi
    K = averaging_kernel(w[:, None] - w[None, :], T)
    out = []
    for Pi in projectors:
        if Pi.ndim == 1:
            M = V.conj().T @ (Pi[:, None] * V)
        else:
            M = V.conj().T @ Pi @ V
        val = np.einsum("j,jk,k,jk->", c.conj(), M, c, K)
        out.append(float(val.real))
    return out


# ---------------------------------------------------------------------------
# protocol

MONTE_CARLO, EXACT_AVERAGE = "monte_carlo", "exact_average"


@dataclass(frozen=True)
class ProtocolConfig:
    tau_max: float | None = None  # None: 20 * N * ln(N)^2 with N the legal cycle length
    samples: int = 1000
    seed: int = 0
    mode: str = EXACT_AVERAGE

    def __post_init__(self):
        if self.tau_max is not None and not self.tau_max > 0:
            raise ValueError("tau_max must be positive")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.mode not in (MONTE_CARLO, EXACT_AVERAGE):
            raise ValueError(f"unknown protocol mode {self.mode!r}")


@dataclass
class ProtocolResult:
    success_probability: float
    stderr: float
    conditional_fidelity: float
    tau_max: float
    samples: int
    seed: int
    model: str
    cycle_length: int
    mode: str
    records: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "p_success": self.success_probability,
            "stderr": self.stderr,
            "conditional_fidelity": self.conditional_fidelity,
            "tau_max": self.tau_max,
            "samples": self.samples,
            "seed": self.seed,
            "model": self.model,
            "cycle_length": self.cycle_length,
            "mode": self.mode,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def default_tau_max(cycle_length: int) -> float:
    n = float(cycle_length)
    return 20.0 * n * math.log(n) ** 2


@dataclass(frozen=True, eq=False)
class CompiledProtocol:
    """Everything the protocol needs, built once per circuit and model."""

    circuit: QuantumCircuit
    model: str
    layout: ClockLayout
    graph: LegalGraph
    space: ClockSpace
    H: SparseHermitianOperator

    @property
    def cycle_length(self) -> int:
        return self.graph.ring_length

    def success_positions(self) -> list[int]:
        idx = self.layout.position_index
        return sorted({idx[(c.site, c.state)] for i in self.graph.success
                       for c in self.graph.nodes[i].components})

    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Success-region mask and the good-output projector (as a matrix)."""
        P = self.layout.train_positions
        dw = 2 ** self.layout.n
        pos = self.success_positions()
        mask = np.zeros(P)
        mask[pos] = 1.0
        succ = np.kron(np.ones(dw), mask)
        out = self.output_state()
        good = np.kron(np.outer(out, out.conj()), np.diag(mask))
        return succ, good

    def output_state(self) -> np.ndarray:
        return apply_circuit_prefix(self.circuit, len(self.circuit.gates), basis_state(self.circuit.n))


def compile_protocol(circuit: QuantumCircuit, model: str = "3local") -> CompiledProtocol:
    """Pad, lay out the doubled clock cycle and build its Hamiltonian."""
    if model == "3local":
        padded = pad_with_identities(circuit, cnot_weight=3, gate_weight=1)
        layout = close_cycle(build_layout_3local(padded))
        H = assemble(build_h3s(padded, layout))
    elif model == "qutrit":
        padded = pad_with_identities(space_gadgets(circuit), cnot_weight=9, gate_weight=2)
        layout = build_layout_qutrit(padded)
        H = assemble(build_h23(layout.circuit, layout))
    else:
        raise ValueError(f"unknown model {model!r}")
    graph = enumerate_legal_graph(layout)
    return CompiledProtocol(circuit, model, layout, graph, ClockSpace(layout), H)


def _sample_time(seed: int, i: int, tau_max: float) -> float:
    return float(np.random.default_rng([seed, i]).uniform(0.0, tau_max))


def run_protocol(circuit: QuantumCircuit, config: ProtocolConfig = ProtocolConfig(),
                 model: str = "3local", compiled: CompiledProtocol | None = None,
                 threads: int | None = None) -> ProtocolResult:
    """Start from ``|0..0>|c_0>``, evolve for a random time, measure the clock.

    ``exact_average`` returns the uniform time average over ``[0, tau_max]``
    in closed form; ``monte_carlo`` samples ``tau`` with a per-sample seed
    derived from ``(seed, index)``.
    """
    cp = compiled or compile_protocol(circuit, model)
    tau_max = config.tau_max if config.tau_max is not None else default_tau_max(cp.cycle_length)
    psi0 = initial_state(cp.space)
    succ, good = cp.masks()
    if config.mode == EXACT_AVERAGE:
        p, g = time_averaged_expectation(cp.H, psi0.amplitudes, [succ, good], tau_max)
        return ProtocolResult(p, 0.0, g / p if p > 0 else 0.0, tau_max, config.samples,
                              config.seed, cp.model, cp.cycle_length, config.mode)
    records = []
    gsum = 0.0
    for i in range(config.samples):
        tau = _sample_time(config.seed, i, tau_max)
        a = evolve(cp.H, psi0, tau, threads=threads).amplitudes
        m = float(np.sum(succ * np.abs(a) ** 2))
        gsum += float(np.vdot(a, good @ a).real)
        records.append((tau, m))
    masses = np.array([m for _, m in records])
    p = float(masses.mean())
    se = float(masses.std(ddof=1) / math.sqrt(len(masses))) if len(masses) > 1 else 0.0
    fid = gsum / masses.sum() if masses.sum() > 0 else 0.0
    return ProtocolResult(p, se, float(fid), tau_max, config.samples, config.seed,
                          cp.model, cp.cycle_length, config.mode, records)


# ---------------------------------------------------------------------------
# adiabatic sweep

@dataclass(frozen=True, eq=False)
class SweepResult:
    state: SystemState
    ground_overlap: float
    ground_dim: int


def ground_projector(H: SparseHermitianOperator, tol: float = 1e-9) -> np.ndarray:
    w, V = H.eigh
    G = V[:, w <= w[0] + tol]
    return G


def adiabatic_sweep(hInit: SparseHermitianOperator, hFinal: SparseHermitianOperator,
                    T_total: float, steps: int, state: SystemState,
                    ground_tol: float = 1e-9) -> SweepResult:
    """Piecewise-constant linear interpolation from ``hInit`` to ``hFinal``.

    Slice ``k`` evolves for ``T_total / steps`` under the Hamiltonian at
    ``s = (k + 1/2) / steps``.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if T_total < 0:
        raise ValueError("T_total must be nonnegative")
    hInit._same_space(hFinal)
    dt = T_total / steps
    for k in range(steps):
        state = evolve(interpolate(hInit, hFinal, (k + 0.5) / steps), state, dt)
    G = ground_projector(hFinal, ground_tol)
    ov = float(np.linalg.norm(G.conj().T @ state.amplitudes) ** 2)
    return SweepResult(state, ov, G.shape[1])
