"""Structural checks: legal-basis embeddings, restrictions, sector spectra."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as sla_sparse

from .circuit import QuantumCircuit, apply_gate, basis_state, prefix_states, single
from .dynamics import SystemState
from .hamiltonian import (FULL_CLOCK, SINGLE_TRAIN, ClockSpace, SparseHermitianOperator, assemble,
                          build_h3s, build_h_clock, build_h_datainit, build_h_init, interpolate)
from .layout import ClockLayout, LegalGraph, check_consistent, enumerate_legal_graph

ORTHO_TOL = 1e-12
DEGENERATE_AMPLITUDE = 1e-14


class VerificationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddedBasis:
    graph: LegalGraph
    space: ClockSpace
    phi0: np.ndarray
    vectors: np.ndarray  # columns, one per legal node
    degenerate: tuple[bool, ...]

    def __len__(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors.conj().T @ self.vectors

    def orthonormality_error(self) -> float:
        return float(np.abs(self.gram() - np.eye(len(self))).max())


def _branch(state: np.ndarray, branch: str, gadget, n: int) -> np.ndarray:
    if branch == "all":
        return state
    ctl, tgt = gadget
    psi = state.reshape([2] * n).copy()
    keep = 0 if branch == "q0" else 1
    sl = [slice(None)] * n
    sl[ctl] = 1 - keep
    psi[tuple(sl)] = 0
    out = psi.reshape(-1)
    if branch == "q1x":
        out = apply_gate(single("X", tgt), out, n)
    return out


def embed_legal_basis(graph: LegalGraph, circuit: QuantumCircuit | None, phi0: np.ndarray,
                      rep: str = SINGLE_TRAIN) -> EmbeddedBasis:
    """Explicit vectors for every legal node, for initial work state ``phi0``.

    Nodes whose control branch vanishes for this ``phi0`` are still
    normalised (only the surviving track remains) and flagged degenerate.
    """
    layout = graph.layout
    if circuit is not None:
        check_consistent(layout, circuit)
    phi0 = np.asarray(phi0, dtype=complex)
    if phi0.shape != (2 ** layout.n,):
        raise VerificationError("initial work state has the wrong dimension")
    if abs(np.linalg.norm(phi0) - 1.0) > 1e-10:
        raise VerificationError("initial work state is not normalised")
    space = ClockSpace(layout, rep)
    prefixes = prefix_states(layout.circuit, phi0)
    V = np.zeros((space.dim, len(graph.nodes)), dtype=complex)
    flags = []
    for a, nd in enumerate(graph.nodes):
        work = prefixes[nd.prefix]
        deg = False
        for comp in nd.components:
            part = _branch(work, comp.branch, nd.gadget, layout.n)
            if np.linalg.norm(part) < DEGENERATE_AMPLITUDE:
                deg = True
                continue
            for w in np.flatnonzero(np.abs(part) > 0):
                V[space.index(int(w), (comp.site, comp.state)), a] += part[w]
        nrm = np.linalg.norm(V[:, a])
        if nrm == 0:
            raise VerificationError(f"legal node {nd.label} vanishes for this initial state")
        V[:, a] /= nrm
        flags.append(deg)
    return EmbeddedBasis(graph, space, phi0, V, tuple(flags))


def restrict(H: SparseHermitianOperator, basis: EmbeddedBasis) -> np.ndarray:
    """``M_ab = <v_a|H|v_b>``."""
    if H.dim != basis.space.dim or H.rep != basis.space.rep:
        raise VerificationError("operator and basis live in different spaces")
    HV = H.csr @ basis.vectors
    M = basis.vectors.conj().T @ HV
    if np.abs(M - M.conj().T).max() > 1e-12:
        raise VerificationError("restriction is not Hermitian")
    return M


def history_state(graph: LegalGraph, circuit: QuantumCircuit | None, phi0: np.ndarray,
                  rep: str = SINGLE_TRAIN) -> SystemState:
    basis = embed_legal_basis(graph, circuit, phi0, rep)
    v = basis.vectors.sum(axis=1)
    return SystemState(v / np.linalg.norm(v), 0.0, rep)


def check_frustration_free(H: SparseHermitianOperator, state: SystemState) -> float:
    """``|H |state>|``."""
    return float(np.linalg.norm(H.csr @ state.amplitudes))


def check_invariance(H: SparseHermitianOperator, basis: EmbeddedBasis) -> float:
    """Frobenius norm of ``(1 - P) H P``, an upper bound on its operator norm."""
    V = basis.vectors
    HV = H.csr @ V
    leak = HV - V @ (V.conj().T @ HV)
    return float(np.linalg.norm(leak))


def cycle_laplacian_half(n: int) -> np.ndarray:
    """``1 - B/2`` for the cycle adjacency ``B``."""
    B = _cycle_adjacency(n)
    return np.eye(n) - 0.5 * B


def _cycle_adjacency(n: int) -> np.ndarray:
    B = np.zeros((n, n))
    for i in range(n):
        B[i, (i + 1) % n] = B[(i + 1) % n, i] = 1.0
    return B


def cycle_order(graph: LegalGraph) -> list[int]:
    """Node indices in ring order starting at ``graph.start`` (cycle graphs only)."""
    if not graph.is_cycle():
        raise VerificationError("legal graph is not a cycle")
    nbr: dict[int, list[int]] = {i: [] for i in range(len(graph))}
    for i, j, _ in graph.edges:
        nbr[i].append(j)
        nbr[j].append(i)
    order, prev = [graph.start], None
    while len(order) < len(graph):
        cur = order[-1]
        nxt = [x for x in sorted(nbr[cur]) if x != prev][0]
        prev = cur
        order.append(nxt)
    return order


def adjacency_in_cycle_order(graph: LegalGraph) -> np.ndarray:
    o = cycle_order(graph)
    return graph.adjacency[np.ix_(o, o)]


# ---------------------------------------------------------------------------
# sector scans

def _eigmin(block: sp.csr_matrix, k: int = 1) -> np.ndarray:
    if block.shape[0] <= 3000:
        return np.linalg.eigvalsh(block.toarray())[:k]
    return np.sort(sla_sparse.eigsh(block, k=k, which="SA", tol=1e-10)[0])


def _components(H: sp.csr_matrix, idx: np.ndarray) -> list[np.ndarray]:
    sub = H[idx][:, idx]
    ncomp, labels = csgraph.connected_components(abs(sub) > 0, directed=False)
    return [idx[labels == c] for c in range(ncomp)]


@dataclass
class SectorReport:
    train_count: int
    phi0_sector: str  # "all", a work basis index, or "stray"
    dim: int
    min_energy: float
    min_nonzero_energy: float | None
    null_dim: int

    def to_json(self) -> dict:
        return {"train_count": self.train_count, "phi0_sector": self.phi0_sector, "dim": self.dim,
                "min_energy": self.min_energy, "min_nonzero_energy": self.min_nonzero_energy,
                "null_dim": self.null_dim}


@dataclass
class GapReport:
    cycle_length: int
    sectors: list[SectorReport]
    aqc_path: list[tuple[float, float]]  # (s, gap inside the sector holding psi_0)
    aqc_global: list[tuple[float, float]] = field(default_factory=list)

    def illegal(self, include_stray: bool = False, include_dead: bool = False) -> list[SectorReport]:
        out = []
        for s in self.sectors:
            if s.train_count == 0 and not include_dead:
                continue
            if s.train_count == 1 and s.phi0_sector == "0":
                continue
            if s.phi0_sector == "stray" and not include_stray:
                continue
            out.append(s)
        return out

    def min_illegal_energy(self, include_stray: bool = False) -> float:
        return min(s.min_energy for s in self.illegal(include_stray))

    def legal(self) -> SectorReport:
        return next(s for s in self.sectors if s.train_count == 1 and s.phi0_sector == "0")

    def to_json(self) -> dict:
        return {"cycle_length": self.cycle_length,
                "sectors": [s.to_json() for s in self.sectors],
                "aqc_path": [{"s": s, "gap": g} for s, g in self.aqc_path],
                "aqc_global": [{"s": s, "gap": g} for s, g in self.aqc_global]}


def _summary(vals: np.ndarray, zero_tol: float) -> tuple[float, float | None, int]:
    vals = np.sort(vals)
    nz = vals[vals > zero_tol]
    return float(vals[0]), (float(nz[0]) if nz.size else None), int(np.sum(vals <= zero_tol))


def _train_counts(layout: ClockLayout) -> np.ndarray:
    counts = np.zeros(1, dtype=np.int64)
    for s in layout.sites:
        local = np.array([0] + [1] * (s.dim - 1))
        counts = (counts[:, None] + local[None, :]).ravel()
    return np.tile(counts, 2 ** layout.n)  # work qubits are the most significant digits


def sector_gap_scan(circuit: QuantumCircuit, layout: ClockLayout, *, max_dim: int = 1 << 14,
                    s_grid=None, zero_tol: float = 1e-9,
                    multi_train: bool = True) -> GapReport:
    """Diagonalise ``H_3S + H_clock + H_datainit`` sector by sector.

    Train-number blocks come from the full clock space (needs
    ``dim <= max_dim``); the one-train block is further split into the
    legal sectors of each computational-basis initial state and the
    remaining ("stray") complement.  The AQC path interpolates ``H_init``
    to ``H_3S`` and is diagonalised inside the sector holding ``psi_0``.
    """
    check_consistent(layout, circuit)
    graph = enumerate_legal_graph(layout)
    reports: list[SectorReport] = []

    # one-train sector in the single-train representation
    H1 = assemble(build_h3s(circuit, layout) + build_h_clock(layout) + build_h_datainit(layout))
    dw = 2 ** layout.n
    bases = []
    for x in range(dw):
        b = embed_legal_basis(graph, None, basis_state(layout.n, x))
        bases.append(b.vectors)
        M = restrict(H1, b)
        e0, e1, nd = _summary(np.linalg.eigvalsh(M), zero_tol)
        reports.append(SectorReport(1, str(x), M.shape[0], e0, e1, nd))
    Vall = np.hstack(bases)
    if Vall.shape[1] < H1.dim:
        Q = sla.null_space(Vall.conj().T)
        Ms = Q.conj().T @ (H1.csr @ Q)
        e0, e1, nd = _summary(np.linalg.eigvalsh((Ms + Ms.conj().T) / 2), zero_tol)
        reports.append(SectorReport(1, "stray", Q.shape[1], e0, e1, nd))

    if multi_train:
        full_dim = 2 ** layout.n * int(np.prod([s.dim for s in layout.sites], dtype=object))
        if full_dim > max_dim:
            raise VerificationError(f"full clock dimension {full_dim} exceeds {max_dim}")
        Hf = assemble(build_h3s(circuit, layout, FULL_CLOCK) + build_h_clock(layout, FULL_CLOCK)
                      + build_h_datainit(layout, FULL_CLOCK)).csr
        counts = _train_counts(layout)
        for j in sorted(set(counts.tolist())):
            if j == 1:
                continue
            idx = np.flatnonzero(counts == j)
            vals = []
            mins = []
            for comp in _components(Hf, idx):
                block = Hf[comp][:, comp]
                if j == 0 or comp.size <= 3000:
                    ev = np.linalg.eigvalsh(block.toarray()) if comp.size > 1 else block.toarray().real.ravel()
                    vals.append(ev)
                else:
                    mins.append(_eigmin(block, 2))
            allv = np.concatenate(vals + mins) if (vals or mins) else np.zeros(0)
            e0, e1, nd = _summary(allv, zero_tol)
            reports.append(SectorReport(j, "all", int(idx.size), e0, e1, nd))

    # AQC path inside the psi_0 sector
    s_grid = list(np.linspace(0.0, 1.0, 21)) if s_grid is None else list(s_grid)
    Hinit = assemble(build_h_init(layout))
    H3 = assemble(build_h3s(circuit, layout))
    b0 = embed_legal_basis(graph, None, basis_state(layout.n, 0))
    Ai, A3 = restrict(Hinit, b0), restrict(H3, b0)
    path, glob = [], []
    for s in s_grid:
        ev = np.linalg.eigvalsh((1 - s) * Ai + s * A3)
        path.append((float(s), float(ev[1] - ev[0])))
        evg = np.linalg.eigvalsh(interpolate(Hinit, H3, float(s)).dense())
        glob.append((float(s), float(evg[1] - evg[0])))
    return GapReport(graph.ring_length, reports, path, glob)
