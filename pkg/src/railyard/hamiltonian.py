"""Sparse Hermitian operators over work (x) clock space and their builders.

Two representations are available:

``single_train``
    basis ``|w> (x) |train at position p>`` with index ``w * P + p``, where
    ``P`` is ``layout.train_positions``.  Exact for every builder here
    because each one conserves the number of active clock sites.
``full_clock``
    the literal tensor product of the work qubits followed by every clock
    site in id order, most significant first.

Every term is stored as a short list of :class:`LocalPiece` products so it
can be lowered to either representation and its support can be inspected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .circuit import GATES, GateSpec, QuantumCircuit
from .layout import (LEFT, RIGHT, LOWER_3, LOWER_23, UPPER_3, UPPER_23, ClockLayout,
                     LayoutError, build_pulse_layout, check_consistent)

SINGLE_TRAIN, FULL_CLOCK = "single_train", "full_clock"
HERMITIAN_TOL = 1e-12
DROP_TOL = 1e-15
FULL_DIM_LIMIT = 1 << 22

P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
SX = GATES["X"]
CNOT_4 = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


class HamiltonianError(ValueError):
    pass


# ---------------------------------------------------------------------------
# operator

class SparseHermitianOperator:
    """Immutable Hermitian matrix in CSR form, tagged with its representation."""

    def __init__(self, matrix, rep: str, tags: Sequence[str] = (), check: bool = True):
        m = sp.csr_matrix(matrix, dtype=complex)
        m.sum_duplicates()
        m.data[np.abs(m.data) < DROP_TOL] = 0
        m.eliminate_zeros()
        m.sort_indices()
        self._m = m
        self.rep = rep
        self.tags = tuple(tags)
        if check:
            err = self.hermitian_error()
            if err > HERMITIAN_TOL:
                raise HamiltonianError(f"operator is not Hermitian (max deviation {err:.3e})")

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def csr(self) -> sp.csr_matrix:
        return self._m

    @property
    def nnz(self) -> int:
        return self._m.nnz

    def hermitian_error(self) -> float:
        d = self._m - self._m.conj().T
        return float(np.abs(d.data).max()) if d.nnz else 0.0

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate triplets sorted by (row, col)."""
        coo = self._m.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64), coo.data[order]

    def dense(self) -> np.ndarray:
        return self._m.toarray()

    @cached_property
    def _kernel(self) -> kernels.CSRKernel:
        return kernels.CSRKernel(self._m)

    def matvec(self, x: np.ndarray, threads: int | None = None) -> np.ndarray:
        return self._kernel.matvec(x, threads)

    def __matmul__(self, x):
        return self.matvec(x)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.dense())

    def _same_space(self, other: "SparseHermitianOperator") -> None:
        if self.rep != other.rep:
            raise HamiltonianError(f"representation mismatch: {self.rep} vs {other.rep}")
        if self.dim != other.dim:
            raise HamiltonianError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "SparseHermitianOperator") -> "SparseHermitianOperator":
        self._same_space(other)
        return SparseHermitianOperator(self._m + other._m, self.rep, self.tags + other.tags)

    def scaled(self, c: float) -> "SparseHermitianOperator":
        return SparseHermitianOperator(self._m * float(c), self.rep, self.tags, check=False)

    def equals(self, other: "SparseHermitianOperator", atol: float = 0.0) -> bool:
        if self.rep != other.rep or self.dim != other.dim:
            return False
        d = self._m - other._m
        return (float(np.abs(d.data).max()) if d.nnz else 0.0) <= atol

    def norm_bound(self) -> float:
        """Largest absolute row sum, an upper bound on the spectral norm."""
        return float(np.abs(self._m).sum(axis=1).max()) if self.nnz else 0.0

    def __repr__(self) -> str:
        return f"SparseHermitianOperator(dim={self.dim}, rep={self.rep}, nnz={self.nnz})"


def zero_operator(dim: int, rep: str) -> SparseHermitianOperator:
    return SparseHermitianOperator(sp.csr_matrix((dim, dim), dtype=complex), rep)


# ---------------------------------------------------------------------------
# terms

@dataclass(frozen=True)
class LocalPiece:
    """``coeff * W (x) prod_s |to_s><from_s|``.

    ``work`` is ``(qubits, matrix)`` or ``None`` for the identity; ``clock``
    lists ``(site, to, from)`` triples, at most one per site.
    """

    coeff: complex
    work: tuple[tuple[int, ...], np.ndarray] | None
    clock: tuple[tuple[int, int, int], ...]

    def adjoint(self) -> "LocalPiece":
        w = None if self.work is None else (self.work[0], self.work[1].conj().T)
        return LocalPiece(np.conj(self.coeff), w, tuple((s, b, a) for s, a, b in self.clock))


@dataclass(frozen=True)
class ClockSpace:
    layout: ClockLayout
    rep: str = SINGLE_TRAIN

    def __post_init__(self):
        if self.rep not in (SINGLE_TRAIN, FULL_CLOCK):
            raise HamiltonianError(f"unknown representation {self.rep!r}")
        if self.rep == FULL_CLOCK and self.dim > FULL_DIM_LIMIT:
            raise HamiltonianError(f"full_clock dimension {self.dim} exceeds {FULL_DIM_LIMIT}")

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def radices(self) -> list[int]:
        return [2] * self.n + [s.dim for s in self.layout.sites]

    @property
    def dim(self) -> int:
        if self.rep == SINGLE_TRAIN:
            return (2 ** self.n) * self.layout.train_positions
        return int(np.prod(self.radices, dtype=object))

    def index(self, work: int, clock: dict[int, int] | tuple[int, int]) -> int:
        """Basis index of work index ``work`` with the given clock state.

        ``clock`` is a ``(site, state)`` train position or, for the full
        representation, a ``{site: state}`` map (missing sites inactive).
        """
        if self.rep == SINGLE_TRAIN:
            if isinstance(clock, dict):
                active = [(s, a) for s, a in clock.items() if a]
                if len(active) != 1:
                    raise HamiltonianError("single_train states need exactly one active site")
                clock = active[0]
            return work * self.layout.train_positions + self.layout.position_index[tuple(clock)]
        if not isinstance(clock, dict):
            clock = {clock[0]: clock[1]}
        idx = work
        for s in self.layout.sites:
            idx = idx * s.dim + clock.get(s.id, 0)
        return idx

    def lower(self, pieces: Iterable[LocalPiece]):
        """COO triplets for a sum of pieces in this representation."""
        rows, cols, vals = [], [], []
        for pc in pieces:
            r, c, v = (self._single_train(pc) if self.rep == SINGLE_TRAIN
                       else self._full_clock(pc))
            rows.append(r)
            cols.append(c)
            vals.append(v)
        if not rows:
            return (np.zeros(0, np.int64),) * 2 + (np.zeros(0, complex),)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def _work_coo(self, pc: LocalPiece):
        dw = 2 ** self.n
        if pc.work is None:
            ar = np.arange(dw, dtype=np.int64)
            return ar, ar, np.ones(dw, dtype=complex)
        qubits, m = pc.work
        return kernels.expand_local([2] * self.n, list(qubits), m)

    def _single_train(self, pc: LocalPiece):
        lay = self.layout
        P = lay.train_positions
        listed = {s: (to, fr) for s, to, fr in pc.clock}
        moves = []
        for p, (x, alpha) in enumerate(lay.positions):
            if any((alpha if s == x else 0) != fr for s, (to, fr) in listed.items()):
                continue
            after = {s: to for s, (to, fr) in listed.items()}
            if x not in listed:
                after[x] = alpha
            active = [(s, a) for s, a in after.items() if a]
            if len(active) != 1:
                raise HamiltonianError("term does not conserve the number of trains")
            moves.append((lay.position_index[active[0]], p))
        wr, wc, wv = self._work_coo(pc)
        if not moves:
            return (np.zeros(0, np.int64),) * 2 + (np.zeros(0, complex),)
        mv = np.array(moves, dtype=np.int64)
        rows = (wr[:, None] * P + mv[None, :, 0]).ravel()
        cols = (wc[:, None] * P + mv[None, :, 1]).ravel()
        vals = np.repeat(pc.coeff * wv, len(moves))
        return rows, cols, vals

    def _full_clock(self, pc: LocalPiece):
        local = np.array([[pc.coeff]], dtype=complex)
        subs: list[int] = []
        if pc.work is not None:
            local = np.kron(local, pc.work[1])
            subs.extend(pc.work[0])
        for s, to, fr in pc.clock:
            d = self.layout.sites[s].dim
            m = np.zeros((d, d), dtype=complex)
            m[to, fr] = 1.0
            local = np.kron(local, m)
            subs.append(self.n + s)
        if not subs:
            ar = np.arange(self.dim, dtype=np.int64)
            return ar, ar, np.full(self.dim, pc.coeff, dtype=complex)
        return kernels.expand_local(self.radices, subs, local)

    def operator(self, pieces: Iterable[LocalPiece], tags: Sequence[str] = ()) -> SparseHermitianOperator:
        r, c, v = self.lower(pieces)
        m = sp.coo_matrix((v, (r, c)), shape=(self.dim, self.dim)).tocsr()
        return SparseHermitianOperator(m, self.rep, tags)


@dataclass(frozen=True)
class Term:
    """One tagged Hamiltonian term, e.g. ``proj:t=3`` or ``up:t=2:a``."""

    tag: str
    pieces: tuple[LocalPiece, ...]
    space: ClockSpace = field(repr=False)

    @cached_property
    def op(self) -> SparseHermitianOperator:
        return self.space.operator(self.pieces, (self.tag,))

    @property
    def support(self) -> tuple[frozenset[int], frozenset[int]]:
        """(work qubits, clock sites) acted on non-trivially."""
        qs, cs = set(), set()
        for pc in self.pieces:
            if pc.work is not None:
                qs.update(pc.work[0])
            cs.update(s for s, _, _ in pc.clock)
        return frozenset(qs), frozenset(cs)

    @property
    def locality(self) -> int:
        q, c = self.support
        return len(q) + len(c)


@dataclass(frozen=True)
class TermList:
    terms: tuple[Term, ...]
    space: ClockSpace

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: "TermList") -> "TermList":
        if other.space.rep != self.space.rep or other.space.dim != self.space.dim:
            raise HamiltonianError("cannot combine term lists over different spaces")
        return TermList(self.terms + other.terms, self.space)

    def scaled(self, c: float) -> "TermList":
        return TermList(tuple(
            Term(t.tag, tuple(LocalPiece(c * p.coeff, p.work, p.clock) for p in t.pieces), self.space)
            for t in self.terms), self.space)

    def tagged(self, prefix: str) -> list[Term]:
        return [t for t in self.terms if t.tag.startswith(prefix)]


def assemble(terms: TermList | Sequence[Term]) -> SparseHermitianOperator:
    """Exact sum of the terms; Hermiticity is re-checked.

    An empty :class:`TermList` gives the zero operator on its space.
    """
    if isinstance(terms, TermList) and not len(terms):
        return zero_operator(terms.space.dim, terms.space.rep)
    terms = tuple(terms)
    if not terms:
        raise HamiltonianError("cannot assemble an empty term list without a space; "
                               "use zero_operator")
    space = terms[0].space
    for t in terms:
        if t.space.rep != space.rep or t.space.dim != space.dim:
            raise HamiltonianError("mixed representations in term list")
    pieces = [p for t in terms for p in t.pieces]
    return space.operator(pieces, tuple(t.tag for t in terms))


def interpolate(hA: SparseHermitianOperator, hB: SparseHermitianOperator, s: float) -> SparseHermitianOperator:
    """``(1 - s) hA + s hB``."""
    hA._same_space(hB)
    if not 0.0 <= s <= 1.0:
        raise HamiltonianError("interpolation parameter must lie in [0, 1]")
    m = (1.0 - s) * hA.csr + s * hB.csr
    return SparseHermitianOperator(m, hA.rep, hA.tags + hB.tags)


# ---------------------------------------------------------------------------
# piece helpers

def _hop(a: int, fa: int, b: int, tb: int) -> tuple[tuple[int, int, int], ...]:
    """Clock part of ``train at (a, fa) -> train at (b, tb)``."""
    return ((a, 0, fa), (b, tb, 0))


def _hop_pair(coeff, work, a, fa, b, tb) -> list[LocalPiece]:
    fwd = LocalPiece(coeff, work, _hop(a, fa, b, tb))
    return [fwd, fwd.adjoint()]


def _flip(coeff, work, s: int, to: int, fr: int) -> list[LocalPiece]:
    fwd = LocalPiece(coeff, work, ((s, to, fr),))
    return [fwd, fwd.adjoint()]


def _occ(coeff, work, s: int, state: int) -> LocalPiece:
    return LocalPiece(coeff, work, ((s, state, state),))


def _active(layout: ClockLayout, s: int, coeff=1.0, work=None) -> list[LocalPiece]:
    return [_occ(coeff, work, s, a) for a in layout.sites[s].active_states]


def _gate_work(g: GateSpec):
    if g.is_cnot:
        return ((g.control, g.target), CNOT_4)
    if g.is_identity:
        return None
    return ((g.target,), g.matrix)


def _proj_step(layout: ClockLayout, a: int, fa: int, b: int, tb: int, work) -> list[LocalPiece]:
    """``1/2 (|a><a| + |b><b| - W (x) |b><a| - W^dag (x) |a><b|)``."""
    return ([_occ(0.5, None, a, fa), _occ(0.5, None, b, tb)]
            + _hop_pair(-0.5, work, a, fa, b, tb))


# ---------------------------------------------------------------------------
# builders

def build_feynman(circuit: QuantumCircuit, rep: str = SINGLE_TRAIN) -> TermList:
    """Feynman hop Hamiltonian on a plain pulse clock (no gadgets)."""
    space = ClockSpace(build_pulse_layout(circuit), rep)
    terms = [Term(f"hop:t={st.gate_index + 1}",
                  tuple(_hop_pair(1.0, _gate_work(st.gate), st.src, 1, st.dst, 1)), space)
             for st in space.layout.steps]
    return TermList(tuple(terms), space)


def build_feynman_projector(circuit: QuantumCircuit, rep: str = SINGLE_TRAIN) -> TermList:
    """Projector form of the Feynman Hamiltonian on a plain pulse clock."""
    space = ClockSpace(build_pulse_layout(circuit), rep)
    terms = [Term(f"proj:t={st.gate_index + 1}",
                  tuple(_proj_step(space.layout, st.src, 1, st.dst, 1, _gate_work(st.gate))), space)
             for st in space.layout.steps]
    return TermList(tuple(terms), space)


def build_h3s(circuit: QuantumCircuit, layout: ClockLayout, rep: str = SINGLE_TRAIN) -> TermList:
    """3-local railroad-switch Hamiltonian (line) or its cycle version.

    Single-qubit steps get the plain projector term; each CNOT step gets
    three projectors per track.
    """
    if layout.model != "3local":
        raise LayoutError(f"build_h3s needs a 3local layout, got {layout.model!r}")
    check_consistent(layout, circuit)
    space = ClockSpace(layout, rep)
    terms: list[Term] = []
    for st in layout.steps:
        t = st.gate_index + 1
        suffix = f"t={t}" + ("'" if st.half else "")
        g = st.gate
        if not g.is_cnot:
            terms.append(Term(f"proj:{suffix}",
                              tuple(_proj_step(layout, st.src, 1, st.dst, 1, _gate_work(g))), space))
            continue
        if not st.gadget:
            raise LayoutError(f"CNOT at step {t} has no gadget in the layout")
        gs = st.sites
        ctl1, ctl0 = ((g.control,), P1), ((g.control,), P0)
        flip = ((g.target,), SX)
        for name, track, ctl, mid in (("up", UPPER_3, ctl1, flip), ("lo", LOWER_3, ctl0, None)):
            a, b = gs[track[0]], gs[track[1]]
            outer = [
                [_occ(0.5, ctl, st.src, 1), _occ(0.5, ctl, a, 1)] + _hop_pair(-0.5, ctl, st.src, 1, a, 1),
                [_occ(0.5, ctl, b, 1), _occ(0.5, ctl, st.dst, 1)] + _hop_pair(-0.5, ctl, b, 1, st.dst, 1),
            ]
            middle = [_occ(0.5, None, a, 1), _occ(0.5, None, b, 1)] + _hop_pair(-0.5, mid, a, 1, b, 1)
            terms.append(Term(f"{name}:{suffix}:enter", tuple(outer[0]), space))
            terms.append(Term(f"{name}:{suffix}:cross", tuple(middle), space))
            terms.append(Term(f"{name}:{suffix}:leave", tuple(outer[1]), space))
    return TermList(tuple(terms), space)


def build_h23(circuit: QuantumCircuit, layout: ClockLayout, rep: str = SINGLE_TRAIN) -> TermList:
    """2-local qubit-qutrit hop Hamiltonian (no projector completion)."""
    if layout.model != "qutrit":
        raise LayoutError(f"build_h23 needs a qutrit layout, got {layout.model!r}")
    check_consistent(layout, circuit)
    space = ClockSpace(layout, rep)
    sites = layout.sites
    terms: list[Term] = []
    for st in layout.steps:
        t = st.gate_index + 1
        suffix = f"t={t}" + ("'" if st.half else "")
        g = st.gate
        src_exit = sites[st.src].exit_state
        if not g.is_cnot:
            dst = sites[st.dst]
            terms.append(Term(f"hop:{suffix}",
                              tuple(_hop_pair(1.0, None, st.src, src_exit, st.dst, dst.entry_state)),
                              space))
            if dst.kind == "qutrit":
                terms.append(Term(f"gate:{suffix}",
                                  tuple(_flip(1.0, _gate_work(g), st.dst, RIGHT, LEFT)), space))
            elif not g.is_identity:
                raise LayoutError(f"gate at step {t} needs a qutrit site")
            continue
        if not st.gadget:
            raise LayoutError(f"CNOT at step {t} has no qutrit gadget in the layout")
        gs = st.sites
        ctl1, ctl0 = ((g.control,), P1), ((g.control,), P0)
        flip = ((g.target,), SX)
        for name, track, ctl, mid in (("up", UPPER_23, ctl1, flip), ("lo", LOWER_23, ctl0, None)):
            chain = [st.src, *(gs[k] for k in track), st.dst]
            for i, (a, b) in enumerate(zip(chain, chain[1:])):
                terms.append(Term(f"{name}:{suffix}:hop{i}",
                                  tuple(_hop_pair(1.0, None, a, sites[a].exit_state,
                                                  b, sites[b].entry_state)), space))
            for k, work in ((track[0], ctl), (track[2], mid), (track[4], ctl)):
                terms.append(Term(f"{name}:{suffix}:turn{k[1]}",
                                  tuple(_flip(1.0, work, gs[k], RIGHT, LEFT)), space))
    return TermList(tuple(terms), space)


def build_h_init(layout: ClockLayout, n: int | None = None, rep: str = SINGLE_TRAIN) -> TermList:
    """Clock and data initialization penalties; ground state ``|0..0>|c_0>``."""
    n = layout.n if n is None else n
    if n != layout.n:
        raise HamiltonianError(f"layout has {layout.n} work qubits, not {n}")
    space = ClockSpace(layout, rep)
    c0 = layout.origin
    terms = [Term("clockinit:c0", (_occ(1.0, None, c0, 0),), space)]
    for s in layout.sites:
        if s.id != c0:
            terms.append(Term(f"clockinit:{s.label}", tuple(_active(layout, s.id)), space))
    for k in range(n):
        terms.append(Term(f"datainit:q{k}", (_occ(1.0, ((k,), P1), c0, 1),), space))
    return TermList(tuple(terms), space)


def build_h_datainit(layout: ClockLayout, rep: str = SINGLE_TRAIN) -> TermList:
    space = ClockSpace(layout, rep)
    return TermList(tuple(Term(f"datainit:q{k}", (_occ(1.0, ((k,), P1), layout.origin, 1),), space)
                          for k in range(layout.n)), space)


def _pair_pieces(layout: ClockLayout, a: int, b: int, coeff: float) -> list[LocalPiece]:
    return [LocalPiece(coeff, None, ((a, x, x), (b, y, y)))
            for x in layout.sites[a].active_states for y in layout.sites[b].active_states]


def build_h_clock(layout: ClockLayout, rep: str = SINGLE_TRAIN) -> TermList:
    """Penalty on every clock-adjacent pair of simultaneously active sites."""
    space = ClockSpace(layout, rep)
    terms = [Term(f"clock:{layout.sites[a].label}-{layout.sites[b].label}",
                  tuple(_pair_pieces(layout, a, b, 1.0)), space)
             for a, b in layout.adjacent_pairs]
    return TermList(tuple(terms), space)


def build_h_active(layout: ClockLayout, a1: float, a2: float, rep: str = SINGLE_TRAIN) -> TermList:
    """``-a1 * sum_j n_j + a2 * sum_<jk> n_j n_k``; both coefficients must be positive."""
    if not (a1 > 0 and a2 > 0):
        raise HamiltonianError("a1 and a2 must both be positive")
    space = ClockSpace(layout, rep)
    terms = [Term(f"active:{s.label}", tuple(_active(layout, s.id, -a1)), space)
             for s in layout.sites]
    terms += [Term(f"active:{layout.sites[a].label}-{layout.sites[b].label}",
                   tuple(_pair_pieces(layout, a, b, a2)), space)
              for a, b in layout.adjacent_pairs]
    return TermList(tuple(terms), space)


def train_number(layout: ClockLayout, rep: str = FULL_CLOCK) -> SparseHermitianOperator:
    """Number of active clock sites."""
    space = ClockSpace(layout, rep)
    return space.operator([p for s in layout.sites for p in _active(layout, s.id)], ("N",))


# ---------------------------------------------------------------------------
# coordinate dumps

def export_operator(op: SparseHermitianOperator, path, extra: dict | None = None) -> None:
    rows, cols, vals = op.entries()
    header = {"dim": op.dim, "rep": op.rep, "nnz": int(len(rows)), "tags": list(dict.fromkeys(op.tags))}
    if extra:
        header.update(extra)
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{int(r)} {int(c)} {float(v.real)!r} {float(v.imag)!r}\n")


def load_operator(path, check: bool = True) -> tuple[SparseHermitianOperator, dict]:
    """Read a coordinate dump; raises :class:`HamiltonianError` on bad data."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise HamiltonianError("operator dump is missing its JSON header")
        header = json.loads(first[1:])
        lines = [ln.split() for ln in fh if ln.strip()]
    dim = int(header["dim"])
    try:
        data = np.array(lines, dtype=float).reshape(-1, 4)
    except ValueError as exc:
        raise HamiltonianError(f"malformed operator dump: {exc}") from None
    if lines and any(len(ln) != 4 for ln in lines):
        raise HamiltonianError("operator dump rows must have four columns")
    r, c = data[:, 0].astype(np.int64), data[:, 1].astype(np.int64)
    m = sp.coo_matrix((data[:, 2] + 1j * data[:, 3], (r, c)), shape=(dim, dim)).tocsr()
    return SparseHermitianOperator(m, header["rep"], header.get("tags", ()), check=check), header
