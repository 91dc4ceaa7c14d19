"""Continuous-time quantum walks on the line and the cycle.

The walk Hamiltonian is minus the adjacency matrix.  Sites are numbered
``1..L`` in the public functions; arrays are 0-based.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import averaging_kernel

LINE, CYCLE = "line", "cycle"
DEGENERATE_TOL = 1e-10


class WalkError(ValueError):
    pass


@dataclass(frozen=True)
class WalkSpec:
    topology: str
    length: int
    start: int = 1

    def __post_init__(self):
        if self.topology not in (LINE, CYCLE):
            raise WalkError(f"unknown topology {self.topology!r}")
        if self.length < (2 if self.topology == LINE else 3):
            raise WalkError(f"{self.topology} of length {self.length} is too short")
        if not 1 <= self.start <= self.length:
            raise WalkError(f"start site {self.start} outside 1..{self.length}")

    def require_lemma_length(self) -> None:
        if self.topology == CYCLE and self.length % 4:
            raise WalkError(f"cycle length {self.length} is not divisible by 4")


@dataclass(frozen=True, eq=False)
class SpectralData:
    topology: str
    L: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns; complex plane waves on the cycle
    classes: tuple[tuple[int, ...], ...]
    real_eigenvectors: np.ndarray = field(default=None)

    @property
    def hamiltonian(self) -> np.ndarray:
        return walk_hamiltonian(self.topology, self.L)

    def residual(self) -> float:
        H = self.hamiltonian
        V = self.eigenvectors
        return float(np.abs(H @ V - V * self.eigenvalues).max())

    def projectors(self) -> list[np.ndarray]:
        return [self.eigenvectors[:, list(c)] @ self.eigenvectors[:, list(c)].conj().T
                for c in self.classes]


def walk_hamiltonian(topology: str, L: int) -> np.ndarray:
    H = np.zeros((L, L))
    i = np.arange(L - 1)
    H[i, i + 1] = H[i + 1, i] = -1.0
    if topology == CYCLE:
        H[0, L - 1] = H[L - 1, 0] = -1.0
    return H


def _classes(vals: np.ndarray) -> tuple[tuple[int, ...], ...]:
    order = np.argsort(vals, kind="stable")
    out: list[list[int]] = []
    for j in order:
        if out and abs(vals[j] - vals[out[-1][0]]) <= DEGENERATE_TOL:
            out[-1].append(int(j))
        else:
            out.append([int(j)])
    return tuple(tuple(sorted(c)) for c in out)


def line_spectrum(L: int) -> SpectralData:
    """``lambda_j = -2 cos(j pi / (L+1))``, sine eigenvectors, ``j = 1..L``."""
    if L < 2:
        raise WalkError("line length must be at least 2")
    j = np.arange(1, L + 1)
    vals = -2.0 * np.cos(j * np.pi / (L + 1))
    k = np.arange(1, L + 1)
    V = math.sqrt(2.0 / (L + 1)) * np.sin(np.outer(k, j) * np.pi / (L + 1))
    return SpectralData(LINE, L, vals, V, _classes(vals), V)


def cycle_spectrum(L: int) -> SpectralData:
    """Plane waves ``exp(i p_j k) / sqrt(L)`` with ``p_j = 2 pi j / L``."""
    if L < 3:
        raise WalkError("cycle length must be at least 3")
    j = np.arange(L)
    p = 2.0 * np.pi * j / L
    vals = -2.0 * np.cos(p)
    k = np.arange(L)
    V = np.exp(1j * np.outer(k, p)) / math.sqrt(L)
    # real basis: cos for 0 <= j <= L/2, sin for the partner L - j
    R = np.zeros((L, L))
    for jj in range(L):
        if jj == 0 or 2 * jj == L:
            R[:, jj] = np.cos(k * p[jj]) / math.sqrt(L)
        elif 2 * jj < L:
            R[:, jj] = np.cos(k * p[jj]) * math.sqrt(2.0 / L)
        else:
            R[:, jj] = np.sin(k * p[L - jj]) * math.sqrt(2.0 / L)
    return SpectralData(CYCLE, L, vals, V, _classes(vals), R)


def spectrum(topology: str, L: int) -> SpectralData:
    return line_spectrum(L) if topology == LINE else cycle_spectrum(L)


def _check_site(spec: SpectralData, *sites: int) -> None:
    for s in sites:
        if not 1 <= s <= spec.L:
            raise WalkError(f"site {s} outside 1..{spec.L}")


def walk_probability(spec: SpectralData, c: int, m: int, tau: float) -> float:
    """``|<m| exp(-i H tau) |c>|^2``."""
    _check_site(spec, c, m)
    V = spec.eigenvectors
    amp = np.sum(V[m - 1] * V[c - 1].conj() * np.exp(-1j * spec.eigenvalues * tau))
    return float(abs(amp) ** 2)


def walk_distribution(spec: SpectralData, c: int, tau: float) -> np.ndarray:
    _check_site(spec, c)
    V = spec.eigenvectors
    amp = V @ (np.exp(-1j * spec.eigenvalues * tau) * V[c - 1].conj())
    return np.abs(amp) ** 2


def sinc_kernel(delta: np.ndarray, T: float) -> np.ndarray:
    """``sin(delta T) / (delta T)``, 1 at (near-)degenerate pairs."""
    delta = np.asarray(delta, dtype=float)
    small = np.abs(delta) <= DEGENERATE_TOL
    x = np.where(small, 1.0, delta * T)
    return np.where(small, 1.0, np.sin(x) / x)


def averaged_distribution(spec: SpectralData, c: int, T: float) -> np.ndarray:
    """Uniform time average over ``[0, T]`` of the position distribution."""
    if not T > 0:
        raise WalkError("averaging time must be positive")
    _check_site(spec, c)
    R = spec.real_eigenvectors
    lam = spec.eigenvalues
    K = sinc_kernel(lam[:, None] - lam[None, :], T)
    A = R * R[c - 1][None, :]  # A[m, j] = phi_j(m) phi_j(c)
    return np.einsum("mj,jk,mk->m", A, K, A)


def averaged_distribution_complex(spec: SpectralData, c: int, T: float) -> np.ndarray:
    """Same average via the complex kernel in the plane-wave basis."""
    V = spec.eigenvectors
    lam = spec.eigenvalues
    K = averaging_kernel(lam[:, None] - lam[None, :], T)
    A = V * V[c - 1].conj()[None, :]
    return np.einsum("mj,jk,mk->m", A.conj(), K, A).real


def limiting_distribution(spec: SpectralData, c: int) -> np.ndarray:
    """Infinite-time average ``sum_E |<m|P_E|c>|^2`` over eigenspaces."""
    _check_site(spec, c)
    out = np.zeros(spec.L)
    for Pm in spec.projectors():
        out += np.abs(Pm[:, c - 1]) ** 2
    return out


def line_limit_closed_form(L: int, c: int) -> np.ndarray:
    m = np.arange(1, L + 1)
    return (2.0 + (m == c) + (m == L + 1 - c)) / (2.0 * (L + 1))


def cycle_limit_closed_form(L: int, c: int) -> np.ndarray:
    """``2/L - 2/L^2`` at the start and its antipode, ``1/L - 2/L^2`` elsewhere (even L)."""
    if L % 2:
        raise WalkError("closed form holds for even cycle lengths")
    out = np.full(L, 1.0 / L - 2.0 / L**2)
    for s in doubled_sites(L, c):
        out[s - 1] = 2.0 / L - 2.0 / L**2
    return out


def doubled_sites(L: int, c: int) -> tuple[int, int]:
    """Sites carrying the doubled limiting weight on an even cycle."""
    return (c, (c - 1 + L // 2) % L + 1)


def tv_distance(p, q) -> float:
    """Un-halved total variation ``sum |p - q|``."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise WalkError("distributions have different supports")
    return float(np.abs(p - q).sum())


def eigen_gap_sum(L: int) -> float:
    """Sum of ``1/|lambda_j - lambda_k|`` over ordered non-degenerate pairs on the cycle."""
    if L % 4:
        raise WalkError(f"cycle length {L} is not divisible by 4")
    lam = cycle_spectrum(L).eigenvalues
    d = np.abs(lam[:, None] - lam[None, :])
    mask = d > DEGENERATE_TOL
    return float(np.sum(1.0 / d[mask]))


def cycle_distance(L: int, a: int, b: int) -> int:
    d = abs(a - b) % L
    return min(d, L - d)


def success_sites(L: int, c: int) -> list[int]:
    """Cycle sites strictly farther than ``L/6`` from ``c``."""
    return [m for m in range(1, L + 1) if 6 * cycle_distance(L, m, c) > L]


# ---------------------------------------------------------------------------
# lemma checks

@dataclass
class Lemma1Report:
    L: int
    start: int
    taus: list[float]
    tv: list[float]
    C: float
    decays: bool

    def rows(self) -> list[dict]:
        return [{"L": self.L, "tau": t, "tv": v, "p_success": "", "bound": self.C * self.L / t}
                for t, v in zip(self.taus, self.tv)]


@dataclass
class Lemma2Report:
    L: int
    start: int
    tau_max: float | None
    region: list[int]
    p_success: float
    bound: float

    @property
    def margin(self) -> float:
        return self.p_success - self.bound

    def rows(self) -> list[dict]:
        return [{"L": self.L, "tau": "inf" if self.tau_max is None else self.tau_max, "tv": "",
                 "p_success": self.p_success, "bound": self.bound}]


def lemma1_taus(L: int, decades: int = 4, per_decade: int = 4) -> list[float]:
    return [L * 10 ** (k / per_decade) for k in range(decades * per_decade + 1)]


def check_lemma1(L: int, tau_list=None, c: int = 1) -> Lemma1Report:
    """TV distance between the line's time average and its limit, per tau.

    ``C`` is the smallest constant with ``TV <= C L / tau`` on the grid;
    ``decays`` says the running envelope ``max_{tau' >= tau} TV`` falls
    from the first grid point to the last.
    """
    spec = line_spectrum(L)
    taus = list(tau_list) if tau_list is not None else lemma1_taus(L)
    lim = limiting_distribution(spec, c)
    tv = [tv_distance(averaged_distribution(spec, c, t), lim) for t in taus]
    C = max(v * t / L for v, t in zip(tv, taus))
    env = np.maximum.accumulate(np.array(tv)[::-1])[::-1]
    decays = bool(len(env) < 2 or (env[-1] < env[0] and np.all(np.diff(env) <= 0)))
    return Lemma1Report(L, c, [float(t) for t in taus], tv, float(C), decays)


def check_lemma2(L: int, tau_max: float | None, c: int = 1) -> Lemma2Report:
    """Mass of the averaged cycle distribution farther than ``L/6`` from ``c``.

    ``tau_max=None`` uses the limiting distribution.
    """
    WalkSpec(CYCLE, L, c).require_lemma_length()
    spec = cycle_spectrum(L)
    dist = limiting_distribution(spec, c) if tau_max is None else averaged_distribution(spec, c, tau_max)
    region = success_sites(L, c)
    p = float(dist[[m - 1 for m in region]].sum())
    return Lemma2Report(L, c, tau_max, region, p, 2.0 / 3.0 - 1.0 / (3.0 * L))


CSV_COLUMNS = ("L", "tau", "tv", "p_success", "bound")


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
