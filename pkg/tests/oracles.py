"""Independent reference constructions used by the tests.

Everything here is built from explicit Kronecker products of single-factor
matrices; none of it goes through the package's lowering machinery.
"""

import numpy as np
import scipy.sparse as sp

N1 = np.diag([0.0, 1.0])
LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1|
RAISE = LOWER.T
P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
X = np.array([[0.0, 1.0], [1.0, 0.0]])


class QubitSpace:
    """Work qubits followed by clock qubits, most significant first."""

    def __init__(self, n_work, n_sites):
        self.n, self.m = n_work, n_sites
        self.total = n_work + n_sites

    def op(self, factors):
        """``factors`` maps factor index to a 2x2 matrix; identity elsewhere."""
        out = sp.identity(1, dtype=complex, format="csr")
        for k in range(self.total):
            f = factors.get(k)
            out = sp.kron(out, sp.csr_matrix(f, dtype=complex) if f is not None
                          else sp.identity(2, dtype=complex), format="csr")
        return out

    def site(self, s):
        return self.n + s


def h3s_full(layout):
    """3-local railroad-switch Hamiltonian written out factor by factor."""
    Q = QubitSpace(layout.n, len(layout.sites))
    dim = 2 ** Q.total
    H = sp.csr_matrix((dim, dim), dtype=complex)

    def proj(a, b, work=None, ctl=None):
        """1/2 ctl (n_a + n_b - W hop_ab - W^dag hop_ba)."""
        sa, sb = Q.site(a), Q.site(b)
        base = dict(ctl or {})
        diag = Q.op({**base, sa: N1}) + Q.op({**base, sb: N1})
        w = dict(work or {})
        wd = {k: v.conj().T for k, v in w.items()}
        fwd = Q.op({**base, **w, sa: LOWER, sb: RAISE})
        bwd = Q.op({**base, **wd, sa: RAISE, sb: LOWER})
        return 0.5 * (diag - fwd - bwd)

    for stp in layout.steps:
        g = stp.gate
        if not g.is_cnot:
            work = None if g.is_identity else {g.target: g.matrix}
            H = H + proj(stp.src, stp.dst, work)
            continue
        gs = stp.sites
        for ctl_m, a, b, mid in ((P1, gs["u1"], gs["u2"], {g.target: X}),
                                 (P0, gs["l1"], gs["l2"], None)):
            ctl = {g.control: ctl_m}
            H = H + proj(stp.src, a, ctl=ctl) + proj(a, b, work=mid) + proj(b, stp.dst, ctl=ctl)
    return H


def train_count_diag(layout):
    """Number of active clock qubits, as a diagonal over the full space."""
    counts = np.zeros(1, dtype=int)
    for _ in layout.sites:
        counts = (counts[:, None] + np.array([0, 1])[None, :]).ravel()
    return np.tile(counts, 2 ** layout.n)


def single_train_rows(layout):
    """Full-space indices of the one-train states, in single_train order."""
    m = len(layout.sites)
    idx = []
    for w in range(2 ** layout.n):
        for s, _ in layout.positions:
            idx.append(w * 2 ** m + 2 ** (m - 1 - s))
    return np.array(idx)


def nontrivial_factors(M, radices):
    """Tensor factors on which the dense matrix ``M`` acts non-trivially."""
    out = []
    D = int(np.prod(radices))
    T = M.reshape(list(radices) * 2)
    k = len(radices)
    for j, d in enumerate(radices):
        red = np.trace(T, axis1=j, axis2=k + j) / d
        rest = [r for i, r in enumerate(radices) if i != j]
        red = red.reshape(int(np.prod(rest)), -1)
        # rebuild red (x) I_j with factor j in place
        full = np.kron(red, np.eye(d)).reshape(rest + [d] + rest + [d])
        perm = list(range(k - 1))
        perm.insert(j, k - 1)
        perm2 = [p + k for p in perm]
        full = full.transpose(perm + perm2).reshape(D, D)
        if np.abs(full - M).max() > 1e-13:
            out.append(j)
    return out
