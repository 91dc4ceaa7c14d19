"""Pure-numpy reference versions of the compiled kernels."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def _strides(radices: np.ndarray) -> np.ndarray:
    st = np.ones(len(radices), dtype=np.int64)
    for i in range(len(radices) - 2, -1, -1):
        st[i] = st[i + 1] * radices[i + 1]
    return st


def _local_offsets(radices, strides, subs):
    """Full-index offset contributed by every local basis index."""
    off = np.zeros(1, dtype=np.int64)
    for s in subs:
        off = (off[:, None] + np.arange(radices[s], dtype=np.int64) * strides[s]).ravel()
    return off


def expand_local(radices, subs, local):
    """COO triplets of ``local (x) identity`` on a mixed-radix product space.

    ``radices`` lists subsystem dimensions, most significant first; ``local``
    acts on subsystems ``subs`` in the listed order.
    """
    radices = np.asarray(radices, dtype=np.int64)
    subs = np.asarray(subs, dtype=np.int64)
    local = np.asarray(local, dtype=complex)
    strides = _strides(radices)
    rest = [i for i in range(len(radices)) if i not in set(subs.tolist())]
    base = _local_offsets(radices, strides, rest)
    off = _local_offsets(radices, strides, subs)
    lr, lc = np.nonzero(local)
    rows = (base[:, None] + off[lr][None, :]).ravel()
    cols = (base[:, None] + off[lc][None, :]).ravel()
    vals = np.tile(local[lr, lc], len(base))
    return rows, cols, vals


def csr_matvec_range(indptr, indices, data, x, out, lo, hi):
    """``out[lo:hi] = (A @ x)[lo:hi]`` with a fixed per-row summation order."""
    a, b = indptr[lo], indptr[hi]
    block = sp.csr_matrix((data[a:b], indices[a:b], indptr[lo:hi + 1] - a),
                          shape=(hi - lo, x.shape[0]))
    out[lo:hi] = block @ x
