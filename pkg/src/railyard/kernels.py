"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``RAILYARD_PURE_PYTHON=1`` to force the fallback.  ``RAILYARD_THREADS``
sets the default worker count for :func:`matvec`.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("RAILYARD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"


def implementations() -> dict:
    """All importable kernel modules, keyed by backend name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as mod  # type: ignore[attr-defined]
        out["compiled"] = mod
    except ImportError:
        pass
    return out


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("RAILYARD_THREADS", "1")))
    except ValueError:
        return 1


def expand_local(radices, subs, local):
    d = int(np.prod([radices[s] for s in subs]))
    if np.shape(local) != (d, d):
        raise ValueError(f"local operator has shape {np.shape(local)}, expected ({d}, {d})")
    return _impl.expand_local(radices, subs, local)


class CSRKernel:
    """int64-indexed CSR arrays prepared once for repeated matvecs."""

    def __init__(self, csr):
        self.indptr = np.ascontiguousarray(csr.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(csr.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(csr.data, dtype=np.complex128)
        self.shape = csr.shape

    def matvec(self, x: np.ndarray, threads: int | None = None, impl=None) -> np.ndarray:
        impl = impl or _impl
        x = np.ascontiguousarray(x, dtype=np.complex128)
        out = np.empty(self.shape[0], dtype=np.complex128)
        threads = threads or default_threads()
        nrow = self.shape[0]
        if threads <= 1 or nrow < 2 * threads:
            impl.csr_matvec_range(self.indptr, self.indices, self.data, x, out, 0, nrow)
            return out
        cuts = np.linspace(0, nrow, threads + 1).astype(int)
        # rows never straddle workers, so each row sums in the same order
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda ab: impl.csr_matvec_range(
                self.indptr, self.indices, self.data, x, out, ab[0], ab[1]),
                zip(cuts[:-1], cuts[1:])))
        return out
