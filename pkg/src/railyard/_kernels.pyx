# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: local-operator expansion and row-range CSR matvec."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def expand_local(radices, subs, local):
    cdef cnp.int64_t[::1] rad = np.ascontiguousarray(radices, dtype=np.int64)
    cdef cnp.int64_t[::1] sub = np.ascontiguousarray(subs, dtype=np.int64)
    loc = np.ascontiguousarray(local, dtype=np.complex128)
    cdef Py_ssize_t nsys = rad.shape[0], k = sub.shape[0]
    cdef Py_ssize_t i, j, q, c, lc, r, dim = 1, d = 1
    cdef cnp.int64_t[::1] stride = np.ones(nsys, dtype=np.int64)
    for i in range(nsys - 2, -1, -1):
        stride[i] = stride[i + 1] * rad[i + 1]
    for i in range(nsys):
        dim *= rad[i]
    for i in range(k):
        d *= rad[sub[i]]
    # local index -> full-index offset
    cdef cnp.int64_t[::1] off = np.zeros(d, dtype=np.int64)
    cdef Py_ssize_t rem
    for lc in range(d):
        rem = lc
        for i in range(k - 1, -1, -1):
            off[lc] += (rem % rad[sub[i]]) * stride[sub[i]]
            rem //= rad[sub[i]]
    # column-compressed nonzeros of the local matrix
    lr_nz, lc_nz = np.nonzero(loc.T)
    cdef cnp.int64_t[::1] colptr = np.zeros(d + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] nzrow = np.ascontiguousarray(lc_nz, dtype=np.int64)
    cdef cnp.int64_t[::1] nzcol = np.ascontiguousarray(lr_nz, dtype=np.int64)
    cdef double complex[::1] nzval = np.ascontiguousarray(loc[lc_nz, lr_nz])
    cdef Py_ssize_t nnz = nzrow.shape[0]
    for j in range(nnz):
        colptr[nzcol[j] + 1] += 1
    for j in range(d):
        colptr[j + 1] += colptr[j]
    cdef Py_ssize_t total = (dim // d) * nnz
    rows_a = np.empty(total, dtype=np.int64)
    cols_a = np.empty(total, dtype=np.int64)
    vals_a = np.empty(total, dtype=np.complex128)
    cdef cnp.int64_t[::1] rows = rows_a, cols = cols_a
    cdef double complex[::1] vals = vals_a
    cdef Py_ssize_t pos = 0, base
    with nogil:
        for c in range(dim):
            lc = 0
            for i in range(k):
                lc = lc * rad[sub[i]] + (c // stride[sub[i]]) % rad[sub[i]]
            base = c - off[lc]
            for j in range(colptr[lc], colptr[lc + 1]):
                rows[pos] = base + off[nzrow[j]]
                cols[pos] = c
                vals[pos] = nzval[j]
                pos += 1
    return rows_a, cols_a, vals_a


def csr_matvec_range(indptr, indices, data, x, out, Py_ssize_t lo, Py_ssize_t hi):
    cdef const cnp.int64_t[::1] ptr = indptr
    cdef const cnp.int64_t[::1] idx = indices
    cdef const double complex[::1] val = data
    cdef const double complex[::1] xv = x
    cdef double complex[::1] ov = out
    cdef Py_ssize_t i, k
    cdef double complex acc
    with nogil:
        for i in range(lo, hi):
            acc = 0
            for k in range(ptr[i], ptr[i + 1]):
                acc = acc + val[k] * xv[idx[k]]
            ov[i] = acc
