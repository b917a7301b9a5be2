# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the lattice scans in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def ball_count_enum(int ell, long n):
    cdef long count = 0
    cdef long m, s = 0
    cdef int j
    if n < 0:
        return 0
    cdef long[::1] digits = np.zeros(ell, dtype=np.int64)
    while True:
        for m in range(-n, n + 1):
            if s + (m if m >= 0 else -m) <= n:
                count += 1
        # odometer over the simplex sum(digits) <= n
        j = ell - 1
        while j >= 0:
            digits[j] += 1
            s += 1
            if s <= n:
                break
            s -= digits[j]
            digits[j] = 0
            j -= 1
        if j < 0:
            break
    return count


def level_sups(const double[::1] values, const long[::1] levels, long nlevels):
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(nlevels, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = values.shape[0]
    for i in range(n):
        if values[i] > o[levels[i]]:
            o[levels[i]] = values[i]
    for i in range(1, nlevels):
        if o[i - 1] > o[i]:
            o[i] = o[i - 1]
    return out


def classify_regions(const long[:, ::1] coords, const unsigned char[::1] positive,
                     const long[::1] M):
    cdef Py_ssize_t npts = coords.shape[0]
    cdef int ell = coords.shape[1] - 1
    cdef long ml = M[ell]
    cdef long width = 2 * ml + 1
    cdef cnp.ndarray[long, ndim=1] offsets_arr = np.empty(ell + 1, dtype=np.int64)
    cdef long[::1] offsets = offsets_arr
    cdef int r, s
    cdef long size, idx, m, label
    cdef Py_ssize_t p
    offsets[0] = 3
    for r in range(ell):
        size = width
        for s in range(r + 1, ell):
            size *= M[s] + 1
        offsets[r + 1] = offsets[r] + size
    cdef long nregions = offsets[ell]
    cdef cnp.ndarray[long, ndim=1] labels = np.empty(npts, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] npos = np.zeros(nregions, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] nneg = np.zeros(nregions, dtype=np.int64)
    cdef long[::1] lab = labels
    cdef long[::1] cp = npos
    cdef long[::1] cn = nneg
    for p in range(npts):
        m = coords[p, ell]
        if m > ml:
            label = 0
        elif m < -ml:
            label = 1
        else:
            label = 2
            for r in range(ell - 1, -1, -1):
                if coords[p, r] > M[r]:
                    idx = 0
                    for s in range(r + 1, ell):
                        idx = idx * (M[s] + 1) + coords[p, s]
                    idx = idx * width + (m + ml)
                    label = offsets[r] + idx
                    break
        lab[p] = label
        if positive[p]:
            cp[label] += 1
        else:
            cn[label] += 1
    return labels, npos, nneg
