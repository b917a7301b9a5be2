"""Pure numpy implementations of the hot loops; mirrors ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def ball_count_enum(ell: int, n: int) -> int:
    if n < 0:
        return 0
    # degree over the unilateral block, built one axis at a time
    deg = np.zeros(1, dtype=np.int64)
    axis = np.arange(n + 1, dtype=np.int64)
    for _ in range(ell):
        deg = np.add.outer(deg, axis).ravel()
        deg = deg[deg <= n]
    bilateral = np.abs(np.arange(-n, n + 1, dtype=np.int64))
    total = np.add.outer(deg, bilateral)
    return int(np.count_nonzero(total <= n))


def level_sups(values: np.ndarray, levels: np.ndarray, nlevels: int) -> np.ndarray:
    out = np.zeros(nlevels, dtype=np.float64)
    np.maximum.at(out, np.asarray(levels, dtype=np.int64), np.asarray(values, dtype=np.float64))
    return np.maximum.accumulate(out)


def region_offsets(M: np.ndarray) -> np.ndarray:
    ell = len(M) - 1
    width = 2 * int(M[ell]) + 1
    offsets = np.empty(ell + 1, dtype=np.int64)
    offsets[0] = 3
    for r in range(ell):
        size = width
        for s in range(r + 1, ell):
            size *= int(M[s]) + 1
        offsets[r + 1] = offsets[r] + size
    return offsets


def classify_regions(coords: np.ndarray, positive: np.ndarray, M: np.ndarray):
    coords = np.asarray(coords, dtype=np.int64)
    M = np.asarray(M, dtype=np.int64)
    ell = coords.shape[1] - 1
    offsets = region_offsets(M)
    nregions = int(offsets[-1])
    m = coords[:, ell]
    ml = M[ell]
    labels = np.full(len(coords), 2, dtype=np.int64)
    undecided = np.abs(m) <= ml
    labels[m > ml] = 0
    labels[m < -ml] = 1
    for r in range(ell - 1, -1, -1):
        hit = undecided & (coords[:, r] > M[r])
        if not hit.any():
            continue
        idx = np.zeros(int(hit.sum()), dtype=np.int64)
        sub = coords[hit]
        for s in range(r + 1, ell):
            idx = idx * (M[s] + 1) + sub[:, s]
        idx = idx * (2 * ml + 1) + (sub[:, ell] + ml)
        labels[hit] = offsets[r] + idx
        undecided &= ~hit
    pos = np.asarray(positive, dtype=bool)
    npos = np.bincount(labels[pos], minlength=nregions).astype(np.int64)
    nneg = np.bincount(labels[~pos], minlength=nregions).astype(np.int64)
    return labels, npos, nneg
