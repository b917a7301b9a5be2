"""Backend selection for the lattice scan kernels.

The compiled extension ``qsphere._kernels`` is used when it imports;
otherwise, or when ``QSPHERE_PURE_PYTHON`` is set, the numpy versions in
``qsphere._kernels_py`` are used.  Both expose the same three functions.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("QSPHERE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py

region_offsets = _kernels_py.region_offsets


def available_backends() -> dict:
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def ball_count_enum(ell: int, n: int) -> int:
    return int(_impl.ball_count_enum(int(ell), int(n)))


def level_sups(values, levels, nlevels: int) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    levels = np.ascontiguousarray(levels, dtype=np.int64)
    return _impl.level_sups(values, levels, int(nlevels))


def classify_regions(coords, positive, M):
    """Region label of every point for the box parameters ``M``.

    Labels: 0 is ``gamma(ell+1) > M[ell]``, 1 is ``gamma(ell+1) < -M[ell]``,
    2 is the box, and ``region_offsets(M)[r] + i`` is the ``i``-th tail of the
    family ``B_{r+1, tail}``.  Returns ``(labels, npos, nneg)``.
    """
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    positive = np.ascontiguousarray(positive, dtype=np.uint8)
    M = np.ascontiguousarray(M, dtype=np.int64)
    return _impl.classify_regions(coords, positive, M)
