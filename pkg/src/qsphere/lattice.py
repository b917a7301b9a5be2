"""The index lattice N^ell x Z, finite windows of it, and degree combinatorics.

Coordinates are addressed 1-based in the public API (``k`` runs over
``1..ell+1``) so that ``k = ell + 1`` always names the bilateral coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class LatticePoint(tuple):
    """A point of ``N^ell x Z``; the last coordinate is the bilateral one."""

    __slots__ = ()

    def __new__(cls, coords: Iterable[int]) -> "LatticePoint":
        coords = tuple(int(c) for c in coords)
        if len(coords) < 2:
            raise ValueError("a lattice point needs at least two coordinates")
        if any(c < 0 for c in coords[:-1]):
            raise ValueError(f"unilateral coordinates must be >= 0, got {coords}")
        return super().__new__(cls, coords)

    @property
    def ell(self) -> int:
        return len(self) - 1

    def __repr__(self) -> str:
        return f"LatticePoint({tuple.__repr__(self)})"


def origin(ell: int) -> LatticePoint:
    return LatticePoint((0,) * (ell + 1))


def add_epsilon(gamma: Sequence[int], k: int, times: int = 1) -> LatticePoint:
    """Return ``gamma + times * eps_k`` (``k`` is 1-based)."""
    if not 1 <= k <= len(gamma):
        raise ValueError(f"coordinate index {k} out of range 1..{len(gamma)}")
    coords = list(gamma)
    coords[k - 1] += times
    return LatticePoint(coords)


def weighted_degree(gamma: Sequence[int]) -> int:
    return int(sum(gamma[:-1]) + abs(gamma[-1]))


def degrees(coords: np.ndarray) -> np.ndarray:
    """Vectorised :func:`weighted_degree` over an ``(N, ell+1)`` array."""
    coords = np.asarray(coords)
    return coords[:, :-1].sum(axis=1) + np.abs(coords[:, -1])


def count_ball(ell: int, n: int, method: str = "closed") -> int:
    """Number of lattice points of weighted degree at most ``n``.

    ``method="closed"`` sums the slices ``|gamma(ell+1)| = t``, each of which
    holds ``C(n - t + ell, ell)`` points; ``method="enumerate"`` counts the
    bounding box point by point.
    """
    if ell < 1:
        raise ValueError("ell must be positive")
    if n < 0:
        return 0
    if method == "closed":
        return comb(n + ell, ell) + 2 * comb(n + ell, ell + 1)
    if method == "enumerate":
        return int(kernels.ball_count_enum(ell, n))
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class Truncation:
    """The window ``[0, n_max]^ell x [-m_max, m_max]`` of the lattice.

    Basis vectors are numbered lexicographically with the first coordinate
    varying slowest and the bilateral coordinate offset by ``m_max``.
    """

    ell: int
    n_max: int
    m_max: int
    interior_margin: int = 1

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValueError("ell must be positive")
        if self.n_max < 0 or self.m_max < 0:
            raise ValueError("window bounds must be nonnegative")
        if not 0 <= self.interior_margin <= min(self.n_max, self.m_max):
            raise ValueError("interior_margin must lie in [0, min(n_max, m_max)]")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_max + 1,) * self.ell + (2 * self.m_max + 1,)

    @property
    def size(self) -> int:
        return (self.n_max + 1) ** self.ell * (2 * self.m_max + 1)

    @cached_property
    def _strides(self) -> np.ndarray:
        shape = self.shape
        strides = np.ones(len(shape), dtype=np.int64)
        for i in range(len(shape) - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]
        return strides

    @cached_property
    def coords(self) -> np.ndarray:
        """All window points as an ``(size, ell+1)`` int64 array, in basis order."""
        grids = np.indices(self.shape, dtype=np.int64).reshape(self.ell + 1, -1).T
        grids[:, -1] -= self.m_max
        grids.setflags(write=False)
        return grids

    def indices(self, coords: np.ndarray) -> np.ndarray:
        """Basis indices of ``coords`` rows; ``-1`` where a row leaves the window."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        shifted = coords.copy()
        shifted[:, -1] += self.m_max
        inside = np.all((shifted >= 0) & (shifted < np.array(self.shape)), axis=1)
        idx = shifted @ self._strides
        return np.where(inside, idx, -1)

    def index(self, gamma: Sequence[int]) -> int:
        idx = int(self.indices(np.asarray([gamma]))[0])
        if idx < 0:
            raise KeyError(f"{tuple(gamma)} lies outside the window")
        return idx

    def point(self, index: int) -> LatticePoint:
        return LatticePoint(self.coords[index])

    def contains(self, gamma: Sequence[int]) -> bool:
        return len(gamma) == self.ell + 1 and int(self.indices(np.asarray([gamma]))[0]) >= 0

    def interior_mask(self, margin: int | None = None) -> np.ndarray:
        margin = self.interior_margin if margin is None else margin
        c = self.coords
        return np.all(c[:, :-1] <= self.n_max - margin, axis=1) & (
            np.abs(c[:, -1]) <= self.m_max - margin
        )

    def boundary_mask(self) -> np.ndarray:
        """Points on the outer face of the window."""
        c = self.coords
        return np.any(c[:, :-1] == self.n_max, axis=1) | (np.abs(c[:, -1]) == self.m_max)

    def levels(self) -> np.ndarray:
        """Nested-box level of each point: ``max(max unilateral coord, |bilateral|)``."""
        c = self.coords
        return np.maximum(c[:, :-1].max(axis=1), np.abs(c[:, -1]))

    def padded(self, by: int = 1) -> "Truncation":
        return Truncation(self.ell, self.n_max + by, self.m_max + by, self.interior_margin)

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "n_max": self.n_max,
            "m_max": self.m_max,
            "interior_margin": self.interior_margin,
        }


def enumerate_window(trunc: Truncation) -> list[LatticePoint]:
    """Every window point once, in basis order."""
    return [LatticePoint(row) for row in trunc.coords]


# shadows the builtin only inside this module's namespace
enumerate = enumerate_window  # noqa: A001
