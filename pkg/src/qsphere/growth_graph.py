"""Growth graph of a Dirac operator, the constructive path lemmas, and sign patterns.

Two lattice points are joined when their spectral values differ by at most
``c``.  The graph is never materialised; edges are tested on demand.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .dirac import BoundednessReport, EquivariantDirac
from .errors import SignPatternError, VerificationError
from .lattice import LatticePoint, Truncation, add_epsilon


@dataclass(frozen=True)
class GrowthGraph:
    dirac: EquivariantDirac
    c: float
    trunc: Truncation

    def is_edge(self, a: Sequence[int], b: Sequence[int]) -> bool:
        return abs(self.dirac(a) - self.dirac(b)) <= self.c

    def neighbors(self, gamma: Sequence[int]) -> list[LatticePoint]:
        """Window neighbours of ``gamma`` along the directions ``+-eps_k``."""
        out = []
        for k in range(1, self.trunc.ell + 2):
            for step in (-1, 1):
                coords = list(gamma)
                coords[k - 1] += step
                if k <= self.trunc.ell and coords[k - 1] < 0:
                    continue
                if self.trunc.contains(coords) and self.is_edge(gamma, coords):
                    out.append(LatticePoint(coords))
        return out

    def directional_edges(self, k: int) -> np.ndarray:
        """Mask over window points ``gamma`` whose pair ``(gamma, gamma+eps_k)`` is an edge.

        Pairs leaving the window are reported as ``False``.
        """
        coords = self.trunc.coords
        shifted = coords.copy()
        shifted[:, k - 1] += 1
        inside = self.trunc.indices(shifted) >= 0
        jump = np.abs(self.dirac.values(shifted) - self.dirac.values(coords))
        return inside & (jump <= self.c)

    def check_path(self, start: Sequence[int], path: Sequence[Sequence[int]]) -> None:
        prev = start
        for step in path:
            if not self.is_edge(prev, step):
                raise VerificationError(f"{tuple(prev)} -> {tuple(step)} is not an edge")
            prev = step


def build_graph(dirac: EquivariantDirac, c: float, trunc: Truncation) -> GrowthGraph:
    if c <= 0:
        raise ValueError("edge threshold c must be positive")
    return GrowthGraph(dirac, float(c), trunc)


def graph_from_report(dirac: EquivariantDirac, report: BoundednessReport, trunc: Truncation) -> GrowthGraph:
    if report.verdict != "bounded":
        raise ValueError("growth graph needs a passing boundedness report")
    return build_graph(dirac, report.c, trunc)


# ---- path lemmas -------------------------------------------------------------------


def _walk(start: Sequence[int], k: int, target: int) -> Iterator[LatticePoint]:
    cur = LatticePoint(start)
    step = 1 if target > cur[k - 1] else -1
    while cur[k - 1] != target:
        cur = add_epsilon(cur, k, step)
        yield cur


def lemma_path(gamma: Sequence[int], gamma2: Sequence[int], k: int) -> list[LatticePoint]:
    """Constructive path from ``gamma`` to ``gamma2`` (start excluded, end included).

    Two shapes are accepted:

    * single-coordinate form: both points vanish on coordinates ``1..k-1`` and
      agree after ``k``; the path moves along ``eps_k`` only.
    * zeroing form: the points agree on coordinates ``k..ell+1`` and one of
      them vanishes on ``1..k-1`` (``k`` may be ``ell+2``); the other one has
      its coordinates ``1, 2, ..., k-1`` brought to zero in that order.

    Every step joins ``delta`` and ``delta + eps_j`` with ``delta`` vanishing
    on ``1..j-1``, so under a bounded-commutator condition it is an edge.
    """
    a, b = LatticePoint(gamma), LatticePoint(gamma2)
    if len(a) != len(b):
        raise ValueError("points have different dimensions")
    n = len(a)
    if not 1 <= k <= n + 1:
        raise ValueError(f"k must lie in 1..{n + 1}")
    if a == b:
        return []
    head = slice(0, k - 1)
    if k <= n and not any(a[head]) and not any(b[head]) and a[k:] == b[k:]:
        return list(_walk(a, k, b[k - 1]))
    if a[k - 1 :] == b[k - 1 :]:
        if not any(b[head]):
            return _zeroing(a, k)
        if not any(a[head]):
            back = _zeroing(b, k)
            return back[-2::-1] + [b]
    raise ValueError(f"{tuple(a)} and {tuple(b)} do not fit either path form for k={k}")


def _zeroing(gamma: LatticePoint, k: int) -> list[LatticePoint]:
    path: list[LatticePoint] = []
    cur = gamma
    for j in range(1, k):
        for cur in _walk(cur, j, 0):
            path.append(cur)
    return path


def path_length_closed_form(gamma: Sequence[int], gamma2: Sequence[int], k: int) -> int:
    """Length promised by the lemmas: ``sum_{j<k} |gamma(j) - gamma2(j)|`` plus the ``k``-th gap."""
    total = sum(abs(x - y) for x, y in zip(gamma[: k - 1], gamma2[: k - 1]))
    if k <= len(gamma):
        total += abs(gamma[k - 1] - gamma2[k - 1])
    return total


def random_lemma_pair(
    rng: np.random.Generator, ell: int, bound: int = 6
) -> tuple[LatticePoint, LatticePoint, int]:
    """A random ``(gamma, gamma2, k)`` fitting one of the two path forms, coordinates ``<= bound``."""

    def draw(n: int) -> list[int]:
        return [int(x) for x in rng.integers(0, bound + 1, size=n)]

    if rng.random() < 0.5:
        k = int(rng.integers(1, ell + 2))
        tail = draw(ell - k + 1)
        if tail:
            tail[-1] = int(rng.integers(-bound, bound + 1))
        a = [0] * (k - 1) + draw(1) + tail
        b = [0] * (k - 1) + draw(1) + tail
        if k == ell + 1:
            a[-1], b[-1] = (int(x) for x in rng.integers(-bound, bound + 1, size=2))
            a, b = a[: ell + 1], b[: ell + 1]
    else:
        k = int(rng.integers(1, ell + 3))
        tail = draw(ell + 2 - k)
        if tail:
            tail[-1] = int(rng.integers(-bound, bound + 1))
        a = draw(k - 1) + tail
        b = [0] * (k - 1) + tail
        if rng.random() < 0.5:
            a, b = b, a
    return LatticePoint(a), LatticePoint(b), k


# ---- sign patterns -----------------------------------------------------------------


class SignForm(str, Enum):
    A1_UNION_B = "A1_UNION_B"
    A2_UNION_B = "A2_UNION_B"
    A1_A2_UNION_B = "A1_A2_UNION_B"
    B_ONLY = "B_ONLY"


_FORM_BY_SIGNS = {
    (True, False): SignForm.A1_UNION_B,
    (False, True): SignForm.A2_UNION_B,
    (True, True): SignForm.A1_A2_UNION_B,
    (False, False): SignForm.B_ONLY,
}

_CLASS_BY_FORM = {
    SignForm.A1_UNION_B: -1,
    SignForm.A2_UNION_B: 1,
    SignForm.A1_A2_UNION_B: 0,
    SignForm.B_ONLY: 0,
}


def tail_set(M: Sequence[int], k: int) -> list[tuple[int, ...]]:
    """``F_k``: tails ``(i_{k+1}, ..., i_{ell+1})`` bounded by ``M``, in label order."""
    ell = len(M) - 1
    ranges = [range(M[r] + 1) for r in range(k, ell)]
    ranges.append(range(-M[ell], M[ell] + 1))
    return list(itertools.product(*ranges))


@dataclass(frozen=True)
class SignPattern:
    """Positive set as ``[A1] u [A2] u (union of B_x over x in E)``, up to ``exceptional``.

    ``exceptional`` lists the box points whose sign differs from the
    reconstruction (which puts the whole box in the negative set).
    """

    form: SignForm
    M: tuple[int, ...]
    E: tuple[tuple[int, tuple[int, ...]], ...]
    exceptional: tuple[LatticePoint, ...]
    note: str = "window-relative match; differences allowed only inside the M-box"

    @property
    def ell(self) -> int:
        return len(self.M) - 1

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Membership of ``coords`` rows in the reconstructed positive set."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        ell, M = self.ell, self.M
        m = coords[:, ell]
        out = np.zeros(len(coords), dtype=bool)
        if self.form in (SignForm.A1_UNION_B, SignForm.A1_A2_UNION_B):
            out |= m > M[ell]
        if self.form in (SignForm.A2_UNION_B, SignForm.A1_A2_UNION_B):
            out |= m < -M[ell]
        for k, tail in self.E:
            hit = coords[:, k - 1] > M[k - 1]
            for r, val in zip(range(k, ell + 1), tail):
                hit &= coords[:, r] == val
            out |= hit
        for p in self.exceptional:
            hit = np.all(coords == np.asarray(p), axis=1)
            out ^= hit
        return out

    def to_dict(self) -> dict:
        return {
            "form": self.form.value,
            "M": list(self.M),
            "E": [[k, list(t)] for k, t in self.E],
            "exceptional": [list(p) for p in self.exceptional],
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SignPattern":
        return cls(
            form=SignForm(data["form"]),
            M=tuple(data["M"]),
            E=tuple((int(k), tuple(t)) for k, t in data["E"]),
            exceptional=tuple(LatticePoint(p) for p in data["exceptional"]),
        )


def _match(coords: np.ndarray, positive: np.ndarray, M: tuple[int, ...]) -> SignPattern | None:
    labels, npos, nneg = kernels.classify_regions(coords, positive, np.asarray(M))
    mixed = (npos > 0) & (nneg > 0)
    mixed[2] = False
    if mixed.any():
        return None
    ell = len(M) - 1
    offsets = kernels.region_offsets(np.asarray(M))
    E = []
    for k in range(1, ell + 1):
        base = int(offsets[k - 1])
        for i, tail in enumerate(tail_set(M, k)):
            if npos[base + i] > 0:
                E.append((k, tail))
    form = _FORM_BY_SIGNS[(bool(npos[0] > 0), bool(npos[1] > 0))]
    box = (labels == 2) & positive
    exceptional = tuple(LatticePoint(p) for p in coords[box])
    return SignPattern(form, tuple(int(x) for x in M), tuple(E), exceptional)


def _candidates(trunc: Truncation, bound: int) -> Iterator[tuple[int, ...]]:
    hi_n = min(bound, trunc.n_max - 1)
    hi_m = min(bound, trunc.m_max - 1)
    if hi_n < 0 or hi_m < 0:
        return
    ranges = [range(hi_n + 1)] * trunc.ell + [range(hi_m + 1)]
    yield from itertools.product(*ranges)


def classify_positive_set(positive: np.ndarray, trunc: Truncation, m_search_max: int = 5) -> SignPattern:
    """Canonical pattern for an observed positive set on ``trunc`` (lexicographically least ``M``)."""
    coords = trunc.coords
    positive = np.asarray(positive, dtype=bool)
    last = None
    for M in _candidates(trunc, m_search_max):
        last = M
        found = _match(coords, positive, M)
        if found is not None:
            return found
    if last is None:
        raise SignPatternError("window too small for any box parameter", "window_too_small", m_search_max)
    # the mismatch is a window artefact if dropping the outer face resolves it
    inner = ~trunc.boundary_mask()
    labels, npos, nneg = kernels.classify_regions(coords[inner], positive[inner], np.asarray(last))
    mixed = (npos > 0) & (nneg > 0)
    mixed[2] = False
    reason = "window_too_small" if not mixed.any() else "inadmissible"
    raise SignPatternError(
        f"no sign pattern with all M_k <= {m_search_max} matches ({reason})", reason, m_search_max
    )


def classify_sign_pattern(dirac: EquivariantDirac, trunc: Truncation, m_search_max: int = 5) -> SignPattern:
    return classify_positive_set(dirac.spectrum(trunc) > 0, trunc, m_search_max)


def khomology_class(pattern: SignPattern) -> int:
    return _CLASS_BY_FORM[pattern.form]


def random_pattern(rng: np.random.Generator, ell: int, m_bound: int = 3) -> SignPattern:
    """A random admissible pattern with ``M_k <= m_bound``, for round-trip tests."""
    M = tuple(int(x) for x in rng.integers(0, m_bound + 1, size=ell + 1))
    form = list(SignForm)[int(rng.integers(0, 4))]
    E = []
    for k in range(1, ell + 1):
        for tail in tail_set(M, k):
            if rng.random() < 0.5:
                E.append((k, tail))
    box_ranges = [range(M[r] + 1) for r in range(ell)] + [range(-M[ell], M[ell] + 1)]
    box = [LatticePoint(p) for p in itertools.product(*box_ranges)]
    exceptional = tuple(p for p in box if rng.random() < 0.3)
    return SignPattern(form, M, tuple(E), exceptional)


def dirac_from_pattern(pattern: SignPattern, name: str = "pattern") -> EquivariantDirac:
    """A spectrum with the pattern's sign and magnitude ``degree + 1``."""
    from .lattice import degrees

    def func(coords: np.ndarray) -> np.ndarray:
        mag = degrees(coords).astype(np.float64) + 1.0
        return np.where(pattern.contains(coords), mag, -mag)

    return EquivariantDirac(func, pattern.ell, name)
