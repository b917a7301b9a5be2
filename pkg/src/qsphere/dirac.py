"""Torus-equivariant Dirac operators, which are diagonal spectrum functions on the lattice.

A Dirac operator here is a real function ``d`` on ``N^ell x Z``, evaluated
vectorised on ``(N, ell+1)`` integer arrays.  The zero policy replaces every
vanishing value by ``zero_value`` (default ``+1/2``), so the positive set is
well defined.
"""
from __future__ import annotations

import ast
import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from . import kernels
from .errors import VerificationError, WindowError
from .lattice import Truncation, degrees
from .qoperators import GeneratorSet, SparseOperator, op_norm

SpectrumFunc = Callable[[np.ndarray], np.ndarray]


class EquivariantDirac:
    """Diagonal operator ``e_gamma -> d(gamma) e_gamma``."""

    def __init__(
        self,
        func: SpectrumFunc,
        ell: int,
        name: str,
        zero_value: float = 0.5,
        params: dict | None = None,
    ) -> None:
        if zero_value == 0:
            raise ValueError("zero_value must be nonzero")
        self.func = func
        self.ell = ell
        self.name = name
        self.zero_value = float(zero_value)
        self.params = dict(params or {})

    def values(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        if coords.shape[1] != self.ell + 1:
            raise ValueError(f"expected {self.ell + 1} coordinates, got {coords.shape[1]}")
        vals = np.asarray(self.func(coords), dtype=np.float64)
        vals = np.broadcast_to(vals, (len(coords),)).copy()
        vals[vals == 0] = self.zero_value
        return vals

    def __call__(self, gamma: Sequence[int]) -> float:
        return float(self.values(np.asarray([gamma]))[0])

    def spectrum(self, trunc: Truncation) -> np.ndarray:
        return self.values(trunc.coords)

    def operator(self, trunc: Truncation) -> SparseOperator:
        return SparseOperator.diagonal(trunc, self.spectrum(trunc))

    def __neg__(self) -> "EquivariantDirac":
        name = self.name[4:] if self.name.startswith("neg_") else f"neg_{self.name}"
        return EquivariantDirac(lambda c, f=self.values: -f(c), self.ell, name, self.zero_value)

    def shifted(self, c: float) -> "EquivariantDirac":
        return EquivariantDirac(
            lambda x, f=self.values: f(x) + c, self.ell, f"{self.name}+{c:g}", self.zero_value
        )

    def __repr__(self) -> str:
        return f"EquivariantDirac({self.name!r}, ell={self.ell})"


def _torus_values(coords: np.ndarray) -> np.ndarray:
    deg = degrees(coords).astype(np.float64)
    return np.where(coords[:, -1] >= 0, deg, -deg)


def build_d_torus(ell: int) -> EquivariantDirac:
    """``d(gamma) = +-weighted_degree(gamma)``, signed by the bilateral coordinate."""
    if ell < 1:
        raise ValueError("ell must be positive")
    return EquivariantDirac(_torus_values, ell, "torus")


def build_neg_torus(ell: int) -> EquivariantDirac:
    return -build_d_torus(ell)


def build_abs_torus(ell: int) -> EquivariantDirac:
    """``|D_torus| + 1/2``: positive everywhere."""
    base = build_d_torus(ell)
    return EquivariantDirac(lambda c: np.abs(base.values(c)) + 0.5, ell, "abs_torus")


BUILTINS = {"torus": build_d_torus, "neg_torus": build_neg_torus, "abs_torus": build_abs_torus}


# ---- closed-form expressions -------------------------------------------------

_ALLOWED_FUNCS = {
    "abs": np.abs,
    "sign": np.sign,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "where": np.where,
    "minimum": np.minimum,
    "maximum": np.maximum,
}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.FloorDiv,
    ast.USub, ast.UAdd, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


def from_expression(ell: int, expr: str, name: str | None = None) -> EquivariantDirac:
    """Spectrum from an arithmetic expression in ``g1..g{ell+1}`` and ``deg``.

    Only arithmetic, comparisons and the functions in ``_ALLOWED_FUNCS`` are
    accepted, e.g. ``"where(g2 >= 0, deg, -deg)"``.
    """
    tree = ast.parse(expr, mode="eval")
    names = {f"g{i}" for i in range(1, ell + 2)} | {"deg"} | set(_ALLOWED_FUNCS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ValueError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
            raise ValueError("only plain function calls are allowed")
    code = compile(tree, "<dirac-expression>", "eval")

    def func(coords: np.ndarray) -> np.ndarray:
        env = {f"g{i + 1}": coords[:, i].astype(np.float64) for i in range(ell + 1)}
        env["deg"] = degrees(coords).astype(np.float64)
        env.update(_ALLOWED_FUNCS)
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=np.float64)

    return EquivariantDirac(func, ell, name or f"expr:{expr}", params={"expression": expr})


def from_table(ell: int, path: str | Path, fallback: str | None = None) -> EquivariantDirac:
    """Spectrum from a CSV ``g1,...,g{ell+1},d``; points not in the table use ``fallback``."""
    table: dict[tuple[int, ...], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != ell + 2:
            raise ValueError(f"expected {ell + 2} columns, got {len(header)}")
        for row in reader:
            if not row:
                continue
            table[tuple(int(x) for x in row[:-1])] = float(row[-1])
    backup = from_expression(ell, fallback) if fallback else None

    def func(coords: np.ndarray) -> np.ndarray:
        out = np.full(len(coords), np.nan)
        for i, row in enumerate(map(tuple, coords.tolist())):
            if row in table:
                out[i] = table[row]
        missing = np.isnan(out)
        if missing.any():
            if backup is None:
                raise ValueError("spectrum table has no entry for some points and no fallback")
            out[missing] = backup.func(coords[missing])
        return out

    return EquivariantDirac(
        func, ell, f"table:{Path(path).name}", params={"table": str(path), "fallback": fallback}
    )


def dump_spectrum(dirac: EquivariantDirac, trunc: Truncation, fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([f"g{i}" for i in range(1, trunc.ell + 2)] + ["d"])
    for row, val in zip(trunc.coords.tolist(), dirac.spectrum(trunc)):
        writer.writerow(row + [repr(float(val))])


# ---- bounded commutators ---------------------------------------------------------

TREND_THRESHOLD = 1e-3


@dataclass
class BoundednessReport:
    """Weighted jumps ``|d(gamma+eps_k) - d(gamma)| q^{gamma(1)+...+gamma(k-1)}``.

    ``level_sups[k-1][t]`` is the sup over the nested box of level ``t``
    (the last entry is the whole window), ``sups[k-1]`` the window sup.
    """

    dirac_name: str
    ell: int
    q: float
    window: dict
    sups: list[float]
    level_sups: list[list[float]]
    growth: list[float]
    verdicts: list[str]
    trend_threshold: float = TREND_THRESHOLD
    note: str = field(
        default="bounded means the sup grew by less than trend_threshold (relative) "
        "over the last two window increments"
    )

    @property
    def verdict(self) -> str:
        return "bounded" if all(v == "bounded" for v in self.verdicts) else "diverging"

    @property
    def c(self) -> float:
        """Edge threshold for the growth graph."""
        return max(self.sups)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["verdict"] = self.verdict
        out["c"] = self.c
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def weighted_jumps(dirac: EquivariantDirac, q: float, coords: np.ndarray, k: int) -> np.ndarray:
    shifted = np.array(coords, dtype=np.int64, copy=True)
    shifted[:, k - 1] += 1
    jump = np.abs(dirac.values(shifted) - dirac.values(coords))
    prefix = coords[:, : k - 1].sum(axis=1).astype(np.float64)
    return jump * q**prefix


def _relative_growth(seq: Sequence[float]) -> float:
    if len(seq) < 3:
        raise WindowError("need at least three nested windows to judge a trend")
    old, new = seq[-3], seq[-1]
    if old == 0:
        return 0.0 if new == 0 else math.inf
    return (new - old) / old


def commutator_bound_check(
    dirac: EquivariantDirac, q: float, trunc: Truncation, threshold: float = TREND_THRESHOLD
) -> BoundednessReport:
    """Test the bounded-commutator condition on nested boxes of the window."""
    if not 0 < q < 1:
        raise ValueError("q must lie strictly between 0 and 1")
    coords = trunc.coords
    top = min(trunc.n_max, trunc.m_max)
    levels = np.minimum(trunc.levels(), top + 1)
    sups, level_sups, growth, verdicts = [], [], [], []
    for k in range(1, trunc.ell + 2):
        vals = weighted_jumps(dirac, q, coords, k)
        seq = kernels.level_sups(vals, levels, top + 2).tolist()
        if trunc.n_max == trunc.m_max:
            seq = seq[:-1]
        g = _relative_growth(seq)
        sups.append(float(seq[-1]))
        level_sups.append([float(x) for x in seq])
        growth.append(g)
        verdicts.append("bounded" if g < threshold else "diverging")
    return BoundednessReport(
        dirac_name=dirac.name,
        ell=trunc.ell,
        q=q,
        window=trunc.to_dict(),
        sups=sups,
        level_sups=level_sups,
        growth=growth,
        verdicts=verdicts,
        trend_threshold=threshold,
    )


def commutator_norms(dirac: EquivariantDirac, gens: GeneratorSet, atol: float = 1e-10) -> list[dict]:
    """``||[D, z_k]||`` from the assembled sparse commutator and from the column formula.

    The commutator maps ``e_gamma`` to ``(d(gamma+eps_k) - d(gamma)) c_k(gamma)
    e_{gamma+eps_k}``; its norm is the largest such coefficient over columns whose
    image stays in the window.
    """
    trunc, q = gens.trunc, gens.q
    dop = dirac.operator(trunc)
    coords = trunc.coords
    out = []
    for k in range(1, trunc.ell + 2):
        zk = gens[k]
        assembled = op_norm(dop @ zk - zk @ dop)
        shifted = coords.copy()
        shifted[:, k - 1] += 1
        inside = trunc.indices(shifted) >= 0
        coef = weighted_jumps(dirac, q, coords, k)
        if k <= trunc.ell:
            coef = coef * np.sqrt(1.0 - q ** (2.0 * coords[:, k - 1] + 2.0))
        closed = float(coef[inside].max(initial=0.0))
        if abs(assembled - closed) > atol:
            raise VerificationError(f"k={k}: assembled norm {assembled} vs closed form {closed}")
        out.append({"k": k, "norm": assembled, "closed_form": closed})
    return out


# ---- growth of the spectrum ------------------------------------------------------


def counting_sequence(
    dirac: EquivariantDirac, ns: Sequence[float], trunc: Truncation | None = None
) -> np.ndarray:
    """``#{gamma : |d(gamma)| <= n}`` for each ``n`` in ``ns``.

    Raises :class:`WindowError` when some point on the outer face of the window
    already satisfies ``|d| <= max(ns)``, since the ball may then leave it.
    """
    ns = np.asarray(ns, dtype=np.float64)
    top = float(ns.max())
    if trunc is None:
        side = int(math.floor(top)) + 1
        trunc = Truncation(dirac.ell, side, side)
    absd = np.abs(dirac.spectrum(trunc))
    face = absd[trunc.boundary_mask()]
    if face.size and face.min() <= top:
        raise WindowError(
            f"ball |d| <= {top:g} reaches the window face (min |d| there is {face.min():g})"
        )
    absd.sort()
    return np.searchsorted(absd, ns, side="right")


def counting_function(dirac: EquivariantDirac, n: float, trunc: Truncation | None = None) -> int:
    return int(counting_sequence(dirac, [n], trunc)[0])


def spectral_dimension_estimate(
    dirac: EquivariantDirac, n_range: tuple[int, int], trunc: Truncation | None = None
) -> float:
    """Least-squares slope of ``log N(n)`` against ``log n`` for integer ``n`` in range."""
    lo, hi = n_range
    if lo < 1 or hi <= lo:
        raise ValueError("n_range must satisfy 1 <= lo < hi")
    ns = np.arange(lo, hi + 1)
    counts = counting_sequence(dirac, ns, trunc)
    if np.any(counts == 0):
        raise ValueError("counting function vanishes inside n_range")
    slope, _ = np.polyfit(np.log(ns), np.log(counts), 1)
    return float(slope)


@dataclass
class OptimalityReport:
    a: float
    b: float
    verdict: str
    history: list[tuple[int, float, float]]

    def to_dict(self) -> dict:
        return asdict(self)


def optimality_check(
    dirac: EquivariantDirac, trunc: Truncation, threshold: float = TREND_THRESHOLD
) -> OptimalityReport:
    """Linear envelope ``|d| <= a + b * degree`` fitted on nested degree balls.

    On the ball of radius ``t`` the slope ``b`` is the largest increment of the
    shell maxima ``E(n) = max{|d| : degree = n}`` over the outer half
    ``n in [ceil(t/2), t]``; ``a`` is then the least constant that works on the
    ball.  The envelope is ``O(degree)`` when ``(a, b)`` no longer move between
    the two largest balls.
    """
    top = min(trunc.n_max, trunc.m_max)
    if top < 3:
        raise WindowError("need a window with min(n_max, m_max) >= 3")
    coords = trunc.coords
    deg = degrees(coords)
    inside = deg <= top
    deg = deg[inside]
    absd = np.abs(dirac.values(coords[inside]))
    shell = np.full(top + 1, -np.inf)
    np.maximum.at(shell, deg, absd)
    history = []
    for t in range(2, top + 1):
        lo = max(1, math.ceil(t / 2))
        b = max(0.0, float(np.max(np.diff(shell[lo - 1 : t + 1]))))
        mask = deg <= t
        a = float(np.max(absd[mask] - b * deg[mask]))
        history.append((t, a, b))
    (_, a1, b1), (_, a2, b2) = history[-2], history[-1]
    stable = abs(b2 - b1) <= threshold * max(1.0, abs(b2)) and abs(a2 - a1) <= threshold * max(
        1.0, abs(a2)
    )
    return OptimalityReport(a=a2, b=b2, verdict="O(degree)" if stable else "super-linear", history=history)
