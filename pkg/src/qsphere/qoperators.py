"""Sparse operators on a truncated lattice and the sphere generators.

Products are compressions: every factor is cut down to the window, so a
vector pushed out of the window by one factor is lost for the next.  Exact
identities are therefore checked on interior basis vectors.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, TruncationMismatch
from .lattice import LatticePoint, Truncation

DROP_TOL = 1e-15


class SparseOperator:
    """A complex sparse matrix indexed by the basis of a :class:`Truncation`."""

    __slots__ = ("trunc", "matrix")

    def __init__(self, trunc: Truncation, matrix) -> None:
        m = sp.csr_matrix(matrix, dtype=np.complex128)
        if m.shape != (trunc.size, trunc.size):
            raise ValueError(f"matrix shape {m.shape} does not match window size {trunc.size}")
        if m.nnz:
            m.data[np.abs(m.data) < DROP_TOL] = 0
            m.eliminate_zeros()
        m.sort_indices()
        self.trunc = trunc
        self.matrix = m

    @classmethod
    def zeros(cls, trunc: Truncation) -> "SparseOperator":
        return cls(trunc, sp.csr_matrix((trunc.size, trunc.size)))

    @classmethod
    def identity(cls, trunc: Truncation) -> "SparseOperator":
        return cls(trunc, sp.identity(trunc.size, format="csr"))

    @classmethod
    def diagonal(cls, trunc: Truncation, values) -> "SparseOperator":
        return cls(trunc, sp.diags(np.asarray(values, dtype=np.complex128), format="csr"))

    @classmethod
    def from_entries(
        cls, trunc: Truncation, entries: Mapping[tuple[Sequence[int], Sequence[int]], complex]
    ) -> "SparseOperator":
        rows = [trunc.index(r) for r, _ in entries]
        cols = [trunc.index(c) for _, c in entries]
        vals = list(entries.values())
        return cls(trunc, sp.coo_matrix((vals, (rows, cols)), shape=(trunc.size,) * 2))

    def _check(self, other: "SparseOperator") -> None:
        if self.trunc != other.trunc:
            raise TruncationMismatch(f"{self.trunc} vs {other.trunc}")

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.trunc, self.matrix.conj().T)

    @property
    def H(self) -> "SparseOperator":
        return self.adjoint()

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.trunc, self.matrix @ other.matrix)

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.trunc, self.matrix + other.matrix)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.trunc, self.matrix - other.matrix)

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(self.trunc, -self.matrix)

    def __mul__(self, scalar: complex) -> "SparseOperator":
        return SparseOperator(self.trunc, self.matrix * complex(scalar))

    __rmul__ = __mul__

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entry(self, row: Sequence[int], col: Sequence[int]) -> complex:
        return complex(self.matrix[self.trunc.index(row), self.trunc.index(col)])

    def entries(self) -> dict[tuple[LatticePoint, LatticePoint], complex]:
        coo = self.matrix.tocoo()
        pts = self.trunc.coords
        return {
            (LatticePoint(pts[r]), LatticePoint(pts[c])): complex(v)
            for r, c, v in zip(coo.row, coo.col, coo.data)
        }

    def apply(self, gamma: Sequence[int]) -> dict[LatticePoint, complex]:
        """Image of the basis vector ``e_gamma`` as a coordinate dictionary."""
        col = self.matrix[:, [self.trunc.index(gamma)]].tocoo()
        return {LatticePoint(self.trunc.coords[r]): complex(v) for r, v in zip(col.row, col.data)}

    def column_norms(self) -> np.ndarray:
        sq = abs(self.matrix).power(2)
        return np.sqrt(np.asarray(sq.sum(axis=0)).ravel())

    def is_diagonal(self) -> bool:
        coo = self.matrix.tocoo()
        return bool(np.all(coo.row == coo.col))

    def diagonal_values(self) -> np.ndarray:
        return self.matrix.diagonal()

    def compress(self, mask: np.ndarray) -> "SparseOperator":
        """``P A P`` with ``P`` the coordinate projection onto ``mask``."""
        p = sp.diags(np.asarray(mask, dtype=np.float64), format="csr")
        return SparseOperator(self.trunc, p @ self.matrix @ p)

    def restrict_to(self, sub: Truncation) -> "SparseOperator":
        """Compression onto a sub-window ``sub`` (same ``ell``) of this window."""
        if sub.ell != self.trunc.ell:
            raise TruncationMismatch("sub-window must have the same ell")
        idx = self.trunc.indices(sub.coords)
        if np.any(idx < 0):
            raise TruncationMismatch(f"{sub} is not contained in {self.trunc}")
        return SparseOperator(sub, self.matrix[idx][:, idx])

    def max_abs_diff(self, other: "SparseOperator") -> float:
        self._check(other)
        d = (self.matrix - other.matrix).tocoo()
        return float(np.abs(d.data).max()) if d.nnz else 0.0

    def __repr__(self) -> str:
        return f"SparseOperator(window={self.trunc.shape}, nnz={self.nnz})"


def adjoint(a: SparseOperator) -> SparseOperator:
    return a.adjoint()


def multiply(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b


def add(a: SparseOperator, b: SparseOperator, alpha: complex = 1.0, beta: complex = 1.0) -> SparseOperator:
    a._check(b)
    return SparseOperator(a.trunc, alpha * a.matrix + beta * b.matrix)


def product(ops: Iterable[SparseOperator], trunc: Truncation) -> SparseOperator:
    out = SparseOperator.identity(trunc)
    for op in ops:
        out = out @ op
    return out


def op_norm(a: SparseOperator, rtol: float = 1e-10, maxiter: int = 10000) -> float:
    """Largest singular value by power iteration on ``A*A``.

    ``A*A`` is split into its connected blocks first and the iteration runs on
    every block at once, each block started from its all-ones vector.  Blocks
    of size one converge in a single step, which is what makes weighted shifts
    (the bulk of the operators here) exact.
    """
    m = a.matrix
    if m.nnz == 0:
        return 0.0
    b = (m.conj().T @ m).tocsr()
    b.eliminate_zeros()
    pattern = sp.csr_matrix((np.ones(b.nnz), b.indices, b.indptr), shape=b.shape)
    ncomp, labels = connected_components(pattern, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    best = 0.0
    singles = sizes[labels] == 1
    if singles.any():
        best = float(np.max(b.diagonal()[singles].real))
    multi = np.flatnonzero(~singles)
    if multi.size == 0:
        return float(np.sqrt(max(best, 0.0)))

    sub = b[multi][:, multi]
    _, lab = np.unique(labels[multi], return_inverse=True)
    nblocks = int(lab.max()) + 1
    v = np.ones(multi.size, dtype=np.complex128)
    v /= np.sqrt(np.bincount(lab, minlength=nblocks))[lab]
    lam = np.full(nblocks, -np.inf)
    for _ in range(maxiter):
        w = sub @ v
        new = np.bincount(lab, weights=(v.conj() * w).real, minlength=nblocks)
        norms = np.sqrt(np.bincount(lab, weights=np.abs(w) ** 2, minlength=nblocks))
        converged = np.abs(new - lam) <= rtol * np.maximum(np.abs(new), 1e-300)
        lam = new
        if np.all(converged | (norms == 0)):
            break
        safe = np.where(norms > 0, norms, 1.0)
        v = w / safe[lab]
    else:
        raise ConvergenceError(f"power iteration did not converge in {maxiter} steps")
    return float(np.sqrt(max(best, float(lam.max()), 0.0)))


def spectral_projection(a: SparseOperator, eigenvalue: float, atol: float = 1e-12) -> SparseOperator:
    """Exact spectral projection of a diagonal operator onto one eigenvalue.

    On a window the spectrum is a finite set, so the indicator of
    ``{eigenvalue}`` is a legitimate continuous function on it.
    """
    if not a.is_diagonal():
        raise ValueError("spectral_projection needs a diagonal operator")
    diag = a.diagonal_values()
    if np.abs(diag.imag).max(initial=0.0) > atol:
        raise ValueError("operator is not self-adjoint")
    vals = diag.real
    hit = np.abs(vals - eigenvalue) <= atol
    near = np.abs(vals - eigenvalue)
    others = near[~hit]
    if others.size and others.min() <= 10 * atol:
        raise ValueError(f"eigenvalue {eigenvalue} is not isolated at tolerance {atol}")
    return SparseOperator.diagonal(a.trunc, hit.astype(np.float64))


def generator_z(k: int, q: float, trunc: Truncation) -> SparseOperator:
    """The generator ``z_k`` as a weighted shift ``e_gamma -> c e_{gamma+eps_k}``.

    ``c = q^{gamma(1)+...+gamma(k-1)} sqrt(1 - q^{2 gamma(k) + 2})`` for
    ``k <= ell`` and ``c = q^{gamma(1)+...+gamma(ell)}`` for ``k = ell + 1``.
    """
    ell = trunc.ell
    if not 1 <= k <= ell + 1:
        raise ValueError(f"generator index {k} out of range 1..{ell + 1}")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly between 0 and 1")
    coords = trunc.coords
    prefix = coords[:, : k - 1].sum(axis=1) if k > 1 else np.zeros(trunc.size, dtype=np.int64)
    coef = q ** prefix.astype(np.float64)
    if k <= ell:
        coef = coef * np.sqrt(1.0 - q ** (2.0 * coords[:, k - 1] + 2.0))
    target = coords.copy()
    target[:, k - 1] += 1
    rows = trunc.indices(target)
    keep = rows >= 0
    cols = np.flatnonzero(keep)
    mat = sp.csr_matrix((coef[keep], (rows[keep], cols)), shape=(trunc.size, trunc.size))
    return SparseOperator(trunc, mat)


@dataclass(frozen=True)
class GeneratorSet:
    q: float
    trunc: Truncation
    z: tuple[SparseOperator, ...] = field(repr=False)

    @property
    def ell(self) -> int:
        return self.trunc.ell

    def __getitem__(self, k: int) -> SparseOperator:
        """``gens[k]`` is ``z_k`` with 1-based ``k``."""
        return self.z[k - 1]


def generators(q: float, trunc: Truncation) -> GeneratorSet:
    return GeneratorSet(q, trunc, tuple(generator_z(k, q, trunc) for k in range(1, trunc.ell + 2)))


@dataclass
class RelationReport:
    """Residuals of the defining relations.

    ``interior`` and ``boundary`` hold, per relation family, the largest column
    norm of ``LHS - RHS`` over interior and non-interior window vectors.  The
    sphere relation is evaluated on the whole window.  ``diagnostics`` keeps
    quantities that are reported but not asserted.
    """

    ell: int
    q: float
    window: dict
    interior: dict[str, float]
    boundary: dict[str, float]
    sphere_full_window: float
    diagnostics: dict[str, float]

    def passed(self, interior_tol: float = 1e-10, sphere_tol: float = 1e-12) -> bool:
        return max(self.interior.values()) <= interior_tol and self.sphere_full_window <= sphere_tol

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "q": self.q,
            "window": self.window,
            "interior": self.interior,
            "boundary": self.boundary,
            "sphere_full_window": self.sphere_full_window,
            "diagnostics": self.diagnostics,
        }


def _relation_terms(gens: GeneratorSet) -> dict[str, list[SparseOperator]]:
    q, n = gens.q, gens.ell + 1
    z = gens.z
    zs = [x.adjoint() for x in z]
    zzs = [z[i] @ zs[i] for i in range(n)]
    fam: dict[str, list[SparseOperator]] = {"q_commutation": [], "cross": [], "normal_defect": []}
    for i in range(n):
        for j in range(i):
            fam["q_commutation"].append(z[i] @ z[j] - q * (z[j] @ z[i]))
    for i in range(n):
        for j in range(n):
            if i != j:
                fam["cross"].append(zs[i] @ z[j] - q * (z[j] @ zs[i]))
    for i in range(n):
        tail = SparseOperator.zeros(gens.trunc)
        for k in range(i + 1, n):
            tail = tail + zzs[k]
        fam["normal_defect"].append(zzs[i] - zs[i] @ z[i] + (1 - q * q) * tail)
    printed = []
    for i in range(n):
        for j in range(n):
            if i != j:
                printed.append(z[i] @ zs[j] - q * (zs[j] @ z[i]))
    fam["_cross_as_printed"] = printed
    return fam


def relation_residuals(gens: GeneratorSet) -> RelationReport:
    """Residuals of the q-commutation, cross, normality-defect and sphere relations.

    The cross relation is checked in the form ``z_i* z_j = q z_j z_i*``
    (``i != j``), which is the form the generators satisfy; the variant
    ``z_i z_j* = q z_j* z_i`` is reported under ``diagnostics``.
    """
    trunc = gens.trunc
    interior = trunc.interior_mask()
    fams = _relation_terms(gens)
    inner: dict[str, float] = {}
    outer: dict[str, float] = {}
    diagnostics: dict[str, float] = {}
    for name, ops in fams.items():
        norms = np.zeros(trunc.size)
        for op in ops:
            norms = np.maximum(norms, op.column_norms())
        worst_in = float(norms[interior].max(initial=0.0))
        worst_out = float(norms[~interior].max(initial=0.0))
        if name.startswith("_"):
            diagnostics[name[1:] + "_interior"] = worst_in
        else:
            inner[name] = worst_in
            outer[name] = worst_out

    # z_{ell+1}^* leaves the window through the bottom of the bilateral axis,
    # so the sphere sum is formed one layer wider and then cut back
    padded = generators(gens.q, trunc.padded(1))
    total = SparseOperator.zeros(padded.trunc)
    for zk in padded.z:
        total = total + zk @ zk.adjoint()
    sphere = (total - SparseOperator.identity(padded.trunc)).restrict_to(trunc)
    sphere_res = float(sphere.column_norms().max(initial=0.0))

    naive = SparseOperator.zeros(trunc)
    for zk in gens.z:
        naive = naive + zk @ zk.adjoint()
    naive = naive - SparseOperator.identity(trunc)
    diagnostics["sphere_compressed_products"] = float(naive.column_norms().max(initial=0.0))
    outer["sphere_compressed_products"] = diagnostics["sphere_compressed_products"]
    return RelationReport(
        ell=gens.ell,
        q=gens.q,
        window=trunc.to_dict(),
        interior=inner,
        boundary=outer,
        sphere_full_window=sphere_res,
        diagnostics=diagnostics,
    )


def torus_unitary(w: Sequence[complex], trunc: Truncation) -> SparseOperator:
    """``U_w``: diagonal with entry ``prod_i w_i^{gamma(i)}`` at ``gamma``."""
    w = np.asarray(w, dtype=np.complex128)
    if w.shape != (trunc.ell + 1,):
        raise ValueError(f"need {trunc.ell + 1} phases, got {w.shape}")
    if np.any(np.abs(np.abs(w) - 1.0) > 1e-12):
        raise ValueError("torus phases must be unimodular")
    phases = np.prod(w[None, :] ** trunc.coords, axis=1)
    return SparseOperator.diagonal(trunc, phases)


def covariance_residual(gens: GeneratorSet, w: Sequence[complex]) -> float:
    """``max_k ||w_k z_k - U_w z_k U_w*||``."""
    u = torus_unitary(w, gens.trunc)
    ud = u.adjoint()
    return max(op_norm(complex(wk) * zk - u @ zk @ ud) for wk, zk in zip(w, gens.z))


def random_phases(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random(n))


def dump_operator(a: SparseOperator, fh: TextIO | None = None) -> str:
    """Coordinate-list text: a header line, then ``row col re im`` per entry."""
    t = a.trunc
    buf = io.StringIO()
    buf.write(
        f"# ell={t.ell} n_max={t.n_max} m_max={t.m_max} interior_margin={t.interior_margin}\n"
    )
    coo = a.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        buf.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def load_operator(fh: TextIO) -> SparseOperator:
    header = fh.readline()
    if not header.startswith("#"):
        raise ValueError("missing operator dump header")
    params = dict(item.split("=") for item in header[1:].split())
    trunc = Truncation(**{k: int(v) for k, v in params.items()})
    rows, cols, vals = [], [], []
    for line in fh:
        if not line.strip():
            continue
        r, c, re_, im_ = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re_), float(im_)))
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(trunc.size, trunc.size))
    return SparseOperator(trunc, mat)
