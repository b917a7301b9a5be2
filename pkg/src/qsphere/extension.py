"""The extension ``0 -> J_{ell+1} -> A_{ell+1} -> A_ell -> 0`` on truncated models.

Two lattices appear.  ``H_ell`` is the representation space of the sphere
generators, indexed by ``N^ell x Z``.  The module space ``F_{ell+1}`` is
``L2(N^{ell+1})`` tensored with a bilateral window of Fourier modes standing
in for ``C(S^1)``; its index set is again a :class:`Truncation` of level
``ell + 1``, whose last coordinate is the Fourier mode.

Conventions.  ``S`` is the bilateral shift with ``S e_m = e_{m-1}``, so the
generators raise indices.  The bijection ``U`` sends ``n >= 0`` to copy 0 at
``n`` and ``n < 0`` to copy 1 at ``-n - 1``; ``Q`` keeps copy 0.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .dirac import build_d_torus
from .errors import VerificationError
from .lattice import Truncation
from .qoperators import SparseOperator, generators, op_norm, spectral_projection

SCHEMA_VERSION = 1

_TOKEN = re.compile(r"([zy])(\d+)(\*?)")


@dataclass(frozen=True)
class Letter:
    alphabet: str
    index: int
    star: bool = False

    def adjoint(self) -> "Letter":
        return Letter(self.alphabet, self.index, not self.star)

    def __str__(self) -> str:
        return f"{self.alphabet}{self.index}{'*' if self.star else ''}"


@dataclass(frozen=True)
class Monomial:
    """A word in the generators and their adjoints, read left to right as a product.

    ``alphabet`` is ``"z"`` (``ell + 1`` letters) or ``"y"`` (``ell + 2``).
    The empty word is the identity.
    """

    ell: int
    alphabet: str
    letters: tuple[Letter, ...] = ()

    def __post_init__(self) -> None:
        if self.alphabet not in ("z", "y"):
            raise ValueError(f"unknown alphabet {self.alphabet!r}")
        top = self.size
        for a in self.letters:
            if a.alphabet != self.alphabet or not 1 <= a.index <= top:
                raise ValueError(f"letter {a} not in the {self.alphabet}-alphabet of size {top}")

    @property
    def size(self) -> int:
        return self.ell + 1 if self.alphabet == "z" else self.ell + 2

    @classmethod
    def parse(cls, text: str, ell: int) -> "Monomial":
        """Parse ``"z1 z2*"`` or ``"z1z2*"``; ``""`` and ``"1"`` give the identity."""
        text = text.replace(" ", "")
        if text in ("", "1"):
            return cls(ell, "z")
        letters, pos = [], 0
        for mt in _TOKEN.finditer(text):
            if mt.start() != pos:
                break
            letters.append(Letter(mt.group(1), int(mt.group(2)), bool(mt.group(3))))
            pos = mt.end()
        if pos != len(text):
            raise ValueError(f"cannot parse monomial {text!r}")
        kinds = {a.alphabet for a in letters}
        if len(kinds) != 1:
            raise ValueError("a monomial uses a single alphabet")
        return cls(ell, kinds.pop(), tuple(letters))

    def adjoint(self) -> "Monomial":
        return Monomial(self.ell, self.alphabet, tuple(a.adjoint() for a in reversed(self.letters)))

    def __mul__(self, other: "Monomial") -> "Monomial":
        if (self.ell, self.alphabet) != (other.ell, other.alphabet):
            raise ValueError("monomials over different alphabets")
        return Monomial(self.ell, self.alphabet, self.letters + other.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return " ".join(map(str, self.letters)) or "1"

    def uses_only(self, indices: Iterable[int]) -> bool:
        allowed = set(indices)
        return all(a.index in allowed for a in self.letters)


def sigma_quotient(m: Monomial) -> Monomial | None:
    """``y_i -> z_i`` for ``i <= ell + 1``; any ``y_{ell+2}`` kills the word (``None``)."""
    if m.alphabet != "y":
        raise ValueError("sigma_quotient takes a y-word")
    if any(a.index == m.ell + 2 for a in m.letters):
        return None
    return Monomial(m.ell, "z", tuple(Letter("z", a.index, a.star) for a in m.letters))


def lift_word(m: Monomial) -> Monomial:
    """The y-word with ``sigma_quotient(lift_word(m)) == m``."""
    if m.alphabet != "z":
        raise ValueError("lift_word takes a z-word")
    return Monomial(m.ell, "y", tuple(Letter("y", a.index, a.star) for a in m.letters))


@dataclass(frozen=True)
class ModuleSpaceModel:
    """Window ``[0, n_max]^{ell+1} x [-f_max, f_max]`` of ``L2(N^{ell+1})`` tensor Fourier modes."""

    ell: int
    n_max: int
    f_max: int

    def __post_init__(self) -> None:
        if self.ell < 1 or self.n_max < 1 or self.f_max < 0:
            raise ValueError("need ell >= 1, n_max >= 1, f_max >= 0")

    @property
    def trunc(self) -> Truncation:
        return Truncation(self.ell + 1, self.n_max, self.f_max, interior_margin=0)

    @property
    def h_trunc(self) -> Truncation:
        """The ``H_ell`` window whose nonnegative half is the ``N^{ell+1}`` factor."""
        return Truncation(self.ell, self.n_max, self.n_max, interior_margin=0)

    @property
    def n_modes(self) -> int:
        return 2 * self.f_max + 1

    def padded(self, by: int) -> "ModuleSpaceModel":
        return ModuleSpaceModel(self.ell, self.n_max + by, self.f_max + by)

    def lattice_degrees(self) -> np.ndarray:
        """Degree of the ``N^{ell+1}`` part of every basis vector (Fourier mode ignored)."""
        return self.trunc.coords[:, :-1].sum(axis=1)


def _evaluate(m: Monomial, trunc: Truncation, q: float) -> SparseOperator:
    gens = generators(q, trunc)
    out = SparseOperator.identity(trunc)
    for a in m.letters:
        z = gens[a.index]
        out = out @ (z.adjoint() if a.star else z)
    return out


def psi_rep(m: Monomial, q: float, model: ModuleSpaceModel) -> SparseOperator:
    """Image of a y-word on the module window.

    ``y_k`` for ``k <= ell + 1`` is the level-``(ell+1)`` weighted shift in the
    k-th direction, and ``y_{ell+2}`` is ``q^{n_1+...+n_{ell+1}}`` times the
    Fourier shift, which is the same formula with the mode as last coordinate.
    The word is evaluated one layer per letter beyond the window and then
    compressed, so intermediate factors never fall off the edge.
    """
    if m.alphabet != "y" or m.ell != model.ell:
        raise ValueError("psi_rep takes a y-word of matching ell")
    big = model.padded(len(m)).trunc
    return _evaluate(m, big, q).restrict_to(model.trunc)


@dataclass
class ModuleOperator:
    """An operator on ``H_ell`` window tensor ``n_modes`` Fourier modes (Fourier index fastest)."""

    h_trunc: Truncation
    n_modes: int
    matrix: sp.csr_matrix


def sigma_tilde(m: Monomial, q: float, model: ModuleSpaceModel) -> ModuleOperator:
    """``pi_ell(m)`` tensor the identity on the Fourier modes."""
    if m.alphabet != "z" or m.ell != model.ell:
        raise ValueError("sigma_tilde takes a z-word of matching ell")
    h = model.h_trunc
    inner = _evaluate(m, h.padded(len(m)), q).restrict_to(h)
    mat = sp.kron(inner.matrix, sp.identity(model.n_modes, format="csr"), format="csr")
    return ModuleOperator(h, model.n_modes, mat)


def transport_u(model: ModuleSpaceModel) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """``U*`` split into its two copies.

    Returns ``(c0, c1)``: ``c0`` maps the ``H_ell`` tensor Fourier window onto
    copy 0 (the nonnegative bilateral half) and ``c1`` onto copy 1.  Each is
    a partial permutation; ``Q`` is ``c0``.
    """
    h = model.h_trunc
    f = model.n_modes
    target = model.trunc
    m = h.coords[:, -1]
    modes = np.arange(-model.f_max, model.f_max + 1)
    out = []
    for mask, image in ((m >= 0, m), (m < 0, -m - 1)):
        pts = h.coords[mask].copy()
        pts[:, -1] = image[mask]
        full = np.column_stack([np.repeat(pts, f, axis=0), np.tile(modes, len(pts))])
        r = target.indices(full)
        c = (np.flatnonzero(mask)[:, None] * f + np.arange(f)).ravel()
        out.append(sp.csr_matrix((np.ones(r.size), (r, c)), shape=(target.size, h.size * f)))
    return out[0], out[1]


def sigma_hat(m: Monomial, q: float, model: ModuleSpaceModel) -> SparseOperator:
    """The corner ``Q U sigma_tilde(m) U* Q`` as an operator on the module window."""
    c0, _ = transport_u(model)
    st = sigma_tilde(m, q, model)
    return SparseOperator(model.trunc, c0 @ st.matrix @ c0.T)


def lift_residual(m: Monomial, q: float, model: ModuleSpaceModel, R: int) -> float:
    """Norm of ``sigma_hat(m) - psi(lift(m))`` off the degree-``R`` ball.

    The ball is ``n_1 + ... + n_{ell+1} <= R`` in the lattice factor; the
    Fourier factor is untouched.
    """
    if not 0 <= R < model.n_max:
        raise ValueError(f"R must lie in [0, n_max) = [0, {model.n_max})")
    diff = sigma_hat(m, q, model) - psi_rep(lift_word(m), q, model)
    tail = model.lattice_degrees() > R
    return op_norm(diff.compress(tail))


@dataclass
class ResidualSeries:
    word: str
    q: float
    radii: list[int]
    residuals: list[float]
    decay: float | None
    prefactor: float | None
    monotone: bool
    exact_zero: bool
    window: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def residual_series(
    m: Monomial, q: float, model: ModuleSpaceModel, radii: Sequence[int] | None = None
) -> ResidualSeries:
    """Tail residuals over ``R`` with a least-squares fit ``C * decay^R``.

    The fit uses the strictly positive residuals only; ``decay`` is ``None``
    when fewer than two remain.
    """
    radii = list(range(max(1, model.n_max - len(m)))) if radii is None else list(radii)
    res = [lift_residual(m, q, model, R) for R in radii]
    arr = np.asarray(res)
    monotone = bool(np.all(np.diff(arr) <= 1e-14 * max(1.0, arr.max(initial=0.0))))
    pos = arr > 0
    decay = prefactor = None
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(np.asarray(radii)[pos], np.log(arr[pos]), 1)
        decay, prefactor = float(np.exp(slope)), float(np.exp(icpt))
    return ResidualSeries(
        word=str(m),
        q=q,
        radii=radii,
        residuals=[float(x) for x in res],
        decay=decay,
        prefactor=prefactor,
        monotone=monotone,
        exact_zero=bool(np.all(arr == 0)),
        window={"ell": model.ell, "n_max": model.n_max, "f_max": model.f_max},
    )


# ---------------------------------------------------------------- the ideal


def slice_projection(i: Sequence[int], q: float, trunc: Truncation) -> tuple[SparseOperator, list[str]]:
    """Projection onto ``gamma(1..ell) = i`` from spectral projections of ``X_r^2``.

    ``X_r^2 = 1 - sum_{k<=r} z_k z_k*`` is diagonal with value
    ``q^{2(gamma(1)+...+gamma(r))}``, so fixing all partial sums fixes ``i``.
    """
    gens = generators(q, trunc)
    eye = SparseOperator.identity(trunc)
    acc = SparseOperator.zeros(trunc)
    proj, word = eye, []
    partial = 0
    for r in range(1, trunc.ell + 1):
        acc = acc + gens[r] @ gens[r].adjoint()
        partial += int(i[r - 1])
        x2 = eye - acc
        proj = proj @ spectral_projection(x2, q ** (2 * partial))
        word.append(f"1[X{r}^2 = q^{2 * partial}]")
    return proj, word


def _path_scalar(i: Sequence[int], j: Sequence[int], k: int, q: float) -> float:
    """Coefficient picked up by the shift-and-move word on any vector of the j-slice.

    Bilateral shifts by ``z_{ell+1}`` or its adjoint carry ``q^{|j|}`` per
    step; the moves then walk coordinate ``r`` from ``j_r`` to ``i_r`` with
    coordinates ``< r`` already at ``i``.
    """
    c = q ** (abs(k) * sum(j))
    cur = list(j)
    for r in range(len(j)):
        pre = q ** sum(cur[:r])
        while cur[r] < i[r]:
            c *= pre * np.sqrt(1 - q ** (2 * cur[r] + 2))
            cur[r] += 1
        while cur[r] > i[r]:
            c *= pre * np.sqrt(1 - q ** (2 * cur[r]))
            cur[r] -= 1
    return float(c)


@dataclass
class ReconstructionReport:
    i: list[int]
    j: list[int]
    k: int
    q: float
    word: str
    scalar: float
    max_abs_error: float
    passed: bool
    window: dict
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


def elementary_operator(i: Sequence[int], j: Sequence[int], k: int, trunc: Truncation) -> SparseOperator:
    """``p_{i j} (x) S^k``: ``e_{(j, m)} -> e_{(i, m - k)}``, dropped when leaving the window."""
    ms = np.arange(-trunc.m_max, trunc.m_max + 1)
    src = np.column_stack([np.tile(np.asarray(j, dtype=np.int64), (ms.size, 1)), ms])
    dst = np.column_stack([np.tile(np.asarray(i, dtype=np.int64), (ms.size, 1)), ms - k])
    rows, cols = trunc.indices(dst), trunc.indices(src)
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.csr_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(trunc.size,) * 2)
    return SparseOperator(trunc, mat)


def reconstruct_elementary(
    i: Sequence[int], j: Sequence[int], k: int, q: float, trunc: Truncation, atol: float = 1e-10
) -> tuple[SparseOperator, ReconstructionReport]:
    """Build ``p_{i j} (x) S^k`` from generator products and compare with the target.

    The word is ``P_i M S P_j``: slice projections ``P`` from the diagonal
    ``X_r^2``, a bilateral shift ``S`` (``(z_{ell+1}*)^k`` for ``k > 0``,
    ``z_{ell+1}^{|k|}`` for ``k < 0``) and moves ``M`` by powers of ``z_r``
    or ``z_r*``, divided by the scalar they accumulate.  Raises
    :class:`VerificationError` on a mismatch above ``atol``.
    """
    ell = trunc.ell
    i, j = [int(x) for x in i], [int(x) for x in j]
    if len(i) != ell or len(j) != ell:
        raise ValueError(f"index vectors must have length {ell}")
    if any(not 0 <= x <= trunc.n_max for x in i + j):
        raise ValueError("index vectors must lie in the window")
    if abs(k) > trunc.m_max:
        raise ValueError("|k| exceeds the bilateral window")
    gens = generators(q, trunc)
    pj, wj = slice_projection(j, q, trunc)
    pi, wi = slice_projection(i, q, trunc)
    op, word = pj, list(wj)
    z = gens[ell + 1]
    step = z.adjoint() if k > 0 else z
    for _ in range(abs(k)):
        op = step @ op
    if k:
        word.append(f"z{ell + 1}{'*' if k > 0 else ''}^{abs(k)}")
    for r in range(1, ell + 1):
        d = i[r - 1] - j[r - 1]
        mv = gens[r] if d > 0 else gens[r].adjoint()
        for _ in range(abs(d)):
            op = mv @ op
        if d:
            word.append(f"z{r}{'' if d > 0 else '*'}^{abs(d)}")
    op = pi @ op
    word.extend(wi)
    scalar = _path_scalar(i, j, k, q)
    op = op * (1.0 / scalar)
    target = elementary_operator(i, j, k, trunc)
    err = op.max_abs_diff(target)
    report = ReconstructionReport(
        i=i,
        j=j,
        k=k,
        q=q,
        word=" . ".join(reversed(word)),
        scalar=scalar,
        max_abs_error=err,
        passed=err <= atol,
        window=trunc.to_dict(),
    )
    if not report.passed:
        raise VerificationError(f"p_{i}{j} (x) S^{k}: reconstruction off by {err:.3e}")
    return op, report


# ---------------------------------------------------------------- ev_1


@dataclass
class Ev1Report:
    ell: int
    q: float
    window: dict
    n_modes: int
    isometric_collapse: bool
    sign_mismatches: int
    mismatch_trace: float
    generator_defect: float
    passed: bool
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def ev1_maps(h: Truncation, n_modes: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """``V = I (x) <1|`` (evaluation of Fourier series at 1) and the section ``I (x) |f_0>``."""
    ones = sp.csr_matrix(np.ones((1, n_modes)))
    f0 = sp.csr_matrix(([1.0], ([n_modes // 2], [0])), shape=(n_modes, 1))
    eye = sp.identity(h.size, format="csr")
    return sp.kron(eye, ones, format="csr"), sp.kron(eye, f0, format="csr")


def localize(op: ModuleOperator) -> SparseOperator:
    """``V A V+``: the ev_1 localization of an operator of the form ``T (x) I``."""
    v, s = ev1_maps(op.h_trunc, op.n_modes)
    return SparseOperator(op.h_trunc, v @ op.matrix @ s)


def ev1_pullback_check(q: float, trunc: Truncation, f_max: int = 2) -> Ev1Report:
    """Collapse ``H_ell (x) C(S^1)`` along ``ev_1`` and compare ``(2Q - I) (x) I`` with ``sign D_torus``."""
    h = Truncation(trunc.ell, trunc.n_max, trunc.m_max, interior_margin=0)
    n_modes = 2 * f_max + 1
    v, s = ev1_maps(h, n_modes)
    iso = bool(abs(v @ s - sp.identity(h.size)).max() == 0)
    half = (h.coords[:, -1] >= 0).astype(np.float64)
    grading = sp.kron(sp.diags(2 * half - 1), sp.identity(n_modes), format="csr")
    loc = localize(ModuleOperator(h, n_modes, grading))
    sign = np.sign(build_d_torus(trunc.ell).spectrum(h))
    diff = loc - SparseOperator.diagonal(h, sign)
    mism = int(np.count_nonzero(np.abs(diff.matrix.toarray()) > 0)) if diff.nnz else 0
    gens = generators(q, h)
    defect = 0.0
    for kk in range(1, trunc.ell + 2):
        inner = gens[kk]
        st = ModuleOperator(h, n_modes, sp.kron(inner.matrix, sp.identity(n_modes), format="csr"))
        defect = max(defect, localize(st).max_abs_diff(inner))
    ok = iso and mism == 0 and loc.is_diagonal() and defect == 0.0
    return Ev1Report(
        ell=trunc.ell,
        q=q,
        window=h.to_dict(),
        n_modes=n_modes,
        isometric_collapse=iso,
        sign_mismatches=mism,
        mismatch_trace=float(diff.diagonal_values().real.sum()),
        generator_defect=float(defect),
        passed=ok,
    )
