"""The unitary ``u``, the positive spectral projection, and the index of ``PuP``.

A compressed matrix is square, so its index is always zero; the index here
comes from the lattice combinatorics of ``u``, which moves basis vectors
along one line and fixes the rest.  A windowed kernel/cokernel count on
interior vectors serves as the numerical cross-check.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .dirac import EquivariantDirac, commutator_bound_check
from .errors import SignPatternError, VerificationError
from .growth_graph import classify_sign_pattern
from .lattice import LatticePoint, Truncation, add_epsilon
from .qoperators import GeneratorSet, SparseOperator, generators, spectral_projection

SCHEMA_VERSION = 1


@dataclass
class BasisPartialMap:
    """A map sending basis vectors to basis vectors, the identity off ``action``.

    ``action`` lists the finitely many points where the map differs from the
    identity inside a certified region; all amplitudes are 1.
    """

    action: dict[LatticePoint, LatticePoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.action.values())) != len(self.action):
            raise ValueError("partial map must be injective")

    def __call__(self, gamma: Sequence[int]) -> LatticePoint:
        p = LatticePoint(gamma)
        return self.action.get(p, p)

    def chains(self) -> list[list[LatticePoint]]:
        """Maximal orbits ``x0 -> x1 -> ... -> xn`` of the non-identity part."""
        targets = set(self.action.values())
        out = []
        for start in sorted(p for p in self.action if p not in targets):
            chain = [start]
            while chain[-1] in self.action:
                chain.append(self.action[chain[-1]])
            out.append(chain)
        return out

    def to_operator(self, trunc: Truncation) -> SparseOperator:
        """Matrix on the window; images leaving the window are dropped."""
        rows = np.arange(trunc.size)
        keys = [p for p in self.action if trunc.contains(p)]
        if keys:
            src = trunc.indices(np.asarray(keys))
            dst = trunc.indices(np.asarray([self.action[p] for p in keys]))
            rows[src] = dst
        keep = rows >= 0
        cols = np.flatnonzero(keep)
        mat = sp.csr_matrix((np.ones(cols.size), (rows[keep], cols)), shape=(trunc.size,) * 2)
        return SparseOperator(trunc, mat)


def u_map(ell: int, radius: int) -> BasisPartialMap:
    """``u`` on the line ``gamma(1) = ... = gamma(ell) = 0``, bilateral range ``[-radius, radius]``."""
    action = {}
    for m in range(-radius, radius + 1):
        p = LatticePoint((0,) * ell + (m,))
        action[p] = add_epsilon(p, ell + 1)
    return BasisPartialMap(action)


def build_u(q: float, trunc: Truncation, gens: GeneratorSet | None = None, atol: float = 1e-12):
    """``u`` two ways: the lattice map, and ``chi_{1}(z* z)(z - 1) + 1`` with ``z = z_{ell+1}``.

    Returns ``(operator, partial_map)``.  The two must agree on every column
    whose image stays in the window.  ``z* z`` is formed one layer beyond the
    window, otherwise the top bilateral face sees ``z* z = 0`` and ``chi``
    loses it.
    """
    gens = gens or generators(q, trunc)
    z = gens[trunc.ell + 1]
    halo = generators(q, trunc.padded(1))[trunc.ell + 1]
    chi = spectral_projection((halo.adjoint() @ halo).restrict_to(trunc), 1.0)
    eye = SparseOperator.identity(trunc)
    u_op = chi @ (z - eye) + eye
    pmap = u_map(trunc.ell, trunc.m_max)
    comb = pmap.to_operator(trunc)
    cols = trunc.coords[:, -1] < trunc.m_max
    diff = (u_op - comb).matrix[:, np.flatnonzero(cols)]
    worst = float(np.abs(diff.data).max()) if diff.nnz else 0.0
    if worst > atol:
        raise VerificationError(f"functional-calculus u differs from the lattice map by {worst}")
    return u_op, pmap


class PositiveSet:
    """``Gamma+ = {gamma : d(gamma) > 0}``, the range of ``P = (1 + sign D)/2``."""

    def __init__(self, dirac: EquivariantDirac):
        self.dirac = dirac

    def __contains__(self, gamma: Sequence[int]) -> bool:
        return self.dirac(gamma) > 0

    def mask(self, trunc: Truncation) -> np.ndarray:
        return self.dirac.spectrum(trunc) > 0

    def projection(self, trunc: Truncation) -> SparseOperator:
        return SparseOperator.diagonal(trunc, self.mask(trunc).astype(np.float64))


def sign_projection(dirac: EquivariantDirac) -> PositiveSet:
    return PositiveSet(dirac)


@dataclass
class IndexResult:
    index: int
    kernel: list[tuple[int, ...]]
    cokernel: list[tuple[int, ...]]


def fredholm_index(positive: PositiveSet | Callable[[Sequence[int]], bool], umap: BasisPartialMap) -> IndexResult:
    """Index of ``PuP`` on ``range(P)`` by orbit analysis.

    On each chain of ``u``, ``e_x`` with ``x`` positive is killed when its
    image is negative, and is missed by the range when its predecessor is
    negative.  Off the chains ``PuP`` is the identity.  Membership is taken to
    be constant beyond both ends of each chain, which callers certify by
    checking that a longer chain gives the same answer.
    """
    member = positive.__contains__ if isinstance(positive, PositiveSet) else positive
    kernel, cokernel = [], []
    for chain in umap.chains():
        flags = [bool(member(p)) for p in chain]
        for (a, fa), (b, fb) in zip(zip(chain, flags), zip(chain[1:], flags[1:])):
            if fa and not fb:
                kernel.append(tuple(a))
            if fb and not fa:
                cokernel.append(tuple(b))
    return IndexResult(len(kernel) - len(cokernel), kernel, cokernel)


def numerical_index(dirac: EquivariantDirac, q: float, trunc: Truncation, zero_tol: float = 1e-8) -> int:
    """``dim ker - dim coker`` of the windowed ``PuP`` counted on interior vectors.

    ``PuP`` is a partial isometry on the window, so ``(PuP)*(PuP)`` and
    ``(PuP)(PuP)*`` are diagonal projections; their zero diagonal entries on
    positive interior vectors span the kernel and cokernel.
    """
    u_op, _ = build_u(q, trunc)
    p = PositiveSet(dirac)
    P = p.projection(trunc)
    a = P @ u_op @ P
    ata = (a.adjoint() @ a).diagonal_values().real
    aat = (a @ a.adjoint()).diagonal_values().real
    sel = p.mask(trunc) & trunc.interior_mask()
    ker = int(np.count_nonzero(sel & (ata < zero_tol)))
    coker = int(np.count_nonzero(sel & (aat < zero_tol)))
    return ker - coker


@dataclass
class PairingReport:
    dirac_name: str
    ell: int
    q: float
    index: int
    sign_form: str | None
    window: dict
    kernel: list
    cokernel: list
    numerical_index: int
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def pairing(dirac: EquivariantDirac, q: float, trunc: Truncation) -> PairingReport:
    """Index of ``P u P`` for the positive projection of ``dirac``.

    The chain of ``u`` is taken over the window's bilateral range and over
    twice that range; the two counts must coincide, and they must agree with
    the windowed numerical count.
    """
    report = commutator_bound_check(dirac, q, trunc)
    if report.verdict != "bounded":
        raise ValueError(f"{dirac.name} fails the bounded-commutator check")
    pos = PositiveSet(dirac)
    res = fredholm_index(pos, u_map(trunc.ell, trunc.m_max))
    longer = fredholm_index(pos, u_map(trunc.ell, 2 * trunc.m_max))
    if res.index != longer.index:
        raise VerificationError(
            f"index not stable along the chain: {res.index} vs {longer.index}; enlarge the window"
        )
    num = numerical_index(dirac, q, trunc)
    if num != res.index:
        raise VerificationError(f"combinatorial index {res.index} vs windowed count {num}")
    if res.index not in (-1, 0, 1):
        raise VerificationError(f"index {res.index} outside {{-1, 0, 1}}")
    try:
        form = classify_sign_pattern(dirac, trunc).form.value
    except SignPatternError:
        form = None
    return PairingReport(
        dirac_name=dirac.name,
        ell=trunc.ell,
        q=q,
        index=res.index,
        sign_form=form,
        window=trunc.to_dict(),
        kernel=[list(p) for p in res.kernel],
        cokernel=[list(p) for p in res.cokernel],
        numerical_index=num,
    )
