"""Truncated models of the odd quantum spheres: generators, equivariant Dirac
operators, index pairings and the associated C*-extension."""

from .dirac import EquivariantDirac, build_abs_torus, build_d_torus, build_neg_torus
from .errors import ConvergenceError, SignPatternError, VerificationError, WindowError
from .index_pairing import pairing
from .lattice import LatticePoint, Truncation
from .qoperators import SparseOperator, generators, op_norm

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "EquivariantDirac",
    "LatticePoint",
    "SignPatternError",
    "SparseOperator",
    "Truncation",
    "VerificationError",
    "WindowError",
    "build_abs_torus",
    "build_d_torus",
    "build_neg_torus",
    "generators",
    "op_norm",
    "pairing",
]
