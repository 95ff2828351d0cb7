"""Exact-diagonalization laboratory for detailed-balanced quantum Gibbs samplers on 1D chains."""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .algebra import GibbsState, IdentityViolation, gibbs, kms_inner, kms_norm
from .chain import ChainError, Hamiltonian, Region, build_chain, make_model
from .condexp import CondExpectation, cond_expectation
from .curves import DecayCurve
from .kgen import build_k
from .lindblad import LindbladSpec, build_lindbladian

__all__ = [
    "BACKEND",
    "ChainError",
    "CondExpectation",
    "DecayCurve",
    "GibbsState",
    "Hamiltonian",
    "IdentityViolation",
    "LindbladSpec",
    "Region",
    "__version__",
    "build_chain",
    "build_k",
    "build_lindbladian",
    "cond_expectation",
    "gibbs",
    "kms_inner",
    "kms_norm",
    "make_model",
]
