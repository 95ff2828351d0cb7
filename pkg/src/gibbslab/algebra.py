"""Dense operator algebra: Gibbs states, KMS geometry and superoperators.

Operators are vectorised by column stacking, so the superoperator
X -> A X B has matrix kron(B.T, A).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

from .chain import Hamiltonian

Picture = Literal["heisenberg", "schrodinger"]
Rep = Literal["raw", "kms"]

KERNEL_TOL = 1e-9


class IdentityViolation(AssertionError):
    """An exact identity or a stated bound failed beyond tolerance.

    ``identity`` names the mathematical statement that broke.
    """

    def __init__(self, identity: str, detail: str = ""):
        self.identity = identity
        super().__init__(f"{identity}: {detail}" if detail else identity)


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, D: int | None = None) -> np.ndarray:
    if D is None:
        D = int(round(np.sqrt(v.shape[0])))
    return np.asarray(v).reshape(D, D, order="F")


def sandwich(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of X -> A X B."""
    return np.kron(B.T, A)


def left(A: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(A.shape[0]), A)


def right(B: np.ndarray) -> np.ndarray:
    return np.kron(B.T, np.eye(B.shape[0]))


def commutator_superop(A: np.ndarray) -> np.ndarray:
    return left(A) - right(A)


def dagger(X: np.ndarray) -> np.ndarray:
    return X.conj().T


def opnorm(X: np.ndarray) -> float:
    return float(np.linalg.norm(X, 2))


def herm_function(Hm: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    E, V = np.linalg.eigh(Hm)
    return (V * fn(E)) @ V.conj().T


def herm_expm(Hm: np.ndarray, c: complex) -> np.ndarray:
    """exp(c * Hm) for Hermitian Hm and any complex scalar c."""
    if c == 0:
        return np.eye(Hm.shape[0], dtype=complex)
    return herm_function(Hm, lambda E: np.exp(c * E))


def random_operator(D: int, rng: np.random.Generator, hermitian: bool = False) -> np.ndarray:
    X = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    if hermitian:
        X = X + X.conj().T
    return X / np.linalg.norm(X)


# ---------------------------------------------------------------------------
# Gibbs states


@dataclass(frozen=True, eq=False)
class GibbsState:
    beta: float
    energies: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    log_z: float
    rho: np.ndarray = field(repr=False)
    sqrt: np.ndarray = field(repr=False)
    isqrt: np.ndarray = field(repr=False)
    qrt: np.ndarray = field(repr=False)
    iqrt: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_z))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def log_probs(self) -> np.ndarray:
        return -self.beta * self.energies - self.log_z

    def power(self, a: float) -> np.ndarray:
        U = self.vectors
        return (U * np.exp(a * self.log_probs)) @ U.conj().T

    def expect(self, X: np.ndarray) -> complex:
        return complex(np.vdot(self.rho, X))  # Tr[rho X], rho Hermitian

    def sym_superop(self, inverse: bool = False) -> np.ndarray:
        """Matrix of X -> rho^{1/4} X rho^{1/4} (or its inverse)."""
        m = self.iqrt if inverse else self.qrt
        return sandwich(m, m)


def gibbs(H: Hamiltonian | np.ndarray, beta: float) -> GibbsState:
    """Gibbs state e^{-beta H}/Z with cached fractional powers.

    The spectrum is shifted by its minimum before exponentiation; the shift
    cancels in every normalised quantity but is added back into ``log_z``.
    """
    Hm = H.matrix if isinstance(H, Hamiltonian) else np.asarray(H, dtype=complex)
    if not np.allclose(Hm, Hm.conj().T, atol=1e-12):
        raise ValueError("Gibbs state of a non-Hermitian matrix")
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and non-negative")
    E, U = np.linalg.eigh(Hm)
    e0 = E[0]
    w = -beta * (E - e0)
    log_z_shift = float(np.logaddexp.reduce(w))
    log_p = w - log_z_shift
    log_z = log_z_shift - beta * e0

    def pw(a: float) -> np.ndarray:
        return (U * np.exp(a * log_p)) @ U.conj().T

    return GibbsState(
        beta=float(beta),
        energies=E,
        vectors=U,
        log_z=float(log_z),
        rho=pw(1.0),
        sqrt=pw(0.5),
        isqrt=pw(-0.5),
        qrt=pw(0.25),
        iqrt=pw(-0.25),
    )


def partial_trace(rho: np.ndarray, keep: list[int] | tuple[int, ...], n: int, d: int) -> np.ndarray:
    """Reduced operator on the 1-based sites ``keep`` (kept in sorted order)."""
    keep = sorted(keep)
    t = rho.reshape([d] * (2 * n))
    traced = [i for i in range(1, n + 1) if i not in keep]
    # contract each traced site's ket and bra axes
    for count, i in enumerate(sorted(traced, reverse=True)):
        m = n - count
        t = np.trace(t, axis1=i - 1, axis2=m + i - 1)
    k = len(keep)
    return t.reshape(d**k, d**k)


# ---------------------------------------------------------------------------
# KMS geometry


def kms_inner(X: np.ndarray, Y: np.ndarray, state: GibbsState) -> complex:
    """<X, Y>_rho = Tr[X^† rho^{1/2} Y rho^{1/2}]."""
    return complex(np.vdot(X, state.sqrt @ Y @ state.sqrt))


def kms_norm(X: np.ndarray, state: GibbsState) -> float:
    """||rho^{1/4} X rho^{1/4}||_2."""
    return float(np.linalg.norm(state.qrt @ X @ state.qrt))


def kms_holder(A: np.ndarray, O: np.ndarray, state: GibbsState) -> tuple[float, float]:
    """Return (||A O||_rho, ||rho^{1/4} A rho^{-1/4}|| ||O||_rho) and check the order."""
    lhs = kms_norm(A @ O, state)
    rhs = opnorm(state.qrt @ A @ state.iqrt) * kms_norm(O, state)
    if lhs > rhs * (1 + 1e-9) + 1e-14:
        raise IdentityViolation("KMS Hölder bound", f"{lhs} > {rhs}")
    return lhs, rhs


# ---------------------------------------------------------------------------
# Superoperators


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Dense matrix on vectorised operators, tagged with its representation."""

    matrix: np.ndarray = field(repr=False)
    rep: Rep = "raw"
    picture: Picture = "heisenberg"
    state: GibbsState | None = field(default=None, repr=False)

    @property
    def D(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if self.rep != "raw":
            raise ValueError("apply a raw-representation superoperator")
        return unvec(self.matrix @ vec(X), self.D)

    def adjoint(self) -> "SuperOp":
        """Hilbert-Schmidt adjoint; swaps the picture."""
        if self.rep != "raw":
            raise ValueError("adjoint is taken in the raw representation")
        other = "schrodinger" if self.picture == "heisenberg" else "heisenberg"
        return SuperOp(self.matrix.conj().T, "raw", other, self.state)

    def with_matrix(self, m: np.ndarray) -> "SuperOp":
        return SuperOp(m, self.rep, self.picture, self.state)

    def __add__(self, other: "SuperOp") -> "SuperOp":
        return self.with_matrix(self.matrix + other.matrix)

    def __sub__(self, other: "SuperOp") -> "SuperOp":
        return self.with_matrix(self.matrix - other.matrix)


def _sym_factors(state: GibbsState, picture: Picture) -> tuple[np.ndarray, np.ndarray]:
    kp = sandwich(state.qrt, state.qrt)
    km = sandwich(state.iqrt, state.iqrt)
    return (kp, km) if picture == "heisenberg" else (km, kp)


def symmetrize(S: SuperOp, state: GibbsState | None = None) -> SuperOp:
    """KMS-symmetrised matrix M, so that ||S||_rho = ||M|| and DB iff M = M^†.

    Heisenberg maps go to rho^{1/4} S[rho^{-1/4} . rho^{-1/4}] rho^{1/4};
    Schrödinger maps to rho^{-1/4} S[rho^{1/4} . rho^{1/4}] rho^{-1/4}.
    Symmetrising an already symmetrised operator is a no-op.
    """
    if S.rep == "kms":
        return S
    st = state or S.state
    if st is None:
        raise ValueError("symmetrize needs a base state")
    a, b = _sym_factors(st, S.picture)
    return SuperOp(a @ S.matrix @ b, "kms", S.picture, st)


def unsymmetrize(M: SuperOp) -> SuperOp:
    if M.rep == "raw":
        return M
    a, b = _sym_factors(M.state, M.picture)
    # inverse conversion swaps the two factors
    return SuperOp(b @ M.matrix @ a, "raw", M.picture, M.state)


def hermiticity_residual(M: np.ndarray) -> float:
    """max|M - M^†| relative to max(1, max|M|)."""
    return float(np.abs(M - M.conj().T).max() / max(1.0, np.abs(M).max()))


def induced_norm(S: SuperOp, state: GibbsState | None = None) -> float:
    """KMS-induced norm: the largest singular value of the symmetrised matrix."""
    M = symmetrize(S, state).matrix
    if not M.any():
        return 0.0
    return float(np.linalg.norm(M, 2))


def induced_norm_action(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_adjoint: Callable[[np.ndarray], np.ndarray],
    state: GibbsState,
    dense_below: int = 16,
) -> float:
    """Matrix-free KMS-induced norm of a Heisenberg-picture map.

    ``apply`` and its Hilbert-Schmidt adjoint act on D x D operators. Small
    dimensions are densified; otherwise Lanczos on S^dag S with a fixed start
    vector gives the top singular value, so repeated calls agree bit for bit.
    """
    D = state.dim
    q, iq = state.qrt, state.iqrt

    def mv(v: np.ndarray) -> np.ndarray:
        X = unvec(np.asarray(v).reshape(-1), D)
        return vec(q @ apply(iq @ X @ iq) @ q)

    def rmv(v: np.ndarray) -> np.ndarray:
        X = unvec(np.asarray(v).reshape(-1), D)
        return vec(iq @ apply_adjoint(q @ X @ q) @ iq)

    if D <= dense_below:
        dense = np.column_stack([mv(e) for e in np.eye(D * D)])
        return float(np.linalg.norm(dense, 2)) if dense.any() else 0.0
    gram = LinearOperator((D * D, D * D), matvec=lambda v: rmv(mv(v)), dtype=complex)
    v0 = np.linspace(1.0, 2.0, D * D).astype(complex)
    # wide Krylov space: the top of S^dag S is often highly degenerate
    ncv = min(D * D - 1, 40)
    w = eigsh(gram, k=1, which="LA", v0=v0, ncv=ncv, tol=1e-12, return_eigenvectors=False)
    return float(np.sqrt(max(w[0].real, 0.0)))


@dataclass(frozen=True)
class ZeroProjector:
    projector: SuperOp
    rank: int
    eigenvalues: np.ndarray = field(repr=False)
    flags: tuple[str, ...] = ()


def spectral_projector_zero(M: SuperOp, tol: float = KERNEL_TOL) -> ZeroProjector:
    """Orthogonal projector onto the numerically zero eigenspace of Hermitian M.

    An eigenvalue counts as zero iff |lambda| < tol * max|lambda|. When the
    next eigenvalue is within 10x the threshold the result is flagged
    DEGENERATE; an empty kernel returns the zero map flagged EMPTY.
    """
    H = 0.5 * (M.matrix + M.matrix.conj().T)
    w, V = np.linalg.eigh(H)
    scale = np.abs(w).max() if w.size else 0.0
    thr = tol * max(scale, 1e-300)
    zero = np.abs(w) < thr
    flags = []
    others = np.abs(w[~zero])
    if others.size and others.min() < 10 * thr:
        flags.append("DEGENERATE")
    Vz = V[:, zero]
    P = Vz @ Vz.conj().T
    if not zero.any():
        flags.append("EMPTY")
    return ZeroProjector(SuperOp(P, M.rep, M.picture, M.state), int(zero.sum()), w, tuple(flags))


def generator_spectrum(S: SuperOp, state: GibbsState | None = None) -> np.ndarray:
    """Eigenvalues of -sym(S), ascending; S must be detailed balanced."""
    M = symmetrize(S, state).matrix
    return np.linalg.eigvalsh(-0.5 * (M + M.conj().T))


@dataclass(frozen=True)
class GapInfo:
    gap: float
    kernel_dim: int
    flags: tuple[str, ...] = ()


def gap_from_spectrum(w: np.ndarray, tol: float = KERNEL_TOL) -> GapInfo:
    """Smallest nonzero eigenvalue of a PSD spectrum and the kernel size."""
    scale = max(np.abs(w).max(), 1e-300)
    thr = tol * scale
    zero = np.abs(w) < thr
    rest = w[~zero]
    flags = []
    if rest.size and rest.min() < 10 * thr:
        flags.append("DEGENERATE")
    if (w < -thr).any():
        flags.append("NEGATIVE")
    gap = float(rest.min()) if rest.size else 0.0
    return GapInfo(gap, int(zero.sum()), tuple(flags))


def matrix_dump(X: np.ndarray) -> list:
    """Row-major [re, im] pairs for JSON debugging output."""
    return [[float(z.real), float(z.imag)] for z in np.asarray(X).reshape(-1)]
