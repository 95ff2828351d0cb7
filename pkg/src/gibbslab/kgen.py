"""The auxiliary generator K and its truncations.

For a jump A and state rho, K_a[X] = [A, X] B - B2 [A, X] with
B = rho^{1/2} A^dag rho^{-1/2} and B2 = rho^{-1/2} A^dag rho^{1/2}. It acts in
the Heisenberg picture, is KMS-symmetric, and its Dirichlet form is the
squared KMS norm of [A, X].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    GapInfo,
    GibbsState,
    IdentityViolation,
    SuperOp,
    gap_from_spectrum,
    gibbs,
    herm_expm,
    hermiticity_residual,
    induced_norm_action,
    kms_inner,
    kms_norm,
    opnorm,
    partial_trace,
    sandwich,
)
from .chain import Hamiltonian, Region, as_region, embed_on, restrict, single_site_paulis
from .curves import DecayCurve
from .lindblad import choi


@dataclass(frozen=True, eq=False)
class KTerm:
    """X -> A X B - X A B - B2 A X + B2 X A."""

    site: int
    label: str
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    B2: np.ndarray = field(repr=False)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        A, B, B2 = self.A, self.B, self.B2
        C = A @ X - X @ A
        return C @ B - B2 @ C

    def adjoint(self, X: np.ndarray) -> np.ndarray:
        A, B, B2 = self.A, self.B, self.B2
        Ad, Bd, B2d = A.conj().T, B.conj().T, B2.conj().T
        return Ad @ X @ Bd - X @ (A @ B).conj().T - (B2 @ A).conj().T @ X + B2d @ X @ Ad

    def matrix(self) -> np.ndarray:
        A, B, B2 = self.A, self.B, self.B2
        I = np.eye(A.shape[0])
        return sandwich(A, B) - np.kron((A @ B).T, I) - np.kron(I, B2 @ A) + sandwich(B2, A)

    def kms_matrix(self, state: GibbsState) -> np.ndarray:
        """rho^{1/4} K_a[rho^{-1/4} . rho^{-1/4}] rho^{1/4}, built factor by factor."""
        q, iq = state.qrt, state.iqrt
        A, B, B2 = self.A, self.B, self.B2
        I = np.eye(A.shape[0])
        return (
            np.kron((iq @ B @ q).T, q @ A @ iq)
            - np.kron((iq @ A @ B @ q).T, I)
            - np.kron(I, q @ B2 @ A @ iq)
            + np.kron((iq @ A @ q).T, q @ B2 @ iq)
        )

    def transition_matrix(self) -> np.ndarray:
        """The sandwich part X -> A X B + B2 X A."""
        return sandwich(self.A, self.B) + sandwich(self.B2, self.A)


@dataclass(frozen=True, eq=False)
class KGenerator:
    H: Hamiltonian = field(repr=False)
    state: GibbsState = field(repr=False)
    region: Region
    terms: tuple[KTerm, ...] = field(repr=False)
    truncation: Region | None = None

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return sum(t(X) for t in self.terms)

    def adjoint(self, X: np.ndarray) -> np.ndarray:
        return sum(t.adjoint(X) for t in self.terms)

    def superop(self) -> SuperOp:
        return SuperOp(sum(t.matrix() for t in self.terms), "raw", "heisenberg", self.state)

    def kms_matrix(self) -> np.ndarray:
        return sum(t.kms_matrix(self.state) for t in self.terms)

    def spectrum(self) -> np.ndarray:
        """Eigenvalues of -sym(K), ascending (K must be detailed balanced)."""
        M = self.kms_matrix()
        return np.linalg.eigvalsh(-0.5 * (M + M.conj().T))

    @property
    def n_jumps(self) -> int:
        return len(self.terms)


def _terms(H: Hamiltonian, state: GibbsState, region: Region, Hr: np.ndarray | None) -> tuple[KTerm, ...]:
    beta = state.beta
    if Hr is None:
        left, right = state.sqrt, state.isqrt
    else:
        left, right = herm_expm(Hr, -beta / 2), herm_expm(Hr, beta / 2)
    out = []
    for site, label, A in single_site_paulis(H.n, H.q, region):
        Ad = A.conj().T
        out.append(KTerm(site, label, A, left @ Ad @ right, right @ Ad @ left))
    return tuple(out)


def build_k(H: Hamiltonian, beta: float, R, state: GibbsState | None = None) -> KGenerator:
    """K_R = sum of K_a over the single-site Paulis on R."""
    R = as_region(R)
    if len(R) == 0:
        raise ValueError("K needs a nonempty jump region")
    st = state or gibbs(H, beta)
    return KGenerator(H, st, R, _terms(H, st, R, None))


def build_k_truncated(H: Hamiltonian, beta: float, A, R, state: GibbsState | None = None) -> KGenerator:
    """K_A^{(R)}: the rho factors replaced by imaginary-time evolution under H^R."""
    A, R = as_region(A), as_region(R)
    if not A.issubset(R):
        raise ValueError("the jump region must lie inside the truncation region")
    st = state or gibbs(H, beta)
    Hr = restrict(H, R).matrix
    return KGenerator(H, st, A, _terms(H, st, A, Hr), truncation=R)


def expected_kernel_dim(n: int, q: int, r: int) -> int:
    return (4**q) ** (n - r)


def kernel_dim(K: KGenerator, tol: float = 1e-9) -> int:
    return gap_from_spectrum(K.spectrum(), tol).kernel_dim


def check_kernel(K: KGenerator) -> int:
    dim = kernel_dim(K)
    want = expected_kernel_dim(K.H.n, K.H.q, len(K.region))
    if dim != want:
        raise IdentityViolation("kernel of K_R is the operators trivial on R", f"dim {dim} != {want}")
    return dim


def conditional_gap(K: KGenerator) -> GapInfo:
    return gap_from_spectrum(K.spectrum())


def db_residual(K: KGenerator) -> float:
    return hermiticity_residual(K.kms_matrix())


def dirichlet_k(K: KGenerator, X: np.ndarray, tol: float = 1e-10) -> tuple[float, float]:
    """(<X, -K X>_rho, sum_a ||[A_a, X]||_rho^2); raises if they differ."""
    lhs = -kms_inner(X, K(X), K.state)
    rhs = sum(kms_norm(t.A @ X - X @ t.A, K.state) ** 2 for t in K.terms)
    if abs(lhs - rhs) > tol * max(1.0, abs(rhs)):
        raise IdentityViolation(
            "Dirichlet form of K is a sum of squared commutator KMS norms",
            f"{lhs} vs {rhs}",
        )
    return float(lhs.real), float(rhs)


def spectral_radius_bound(K: KGenerator) -> float:
    """sum_a (||rho^{1/4} A rho^{-1/4}|| + ||rho^{-1/4} A rho^{1/4}||)^2."""
    q, iq = K.state.qrt, K.state.iqrt
    return float(sum((opnorm(q @ t.A @ iq) + opnorm(iq @ t.A @ q)) ** 2 for t in K.terms))


def depolarizing_gap(q: int) -> float:
    """Gap of K on one site at infinite temperature."""
    return 2.0 * 4**q


def transition_choi_min(K: KGenerator) -> float:
    """Most negative Choi eigenvalue (relative) over the per-jump sandwich parts."""
    worst = np.inf
    for t in K.terms:
        J = choi(t.transition_matrix())
        J = 0.5 * (J + J.conj().T)
        worst = min(worst, float(np.linalg.eigvalsh(J).min() / max(1.0, np.abs(J).max())))
    return worst


# ---------------------------------------------------------------------------
# truncation audit


def _difference(full: KTerm, trunc: KTerm) -> KTerm:
    return KTerm(full.site, full.label, full.A, trunc.B - full.B, trunc.B2 - full.B2)


def truncation_error(H: Hamiltonian, state: GibbsState, site: int, R) -> float:
    """max over jumps a on ``site`` of ||K_a^{(R)} - K_a||_rho."""
    R = as_region(R)
    full = {t.label: t for t in _terms(H, state, Region.of([site]), None)}
    trunc = _terms(H, state, Region.of([site]), restrict(H, R).matrix)
    worst = 0.0
    for t in trunc:
        d = _difference(full[t.label], t)
        worst = max(worst, induced_norm_action(d, d.adjoint, state))
    return worst


def truncation_gap_audit(H: Hamiltonian, beta: float, site: int, buffers, state: GibbsState | None = None, seed=None) -> DecayCurve:
    st = state or gibbs(H, beta)
    vals, dists = [], []
    for ell in buffers:
        R = Region.of([site]).neighbourhood(ell, H.n)
        vals.append(truncation_error(H, st, site, R))
        comp = R.complement(H.n)
        dists.append(None if len(comp) == 0 else Region.of([site]).dist(comp))
    return DecayCurve.build(
        "k_truncation", list(buffers), vals, model=H.spec.model, beta=beta, seed=seed,
        meta={"site": site, "distance_to_boundary": dists},
    )


# ---------------------------------------------------------------------------
# depolarizing comparison and change of measure


def product_with_maximally_mixed(R, sigma_rest: np.ndarray, n: int, q: int = 1) -> np.ndarray:
    """tau_R (x) sigma on the complement of R, as a full-chain density matrix."""
    R = as_region(R)
    rest = R.complement(n)
    d = 2**q
    if len(rest) == 0:
        return np.eye(d**n, dtype=complex) / d**n
    return embed_on(sigma_rest, rest, n, q) / d ** len(R)


def depolarizing_projection(X: np.ndarray, R, n: int, q: int = 1) -> np.ndarray:
    """tau_R (x) Tr_R[X]."""
    R = as_region(R)
    d = 2**q
    rest = R.complement(n)
    if len(rest) == 0:
        return np.trace(X) * np.eye(d**n) / d**n
    return embed_on(partial_trace(X, list(rest.sites), n, d), rest, n, q) / d ** len(R)


def gap_product_check(X: np.ndarray, R, sigma_rest: np.ndarray, n: int, q: int = 1) -> tuple[float, float]:
    """(sum_a ||[A_a, X]||^2, 4^q ||X - tau_R Tr_R X||^2), both in the tau_R (x) sigma KMS norm."""
    R = as_region(R)
    st = gibbs(-_logm_psd(product_with_maximally_mixed(R, sigma_rest, n, q)), 1.0)
    lhs = sum(kms_norm(A @ X - X @ A, st) ** 2 for _, _, A in single_site_paulis(n, q, R))
    rhs = 4**q * kms_norm(X - depolarizing_projection(X, R, n, q), st) ** 2
    return float(lhs), float(rhs)


def _logm_psd(rho: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (V * np.log(w)) @ V.conj().T


def compare_measure_check(H: Hamiltonian, beta: float, A, B, X: np.ndarray) -> tuple[float, float]:
    """(||X||_rho^2, ||sigma^{-1/4} rho^{1/2} sigma^{-1/4}||^2 ||X||_sigma^2) with sigma = rho^A (x) rho^B."""
    A, B = as_region(A), as_region(B)
    rho = gibbs(H, beta)
    sigma = gibbs(restrict(H, A).matrix + restrict(H, B).matrix, beta)
    c = opnorm(sigma.iqrt @ rho.sqrt @ sigma.iqrt) ** 2
    return kms_norm(X, rho) ** 2, c * kms_norm(X, sigma) ** 2
