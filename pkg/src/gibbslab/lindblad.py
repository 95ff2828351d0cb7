"""The exactly detailed-balanced Lindbladian built from filtered Pauli jumps.

Construction happens in the energy eigenbasis. Writing nu_ij = E_i - E_j,
the transition part maps X to the operator with entries

    sum_{jl} alpha(nu_ij, nu_kl) A_ij X_jl conj(A_kl)

where alpha is the weight-averaged overlap of two Gaussian filters. The
decay part uses N = sum_i conj(A_ik) A_im alpha(nu_im, nu_ik) and the
coherent part is chat(E_k - E_m) * N_km with chat the transform of
c(t) = 1/(beta sinh(2 pi t / beta)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from .algebra import (
    GapInfo,
    GibbsState,
    IdentityViolation,
    SuperOp,
    gap_from_spectrum,
    gibbs,
    hermiticity_residual,
    kms_inner,
    unvec,
    vec,
)
from .chain import Hamiltonian, single_site_paulis

Weight = Literal["metropolis", "gaussian"]
Scheme = Literal["bohr", "quadrature"]


def weight(kind: Weight, beta: float, sigma: float, omega):
    """gamma(omega) for the shifted Metropolis or the decaying Gaussian weight."""
    if kind == "gaussian" and beta**2 * sigma**2 >= 2:
        raise ValueError("Gaussian weight needs beta^2 sigma^2 < 2")
    if kind == "metropolis":
        return _kernels.metropolis(omega, beta, sigma)
    if kind == "gaussian":
        return _kernels.gaussian(omega, beta, sigma)
    raise ValueError(f"unknown weight {kind!r}")


def h_weight(kind: Weight, beta: float, sigma: float, omega):
    """The frequency profile appearing in the Dirichlet form."""
    omega = np.asarray(omega, dtype=float)
    if kind == "metropolis":
        return np.exp(-(sigma**2) * beta**2 / 8) * np.exp(-np.abs(omega) * beta / 2)
    return np.exp(-0.25) * np.exp(-(omega**2) * beta**2 / (2 * (2 - sigma**2 * beta**2)))


@dataclass(frozen=True)
class LindbladSpec:
    beta: float
    sigma: float | None = None
    weight: Weight = "metropolis"
    scheme: Scheme = "bohr"
    jumps: tuple | None = None  # (site, label) pairs; None means all single-site Paulis

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError("the Lindbladian needs 0 < beta < inf")
        s = self.width
        if not 0 < s <= (1 + 1e-12) / self.beta:
            raise ValueError("sigma must lie in (0, 1/beta]")
        if self.weight not in ("metropolis", "gaussian"):
            raise ValueError(f"unknown weight {self.weight!r}")
        if self.scheme not in ("bohr", "quadrature"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def width(self) -> float:
        return 1.0 / self.beta if self.sigma is None else float(self.sigma)

    def as_dict(self) -> dict:
        return {"beta": self.beta, "sigma": self.width, "weight": self.weight, "scheme": self.scheme}


def jump_operators(H: Hamiltonian, spec: LindbladSpec) -> list[tuple[int, str, np.ndarray]]:
    ops = single_site_paulis(H.n, H.q)
    if spec.jumps is None:
        return ops
    wanted = {(int(s), str(l)) for s, l in spec.jumps}
    out = [o for o in ops if (o[0], o[1]) in wanted]
    if len(out) != len(wanted):
        raise ValueError("jump list names an unknown single-site Pauli")
    return out


# ---------------------------------------------------------------------------
# quadrature scheme (oracle)


def _legendre_panels(lo: float, hi: float, width: float, breaks=(), order: int = 12):
    cuts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    x0, w0 = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = max(1, int(np.ceil((b - a) / width)))
        edges = np.linspace(a, b, m + 1)
        for p, q in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (q - p) * x0 + 0.5 * (q + p))
            ws.append(0.5 * (q - p) * w0)
    return np.concatenate(xs), np.concatenate(ws)


def pair_weight_table_quadrature(nu: np.ndarray, beta: float, sigma: float, kind: Weight) -> np.ndarray:
    """alpha(nu_a, nu_b) for all pairs by Gauss-Legendre in omega.

    The Metropolis kink at -beta sigma^2 / 2 is a panel boundary.
    """
    fhat = lambda w: np.exp(-(w**2) / (4 * sigma**2)) / np.sqrt(sigma * np.sqrt(2 * np.pi))
    lo, hi = nu.min() - 14 * sigma, nu.max() + 14 * sigma
    w, wt = _legendre_panels(lo, hi, sigma / 4, breaks=(-beta * sigma**2 / 2,))
    F = fhat(w[:, None] - nu[None, :])
    g = weight(kind, beta, sigma, w) * wt
    return (F * g[:, None]).T @ F


def coherent_factor_quadrature(mu, beta: float, tol: float = 1e-8, max_doublings: int = 12):
    """2i int_0^T c(t) sin(mu t) dt by the midpoint rule, T = 4 beta.

    The step starts at beta/256 and halves until the result moves by less
    than ``tol``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    T = 4 * beta

    def rule(m: int):
        h = T / m
        t = (np.arange(m) + 0.5) * h
        c = 1.0 / (beta * np.sinh(2 * np.pi * t / beta))
        return 2j * h * (np.sin(np.multiply.outer(mu, t)) @ c)

    m = 1024
    prev = rule(m)
    for _ in range(max_doublings):
        m *= 2
        cur = rule(m)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise RuntimeError("coherent-term quadrature did not converge")


# ---------------------------------------------------------------------------
# construction


@dataclass(frozen=True, eq=False)
class Lindbladian:
    """Schrödinger-picture generator with its eigenbasis data cached."""

    H: Hamiltonian = field(repr=False)
    spec: LindbladSpec
    state: GibbsState = field(repr=False)
    eig_matrix: np.ndarray = field(repr=False)  # column-stacked, energy eigenbasis
    jumps: tuple = field(repr=False)
    terms: tuple | None = field(default=None, repr=False)

    @property
    def D(self) -> int:
        return self.state.dim

    @property
    def basis_change(self) -> np.ndarray:
        U = self.state.vectors
        return np.kron(U.conj(), U)

    def schrodinger(self) -> SuperOp:
        W = self.basis_change
        return SuperOp(W @ self.eig_matrix @ W.conj().T, "raw", "schrodinger", self.state)

    def heisenberg(self) -> SuperOp:
        W = self.basis_change
        return SuperOp(W @ self.eig_matrix.conj().T @ W.conj().T, "raw", "heisenberg", self.state)

    def kms_eig(self, matrix: np.ndarray | None = None) -> np.ndarray:
        """Symmetrised Heisenberg generator, expressed in the energy eigenbasis."""
        Lh = (self.eig_matrix if matrix is None else matrix).conj().T
        r = np.exp(0.25 * self.state.log_probs)
        kp = np.kron(r, r)
        return kp[:, None] * Lh / kp[None, :]

    def spectrum(self) -> np.ndarray:
        M = self.kms_eig()
        return np.linalg.eigvalsh(-0.5 * (M + M.conj().T))

    def term_kms_eig(self) -> list[np.ndarray]:
        if self.terms is None:
            raise ValueError("built without per-jump terms")
        return [self.kms_eig(t) for t in self.terms]


def _generator_from(M: np.ndarray, N: np.ndarray, C: np.ndarray) -> np.ndarray:
    D = N.shape[0]
    Id = np.eye(D)
    return M - np.kron(Id, 0.5 * N + 1j * C) - np.kron((0.5 * N - 1j * C).T, Id)


def build_lindbladian(
    H: Hamiltonian,
    spec: LindbladSpec,
    state: GibbsState | None = None,
    keep_terms: bool = False,
    backend: str | None = None,
) -> Lindbladian:
    st = state or gibbs(H, spec.beta)
    if abs(st.beta - spec.beta) > 0:
        raise ValueError("state and spec disagree on beta")
    E, U = st.energies, st.vectors
    beta, sigma = spec.beta, spec.width
    jumps = jump_operators(H, spec)
    A = np.stack([U.conj().T @ op @ U for _, _, op in jumps])
    dE = E[:, None] - E[None, :]
    D = len(E)

    if spec.scheme == "bohr":
        chat = _kernels.coherent_factor(dE, beta)
        assemble = lambda X: _kernels.assemble(E, X, beta, sigma, spec.weight, backend)
    else:
        nu = dE.reshape(-1)
        table = pair_weight_table_quadrature(nu, beta, sigma, spec.weight)
        chat = coherent_factor_quadrature(dE.reshape(-1), beta).reshape(D, D)
        assemble = lambda X: _kernels.assemble_from_table(table, X)

    if keep_terms:
        terms = []
        for a in range(len(jumps)):
            M, N = assemble(A[a : a + 1])
            terms.append(_generator_from(M, N, chat * N))
        L = sum(terms)
        terms = tuple(terms)
    else:
        M, N = assemble(A)
        L = _generator_from(M, N, chat * N)
        terms = None
    return Lindbladian(H, spec, st, L, tuple((s, l) for s, l, _ in jumps), terms)


# ---------------------------------------------------------------------------
# audits


def fixed_point_residual(L: Lindbladian) -> float:
    """Trace norm of L[rho], evaluated in the eigenbasis where rho is diagonal."""
    p = np.exp(L.state.log_probs)
    out = unvec(L.eig_matrix @ vec(np.diag(p).astype(complex)), L.D)
    return float(np.linalg.svd(out, compute_uv=False).sum())


def trace_preservation_residual(L: Lindbladian) -> float:
    out = unvec(L.eig_matrix.conj().T @ vec(np.eye(L.D, dtype=complex)), L.D)
    return float(np.abs(out).max())


def db_residual(L: Lindbladian) -> float:
    return hermiticity_residual(L.kms_eig())


def choi(M: np.ndarray) -> np.ndarray:
    """Choi matrix sum_ij E_ij (x) T(E_ij) of a column-stacked superoperator."""
    D = int(round(np.sqrt(M.shape[0])))
    M4 = M.reshape(D, D, D, D)  # [out col, out row, in col, in row]
    return M4.transpose(1, 3, 0, 2).reshape(D * D, D * D)


def transition_choi_min(H: Hamiltonian, spec: LindbladSpec, state: GibbsState | None = None) -> float:
    """Smallest Choi eigenvalue over the per-jump transition parts."""
    st = state or gibbs(H, spec.beta)
    U = st.vectors
    worst = np.inf
    for _, _, op in jump_operators(H, spec):
        A = (U.conj().T @ op @ U)[None]
        M, _ = _kernels.assemble(st.energies, A, spec.beta, spec.width, spec.weight)
        J = choi(M)
        J = 0.5 * (J + J.conj().T)
        worst = min(worst, float(np.linalg.eigvalsh(J).min() / max(1.0, np.abs(J).max())))
    return worst


def check_identities(L: Lindbladian, tol: float = 1e-8) -> dict[str, float]:
    """Fixed point, trace preservation and detailed balance; raises on failure."""
    out = {
        "fixed_point": fixed_point_residual(L),
        "trace_preservation": trace_preservation_residual(L),
        "kms_detailed_balance": db_residual(L),
    }
    names = {
        "fixed_point": "Gibbs state is a fixed point",
        "trace_preservation": "adjoint generator annihilates the identity",
        "kms_detailed_balance": "KMS detailed balance of the Lindbladian",
    }
    for k, v in out.items():
        if not v < tol:
            raise IdentityViolation(names[k], f"residual {v:.3e}")
    return out


def gap(L: Lindbladian) -> GapInfo:
    info = gap_from_spectrum(L.spectrum())
    if info.kernel_dim != 1:
        return GapInfo(info.gap, info.kernel_dim, info.flags + ("NOT-ERGODIC",))
    return info


# ---------------------------------------------------------------------------
# Dirichlet form


@dataclass(frozen=True)
class DirichletReport:
    direct: float
    integral: float
    discrepancy: float
    imag: float


def dirichlet_direct(L: Lindbladian, O: np.ndarray) -> complex:
    """-<O, L^dag[O]>_rho."""
    Lh = L.heisenberg()
    return -kms_inner(O, Lh(O), L.state)


def _g_hat_quadrature(mu: np.ndarray, beta: float) -> np.ndarray:
    """int g(t) cos(mu t) dt with g(t) = 1/(beta cosh(2 pi t / beta)), trapezoid rule."""
    h = beta / 64
    T = 8 * beta
    t = np.arange(-T, T + h / 2, h)
    g = 1.0 / (beta * np.cosh(2 * np.pi * t / beta))
    return h * (np.cos(np.multiply.outer(mu, t)) @ g)


def dirichlet_integral(L: Lindbladian, O: np.ndarray) -> float:
    """The (t, omega) double integral of g(t) h(omega) ||[Ahat(omega, t), O]||_rho^2.

    Each jump is split into single-frequency matrix units of the energy
    eigenbasis. The Gram matrix of their commutators with O is weighted by
    the t-integral (trapezoid) of the phase difference and by the omega
    integral (Gauss-Legendre, split at 0) of h times two filters.
    """
    st = L.state
    E, U = st.energies, st.vectors
    D = len(E)
    beta, sigma = L.spec.beta, L.spec.width
    Ot = U.conj().T @ O @ U
    s = np.exp(0.25 * st.log_probs)
    nu = (E[:, None] - E[None, :]).reshape(-1)

    w, wt = _legendre_panels(nu.min() - 14 * sigma, nu.max() + 14 * sigma, sigma / 4, breaks=(0.0,))
    F = np.exp(-((w[:, None] - nu[None, :]) ** 2) / (4 * sigma**2)) / np.sqrt(sigma * np.sqrt(2 * np.pi))
    hw = h_weight(L.spec.weight, beta, sigma, w) * wt
    Hw = (F * hw[:, None]).T @ F
    G_t = _g_hat_quadrature(nu[None, :] - nu[:, None], beta)
    K = Hw * G_t

    # commutator of the unit |i><j| with O, then rho^{1/4} (.) rho^{1/4}
    eye = np.eye(D)
    C = np.einsum("ia,jb->ijab", eye, Ot)  # |i><j| O : row i holds O[j, :]
    C = C - np.einsum("ai,jb->ijab", Ot, eye)  # O |i><j| : column j holds O[:, i]
    C = C * s[None, None, :, None] * s[None, None, None, :]
    C = C.reshape(D * D, D * D)
    total = 0.0 + 0.0j
    for _, _, op in jump_operators(L.H, L.spec):
        a = (U.conj().T @ op @ U).reshape(-1)
        V = C * a[:, None]
        Gram = V.conj() @ V.T
        total += np.sum(Gram * K)
    return float(total.real)


def dirichlet(L: Lindbladian, O: np.ndarray) -> DirichletReport:
    d = dirichlet_direct(L, O)
    i = dirichlet_integral(L, O)
    disc = abs(d.real - i) / max(1.0, abs(i))
    return DirichletReport(float(d.real), i, disc, float(abs(d.imag)))
