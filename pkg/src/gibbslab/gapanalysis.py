"""Gap extraction and comparison between K and the Lindbladian.

Both generators are compared as PSD forms in the same coordinates: the
KMS-symmetrised Heisenberg picture, written in the energy eigenbasis of H.
The comparison constants come from generalised eigenproblems restricted to
the orthogonal complement of the shared kernel.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .algebra import GibbsState, IdentityViolation, gap_from_spectrum, gibbs, kms_inner, random_operator
from .chain import ChainError, Hamiltonian, Region, as_region, balanced_partitions, make_model
from .clustering import strong_clustering_error
from .condexp import cond_expectation, conditional_variance, full_variance
from .kgen import KGenerator, build_k, conditional_gap, expected_kernel_dim
from .lindblad import LindbladSpec, Lindbladian, build_lindbladian, gap as lindblad_gap

KERNEL_ANGLE_TOL = 1e-8
DEFAULT_BUDGET = 2 * 1024**3


class ResourceError(RuntimeError):
    """A dense computation would exceed the memory budget."""


def superop_bytes(n: int, q: int = 1) -> int:
    """Bytes of one dense complex superoperator on n sites."""
    return 16 * (2 ** (2 * q * n)) ** 2


def guard(n: int, q: int, budget: int | None) -> None:
    need = superop_bytes(n, q)
    if budget is not None and need > budget:
        fit = n
        while fit > 1 and superop_bytes(fit, q) > budget:
            fit -= 1
        raise ResourceError(
            f"n={n}, q={q} needs about {need / 2**20:.0f} MiB per superoperator, over the "
            f"{budget / 2**20:.0f} MiB budget; largest n that fits is {fit}"
        )


# ---------------------------------------------------------------------------
# variance factorisation


@dataclass(frozen=True)
class FactorizationRow:
    lhs: float
    rhs: float
    slack: float


@dataclass(frozen=True)
class FactorizationReport:
    epsilon: float
    applicable: bool
    rows: tuple[FactorizationRow, ...]

    @property
    def holds(self) -> bool:
        return all(r.slack >= -1e-10 for r in self.rows)


def variance_factorization_check(H: Hamiltonian, state: GibbsState, A, B, C, ops) -> FactorizationReport:
    """Var_ABC(O) against (1 - 2 eps)^-1 (Var_AB(O) + Var_BC(O)), eps the strong clustering error."""
    A, B, C = as_region(A), as_region(B), as_region(C)
    eps = strong_clustering_error(H, state, A, B, C)
    applicable = eps < 0.5
    E_ab = cond_expectation(H, A | B, state)
    E_bc = cond_expectation(H, B | C, state)
    E_abc = cond_expectation(H, A | B | C, state)
    rows = []
    for O in ops:
        lhs = conditional_variance(E_abc, O)
        rhs = (conditional_variance(E_ab, O) + conditional_variance(E_bc, O)) / (1 - 2 * eps) if applicable else math.inf
        rows.append(FactorizationRow(lhs, rhs, rhs - lhs))
    report = FactorizationReport(eps, applicable, tuple(rows))
    if applicable and not report.holds:
        worst = min(r.slack for r in rows)
        raise IdentityViolation("factorisation of variance", f"eps={eps:.3e}, slack {worst:.3e}")
    return report


# ---------------------------------------------------------------------------
# Dirichlet comparison


def k_eigbasis(K: KGenerator) -> np.ndarray:
    """-sym(K) in the energy eigenbasis of the state, matching the Lindbladian's coordinates."""
    U = K.state.vectors
    W = np.kron(U.conj(), U)
    M = W.conj().T @ K.kms_matrix() @ W
    return -0.5 * (M + M.conj().T)


def l_eigbasis(L: Lindbladian) -> np.ndarray:
    M = L.kms_eig()
    return -0.5 * (M + M.conj().T)


@dataclass(frozen=True)
class Comparison:
    alpha: float  # M_K <= alpha M_L off the kernel
    alpha_prime: float  # M_L <= alpha' M_K off the kernel
    lambda_k: float
    lambda_l: float
    kernel_dim: int
    kernel_angle: float

    @property
    def bound_holds(self) -> bool:
        return self.lambda_l >= self.lambda_k / self.alpha - 1e-9


def _kernel(M: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(M)
    zero = np.abs(w) < tol * max(np.abs(w).max(), 1e-300)
    return w, V[:, zero], V[:, ~zero]


def dirichlet_comparison(MK: np.ndarray, ML: np.ndarray, tol: float = 1e-9) -> Comparison:
    """Comparison constants between two PSD forms with a common kernel."""
    wk, kerK, _ = _kernel(MK, tol)
    wl, kerL, perp = _kernel(ML, tol)
    if kerK.shape[1] != kerL.shape[1]:
        raise IdentityViolation("K and L share a kernel", f"dims {kerK.shape[1]} vs {kerL.shape[1]}")
    if kerK.shape[1]:
        # sine of the largest principal angle, read off the residual directly for full precision
        resid = kerK - kerL @ (kerL.conj().T @ kerK)
        angle = float(np.linalg.norm(resid, 2))
    else:
        angle = 0.0
    if angle > KERNEL_ANGLE_TOL:
        raise IdentityViolation("K and L share a kernel", f"subspace angle {angle:.3e}")
    a = perp.conj().T @ MK @ perp
    b = perp.conj().T @ ML @ perp
    a, b = 0.5 * (a + a.conj().T), 0.5 * (b + b.conj().T)
    alpha = float(sla.eigh(a, b, eigvals_only=True)[-1])
    alpha_p = float(sla.eigh(b, a, eigvals_only=True)[-1])
    return Comparison(
        alpha, alpha_p, gap_from_spectrum(wk, tol).gap, gap_from_spectrum(wl, tol).gap, kerL.shape[1], angle
    )


def compare(L: Lindbladian, K: KGenerator | None = None) -> Comparison:
    K = K or build_k(L.H, L.spec.beta, Region.interval(1, L.H.n), L.state)
    return dirichlet_comparison(k_eigbasis(K), l_eigbasis(L))


def single_qubit_alpha(MK: np.ndarray, ML: np.ndarray) -> float:
    """Largest ratio of two PSD forms on a one-qubit operator space, in closed form.

    Off the shared one-dimensional kernel both forms are 3 x 3. After
    whitening by ML the ratio is the top eigenvalue of a 3 x 3 Hermitian
    matrix, taken from the trigonometric solution of its characteristic
    cubic (stable even when all three roots coincide).
    """
    _, _, perp = _kernel(ML, 1e-9)
    a = perp.conj().T @ MK @ perp
    b = perp.conj().T @ ML @ perp
    if a.shape != (3, 3):
        raise ChainError("closed form needs a one-qubit space with a one-dimensional kernel")
    wb, vb = np.linalg.eigh(0.5 * (b + b.conj().T))
    s = vb / np.sqrt(wb)
    m = s.conj().T @ a @ s
    m = 0.5 * (m + m.conj().T)
    off = abs(m[0, 1]) ** 2 + abs(m[0, 2]) ** 2 + abs(m[1, 2]) ** 2
    d = m.diagonal().real
    if off == 0:
        return float(d.max())
    mean = d.sum() / 3
    p = np.sqrt((((d - mean) ** 2).sum() + 2 * off) / 6)
    r = np.linalg.det((m - mean * np.eye(3)) / p).real / 2
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3
    return float(mean + 2 * p * np.cos(phi))


# ---------------------------------------------------------------------------
# gap scans


@dataclass(frozen=True)
class GapReport:
    model: str
    seed: int | None
    n: int
    q: int
    beta: float
    sigma: float
    weight: str
    lambda_k: float
    lambda_l: float
    alpha: float
    alpha_prime: float
    kernel_dim_k: int
    kernel_dim_l: int
    conditional_gaps: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


GAP_CSV_COLUMNS = ("model", "seed", "n", "q", "beta", "sigma", "weight",
                   "lambda_K", "lambda_L", "alpha", "alpha_prime", "kernel_dim")


def gap_report(H: Hamiltonian, spec: LindbladSpec, state: GibbsState | None = None,
               regions=(), budget: int | None = DEFAULT_BUDGET) -> GapReport:
    guard(H.n, H.q, budget)
    st = state or gibbs(H, spec.beta)
    L = build_lindbladian(H, spec, st)
    K = build_k(H, spec.beta, Region.interval(1, H.n), st)
    cmp = compare(L, K)
    kdim = gap_from_spectrum(K.spectrum()).kernel_dim
    if kdim != expected_kernel_dim(H.n, H.q, H.n):
        raise IdentityViolation("K on the whole chain has the scalars as kernel", f"dim {kdim}")
    ldim = lindblad_gap(L).kernel_dim
    cond = {}
    for R in regions:
        R = as_region(R)
        cond[str(list(R.sites))] = conditional_gap(build_k(H, spec.beta, R, st)).gap
    if cmp.lambda_l < cmp.lambda_k / cmp.alpha - 1e-9:
        raise IdentityViolation("gap of L dominates gap of K over alpha",
                                f"{cmp.lambda_l} < {cmp.lambda_k}/{cmp.alpha}")
    return GapReport(
        H.spec.model, H.spec.seed, H.n, H.q, spec.beta, spec.width, spec.weight,
        cmp.lambda_k, cmp.lambda_l, cmp.alpha, cmp.alpha_prime, kdim, ldim, cond,
    )


def gap_scan(model: str, ns, betas, weight: str = "metropolis", q: int = 1, seed: int = 0,
             sigma: float | None = None, budget: int | None = DEFAULT_BUDGET, n_max: int = 5,
             **params) -> list[GapReport]:
    """One GapReport per (n, beta); sizes are checked against the budget before any work."""
    for n in ns:
        if n > n_max:
            raise ResourceError(f"n={n} above the configured maximum {n_max}")
        guard(n, q, budget)
    out = []
    for n in ns:
        H = make_model(model, n, q=q, seed=seed, **params)
        for beta in betas:
            out.append(gap_report(H, LindbladSpec(beta, sigma, weight), budget=budget))
    return out


def plateau_ratio(reports) -> float:
    """max / min of the Lindbladian gap over a scan."""
    g = [r.lambda_l for r in reports]
    return max(g) / min(g)


def gap_csv_rows(reports) -> list[list]:
    return [[r.model, r.seed, r.n, r.q, r.beta, r.sigma, r.weight, r.lambda_k, r.lambda_l,
             r.alpha, r.alpha_prime, r.kernel_dim_l] for r in reports]


# ---------------------------------------------------------------------------
# recursion trace


def window_partitions(n: int, b: int) -> tuple[tuple[Region, Region, Region], ...]:
    """Tripartitions of [1, n] whose middles of width b tile the interior disjointly."""
    parts = []
    for k in range(1, n - b, b):
        parts.append((Region.interval(1, k), Region.interval(k + 1, k + b), Region.interval(k + b + 1, n)))
    if not parts:
        raise ChainError(f"no tripartition of {n} sites with middles of width {b}")
    return tuple(parts)


def _neg_sym(K: KGenerator) -> np.ndarray:
    M = K.kms_matrix()
    return -0.5 * (M + M.conj().T)


def recursion_trace(H: Hamiltonian, beta: float, b: int = 1, n_ops: int = 20, seed: int = 0,
                    combinatorics_length: int = 30) -> dict:
    """Amortised recursion step on a small window, next to the partition combinatorics at full length.

    The balanced partitions of an interval of ``combinatorics_length`` sites
    are built and checked exactly. The numerical step uses the window [1, n]
    of ``H`` with middles of width b: the PSD order sum_i(-K_Bi) <= s(-K_R) is
    verified, and for random O the variance inequality
    Var_R(O) <= (1 + 2/s) max(1/lambda_AB, 1/lambda_BC) <-K_R O, O> is
    reported with its slack.
    """
    combo = balanced_partitions(Region.interval(1, combinatorics_length), b, min_length=combinatorics_length)
    st = gibbs(H, beta)
    R = Region.interval(1, H.n)
    parts = window_partitions(H.n, b)
    s = len(parts)
    KR = build_k(H, beta, R, st)
    MR = _neg_sym(KR)
    MB = sum(_neg_sym(build_k(H, beta, B, st)) for _, B, _ in parts)
    psd_min = float(np.linalg.eigvalsh(s * MR - MB).min())
    if psd_min < -1e-9 * max(1.0, np.abs(MR).max()):
        raise IdentityViolation("disjoint middles: sum_i(-K_Bi) <= s(-K_R)", f"min eigenvalue {psd_min:.3e}")
    gaps = []
    for A, B, C in parts:
        la = conditional_gap(build_k(H, beta, A | B, st)).gap
        lc = conditional_gap(build_k(H, beta, B | C, st)).gap
        gaps.append((la, lc))
    factor = (1 + 2 / s) * max(max(1 / la, 1 / lc) for la, lc in gaps)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_ops):
        O = random_operator(st.dim, rng, hermitian=True)
        var = full_variance(st, O)
        dir_form = float(-kms_inner(O, KR(O), st).real)
        rows.append({"variance": var, "bound": factor * dir_form, "slack": factor * dir_form - var})
    return {
        "combinatorics": {"length": combinatorics_length, "b": combo.b, "s": combo.s, "checks": combo.check()},
        "window": {"n": H.n, "b": b, "s": s, "beta": beta, "model": H.spec.model},
        "psd_min_eigenvalue": psd_min,
        "conditional_gaps": [{"AB": la, "BC": lc} for la, lc in gaps],
        "factor": factor,
        "rows": rows,
        "min_slack": min(r["slack"] for r in rows),
    }
