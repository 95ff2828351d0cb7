"""Spectral conditional expectations and their finite-time and truncated versions.

Every map here is stored in the KMS-symmetrised Heisenberg frame of a base
state rho, as a low-rank product ``left @ right^dag`` of D^2 x k factors.
For the exact expectation both factors equal an orthonormal basis of the
image, so ``E_R`` is literally ``Q Q^dag``. Working with factors keeps
n = 6 chains (D^2 = 4096) affordable whenever the images are small.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .algebra import (
    GibbsState,
    IdentityViolation,
    SuperOp,
    gibbs,
    kms_inner,
    kms_norm,
    spectral_projector_zero,
    unvec,
    vec,
)
from .chain import Hamiltonian, Region, as_region, pauli_strings, restrict, single_site_paulis
from .curves import DecayCurve
from .kgen import KGenerator, build_k, conditional_gap

Route = Literal["basis", "spectral", "finite-time", "truncated"]

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class CondExpectation:
    """A Heisenberg map in the rho-symmetrised frame, as left @ right^dag."""

    region: Region
    state: GibbsState = field(repr=False)
    route: Route
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    truncation: Region | None = None
    flags: tuple[str, ...] = ()
    time: float | None = None

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    @property
    def D(self) -> int:
        return self.state.dim

    def matrix(self) -> np.ndarray:
        """Dense symmetrised matrix (D^2 x D^2)."""
        return self.left @ self.right.conj().T

    def superop(self) -> SuperOp:
        return SuperOp(self.matrix(), "kms", "heisenberg", self.state)

    def apply_sym(self, v: np.ndarray) -> np.ndarray:
        return self.left @ (self.right.conj().T @ v)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        q, iq = self.state.qrt, self.state.iqrt
        out = self.apply_sym(vec(q @ X @ q))
        return iq @ unvec(out, self.D) @ iq

    def then(self, other: "CondExpectation") -> "CondExpectation":
        """The composition self o other (other acts first)."""
        _same_frame(self, other)
        mid = self.right.conj().T @ other.left
        return CondExpectation(
            self.region | other.region, self.state, self.route, self.left @ mid, other.right,
            flags=tuple(sorted(set(self.flags) | set(other.flags))),
        )


def _same_frame(a: CondExpectation, b: CondExpectation) -> None:
    if a.state is not b.state and not np.allclose(a.state.rho, b.state.rho, atol=1e-13):
        raise ValueError("maps are symmetrised with respect to different states")


def _lowrank_norm(lefts: list[np.ndarray], rights: list[np.ndarray], signs: list[float]) -> float:
    """Spectral norm of sum_i s_i L_i R_i^dag via two thin QR factorisations."""
    L = np.hstack([s * l for s, l in zip(signs, lefts)])
    R = np.hstack(rights)
    if L.shape[1] == 0:
        return 0.0
    if L.shape[1] >= L.shape[0]:
        M = L @ R.conj().T
        return float(np.linalg.norm(M, 2)) if M.any() else 0.0
    _, rl = np.linalg.qr(L)
    _, rr = np.linalg.qr(R)
    core = rl @ rr.conj().T
    return float(np.linalg.norm(core, 2)) if core.any() else 0.0


def distance(a: CondExpectation, b: CondExpectation) -> float:
    """||a - b||_rho, the KMS-induced norm of the difference."""
    _same_frame(a, b)
    return _lowrank_norm([a.left, b.left], [a.right, b.right], [1.0, -1.0])


def induced(a: CondExpectation) -> float:
    return _lowrank_norm([a.left], [a.right], [1.0])


# ---------------------------------------------------------------------------
# basis route


def _sym_columns(state: GibbsState, ops: list[np.ndarray]) -> np.ndarray:
    """Columns vec(rho^{1/4} P rho^{1/4}) for each operator P."""
    q = state.qrt
    stack = np.asarray(ops, dtype=complex)
    sym = q[None] @ stack @ q[None]
    # column-stacked vectorisation of each slice
    return sym.transpose(0, 2, 1).reshape(len(ops), -1).T


def _ordered_strings(comp: Region, n: int, q: int, lead: Region | None) -> tuple[list[np.ndarray], int]:
    """Pauli strings on ``comp``; those supported inside ``lead`` come first."""
    strings = pauli_strings(comp, n, q)
    if lead is None:
        return [m for _, m in strings], len(strings)
    lead_set = set(lead.sites)
    comp_sites = comp.sites
    ident = "I" * q
    first, rest = [], []
    for label, m in strings:
        blocks = label.split(".") if label else []
        inside = all(b == ident or s in lead_set for s, b in zip(comp_sites, blocks))
        (first if inside else rest).append(m)
    return first + rest, len(first)


def kms_basis(state: GibbsState, comp: Region, n: int, q: int = 1, lead: Region | None = None):
    """KMS-orthonormal basis (symmetrised columns) of the operators on ``comp``.

    Gram-Schmidt order is identity first, then weight, then label; with
    ``lead`` the strings supported inside it are orthonormalised before the
    rest, so the leading columns span that smaller algebra exactly.
    Returns ``(Q, n_lead, cond)``.
    """
    comp = as_region(comp)
    if len(comp) == 0:
        ops, k0 = [np.eye(state.dim, dtype=complex)], 1
    else:
        ops, k0 = _ordered_strings(comp, n, q, lead)
    cols = _sym_columns(state, ops)
    Q, R = np.linalg.qr(cols)
    d = np.diag(R)
    ph = d / np.where(np.abs(d) > 0, np.abs(d), 1.0)
    Q = Q * ph[None, :]
    sv = np.linalg.svd(R, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    return Q, k0, cond


def _basis_route(H: Hamiltonian, state: GibbsState, R: Region) -> CondExpectation:
    comp = R.complement(H.n)
    Q, _, cond = kms_basis(state, comp, H.n, H.q)
    flags = ("DEGENERATE",) if cond > COND_LIMIT else ()
    return CondExpectation(R, state, "basis", Q, Q, flags=flags)


def _spectral_route(H: Hamiltonian, state: GibbsState, R: Region, K: KGenerator | None) -> CondExpectation:
    K = K or build_k(H, state.beta, R, state)
    zp = spectral_projector_zero(SuperOp(K.kms_matrix(), "kms", "heisenberg", state))
    w, V = np.linalg.eigh(zp.projector.matrix)
    Q = V[:, w > 0.5]
    return CondExpectation(R, state, "spectral", Q, Q, flags=zp.flags)


def cond_expectation(
    H: Hamiltonian, R, state: GibbsState | None = None, beta: float | None = None,
    route: Route = "basis", K: KGenerator | None = None,
) -> CondExpectation:
    """E_R: the KMS-orthogonal projection onto operators trivial on R."""
    R = as_region(R)
    st = state if state is not None else gibbs(H, float(beta))
    if any(i < 1 or i > H.n for i in R):
        raise ValueError(f"region {R!r} not inside 1..{H.n}")
    if route == "basis":
        return _basis_route(H, st, R)
    if route == "spectral":
        if len(R) == 0:
            return _basis_route(H, st, R)
        return _spectral_route(H, st, R, K)
    raise ValueError(f"unknown route {route!r}")


class ExpectationFamily:
    """Region-indexed cache of exact conditional expectations for one state."""

    def __init__(self, H: Hamiltonian, state: GibbsState):
        self.H, self.state = H, state
        self._cache: dict[tuple[int, ...], CondExpectation] = {}

    def __getitem__(self, R) -> CondExpectation:
        key = as_region(R).sites
        if key not in self._cache:
            self._cache[key] = cond_expectation(self.H, key, self.state)
        return self._cache[key]


def complement_basis(H: Hamiltonian, state: GibbsState, X, Y) -> np.ndarray:
    """Orthonormal basis of image(E_X) minus image(E_Y), for X inside Y."""
    X, Y = as_region(X), as_region(Y)
    if not X.issubset(Y):
        raise ValueError("need X inside Y")
    Q, k0, _ = kms_basis(state, X.complement(H.n), H.n, H.q, lead=Y.complement(H.n))
    return Q[:, k0:]


# ---------------------------------------------------------------------------
# audits


def check(E: CondExpectation, tol: float = 1e-9) -> dict[str, float]:
    """Projectivity, unitality, detailed balance and spectrum; raises on failure."""
    res = {
        "projective": distance(E.then(E), E),
        "unital": float(np.linalg.norm(E(np.eye(E.D)) - np.eye(E.D)) / np.sqrt(E.D)),
        "kms_symmetric": _lowrank_norm([E.left, E.right], [E.right, E.left], [1.0, -1.0]),
    }
    ev = np.linalg.eigvals(E.right.conj().T @ E.left)
    res["spectrum_low"] = float(max(0.0, -ev.real.min(initial=0.0)))
    res["spectrum_high"] = float(max(0.0, ev.real.max(initial=0.0) - 1.0))
    res["spectrum_imag"] = float(np.abs(ev.imag).max(initial=0.0))
    names = {
        "projective": "projectivity E^2 = E",
        "unital": "unitality E[I] = I",
        "kms_symmetric": "KMS detailed balance of E",
        "spectrum_low": "spectrum of E inside [0, 1]",
        "spectrum_high": "spectrum of E inside [0, 1]",
        "spectrum_imag": "spectrum of E inside [0, 1]",
    }
    for key, val in res.items():
        if val > tol:
            raise IdentityViolation(names[key], f"{key} residual {val:.3e} on region {E.region!r}")
    return res


def consistency_residual(E1: CondExpectation, E2: CondExpectation) -> float:
    """||E_{R1} E_{R2} - E_{R2}||_rho; zero when R1 lies inside R2."""
    return distance(E1.then(E2), E2)


def in_image(E: CondExpectation, X: np.ndarray) -> float:
    """Relative KMS distance between X and E[X]."""
    nx = kms_norm(X, E.state)
    return kms_norm(E(X) - X, E.state) / nx if nx > 0 else 0.0


# ---------------------------------------------------------------------------
# finite time


def _sym_eig(K: KGenerator) -> tuple[np.ndarray, np.ndarray]:
    M = K.kms_matrix()
    return np.linalg.eigh(0.5 * (M + M.conj().T))


def finite_time(K: KGenerator, t: float) -> CondExpectation:
    """e^{t K_R} through the Hermitian eigendecomposition of sym(K_R)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    w, V = _sym_eig(K)
    return CondExpectation(K.region, K.state, "finite-time", V * np.exp(t * np.minimum(w, 0.0))[None, :], V, time=t)


def finite_time_error(K: KGenerator, t: float, check_bound: bool = True) -> float:
    """||E_R - e^{tK_R}||_rho, read off the spectrum of sym(K_R).

    The difference is diagonal in the same eigenbasis, so its norm is the
    largest e^{-lambda t} over the nonzero part; the decay bound with the
    conditional gap is checked with a relative slack of 1e-6.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    w = np.linalg.eigvalsh(-0.5 * (K.kms_matrix() + K.kms_matrix().conj().T))
    info = conditional_gap(K)
    thr = 1e-9 * max(np.abs(w).max(), 1e-300)
    nonzero = w[np.abs(w) >= thr]
    err = float(np.exp(-t * nonzero.min())) if nonzero.size else 0.0
    if check_bound and err > np.exp(-info.gap * t) * (1 + 1e-6):
        raise IdentityViolation("finite-time truncation of conditional expectations", f"{err} > e^(-{info.gap} t)")
    return err


# ---------------------------------------------------------------------------
# truncation


def truncated_expectation(H: Hamiltonian, A, R, state: GibbsState | None = None, beta: float | None = None) -> CondExpectation:
    """Infinite-time limit of e^{t K_A^{(R)}}, written in the rho frame.

    The truncated generator is detailed balanced for sigma ~ e^{-beta H^R},
    so its limit is the sigma-orthogonal projection onto operators trivial
    on A. Moving it into the rho frame gives T P_sigma T^{-1} with
    T[X] = G X G^dag and G = rho^{1/4} sigma^{-1/4}.
    """
    A, R = as_region(A), as_region(R)
    if not A.issubset(R):
        raise ValueError("A must lie inside R")
    st = state if state is not None else gibbs(H, float(beta))
    sigma = gibbs(restrict(H, R).matrix, st.beta)
    Qs, _, cond = kms_basis(sigma, A.complement(H.n), H.n, H.q)
    G = st.qrt @ sigma.iqrt
    Gi = sigma.qrt @ st.iqrt
    D = st.dim
    mats = Qs.T.reshape(-1, D, D).transpose(0, 2, 1)
    left = (G[None] @ mats @ G.conj().T[None]).transpose(0, 2, 1).reshape(len(mats), -1).T
    right = (Gi.conj().T[None] @ mats @ Gi[None]).transpose(0, 2, 1).reshape(len(mats), -1).T
    flags = ("DEGENERATE",) if cond > COND_LIMIT else ()
    return CondExpectation(A, st, "truncated", left, right, truncation=R, flags=flags)


def truncation_error_scan(H: Hamiltonian, beta: float, A, buffers, state: GibbsState | None = None, seed=None) -> DecayCurve:
    """||E_A - E_A^{(R)}||_rho for R the l-neighbourhood of A, per buffer l."""
    A = as_region(A)
    st = state if state is not None else gibbs(H, beta)
    exact = cond_expectation(H, A, st)
    vals = []
    for ell in buffers:
        R = A.neighbourhood(ell, H.n)
        vals.append(distance(exact, truncated_expectation(H, A, R, st)))
    curve = DecayCurve.build(
        "e_truncation", list(buffers), vals, model=H.spec.model, beta=beta, seed=seed,
        meta={"region": list(A.sites)},
    )
    fit = curve.fit_factorial()
    if fit is not None:
        curve.meta["fit_l_log_l"] = fit.as_dict()
    return curve


# ---------------------------------------------------------------------------
# variances


def conditional_variance(E: CondExpectation, X: np.ndarray) -> float:
    return kms_norm(X - E(X), E.state) ** 2


def conditional_covariance(E: CondExpectation, X: np.ndarray, Y: np.ndarray) -> complex:
    """<(1-E)X, (1-E)Y>_rho."""
    return kms_inner(X - E(X), Y - E(Y), E.state)


def full_variance(state: GibbsState, X: np.ndarray) -> float:
    """||X - Tr[rho X] I||_rho^2, the unconditional variance."""
    return kms_norm(X - state.expect(X) * np.eye(state.dim), state) ** 2


# ---------------------------------------------------------------------------
# Lieb-Robinson measurement


def _sym_action(K: KGenerator):
    """v -> vec(rho^{1/4} K[rho^{-1/4} X rho^{-1/4}] rho^{1/4}), Hermitian for detailed-balanced K."""
    D = K.state.dim
    q, iq = K.state.qrt, K.state.iqrt

    def mv(v):
        X = unvec(v, D)
        return vec(q @ K(iq @ X @ iq) @ q)

    return mv


def lanczos_expm(mv, v: np.ndarray, t: float, tol: float = 1e-12, m_max: int = 60, spread: float = 30.0) -> np.ndarray:
    """e^{tM} v for Hermitian M given by its action, with full reorthogonalisation.

    The Krylov error estimate is only trustworthy while t times the Ritz
    spread stays moderate, so the step is halved whenever it exceeds
    ``spread`` or the space fills up without converging.
    """
    nv = np.linalg.norm(v)
    if nv == 0 or t == 0:
        return np.array(v, dtype=complex)
    V = np.zeros((v.size, m_max + 1), dtype=complex)
    V[:, 0] = v / nv
    alpha, beta = [], []
    for j in range(m_max):
        w = mv(V[:, j])
        a = np.vdot(V[:, j], w).real
        w = w - a * V[:, j] - (beta[-1] * V[:, j - 1] if j else 0)
        w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        alpha.append(a)
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        ev, U = np.linalg.eigh(T)
        if t * np.ptp(np.append(ev, 0.0)) > spread:
            break
        y = U @ (np.exp(t * ev) * U[0].conj())
        if b < 1e-14 * max(1.0, np.abs(ev).max()) or b * abs(y[-1]) < tol:
            return nv * (V[:, : j + 1] @ y)
        beta.append(b)
        V[:, j + 1] = w / b
    half = lanczos_expm(mv, v, t / 2, tol, m_max, spread)
    return lanczos_expm(mv, half, t / 2, tol, m_max, spread)


def evolve_k(K: KGenerator, X: np.ndarray, times) -> list[np.ndarray]:
    """e^{t K}[X] for each t, by a Lanczos exponential in the symmetrised frame."""
    mv = _sym_action(K)
    st = K.state
    v0 = vec(st.qrt @ X @ st.qrt)
    ts = [float(t) for t in times]
    if any(t < 0 for t in ts):
        raise ValueError("times must be non-negative")
    got, v, now = {}, v0, 0.0
    # step through the sorted times so each interval is evolved once
    for t in sorted(set(ts)):
        v = lanczos_expm(mv, v, t - now)
        now = t
        got[t] = st.iqrt @ unvec(v, st.dim) @ st.iqrt
    return [got[t] for t in ts]


@dataclass(frozen=True)
class LRFit:
    a: float
    c: float
    v: float
    residual: float
    holds: bool


def _fit_lr(grid: list[tuple[float, int, float]], floor: float = 1e-13) -> LRFit | None:
    """log lhs = log a - c |B| + c v t, by least squares over the nonzero cells."""
    rows = [(t, b, y) for t, b, y in grid if y > floor]
    if len(rows) < 3:
        return None
    X = np.array([[1.0, -b, t] for t, b, _ in rows])
    ly = np.log([y for *_, y in rows])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    if np.linalg.matrix_rank(X) < 3 or coef[1] <= 0:
        return None
    loga, c, cv = coef
    pred = X @ coef
    holds = bool(np.all(ly <= pred + np.log(1.5)))
    return LRFit(float(np.exp(loga)), float(c), float(cv / c), float(np.sqrt(np.mean((ly - pred) ** 2))), holds)


def lr_speed(H: Hamiltonian, beta: float, a_len: int, b_lens, times, state: GibbsState | None = None, seed=None,
             edge: str = "near") -> dict:
    """Measured ||(E_{AB,t} - E_{ABC,t}) E_{BC}[O]||_rho over a (t, |B|) grid.

    A = [1, a_len], B follows with the given length, C is the rest of the
    chain. The observables are the KMS-normalised single-site Paulis on one
    edge of A: ``near`` (facing B, where the signal is largest) or ``far``
    (site 1). The reported value is the maximum over them.
    """
    st = state if state is not None else gibbs(H, beta)
    A = Region.interval(1, a_len)
    if edge not in ("near", "far"):
        raise ValueError(f"edge must be 'near' or 'far', not {edge!r}")
    edge = A.last if edge == "near" else A.first
    obs = [P / kms_norm(P, st) for _, _, P in single_site_paulis(H.n, H.q, [edge])]
    curves, grid = {}, []
    for b in b_lens:
        B = Region.interval(a_len + 1, a_len + b)
        if B.last >= H.n:
            raise ValueError("C would be empty")
        C = Region.interval(B.last + 1, H.n)
        E_bc = cond_expectation(H, B | C, st)
        K_ab = build_k(H, beta, A | B, st)
        K_abc = build_k(H, beta, A | B | C, st)
        vals = np.zeros(len(times))
        for O in obs:
            Y = E_bc(O)
            for k, (x1, x2) in enumerate(zip(evolve_k(K_ab, Y, times), evolve_k(K_abc, Y, times))):
                vals[k] = max(vals[k], kms_norm(x1 - x2, st))
        vals = [float(v) for v in vals]
        grid.extend((float(t), int(b), v) for t, v in zip(times, vals))
        curves[int(b)] = vals
    fit = _fit_lr(grid)
    return {
        "a_len": a_len,
        "times": [float(t) for t in times],
        "b_lens": [int(b) for b in b_lens],
        "lhs": curves,
        "observables": f"single-site Paulis on site {edge}",
        "fit": None if fit is None else fit.__dict__,
        "model": H.spec.model,
        "beta": beta,
        "seed": seed,
    }
