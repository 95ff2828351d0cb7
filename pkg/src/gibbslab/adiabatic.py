"""Parent Hamiltonians of the Lindbladian and quasi-adiabatic preparation of |sqrt(rho)>.

The discriminant is the Lindbladian conjugated by rho^{1/4} and written
row-major, so that X Y Z maps to (X (x) Z^T) acting on vec(Y). Its ground
state is the purified Gibbs state and its spectrum is that of -sym(L).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import eigsh

from .algebra import GibbsState, IdentityViolation, gibbs, herm_expm
from .chain import ChainError, Hamiltonian, Region, restrict, single_site_paulis
from .curves import DecayCurve
from .lindblad import LindbladSpec, Lindbladian, build_lindbladian

TOL = 1e-9


class DegenerateError(RuntimeError):
    """The ground state of the parent Hamiltonian is not unique along the path."""


def _to_row_major(M: np.ndarray, D: int) -> np.ndarray:
    """Re-index a column-stacked superoperator for row-stacked vectors."""
    idx = np.arange(D * D).reshape(D, D).T.reshape(-1)
    return M[np.ix_(idx, idx)]


def _row_major(M: np.ndarray, state: GibbsState) -> np.ndarray:
    """-rho^{-1/4} M[rho^{1/4} . rho^{1/4}] rho^{-1/4}, M column-stacked Schrödinger, as a row-major matrix."""
    q, iq = state.qrt, state.iqrt
    conj = np.kron(iq.T, iq) @ M @ np.kron(q.T, q)
    return -_to_row_major(conj, state.dim)


def discriminant_matrix(L: Lindbladian) -> np.ndarray:
    """Conjugate in the energy eigenbasis, where rho^{1/4} is diagonal, then rotate once."""
    r = np.exp(0.25 * L.state.log_probs)
    kp = np.kron(r, r)
    conj = L.eig_matrix * (kp[None, :] / kp[:, None])
    W = L.basis_change
    return -_to_row_major(W @ conj @ W.conj().T, L.D)


def purified_gibbs(H: Hamiltonian | np.ndarray, beta: float) -> np.ndarray:
    """sum_i e^{-beta E_i/2} |psi_i> (x) |psi_i^*> / sqrt(Z), i.e. the row-major vec of sqrt(rho)."""
    st = gibbs(H, beta)
    return st.sqrt.reshape(-1).astype(complex)


def reduced_state(psi: np.ndarray, D: int) -> np.ndarray:
    """Tr_2 |psi><psi| for a vector on C^D (x) C^D."""
    V = psi.reshape(D, D)
    return V @ V.conj().T


@dataclass(frozen=True, eq=False)
class Discriminant:
    matrix: np.ndarray = field(repr=False)
    terms: tuple = field(repr=False)
    beta: float
    spec: LindbladSpec
    state: GibbsState = field(repr=False)
    energies: np.ndarray = field(repr=False)
    checks: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def discriminant(H: Hamiltonian, spec: LindbladSpec, per_jump: bool = True, tol: float = TOL) -> Discriminant:
    """Build the parent Hamiltonian and verify it is a frustration-free Hermitian with ground state |sqrt(rho)>."""
    st = gibbs(H, spec.beta)
    L = build_lindbladian(H, spec, st, keep_terms=per_jump)
    Hd = discriminant_matrix(L)
    herm = float(np.abs(Hd - Hd.conj().T).max())
    Hd = 0.5 * (Hd + Hd.conj().T)
    w, V = np.linalg.eigh(Hd)
    terms = ()
    term_min = 0.0
    if per_jump:
        Wb = L.basis_change
        terms = tuple(_row_major(Wb @ t @ Wb.conj().T, st) for t in L.terms)
        term_min = min(float(np.linalg.eigvalsh(0.5 * (t + t.conj().T)).min()) for t in terms)
    root = st.sqrt.reshape(-1)
    fid = float(abs(np.vdot(V[:, 0], root)))
    lgap = float(np.sort(L.spectrum())[1])
    checks = {
        "hermitian": herm,
        "psd": float(-w[0]),
        "per_jump_psd": float(-term_min),
        "ground_energy": float(abs(w[0])),
        "ground_fidelity_defect": 1.0 - fid,
        "gap_vs_lindbladian": abs((w[1] - w[0]) - lgap),
    }
    names = {
        "hermitian": ("discriminant is Hermitian", checks["hermitian"] > tol),
        "psd": ("discriminant is positive semidefinite", checks["psd"] > tol),
        "per_jump_psd": ("every jump term is PSD (frustration-free)", checks["per_jump_psd"] > tol),
        "ground_energy": ("ground energy of the discriminant is zero", checks["ground_energy"] > tol),
        "ground_fidelity_defect": ("ground state is the purified Gibbs state", checks["ground_fidelity_defect"] > tol),
        "gap_vs_lindbladian": ("discriminant gap equals the Lindbladian gap", checks["gap_vs_lindbladian"] > 1e-8),
    }
    for key, (name, bad) in names.items():
        if bad:
            raise IdentityViolation(name, f"{key} = {checks[key]:.3e}")
    return Discriminant(Hd, terms, spec.beta, spec, st, w, checks)


# ---------------------------------------------------------------------------
# quasi-adiabatic filter


def _filter_sum(K: int) -> float:
    return 1.0 + sum(1.0 / (k * math.log(k) ** 2) for k in range(2, K + 1))


@dataclass(frozen=True, eq=False)
class QuasiAdiabaticFilter:
    """w(t) = c prod_k (sin(a_k t)/(a_k t))^2 with Fourier support inside [-gap, gap].

    a_1 = a and a_k = a/(k log^2 k) for k > 1; the transform of each factor
    is a triangle of half-width 2 a_k, so the product is supported on
    |omega| <= 2 a sum_k (a_k / a), and a is chosen to put that edge at ``gap``.
    """

    gap: float
    order: int = 200
    tail: float = 1e-8
    a: float = field(init=False)
    c: float = field(init=False)
    times: np.ndarray = field(init=False, repr=False)
    values: np.ndarray = field(init=False, repr=False)
    step: float = field(init=False)

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("the filter needs a positive gap")
        a = self.gap / (2 * _filter_sum(self.order))
        object.__setattr__(self, "a", a)
        # resolve the band edge four times over; trapezoid sums are then exact for band-limited integrands
        h = math.pi / (4 * self.gap)
        T = 20.0 / a
        t = np.arange(0.0, T + h, h)
        u = self._unnormalised(t)
        while True:
            # mass gained by doubling the window stands in for the remaining tail
            t2 = np.arange(t[-1] + h, 2 * T + h, h)
            u2 = self._unnormalised(t2)
            total = h * (2 * u.sum() - u[0])
            t, u = np.concatenate([t, t2]), np.concatenate([u, u2])
            if 2 * h * np.abs(u2).sum() < self.tail * total:
                break
            T *= 2
        t = np.concatenate([-t[:0:-1], t])
        u = np.concatenate([u[:0:-1], u])
        c = 1.0 / (h * u.sum())
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", c * u)
        object.__setattr__(self, "step", h)

    @property
    def rates(self) -> np.ndarray:
        k = np.arange(2, self.order + 1)
        return np.concatenate([[self.a], self.a / (k * np.log(k) ** 2)])

    def _unnormalised(self, t: np.ndarray) -> np.ndarray:
        out = np.ones_like(t)
        for ak in self.rates:
            out *= np.sinc(ak * t / np.pi) ** 2
        return out

    def __call__(self, t) -> np.ndarray:
        return self.c * self._unnormalised(np.asarray(t, dtype=float))

    def l1(self) -> float:
        return float(self.step * np.abs(self.values).sum())

    def transform(self, omega) -> np.ndarray:
        """int w(t) cos(omega t) dt (w is even), by the trapezoid rule on the stored grid."""
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.zeros(om.shape)
        inside = np.abs(om) < self.gap
        if inside.any():
            out[inside] = self.step * (np.cos(np.outer(om[inside], self.times)) @ self.values)
        return out

    def spectral_leakage(self) -> float:
        """Fraction of the discrete Fourier mass of w at frequencies above the gap."""
        F = np.abs(np.fft.fft(np.fft.ifftshift(self.values)))
        omega = 2 * np.pi * np.fft.fftfreq(len(self.values), d=self.step)
        return float(F[np.abs(omega) > self.gap].sum() / F.sum())

    def kernel(self, delta: np.ndarray) -> np.ndarray:
        """int w(t) (e^{i t delta} - 1)/(i delta) dt; zero at delta = 0 since w is even."""
        delta = np.asarray(delta, dtype=float)
        out = np.zeros(delta.shape, dtype=complex)
        nz = np.abs(delta) > 1e-14
        flat = delta[nz]
        # evaluate once per distinct difference
        uniq, inv = np.unique(np.round(flat, 13), return_inverse=True)
        wt = self.transform(uniq)
        out[nz] = ((wt - 1.0) / (1j * uniq))[inv]
        return out


# ---------------------------------------------------------------------------
# path


@dataclass(frozen=True)
class Schedule:
    beta_min: float = 1e-3
    beta_target: float = 1.0
    steps: int = 400

    def beta(self, s: float) -> float:
        return self.beta_min + s * (self.beta_target - self.beta_min)

    @property
    def speed(self) -> float:
        return self.beta_target - self.beta_min


def _parent(H: Hamiltonian, beta: float, weight: str) -> np.ndarray:
    spec = LindbladSpec(beta, None, weight)
    L = build_lindbladian(H, spec, gibbs(H, beta))
    M = discriminant_matrix(L)
    return 0.5 * (M + M.conj().T)


def parent_derivative(H: Hamiltonian, beta: float, weight: str, delta: float = 1e-4) -> np.ndarray:
    """d/dbeta of the discriminant: central differences at delta and delta/2, Richardson-combined."""
    if beta - delta <= 0:
        raise ValueError("the finite-difference stencil leaves beta > 0")

    def central(h):
        return (_parent(H, beta + h, weight) - _parent(H, beta - h, weight)) / (2 * h)

    return (4 * central(delta / 2) - central(delta)) / 3


def quasi_adiabatic_W(Hs: np.ndarray, dHs: np.ndarray, filt: QuasiAdiabaticFilter, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """W = int w(t) int_0^t e^{iuH} dH e^{-iuH} du dt in the eigenbasis of H; returns (W, Hermiticity residual)."""
    E, U = np.linalg.eigh(Hs)
    scale = max(1.0, abs(E).max())
    if E.size > 1 and E[1] - E[0] < tol * scale:
        raise DegenerateError(f"ground state degenerate: splitting {E[1] - E[0]:.3e}")
    dE = E[:, None] - E[None, :]
    Wm = (U.conj().T @ dHs @ U) * filt.kernel(dE)
    W = U @ Wm @ U.conj().T
    resid = float(np.abs(W - W.conj().T).max())
    return 0.5 * (W + W.conj().T), resid


def gap_prescan(H: Hamiltonian, schedule: Schedule, weight: str = "gaussian", points: int = 21) -> float:
    gaps = []
    for s in np.linspace(0.0, 1.0, points):
        w = np.linalg.eigvalsh(_parent(H, schedule.beta(s), weight))
        gaps.append(w[1] - w[0])
    return float(min(gaps))


@dataclass(frozen=True)
class AdiabaticResult:
    steps: int
    fidelity: float
    trace: tuple[float, ...]
    energies: tuple[float, ...]
    unitarity: float
    hermiticity: float
    filter_gap: float
    leakage: float
    passed: bool


def adiabatic_run(H: Hamiltonian, schedule: Schedule, weight: str = "gaussian", threshold: float = 0.99,
                  filt: QuasiAdiabaticFilter | None = None, prescan_points: int = 21) -> AdiabaticResult:
    """Evolve the EPR-like ground state at beta_min along dV/ds = i W V with midpoint exponentials."""
    if filt is None:
        filt = QuasiAdiabaticFilter(0.9 * gap_prescan(H, schedule, weight, prescan_points))
    D = H.dim
    psi = purified_gibbs(H, schedule.beta_min)
    ds = 1.0 / schedule.steps
    trace, energies = [], []
    unitarity, herm = 0.0, 0.0
    for k in range(schedule.steps):
        s_mid = (k + 0.5) * ds
        b = schedule.beta(s_mid)
        Hs = _parent(H, b, weight)
        dHs = schedule.speed * parent_derivative(H, b, weight)
        W, r = quasi_adiabatic_W(Hs, dHs, filt)
        herm = max(herm, r)
        V = herm_expm(W, 1j * ds)
        unitarity = max(unitarity, float(np.abs(V.conj().T @ V - np.eye(D * D)).max()))
        psi = V @ psi
        s = (k + 1) * ds
        target = purified_gibbs(H, schedule.beta(s))
        trace.append(float(abs(np.vdot(target, psi))))
        Hnow = _parent(H, schedule.beta(s), weight) if k == schedule.steps - 1 else None
        if Hnow is not None:
            energies.append(float(np.vdot(psi, Hnow @ psi).real))
    fid = trace[-1] if trace else 1.0
    return AdiabaticResult(schedule.steps, fid, tuple(trace), tuple(energies), unitarity, herm,
                           filt.gap, filt.spectral_leakage(), fid >= threshold)


def spectral_flow(H: Hamiltonian, schedule: Schedule, weight: str = "gaussian") -> np.ndarray:
    """Oracle: the exact ground state of the parent Hamiltonian at beta_target, phase-aligned along the path."""
    psi = None
    for k in range(schedule.steps + 1):
        w, V = np.linalg.eigh(_parent(H, schedule.beta(k / schedule.steps), weight))
        g = V[:, 0]
        if psi is not None:
            g = g * np.exp(-1j * np.angle(np.vdot(psi, g)))
        psi = g
    return psi


# ---------------------------------------------------------------------------
# interaction decay of the parent Hamiltonian


def _site_parent(H: Hamiltonian, spec: LindbladSpec, site: int, R: Region) -> np.ndarray:
    """Parent Hamiltonian of the jumps on ``site`` with the dynamics truncated to the bonds inside R."""
    Hr = restrict(H, R)
    labels = [(site, lab) for _, lab, _ in single_site_paulis(H.n, H.q, [site])]
    sub = LindbladSpec(spec.beta, spec.sigma, spec.weight, spec.scheme, tuple(labels))
    L = build_lindbladian(Hr, sub, gibbs(Hr, spec.beta))
    return discriminant_matrix(L)


def _herm_norm(M: np.ndarray) -> float:
    M = 0.5 * (M + M.conj().T)
    if M.shape[0] <= 1024:
        return float(np.abs(np.linalg.eigvalsh(M)).max())
    return float(abs(eigsh(M, k=1, which="LM", return_eigenvectors=False, tol=1e-10)[0]))


def parent_decay_profile(H: Hamiltonian, spec: LindbladSpec, site: int = 1, radii=None, seed=None) -> DecayCurve:
    """Shell norms ||H^{a,r} - H^{a,r-1}|| of the site-a parent terms, r = 1, 2, ...

    H^{a,r} uses the Hamiltonian truncated to the ball of radius r around a;
    radius 0 keeps no bonds, so the first shell measures the nearest bonds.
    """
    if not 1 <= site <= H.n:
        raise ChainError(f"site {site} outside the chain")
    a = Region.of([site])
    rmax = max(site - 1, H.n - site)
    radii = list(range(1, rmax + 1)) if radii is None else list(radii)
    prev = _site_parent(H, spec, site, a)
    vals, r_prev = [], 0
    for r in radii:
        if r != r_prev + 1:
            prev = _site_parent(H, spec, site, a.neighbourhood(r - 1, H.n))
        cur = _site_parent(H, spec, site, a.neighbourhood(r, H.n))
        vals.append(_herm_norm(cur - prev))
        prev, r_prev = cur, r
    curve = DecayCurve.build("parent_shells", radii, vals, model=H.spec.model, beta=spec.beta, seed=seed,
                             meta={"site": site, "weight": spec.weight})
    curve.meta["fits"] = curve.fits()
    return curve
