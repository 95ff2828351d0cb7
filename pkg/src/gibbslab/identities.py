"""The exact-identity suite: every algebraic identity checked on one (model, n, beta, weight) cell.

Each row is (model, seed, n, beta, sigma, weight, identity, residual,
tolerance, passed); nothing raises, so one run reports every failure.
"""
from __future__ import annotations

import numpy as np

from . import kgen, lindblad
from .adiabatic import _row_major, discriminant_matrix
from .algebra import gibbs, random_operator
from .chain import Hamiltonian, Region
from .condexp import check, cond_expectation, consistency_residual, distance

DEFAULTS = {
    "fixed_point": 1e-8,
    "detailed_balance": 1e-8,
    "dirichlet": 1e-10,
    "routes": 1e-8,
    "projective": 1e-9,
    "discriminant": 1e-8,
}


def _regions(n: int) -> list[Region]:
    regs = [Region.of([1]), Region.interval(1, n)]
    if n >= 3:
        regs.append(Region.interval(2, n - 1))
    if n >= 2:
        regs.append(Region.interval(n - 1, n))
    seen, out = set(), []
    for r in regs:
        if r.sites not in seen:
            seen.add(r.sites)
            out.append(r)
    return out


def identity_rows(H: Hamiltonian, beta: float, weight: str, tol: dict | None = None,
                  rng: np.random.Generator | None = None, n_ops: int = 3) -> list[tuple]:
    tol = {**DEFAULTS, **(tol or {})}
    rng = rng or np.random.default_rng(0)
    spec = lindblad.LindbladSpec(beta, None, weight)
    st = gibbs(H, beta)
    L = lindblad.build_lindbladian(H, spec, st)
    head = (H.spec.model, H.spec.seed, H.n, beta, spec.width, weight)
    rows = []

    def add(name, value, t):
        rows.append((*head, name, float(value), t, bool(value < t)))

    add("Gibbs state is a fixed point (trace norm)", lindblad.fixed_point_residual(L), tol["fixed_point"])
    add("adjoint generator annihilates the identity", lindblad.trace_preservation_residual(L), tol["fixed_point"])
    add("KMS detailed balance of the Lindbladian", lindblad.db_residual(L), tol["detailed_balance"])

    full = Region.interval(1, H.n)
    K = kgen.build_k(H, beta, full, st)
    add("KMS detailed balance of K", kgen.db_residual(K), tol["detailed_balance"])
    worst = 0.0
    for _ in range(n_ops):
        X = random_operator(st.dim, rng)
        lhs, rhs = kgen.dirichlet_k(K, X, tol=np.inf)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    add("Dirichlet form of K is a sum of squared commutator norms", worst, tol["dirichlet"])

    exact = {}
    for R in _regions(H.n):
        KR = kgen.build_k(H, beta, R, st)
        dim = kgen.kernel_dim(KR)
        want = kgen.expected_kernel_dim(H.n, H.q, len(R))
        add(f"kernel of K_R is the operators trivial on R, R={list(R.sites)}", abs(dim - want), 0.5)
        Eb = cond_expectation(H, R, st, route="basis")
        Es = cond_expectation(H, R, st, route="spectral", K=KR)
        add(f"basis and spectral conditional expectations agree, R={list(R.sites)}", distance(Eb, Es), tol["routes"])
        res = check(Eb, tol=np.inf)
        add(f"projectivity E^2 = E, R={list(R.sites)}", res["projective"], tol["projective"])
        exact[R.sites] = Eb
    small, big = exact[Region.of([1]).sites], exact[full.sites]
    add("consistency E_R1 E_R2 = E_R2 for R1 inside R2", consistency_residual(small, big), tol["projective"])

    Hd = discriminant_matrix(L)
    Hd = 0.5 * (Hd + Hd.conj().T)
    w, V = np.linalg.eigh(Hd)
    root = st.sqrt.reshape(-1)
    add("discriminant ground energy is zero", abs(w[0]), tol["discriminant"])
    add("discriminant ground state is the purified Gibbs state", 1 - abs(np.vdot(V[:, 0], root)), tol["discriminant"])
    lgap = lindblad.gap(L).gap
    add("discriminant gap equals the Lindbladian gap", abs((w[1] - w[0]) - lgap), tol["discriminant"])
    Lt = lindblad.build_lindbladian(H, spec, st, keep_terms=True)
    Wb = Lt.basis_change
    term_min = min(np.linalg.eigvalsh(0.5 * (T + T.conj().T)).min()
                   for T in (_row_major(Wb @ t @ Wb.conj().T, st) for t in Lt.terms))
    add("discriminant is frustration-free (every jump term PSD)", max(0.0, -term_min), tol["discriminant"])
    return rows
