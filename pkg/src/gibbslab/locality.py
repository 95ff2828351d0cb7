"""Real- and complex-time dynamics of local operators on a chain.

All evolutions are exact dense exponentials. Truncated dynamics replace H by
its restriction to a window around the operator's support.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .algebra import herm_expm, opnorm
from .chain import ChainError, Hamiltonian, Region, as_region, restrict, single_site_paulis
from .curves import DecayCurve

SUPPORT_TOL = 1e-10


def support(O: np.ndarray, n: int, q: int = 1, tol: float = SUPPORT_TOL) -> Region:
    """Sites where O fails to commute with some single-site Pauli."""
    scale = max(opnorm(O), 1e-300)
    sites = set()
    for site, _, P in single_site_paulis(n, q):
        if site in sites:
            continue
        if opnorm(P @ O - O @ P) > tol * scale:
            sites.add(site)
    return Region.of(sites)


def _interval_support(H: Hamiltonian, O: np.ndarray, supp) -> tuple[int, int] | None:
    R = support(O, H.n, H.q) if supp is None else as_region(supp)
    if len(R) == 0:
        return None
    if not R.is_interval:
        raise ChainError(f"operator support {R!r} is not an interval; pass the support explicitly")
    return R.first, R.last


def window(H: Hamiltonian, a: int, b: int, ell: int) -> Region:
    return Region.interval(max(1, a - ell), min(H.n, b + ell))


def conjugate(Hm: np.ndarray, O: np.ndarray, z: complex) -> np.ndarray:
    """e^{iHz} O e^{-iHz}."""
    if z == 0:
        return np.array(O, dtype=complex)
    return herm_expm(Hm, 1j * z) @ O @ herm_expm(Hm, -1j * z)


def evolve(H: Hamiltonian, O: np.ndarray, z: complex, radius: int | None = None, supp=None) -> np.ndarray:
    """O(z) under the full H, or O_l(z) under H restricted to [a-l, b+l]."""
    if radius is None:
        return conjugate(H.matrix, O, z)
    if radius < 0:
        return np.zeros_like(O, dtype=complex)
    ab = _interval_support(H, O, supp)
    if ab is None:
        return np.array(O, dtype=complex)
    return conjugate(restrict(H, window(H, *ab, radius)).matrix, O, z)


def real_time_bound(t: float, ell: int) -> float:
    return min(2.0, (4 * abs(t)) ** ell / factorial(ell))


def complex_shell_bound(z: complex, ell: int, width: int) -> float:
    r = abs(z)
    return (8 * r * np.exp(8 * r)) ** ell / factorial(ell) * np.exp(4 * r * width)


def complex_truncation_bound(z: complex, ell: int, width: int) -> float:
    r = abs(z)
    return complex_shell_bound(z, ell, width) * np.exp(8 * r * np.exp(8 * r))


def complex_norm_bound(z: complex, width: int) -> float:
    r = abs(z)
    return float(np.exp(8 * r * np.exp(8 * r)) * np.exp(4 * r * width))


@dataclass(frozen=True, eq=False)
class Shell:
    ell: int
    operator: np.ndarray = field(repr=False)
    norm: float
    bound: float
    tail: float
    tail_bound: float


@dataclass(frozen=True, eq=False)
class AnnulusDecomposition:
    support: tuple[int, int]
    z: complex
    shells: list[Shell]
    full: np.ndarray = field(repr=False)

    def completeness(self) -> float:
        return opnorm(sum(s.operator for s in self.shells) - self.full)

    def violations(self, rel: float = 1e-9) -> list[tuple[int, str]]:
        out = []
        for s in self.shells:
            if s.norm > s.bound * (1 + rel) + 1e-12:
                out.append((s.ell, "shell"))
            if s.tail > s.tail_bound * (1 + rel) + 1e-12:
                out.append((s.ell, "truncation"))
        return out

    def curve(self, model: str = "", beta: float = float("nan"), seed=None) -> DecayCurve:
        return DecayCurve.build(
            "annulus", [s.ell for s in self.shells], [s.norm for s in self.shells],
            [s.bound for s in self.shells], model=model, beta=beta, seed=seed,
            meta={"z": [float(np.real(self.z)), float(np.imag(self.z))]},
        )


def annulus(H: Hamiltonian, O: np.ndarray, z: complex, supp=None) -> AnnulusDecomposition:
    """Shells O_l(z) - O_{l-1}(z) with their norms and analytic bounds.

    Real z uses the Lieb-Robinson form min(2, (4|t|)^l / l!) for both shells
    and tails; complex z uses the 1D Araki-type constants.
    """
    ab = _interval_support(H, O, supp)
    if ab is None:
        raise ChainError("operator is proportional to the identity")
    a, b = ab
    full = evolve(H, O, z)
    lmax = max(a - 1, H.n - b)
    real = np.imag(z) == 0
    shells, prev = [], np.zeros_like(O, dtype=complex)
    for ell in range(lmax + 1):
        cur = conjugate(restrict(H, window(H, a, b, ell)).matrix, O, z)
        op = cur - prev
        if real:
            bnd = tbnd = real_time_bound(float(np.real(z)), ell)
        else:
            bnd = complex_shell_bound(z, ell, b - a)
            tbnd = complex_truncation_bound(z, ell, b - a)
        shells.append(Shell(ell, op, opnorm(op), bnd, opnorm(full - prev), tbnd))
        prev = cur
    return AnnulusDecomposition((a, b), z, shells, full)


def _sub(H: Hamiltonian, R: Region) -> np.ndarray:
    if len(R) == 0:
        return np.zeros_like(H.matrix)
    return restrict(H, R).matrix


def expansional_bound(z: complex) -> float:
    r = abs(z)
    with np.errstate(over="ignore"):
        # triply exponential; overflows to inf already near |z| = 0.5
        return float(np.exp(8 * r * np.exp(r * np.exp(8 * r)) * np.exp(4 * r)))


def expansional(H: Hamiltonian, A, B, z: complex) -> tuple[np.ndarray, float]:
    """e^{-z H_AB} e^{z (H_A + H_B)} and its operator norm."""
    A, B = as_region(A), as_region(B)
    if not (A.is_interval and B.is_interval) or not A.isdisjoint(B) or A.dist(B) != 1:
        raise ChainError("expansional needs adjacent disjoint intervals")
    HA, HB, HAB = _sub(H, A), _sub(H, B), _sub(H, A | B)
    E = herm_expm(HAB, -z) @ herm_expm(HA + HB, z)
    return E, opnorm(E)


def _tripartition(A, B, C) -> tuple[Region, Region, Region]:
    A, B, C = as_region(A), as_region(B), as_region(C)
    ok = (
        all(R.is_interval and len(R) for R in (A, B, C))
        and A.last + 1 == B.first
        and B.last + 1 == C.first
    )
    if not ok:
        raise ChainError("expected consecutive nonempty intervals A, B, C")
    return A, B, C


def gluing_residual(H: Hamiltonian, A, B, C, z: complex, variant: str = "plain") -> float:
    """Norm of the imaginary-time gluing product minus the identity."""
    A, B, C = _tripartition(A, B, C)
    HABC, HAB, HB, HBC = (_sub(H, R) for R in (A | B | C, A | B, B, B | C))
    core = herm_expm(HAB, z) @ herm_expm(HB, -z) @ herm_expm(HBC, z)
    if variant == "plain":
        G = herm_expm(HABC, -z) @ core
    elif variant == "symmetric":
        half = herm_expm(HABC, -z / 2)
        G = half @ core @ half
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return opnorm(G - np.eye(G.shape[0]))


def centered_tripartition(n: int, b: int) -> tuple[Region, Region, Region]:
    """A, B, C covering [1, n] with |B| = b placed in the middle."""
    if not 1 <= b <= n - 2:
        raise ChainError("need room for nonempty A and C")
    k = (n - b) // 2
    return Region.interval(1, k), Region.interval(k + 1, k + b), Region.interval(k + b + 1, n)


def gluing_scan(H: Hamiltonian, z: complex, widths, variant: str = "plain", seed=None) -> DecayCurve:
    vals = [gluing_residual(H, *centered_tripartition(H.n, b), z, variant) for b in widths]
    return DecayCurve.build(
        f"gluing_{variant}", list(widths), vals, model=H.spec.model, beta=float(np.real(z)), seed=seed,
    )
