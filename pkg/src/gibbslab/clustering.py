"""Correlation decay: weak and strong clustering, local indistinguishability,
partition-function ratios and island trivialisation.

Maximal correlations between two regions are singular values of cross-Gram
matrices of KMS-orthonormal bases, so every "worst observable" below is an
exact optimum rather than a sample.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .algebra import GibbsState, gibbs, kms_inner, opnorm, partial_trace
from .chain import (
    ChainError,
    ChainSpec,
    Hamiltonian,
    Region,
    as_region,
    embed,
    embed_on,
    restrict,
    single_site_paulis,
)
from .condexp import complement_basis, cond_expectation, kms_basis
from .curves import DecayCurve
from .locality import centered_tripartition, support


# ---------------------------------------------------------------------------
# covariances


def _audit_supports(X, Y, n, q, supp_x, supp_y) -> None:
    sx = support(X, n, q) if supp_x is None else as_region(supp_x)
    sy = support(Y, n, q) if supp_y is None else as_region(supp_y)
    if not sx.isdisjoint(sy):
        raise ChainError(f"observables overlap: {sx!r} and {sy!r}")
    if supp_x is not None and not support(X, n, q).issubset(sx):
        raise ChainError("X acts outside its declared support")
    if supp_y is not None and not support(Y, n, q).issubset(sy):
        raise ChainError("Y acts outside its declared support")


def kms_covariance(state: GibbsState, X, Y, n: int, q: int = 1, supp_x=None, supp_y=None) -> float:
    """|<X, Y>_rho - conj(Tr[rho X]) Tr[rho Y]|, the KMS covariance of centred observables."""
    _audit_supports(X, Y, n, q, supp_x, supp_y)
    return abs(kms_inner(X, Y, state) - np.conj(state.expect(X)) * state.expect(Y))


def inf_covariance(state: GibbsState, X, Y, n: int, q: int = 1, supp_x=None, supp_y=None) -> float:
    """|Tr[X^dag Y rho] - Tr[rho X^dag] Tr[rho Y]|."""
    _audit_supports(X, Y, n, q, supp_x, supp_y)
    Xd = X.conj().T
    return abs(np.trace(Xd @ Y @ state.rho) - state.expect(Xd) * state.expect(Y))


def _centred_basis(state: GibbsState, region, n: int, q: int) -> np.ndarray:
    """KMS-orthonormal, KMS-centred basis of the operators on ``region``."""
    Q, _, _ = kms_basis(state, as_region(region), n, q)
    return Q[:, 1:]


def max_kms_covariance(state: GibbsState, A, C, n: int, q: int = 1) -> float:
    """sup |Cov(X, Y)| over unit-KMS-norm X on A and Y on C."""
    UA = _centred_basis(state, A, n, q)
    UC = _centred_basis(state, C, n, q)
    return float(np.linalg.norm(UA.conj().T @ UC, 2))


def max_inf_covariance(state: GibbsState, A, C, n: int, q: int = 1) -> float:
    """max |Cov_inf| over single-site Pauli pairs (operator norm one)."""
    best = 0.0
    for (_, _, P), (_, _, R) in itertools.product(single_site_paulis(n, q, A), single_site_paulis(n, q, C)):
        best = max(best, inf_covariance(state, P, R, n, q, A, C))
    return best


def weak_clustering_scan(
    H: Hamiltonian, beta: float, distances, site: int = 1, norm: str = "kms",
    state: GibbsState | None = None, seed=None,
) -> DecayCurve:
    """Worst single-site covariance between ``site`` and ``site + d`` per distance d."""
    st = state if state is not None else gibbs(H, beta)
    vals = []
    for d in distances:
        other = site + d
        if other > H.n:
            raise ChainError(f"distance {d} does not fit after site {site} in a chain of {H.n}")
        if norm == "kms":
            vals.append(max_kms_covariance(st, [site], [other], H.n, H.q))
        elif norm == "inf":
            vals.append(max_inf_covariance(st, [site], [other], H.n, H.q))
        else:
            raise ValueError(f"unknown normalisation {norm!r}")
    curve = DecayCurve.build(
        f"weak_clustering_{norm}", list(distances), vals, model=H.spec.model, beta=beta, seed=seed,
        meta={"site": site},
    )
    curve.meta["fits"] = curve.fits()
    return curve


def ising_transfer_correlation(beta: float, distance: int, J: float = 1.0) -> float:
    """<Z_i Z_{i+d}> of the open classical chain -J sum Z Z, by transfer matrices."""
    distance = int(distance)
    T = np.array([[np.exp(beta * J), np.exp(-beta * J)], [np.exp(-beta * J), np.exp(beta * J)]])
    s = np.diag([1.0, -1.0])
    # the open chain's end vectors are uniform, so only the bulk segment matters
    ones = np.ones(2)
    num = ones @ s @ np.linalg.matrix_power(T, distance) @ s @ ones
    den = ones @ np.linalg.matrix_power(T, distance) @ ones
    return float(num / den)


# ---------------------------------------------------------------------------
# strong clustering


def _consecutive(A, B, C) -> tuple[Region, Region, Region]:
    A, B, C = as_region(A), as_region(B), as_region(C)
    ok = all(R.is_interval and len(R) for R in (A, B, C)) and A.last + 1 == B.first and B.last + 1 == C.first
    if not ok:
        raise ChainError("expected consecutive nonempty intervals A, B, C")
    return A, B, C


def strong_clustering_error(H: Hamiltonian, state: GibbsState, A, B, C) -> float:
    """||E_AB E_BC - E_ABC||_rho.

    Both images contain that of E_ABC, so the difference factors as
    (E_AB - E_ABC)(E_BC - E_ABC) and its norm is the largest singular value
    of the cross-Gram matrix of the two relative complements.
    """
    A, B, C = _consecutive(A, B, C)
    U1 = complement_basis(H, state, A | B, A | B | C)
    U2 = complement_basis(H, state, B | C, A | B | C)
    if U1.shape[1] == 0 or U2.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(U1.conj().T @ U2, 2))


def gluing_covariance(H: Hamiltonian, state: GibbsState, A, B, C, O: np.ndarray) -> tuple[complex, complex]:
    """(Cov_ABC(E_AB O, E_BC O), <O, (E_AB E_BC - E_ABC) O>_rho); equal for projective E."""
    A, B, C = _consecutive(A, B, C)
    Eab = cond_expectation(H, A | B, state)
    Ebc = cond_expectation(H, B | C, state)
    Eabc = cond_expectation(H, A | B | C, state)
    x, y = Eab(O), Ebc(O)
    cov = kms_inner(x - Eabc(x), y - Eabc(y), state)
    form = kms_inner(O, Eab(Ebc(O)) - Eabc(O), state)
    return cov, form


def strong_clustering_scan(H: Hamiltonian, beta: float, widths, state: GibbsState | None = None, seed=None) -> DecayCurve:
    """Strong clustering error over centred tripartitions of the whole chain."""
    st = state if state is not None else gibbs(H, beta)
    vals = [strong_clustering_error(H, st, *centered_tripartition(H.n, b)) for b in widths]
    return DecayCurve.build("strong_clustering", list(widths), vals, model=H.spec.model, beta=beta, seed=seed)


# ---------------------------------------------------------------------------
# local indistinguishability and partition functions


def _marginal(H: Hamiltonian, beta: float, region: Region, keep: Region) -> np.ndarray:
    st = gibbs(restrict(H, region).matrix, beta)
    return partial_trace(st.rho, list(keep.sites), H.n, H.d)


def local_indistinguishability(H: Hamiltonian, beta: float, A, B, C) -> float:
    """||Tr_BC[rho^ABC] - Tr_B[rho^AB]||_1, both as states on A."""
    A, B, C = _consecutive(A, B, C)
    diff = _marginal(H, beta, A | B | C, A) - _marginal(H, beta, A | B, A)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def _log_z(H: Hamiltonian, beta: float, region: Region) -> float:
    """log Tr e^{-beta H^R} over the sites of R only."""
    w = np.linalg.eigvalsh(restrict(H, region).matrix)
    # the full-space trace carries an extra d^(n - |R|) from the identity outside R
    return float(np.logaddexp.reduce(-beta * w) - (H.n - len(region)) * np.log(H.d))


def partition_ratio(H: Hamiltonian, beta: float, A, B, C) -> float:
    """|Z_AB Z_BC / (Z_ABC Z_B) - 1|."""
    A, B, C = _consecutive(A, B, C)
    lr = _log_z(H, beta, A | B) + _log_z(H, beta, B | C) - _log_z(H, beta, A | B | C) - _log_z(H, beta, B)
    return float(abs(np.expm1(lr)))


def tripartition_scan(H: Hamiltonian, beta: float, widths, quantity: str, seed=None) -> DecayCurve:
    fn = {"local_indistinguishability": local_indistinguishability, "partition_ratio": partition_ratio}[quantity]
    vals = [fn(H, beta, *centered_tripartition(H.n, b)) for b in widths]
    return DecayCurve.build(quantity, list(widths), vals, model=H.spec.model, beta=beta, seed=seed)


# ---------------------------------------------------------------------------
# islands


@dataclass(frozen=True)
class IslandPartition:
    """L, A_L, A_R, B, C_L, C_R, R: consecutive intervals covering the chain (L, R may be empty)."""

    L: Region
    AL: Region
    AR: Region
    B: Region
    CL: Region
    CR: Region
    R: Region

    @classmethod
    def from_lengths(cls, lengths) -> "IslandPartition":
        if len(lengths) != 7:
            raise ChainError("need seven lengths L, A_L, A_R, B, C_L, C_R, R")
        regs, start = [], 1
        for k in lengths:
            regs.append(Region.interval(start, start + k - 1) if k > 0 else Region.of([]))
            start += k
        return cls(*regs)

    @property
    def n(self) -> int:
        return sum(len(r) for r in self.__dict__.values())

    @property
    def core(self) -> Region:
        return self.AR | self.B | self.CL

    @property
    def outside(self) -> Region:
        return self.L | self.R


def island_residual(H: Hamiltonian, state: GibbsState, part: IslandPartition, X: np.ndarray | None = None) -> float:
    """||E_{A_R B C_L}[X] - X'_{LR}||_rho with X' the KMS-projection onto operators on L u R.

    With ``X`` omitted, the supremum over unit-norm centred operators on B
    is returned (a largest singular value).
    """
    if len(part.B) == 0:
        raise ChainError("the island B must be nonempty")
    E = cond_expectation(H, part.core, state)
    keep_out = cond_expectation(H, part.outside.complement(H.n), state)
    if X is not None:
        Y = E(X)
        return float(np.linalg.norm(state.qrt @ (Y - keep_out(Y)) @ state.qrt))
    W = _centred_basis(state, part.B, H.n, H.q)
    EW = E.apply_sym(W)
    M = EW - keep_out.apply_sym(EW)
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def island_scan(H: Hamiltonian, beta: float, island: int, buffers, state: GibbsState | None = None, seed=None) -> DecayCurve:
    """Residual with a centred island of ``island`` sites and buffers |A_R| = |C_L| = w, L = R = empty."""
    st = state if state is not None else gibbs(H, beta)
    vals = []
    for w in buffers:
        left = (H.n - island) // 2
        right = H.n - island - left
        if w > min(left, right):
            raise ChainError(f"buffer {w} does not fit")
        part = IslandPartition.from_lengths([0, left - w, w, island, w, right - w, 0])
        vals.append(island_residual(H, st, part))
    return DecayCurve.build("island", list(buffers), vals, model=H.spec.model, beta=beta, seed=seed,
                            meta={"island": island})


# ---------------------------------------------------------------------------
# folding


@dataclass(frozen=True, eq=False)
class Folded:
    """A chain of n sites folded onto n/2 sites of doubled local dimension.

    Folded site i carries the original sites (i, n + 1 - i), in that order.
    """

    H: Hamiltonian
    original: Hamiltonian = field(repr=False)
    perm: tuple[int, ...] = ()

    def site_map(self, i: int) -> int:
        n = self.original.n
        return i if i <= n // 2 else n + 1 - i

    def fold_operator(self, O: np.ndarray) -> np.ndarray:
        """Reorder the tensor factors of O into the folded layout."""
        n, d = self.original.n, self.original.d
        t = O.reshape([d] * (2 * n))
        p = list(self.perm)
        return t.transpose(p + [n + k for k in p]).reshape(O.shape)

    def region(self, R) -> Region:
        return Region.of({self.site_map(i) for i in as_region(R)})


def fold(H: Hamiltonian) -> Folded:
    """Fold an even-length chain so A1 B1 C B2 A2 topologies become intervals."""
    n, q = H.n, H.q
    if n % 2 or n < 4:
        raise ChainError("folding needs an even chain of at least four sites")
    m = n // 2
    d = 2**q
    swap = np.eye(d * d)[[(j % d) * d + j // d for j in range(d * d)]]
    blocks: dict[int, np.ndarray] = {}

    def add(bond: int, op: np.ndarray, positions: tuple[int, int]) -> None:
        big = embed_on(op, positions, 4, q)
        blocks[bond] = blocks.get(bond, 0) + big

    for b, blk in H.terms:
        if b + 1 <= m:  # upper layer: folded sites b, b+1, upper halves are positions 1 and 3
            add(b, blk, (1, 3))
        elif b >= m + 1:  # lower layer: original b sits right of original b+1
            f0 = n - b
            add(f0, swap @ blk @ swap, (2, 4))
        else:  # the fold crosses the middle bond, which lands inside folded site m
            add(m - 1, blk, (3, 4))
    spec = ChainSpec(m, 2 * q, tuple(sorted(blocks.items())), f"{H.spec.model}-folded", H.spec.seed, H.spec.params)
    # merged blocks may exceed norm one; keep them as they are rather than rescale
    mat = sum(embed(blk, b, m, 2 * q) for b, blk in spec.terms)
    folded = Hamiltonian(spec, mat)
    # original site index (0-based) sitting at each folded position
    perm = []
    for i in range(1, m + 1):
        perm += [i - 1, n - i]
    return Folded(folded, H, tuple(perm))


def folded_weak_clustering(H: Hamiltonian, beta: float, outer: int) -> float:
    """Worst KMS covariance between the ``outer`` sites at both ends and the middle pair.

    The observables live on A1 u A2 (the chain ends) and C (the two central
    sites); folding turns A into an interval, which is how the audit reaches
    this two-interval topology.
    """
    f = fold(H)
    st = gibbs(f.H, beta)
    m = f.H.n
    A = Region.interval(1, outer)
    C = Region.of([m])
    if outer >= m:
        raise ChainError("the outer block must leave room for the middle")
    return max_kms_covariance(st, A, C, m, f.H.q)


def strong_from_weak_audit(H: Hamiltonian, beta: float, widths) -> dict:
    """Strong clustering error at |B| = b next to the folded weak error at distance b."""
    st = gibbs(H, beta)
    m = H.n // 2
    rows = []
    for b in widths:
        if not 1 <= b < m:
            raise ChainError(f"width {b} leaves no folded outer block")
        eps_s = strong_clustering_error(H, st, *centered_tripartition(H.n, b))
        eps_w = folded_weak_clustering(H, beta, m - b)
        rows.append({"width": b, "strong": eps_s, "folded_weak": eps_w,
                     "ratio_to_sqrt": eps_s / np.sqrt(eps_w) if eps_w > 0 else float("inf")})
    return {"model": H.spec.model, "beta": beta, "rows": rows}
