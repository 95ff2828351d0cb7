"""Nearest-neighbour chains, regions, restrictions and balanced partitions.

Sites are 1-based throughout. A chain of ``n`` sites with ``q`` qubits per
site lives on a Hilbert space of dimension ``2**(q*n)``, ordered so that
site 1 is the leftmost (most significant) tensor factor.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class ChainError(ValueError):
    """Raised for malformed chain specifications or regions."""


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Region:
    """Sorted, duplicate-free set of 1-based sites."""

    sites: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        s = tuple(sorted(set(int(i) for i in self.sites)))
        if any(i < 1 for i in s):
            raise ChainError(f"sites are 1-based, got {s}")
        object.__setattr__(self, "sites", s)

    @classmethod
    def interval(cls, a: int, b: int) -> "Region":
        """The interval [a, b]; empty when b < a."""
        return cls(tuple(range(a, b + 1)))

    @classmethod
    def of(cls, sites: "Region | Iterable[int]") -> "Region":
        if isinstance(sites, Region):
            return sites
        return cls(tuple(sites))

    @property
    def is_interval(self) -> bool:
        s = self.sites
        return len(s) > 0 and s[-1] - s[0] + 1 == len(s)

    @property
    def first(self) -> int:
        return self.sites[0]

    @property
    def last(self) -> int:
        return self.sites[-1]

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, i: object) -> bool:
        return i in self.sites

    def __or__(self, other: "Region") -> "Region":
        return Region(self.sites + Region.of(other).sites)

    def __and__(self, other: "Region") -> "Region":
        o = set(Region.of(other).sites)
        return Region(tuple(i for i in self.sites if i in o))

    def __sub__(self, other: "Region") -> "Region":
        o = set(Region.of(other).sites)
        return Region(tuple(i for i in self.sites if i not in o))

    def issubset(self, other: "Region") -> bool:
        return set(self.sites) <= set(Region.of(other).sites)

    def isdisjoint(self, other: "Region") -> bool:
        return not set(self.sites) & set(Region.of(other).sites)

    def complement(self, n: int) -> "Region":
        return Region(tuple(i for i in range(1, n + 1) if i not in self.sites))

    def dist(self, other: "Region") -> int:
        """Site distance; adjacent disjoint intervals are at distance 1."""
        o = Region.of(other)
        if not self.sites or not o.sites:
            raise ChainError("distance to an empty region is undefined")
        return min(abs(i - j) for i in self.sites for j in o.sites)

    def neighbourhood(self, ell: int, n: int) -> "Region":
        """The interval [a - ell, b + ell] clipped to the chain."""
        if not self.sites:
            return Region()
        return Region.interval(max(1, self.first - ell), min(n, self.last + ell))

    def __repr__(self) -> str:
        if self.is_interval and len(self) > 1:
            return f"Region[{self.first},{self.last}]"
        return f"Region{self.sites}"


def as_region(r: Region | Iterable[int] | None) -> Region:
    return Region() if r is None else Region.of(r)


# ---------------------------------------------------------------------------
# Tensor helpers


def kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def embed(op: np.ndarray, first: int, n: int, q: int = 1) -> np.ndarray:
    """Place ``op`` on consecutive sites starting at ``first`` (1-based)."""
    d = 2**q
    k = round(math.log(op.shape[0], d))
    if d**k != op.shape[0] or first < 1 or first + k - 1 > n:
        raise ChainError(f"cannot embed a {op.shape} operator at site {first} of {n}")
    left = np.eye(d ** (first - 1))
    right = np.eye(d ** (n - first - k + 1))
    return np.kron(np.kron(left, op), right)


def embed_on(op: np.ndarray, sites: Region | Iterable[int], n: int, q: int = 1) -> np.ndarray:
    """Place ``op`` (acting on the sorted ``sites``) into the chain, identity elsewhere."""
    d = 2**q
    sites = list(as_region(sites).sites)
    k = len(sites)
    if op.shape != (d**k, d**k):
        raise ChainError(f"operator shape {op.shape} does not match {k} sites")
    rest = [i for i in range(1, n + 1) if i not in sites]
    full = np.kron(op, np.eye(d ** len(rest))).reshape([d] * (2 * n))
    # axes are currently ordered (sites, rest) for kets then bras
    order = sites + rest
    perm = [order.index(i) for i in range(1, n + 1)]
    full = full.transpose(perm + [n + p for p in perm])
    return full.reshape(d**n, d**n)


def site_ops_product(ops: dict[int, np.ndarray], n: int, q: int = 1) -> np.ndarray:
    """Tensor product with ``ops[i]`` on site i and identities elsewhere."""
    d = 2**q
    return kron_all([ops.get(i, np.eye(d)) for i in range(1, n + 1)])


def local_paulis(q: int = 1) -> list[tuple[str, np.ndarray]]:
    """All 4**q Pauli strings on one q-qubit site, identity first."""
    out = []
    for labels in itertools.product("IXYZ", repeat=q):
        out.append(("".join(labels), kron_all([PAULI[c] for c in labels])))
    return out


def single_site_paulis(
    n: int, q: int = 1, region: Region | Iterable[int] | None = None, include_identity: bool = False
) -> list[tuple[int, str, np.ndarray]]:
    """The jump set of single-site Paulis on ``region`` (default: all sites)."""
    sites = as_region(region).sites if region is not None else tuple(range(1, n + 1))
    out = []
    for i in sites:
        for label, p in local_paulis(q):
            if label.strip("I") == "" and not include_identity:
                continue
            out.append((i, label, embed(p, i, n, q)))
    return out


def pauli_strings(region: Region | Iterable[int], n: int, q: int = 1) -> list[tuple[str, np.ndarray]]:
    """Pauli strings supported on ``region``, ordered by weight then label.

    The identity comes first. Labels list one q-character block per site
    of ``region``.
    """
    sites = as_region(region).sites
    local = local_paulis(q)
    ident = local[0][0]
    combos = []
    for choice in itertools.product(range(len(local)), repeat=len(sites)):
        weight = sum(1 for c in choice if c != 0)
        label = ".".join(local[c][0] for c in choice)
        combos.append((weight, label, choice))
    combos.sort(key=lambda x: (x[0], x[1]))
    out = []
    for _, label, choice in combos:
        ops = {s: local[c][1] for s, c in zip(sites, choice)}
        out.append((label or ident, site_ops_product(ops, n, q)))
    return out


# ---------------------------------------------------------------------------
# Chains


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Term-list description of H = sum_b H_{b,b+1}."""

    n: int
    q: int
    terms: tuple[tuple[int, np.ndarray], ...]
    model: str = "custom"
    seed: int | None = None
    params: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    spec: ChainSpec
    matrix: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def q(self) -> int:
        return self.spec.q

    @property
    def d(self) -> int:
        return 2**self.spec.q

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def terms(self) -> tuple[tuple[int, np.ndarray], ...]:
        return self.spec.terms

    @property
    def bonds(self) -> tuple[int, ...]:
        return tuple(b for b, _ in self.spec.terms)

    @property
    def is_commuting(self) -> bool:
        mats = [embed(blk, b, self.n, self.q) for b, blk in self.terms]
        return all(np.allclose(x @ y, y @ x, atol=1e-12) for x, y in itertools.combinations(mats, 2))

    def term_matrix(self, b: int) -> np.ndarray:
        return sum(
            (embed(blk, bb, self.n, self.q) for bb, blk in self.terms if bb == b),
            np.zeros((self.dim, self.dim), dtype=complex),
        )

    def local_matrix(self, region: Region | Iterable[int]) -> np.ndarray:
        """H^R acting on the sites of the interval R only."""
        r = as_region(region)
        if not r.sites:
            return np.ones((1, 1), dtype=complex) * 0
        if not r.is_interval:
            raise ChainError("local_matrix needs an interval")
        m = len(r)
        out = np.zeros((self.d**m, self.d**m), dtype=complex)
        for b, blk in self.terms:
            if b in r and b + 1 in r:
                out += embed(blk, b - r.first + 1, m, self.q)
        return out

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def to_json(self) -> dict:
        """Term list with row-major complex entries as [re, im] pairs."""
        return {
            "n": self.n,
            "q": self.q,
            "model": self.spec.model,
            "seed": self.spec.seed,
            "params": dict(self.spec.params),
            "terms": [
                {"bond": int(b), "block": [[float(z.real), float(z.imag)] for z in blk.reshape(-1)]}
                for b, blk in self.terms
            ],
        }

    @classmethod
    def from_json(cls, data: dict, strict: bool = True) -> "Hamiltonian":
        q = int(data["q"])
        d2 = 4**q
        terms = []
        for t in data["terms"]:
            flat = np.array([complex(re, im) for re, im in t["block"]])
            terms.append((int(t["bond"]), flat.reshape(d2, d2)))
        spec = ChainSpec(
            n=int(data["n"]),
            q=q,
            terms=tuple(terms),
            model=data.get("model", "custom"),
            seed=data.get("seed"),
            params=tuple(sorted(data.get("params", {}).items())),
        )
        return build_chain(spec, strict=strict)


def build_chain(spec: ChainSpec, strict: bool = True) -> Hamiltonian:
    """Validate the blocks of ``spec`` and assemble the dense Hamiltonian.

    With ``strict`` (the default) a block of norm above one is rejected;
    otherwise every block is divided by the largest block norm.
    """
    if spec.n < 1 or spec.q < 1:
        raise ChainError("need n >= 1 and q >= 1")
    d2 = 4**spec.q
    terms = []
    for b, blk in spec.terms:
        blk = np.asarray(blk, dtype=complex)
        if not 1 <= b <= spec.n - 1:
            raise ChainError(f"bond {b} outside 1..{spec.n - 1}")
        if blk.shape != (d2, d2):
            raise ChainError(f"bond {b}: block shape {blk.shape}, expected {(d2, d2)}")
        if not np.allclose(blk, blk.conj().T, atol=1e-12):
            raise ChainError(f"bond {b}: block is not Hermitian")
        terms.append((int(b), blk))
    norms = [float(np.linalg.norm(blk, 2)) for _, blk in terms]
    big = max(norms, default=0.0)
    if big > 1 + 1e-12:
        if strict:
            raise ChainError(f"block norm {big:.6g} exceeds 1 in strict mode")
        terms = [(b, blk / big) for b, blk in terms]
    spec = ChainSpec(spec.n, spec.q, tuple(terms), spec.model, spec.seed, spec.params)
    dim = 2 ** (spec.q * spec.n)
    mat = np.zeros((dim, dim), dtype=complex)
    for b, blk in terms:
        mat += embed(blk, b, spec.n, spec.q)
    return Hamiltonian(spec, mat)


def restrict(H: Hamiltonian, region: Region | Iterable[int]) -> Hamiltonian:
    """H^R: the bond terms lying entirely inside R, embedded in the full space."""
    r = set(as_region(region).sites)
    if any(i > H.n for i in r):
        raise ChainError(f"region {sorted(r)} not inside 1..{H.n}")
    terms = tuple((b, blk) for b, blk in H.terms if b in r and b + 1 in r)
    spec = ChainSpec(H.n, H.q, terms, H.spec.model, H.spec.seed, H.spec.params)
    mat = np.zeros_like(H.matrix)
    for b, blk in terms:
        mat += embed(blk, b, H.n, H.q)
    return Hamiltonian(spec, mat)


def link(H: Hamiltonian, A: Region | Iterable[int], B: Region | Iterable[int]) -> np.ndarray:
    """H^{A:B} = H^{AB} - H^A - H^B, i.e. the bonds straddling A and B."""
    a, b = as_region(A), as_region(B)
    if not a.isdisjoint(b):
        raise ChainError("link needs disjoint regions")
    sa, sb = set(a.sites), set(b.sites)
    mat = np.zeros_like(H.matrix)
    for bond, blk in H.terms:
        if (bond in sa and bond + 1 in sb) or (bond in sb and bond + 1 in sa):
            mat += embed(blk, bond, H.n, H.q)
    return mat


# ---------------------------------------------------------------------------
# Named models


def _normalised(block: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(block, 2)
    return block / nrm if nrm > 0 else block


def tfim(n: int, g: float = 1.0) -> Hamiltonian:
    """Transverse-field Ising blocks -(ZZ + g/2 (XI + IX)), rescaled to norm one."""
    X, Z, I = PAULI["X"], PAULI["Z"], PAULI["I"]
    blk = _normalised(-(np.kron(Z, Z) + 0.5 * g * (np.kron(X, I) + np.kron(I, X))))
    spec = ChainSpec(n, 1, tuple((b, blk) for b in range(1, n)), "tfim", None, (("g", float(g)),))
    return build_chain(spec)


def xxz(n: int, delta: float = 0.5) -> Hamiltonian:
    X, Y, Z = PAULI["X"], PAULI["Y"], PAULI["Z"]
    blk = _normalised(np.kron(X, X) + np.kron(Y, Y) + delta * np.kron(Z, Z))
    spec = ChainSpec(n, 1, tuple((b, blk) for b in range(1, n)), "xxz", None, (("delta", float(delta)),))
    return build_chain(spec)


def ising(n: int) -> Hamiltonian:
    """Commuting ferromagnetic Ising chain, blocks -Z⊗Z."""
    Z = PAULI["Z"]
    spec = ChainSpec(n, 1, tuple((b, -np.kron(Z, Z)) for b in range(1, n)), "ising")
    return build_chain(spec)


def random_chain(n: int, q: int = 1, seed: int = 0) -> Hamiltonian:
    """Blocks (G + G^†)/||G + G^†|| with G complex Gaussian."""
    rng = np.random.default_rng(seed)
    d2 = 4**q
    terms = []
    for b in range(1, n):
        G = rng.standard_normal((d2, d2)) + 1j * rng.standard_normal((d2, d2))
        terms.append((b, _normalised(G + G.conj().T)))
    return build_chain(ChainSpec(n, q, tuple(terms), "random", seed))


MODELS: dict[str, Callable[..., Hamiltonian]] = {
    "tfim": tfim,
    "xxz": xxz,
    "ising": ising,
    "random": random_chain,
}


def make_model(name: str, n: int, q: int = 1, seed: int = 0, **params: float) -> Hamiltonian:
    """Build a named model; ``seed`` only affects the random family."""
    if name == "random":
        return random_chain(n, q=q, seed=seed)
    if q != 1:
        raise ChainError(f"model {name!r} is defined for q=1 only")
    if name not in MODELS:
        raise ChainError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    return MODELS[name](n, **params)


# ---------------------------------------------------------------------------
# Balanced partitions


@dataclass(frozen=True)
class PartitionSet:
    region: Region
    b: int
    parts: tuple[tuple[Region, Region, Region], ...]

    @property
    def s(self) -> int:
        return len(self.parts)

    def check(self) -> dict[str, bool]:
        """Evaluate the four defining properties exactly."""
        r = len(self.region)
        b = self.b
        cover = all((A | B | C) == self.region and A.isdisjoint(B) and B.isdisjoint(C) and A.isdisjoint(C)
                    for A, B, C in self.parts)
        lo, hi = r // 3, math.ceil(2 * r / 3)
        sizes = all(lo <= len(A) <= hi and lo <= len(C) <= hi and b <= len(B) <= 2 * b
                    for A, B, C in self.parts)
        middles = all(P[1].isdisjoint(Q[1]) for P, Q in itertools.combinations(self.parts, 2))
        count = self.s >= r // (10 * b)
        return {"cover": cover, "sizes": sizes, "disjoint_middles": middles, "count": count}


def balanced_partitions(
    region: Region | Iterable[int], b: Callable[[int], int] | int, min_length: int = 30
) -> PartitionSet:
    """Tripartitions A_i B_i C_i of an interval with disjoint middles B_i.

    A_i = [1, r//3 + i*b], B_i the next b sites and C_i the rest, for
    i = 1..s with s = r // (10 b), all relative to the interval start.
    """
    reg = as_region(region)
    if not reg.is_interval:
        raise ChainError("balanced partitions need an interval")
    r = len(reg)
    if r < min_length:
        raise ChainError(f"interval length {r} below the threshold {min_length}")
    bw = b(r) if callable(b) else int(b)
    if bw < 1 or bw > r / 10:
        raise ChainError(f"b(r)={bw} must satisfy 1 <= b(r) <= r/10")
    s = r // (10 * bw)
    off = reg.first - 1
    parts = []
    for i in range(1, s + 1):
        a_end = r // 3 + i * bw
        A = Region.interval(off + 1, off + a_end)
        B = Region.interval(off + a_end + 1, off + a_end + bw)
        C = Region.interval(off + a_end + bw + 1, off + r)
        parts.append((A, B, C))
    return PartitionSet(reg, bw, tuple(parts))
