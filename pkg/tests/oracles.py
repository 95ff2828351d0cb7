"""Independent reference computations shared by the tests.

Nothing here imports gibbslab: each function rebuilds its quantity from
explicit Kronecker products, closed forms or brute-force quadrature.
"""
import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def kron(*ops):
    out = np.eye(1, dtype=complex)
    for o in ops:
        out = np.kron(out, o)
    return out


def site_op(op, site, n):
    """Independent embedding oracle: explicit Kronecker product, 1-based sites."""
    return kron(*[op if k == site else PAULI["I"] for k in range(1, n + 1)])


def gibbs_power(Hm, beta, a):
    """rho^a through the matrix exponential, not an eigendecomposition."""
    from scipy.linalg import expm

    rho = expm(-beta * Hm)
    rho = rho / np.trace(rho).real
    if a == 1:
        return rho
    return expm(-a * beta * Hm) / np.trace(expm(-beta * Hm)).real ** a


def kms_inner(X, Y, Hm, beta):
    s = gibbs_power(Hm, beta, 0.5)
    return np.trace(X.conj().T @ s @ Y @ s)


def superop(fn, D):
    """Column-stacked matrix of a linear map on D x D operators, built column by column."""
    cols = []
    for k in range(D * D):
        E = np.zeros(D * D, dtype=complex)
        E[k] = 1
        cols.append(fn(E.reshape(D, D, order="F")).reshape(-1, order="F"))
    return np.column_stack(cols)


def bond_sum(terms, n, bonds):
    """Sum of the 4x4 bond blocks on the listed bonds, by explicit Kronecker padding."""
    out = np.zeros((2**n, 2**n), dtype=complex)
    for b, blk in terms:
        if b in bonds:
            out += np.kron(np.kron(np.eye(2 ** (b - 1)), blk), np.eye(2 ** (n - b - 1)))
    return out


def heisenberg(Hm, O, z):
    """e^{iHz} O e^{-iHz} with scipy's Pade exponential."""
    from scipy.linalg import expm

    return expm(1j * z * Hm) @ O @ expm(-1j * z * Hm)


def fhat(sigma, w):
    """Closed-form frequency-domain Gaussian filter."""
    return np.exp(-(w**2) / (4 * sigma**2)) / np.sqrt(sigma * np.sqrt(2 * np.pi))


def oft_quad(Hm, A, sigma, omega):
    """Entrywise adaptive quadrature of (2 pi)^{-1/2} int e^{iHt} A e^{-iHt} e^{-i w t} f(t) dt."""
    from scipy.integrate import quad

    E, U = np.linalg.eigh(Hm)
    At = U.conj().T @ A @ U
    f = lambda t: np.exp(-(sigma**2) * t**2) * np.sqrt(sigma * np.sqrt(2 / np.pi))  # noqa: E731
    out = np.zeros_like(At)
    T = 12 / sigma
    for i in range(len(E)):
        for j in range(len(E)):
            if At[i, j] == 0:
                continue
            k = E[i] - E[j] - omega
            re = quad(lambda t: f(t) * np.cos(k * t), -T, T, limit=400, epsabs=1e-13)[0]
            out[i, j] = At[i, j] * re / np.sqrt(2 * np.pi)  # the sine part is odd
    return U @ out @ U.conj().T


def k_superop(Hm, beta, jumps):
    """K = sum_a K_a from its defining formula, column by column, with expm-built powers."""
    D = Hm.shape[0]
    s, si = gibbs_power(Hm, beta, 0.5), gibbs_power(Hm, beta, -0.5)
    total = np.zeros((D * D, D * D), dtype=complex)
    for A in jumps:
        Ad = A.conj().T

        def K(X, A=A, Ad=Ad):
            C = A @ X - X @ A
            return C @ (s @ Ad @ si) - (si @ Ad @ s) @ C

        total += superop(K, D)
    return total


def random_density(d, rng):
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = G @ G.conj().T + 0.05 * np.eye(d)
    return rho / np.trace(rho).real


def pauli_strings_on(sites, n):
    """All 4^|sites| Pauli strings acting on ``sites`` (1-based) of an n-qubit chain."""
    import itertools

    out = []
    for labels in itertools.product("IXYZ", repeat=len(sites)):
        ops = [PAULI["I"]] * n
        for s, lab in zip(sites, labels):
            ops[s - 1] = PAULI[lab]
        out.append(kron(*ops))
    return out


def kms_projection(Hm, beta, n, region):
    """KMS-orthogonal projection onto operators trivial on ``region``, via the Gram matrix."""
    rest = [s for s in range(1, n + 1) if s not in set(region)]
    basis = pauli_strings_on(rest, n)
    G = np.array([[kms_inner(P, Q, Hm, beta) for Q in basis] for P in basis])
    Gi = np.linalg.inv(G)

    def E(X):
        c = Gi @ np.array([kms_inner(P, X, Hm, beta) for P in basis])
        return sum(ci * P for ci, P in zip(c, basis))

    return E


def coherent_quad(mu, beta):
    """Principal value of int c(t) e^{i mu t} dt, c(t) = 1/(beta sinh(2 pi t/beta)), by adaptive quadrature."""
    from scipy.integrate import quad

    if mu == 0:
        return 0.0
    f = lambda t: np.sin(mu * t) / (beta * np.sinh(2 * np.pi * t / beta))  # noqa: E731
    return 2j * quad(f, 0, 40 * beta, limit=400, epsabs=1e-13)[0]


def lindblad_oracle(Hm, beta, sigma, gamma, jumps, points=40001):
    """Schrodinger generator from filtered jumps on a dense omega grid (trapezoid rule).

    L[X] = sum_a int gamma(w) (Ahat X Ahat^dag - {Ahat^dag Ahat, X}/2) dw - i[C, X]
    with C_km = chat(E_k - E_m) N_km in the energy eigenbasis.
    """
    E, U = np.linalg.eigh(Hm)
    D = len(E)
    nu = E[:, None] - E[None, :]
    w = np.linspace(nu.min() - 14 * sigma, nu.max() + 14 * sigma, points)
    g = gamma(w)
    wt = np.full(points, w[1] - w[0])
    wt[[0, -1]] *= 0.5
    F = fhat(sigma, w[:, None, None] - nu[None])  # (points, D, D)
    M = np.zeros((D * D, D * D), dtype=complex)
    N = np.zeros((D, D), dtype=complex)
    for A in jumps:
        At = U.conj().T @ A @ U
        Ah = At[None] * F
        c = (g * wt)[:, None, None]
        N += np.einsum("wji,wjk->ik", (c * Ah).conj(), Ah)
        for p in range(points):
            if g[p] * wt[p] < 1e-300:
                continue
            a = Ah[p]
            M += g[p] * wt[p] * np.kron(a.conj(), a)
    chat = np.array([[coherent_quad(E[k] - E[m], beta) for m in range(D)] for k in range(D)])
    C = chat * N
    Id = np.eye(D)
    Leig = M - np.kron(Id, 0.5 * N + 1j * C) - np.kron((0.5 * N - 1j * C).T, Id)
    W = np.kron(U.conj(), U)
    return W @ Leig @ W.conj().T
