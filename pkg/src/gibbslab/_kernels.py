"""Hot kernels for Lindbladian assembly, with a compiled backend when available.

The compiled module ``gibbslab._bohr`` is used unless it failed to build or
``GIBBSLAB_BACKEND=python`` is set in the environment. Both backends take the
jump operators already rotated into the energy eigenbasis.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.special import erfcx, ndtr

KINDS = {"metropolis": 0, "gaussian": 1}


def metropolis(omega, beta: float, sigma: float):
    return np.exp(-beta * np.maximum(omega + beta * sigma**2 / 2, 0.0))


def gaussian(omega, beta: float, sigma: float):
    return np.exp(-((beta * omega + 1.0) ** 2) / (2.0 * (2.0 - beta**2 * sigma**2)))


def pair_weight(nu1, nu2, beta: float, sigma: float, kind: str):
    """Closed form of the integral of gamma(w) fhat(w - nu1) fhat(w - nu2) dw.

    The two filters multiply to exp(-(nu1-nu2)^2/(8 sigma^2)) times a normal
    density centred at the mean frequency, so what remains is the Gaussian
    expectation of the weight.
    """
    nu1 = np.asarray(nu1, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    nb = 0.5 * (nu1 + nu2)
    pre = np.exp(-((nu1 - nu2) ** 2) / (8.0 * sigma**2))
    if kind == "gaussian":
        s2 = 2.0 / beta**2 - sigma**2
        v = s2 + sigma**2
        return pre * np.sqrt(s2 / v) * np.exp(-((nb + 1.0 / beta) ** 2) / (2.0 * v))
    if kind != "metropolis":
        raise ValueError(f"unknown weight {kind!r}")
    y = -beta * sigma**2 / 2 - nb
    u = (y + beta * sigma**2) / sigma
    below = ndtr(y / sigma)
    # the exponential tail, written so that neither branch overflows
    up = np.exp(-(y**2) / (2 * sigma**2)) * 0.5 * erfcx(np.maximum(u, 0.0) / np.sqrt(2.0))
    down = np.exp(np.minimum(beta * y + beta**2 * sigma**2 / 2, 0.0)) * ndtr(-u)
    return pre * (below + np.where(u >= 0, up, down))


def coherent_factor(mu, beta: float):
    """Closed form of the principal-value integral of c(t) e^{i mu t} dt."""
    return 0.5j * np.tanh(beta * np.asarray(mu, dtype=float) / 4.0)


def assemble_from_table(alpha: np.ndarray, A: np.ndarray):
    """Assembly given alpha[(i,j),(k,l)] = alpha(nu_ij, nu_kl) in row-major pair order."""
    D = A.shape[-1]
    flat = A.reshape(A.shape[0], -1)
    S = flat.T @ flat.conj()
    T4 = (alpha * S).reshape(D, D, D, D)
    M = np.ascontiguousarray(T4.transpose(2, 0, 3, 1)).reshape(D * D, D * D)
    # alpha(nu_im, nu_ik) for the decay term
    a4 = alpha.reshape(D, D, D, D)
    idx = np.arange(D)
    adiag = a4[idx, :, idx, :]  # [i, m, k]
    N = np.einsum("aik,aim,imk->km", A.conj(), A, adiag, optimize=True)
    return M, N


def _assemble_numpy(E: np.ndarray, A: np.ndarray, beta: float, sigma: float, kind: str):
    nu = (E[:, None] - E[None, :]).reshape(-1)
    return assemble_from_table(pair_weight(nu[:, None], nu[None, :], beta, sigma, kind), A)


BACKEND = "python"
_assemble = _assemble_numpy

if os.environ.get("GIBBSLAB_BACKEND", "").lower() != "python":
    try:
        from . import _bohr  # type: ignore[attr-defined]

        def _assemble_compiled(E, A, beta, sigma, kind):
            return _bohr.assemble(
                np.ascontiguousarray(E, dtype=float),
                np.ascontiguousarray(A, dtype=complex),
                float(beta),
                float(sigma),
                KINDS[kind],
            )

        _assemble = _assemble_compiled
        BACKEND = "cython"
    except ImportError:
        pass


def assemble(E, A, beta, sigma, kind, backend: str | None = None):
    """Transition matrix (column-stacked, eigenbasis) and decay operator N.

    Returns ``(M, N)`` with M[(k,i),(l,j)] = alpha(nu_ij, nu_kl) sum_a A_ij conj(A_kl)
    and N_km = sum_a sum_i conj(A_ik) A_im alpha(nu_im, nu_ik).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown weight {kind!r}")
    A = np.asarray(A, dtype=complex)
    if A.ndim == 2:
        A = A[None]
    if backend == "python":
        return _assemble_numpy(np.asarray(E, float), A, beta, sigma, kind)
    if backend == "cython" and BACKEND != "cython":
        raise RuntimeError("compiled backend not available")
    return _assemble(np.asarray(E, float), A, beta, sigma, kind)
