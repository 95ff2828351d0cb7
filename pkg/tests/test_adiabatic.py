import numpy as np
import pytest

from gibbslab.adiabatic import (
    DegenerateError,
    QuasiAdiabaticFilter,
    Schedule,
    _filter_sum,
    adiabatic_run,
    discriminant,
    discriminant_matrix,
    gap_prescan,
    parent_decay_profile,
    parent_derivative,
    purified_gibbs,
    quasi_adiabatic_W,
    reduced_state,
    spectral_flow,
)
from gibbslab.algebra import gibbs
from gibbslab.chain import ChainError, make_model
from gibbslab.lindblad import LindbladSpec, build_lindbladian, gap

import oracles
from oracles import PAULI


@pytest.fixture(scope="module")
def filt():
    return QuasiAdiabaticFilter(1.0)


@pytest.mark.parametrize("model", ["tfim", "random"])
@pytest.mark.parametrize("kind", ["metropolis", "gaussian"])
def test_discriminant_invariants_n3(model, kind):
    H = make_model(model, 3, seed=2)
    spec = LindbladSpec(1.0, None if kind == "metropolis" else 0.9, kind)
    d = discriminant(H, spec)
    assert max(d.checks.values()) < 1e-8
    assert d.gap == pytest.approx(gap(build_lindbladian(H, spec)).gap, abs=1e-8)
    for t in d.terms:
        assert np.linalg.eigvalsh(0.5 * (t + t.conj().T)).min() > -1e-9


def test_discriminant_matches_direct_conjugation():
    # -rho^{-1/4} L[rho^{1/4} Y rho^{1/4}] rho^{-1/4} applied to Y, then row-major vec
    H = make_model("xxz", 2)
    L = build_lindbladian(H, LindbladSpec(1.0))
    Hd = discriminant_matrix(L)
    q = oracles.gibbs_power(H.matrix, 1.0, 0.25)
    iq = np.linalg.inv(q)
    Ls = L.schrodinger()
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    ref = -iq @ Ls(q @ Y @ q) @ iq
    np.testing.assert_allclose(Hd @ Y.reshape(-1), ref.reshape(-1), atol=1e-12)


def test_purified_state_at_infinite_temperature():
    H = make_model("tfim", 2)
    np.testing.assert_allclose(purified_gibbs(H, 0.0), np.eye(4).reshape(-1) / 2, atol=1e-14)
    near = purified_gibbs(H, 1e-3)
    assert abs(np.vdot(near, np.eye(4).reshape(-1) / 2)) > 1 - 1e-6


def test_purified_state_reduces_to_gibbs():
    H = make_model("tfim", 2)
    psi = purified_gibbs(H, 1.0)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(reduced_state(psi, 4), oracles.gibbs_power(H.matrix, 1.0, 1), atol=1e-10)


def test_purified_overlap_identity():
    H = make_model("random", 2, seed=1)
    psi = purified_gibbs(H, 1.0)
    rho = oracles.gibbs_power(H.matrix, 1.0, 1)
    X = np.kron(PAULI["X"], PAULI["Z"])
    lhs = np.vdot(psi, np.kron(X, np.eye(4)) @ psi)
    assert lhs == pytest.approx(np.trace(rho @ X), abs=1e-12)


def test_filter_sum_and_rate():
    f = QuasiAdiabaticFilter(2.0, order=50)
    assert f.a == pytest.approx(2.0 / (2 * _filter_sum(50)), rel=1e-15)
    assert f.rates[0] == f.a and f.rates[1] == pytest.approx(f.a / (2 * np.log(2) ** 2))
    assert 2 * f.rates.sum() == pytest.approx(2.0, rel=1e-12)


def test_filter_normalisation_and_support(filt):
    assert filt.step * filt.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert filt.transform(0.0)[0] == pytest.approx(1.0, abs=1e-8)
    assert filt.spectral_leakage() < 1e-6
    assert np.all(filt.transform([1.0, 1.5, -3.0]) == 0.0)
    assert filt.l1() == pytest.approx(1.0, abs=1e-9)  # w is non-negative


def test_filter_is_even_and_matches_product(filt):
    t = np.array([0.3, 2.0, 7.5])
    np.testing.assert_allclose(filt(t), filt(-t))
    direct = filt.c * np.prod([(np.sin(a * t) / (a * t)) ** 2 for a in filt.rates], axis=0)
    np.testing.assert_allclose(filt(t), direct, rtol=1e-10)


def test_filter_kernel_outside_band(filt):
    # past the band edge the transform vanishes and the kernel is i/delta
    d = np.array([2.0, -3.5, 0.0])
    np.testing.assert_allclose(filt.kernel(d), [1j / 2.0, 1j / -3.5, 0.0], atol=1e-12)


def test_filter_rejects_bad_gap():
    with pytest.raises(ValueError):
        QuasiAdiabaticFilter(0.0)


def test_constant_path_gives_zero_generator(filt):
    Hs = np.diag([0.0, 1.5, 2.0])
    W, r = quasi_adiabatic_W(Hs, np.zeros((3, 3)), filt)
    assert np.abs(W).max() == 0 and r == 0


def test_degenerate_ground_state_rejected(filt):
    with pytest.raises(DegenerateError):
        quasi_adiabatic_W(np.diag([0.0, 0.0, 1.0]), np.eye(3), filt)


def test_two_level_generator_matches_spectral_flow(filt):
    # H(s) = cos(theta) Z + sin(theta) X, gap 2 > filter band 1
    theta = lambda s: 0.3 + 1.1 * s
    H = lambda s: np.cos(theta(s)) * PAULI["Z"] + np.sin(theta(s)) * PAULI["X"]

    def proj(s):
        _, V = np.linalg.eigh(H(s))
        return np.outer(V[:, 0], V[:, 0].conj())

    s, h = 0.4, 1e-5
    dH = (H(s + h) - H(s - h)) / (2 * h)
    dP = (proj(s + h) - proj(s - h)) / (2 * h)
    W, resid = quasi_adiabatic_W(H(s), dH, filt)
    _, V = np.linalg.eigh(H(s))
    g = V[:, 0]
    P = proj(s)
    assert resid < 1e-10
    # dpsi/ds = i W psi must reproduce the parallel-transport velocity [dP, P] psi
    np.testing.assert_allclose(1j * W @ g, (dP @ P - P @ dP) @ g, atol=1e-4)


def test_parent_derivative_against_coarse_difference():
    H = make_model("tfim", 2)
    d = parent_derivative(H, 1.0, "gaussian")
    from gibbslab.adiabatic import _parent

    coarse = (_parent(H, 1.001, "gaussian") - _parent(H, 0.999, "gaussian")) / 0.002
    np.testing.assert_allclose(d, coarse, atol=1e-5)
    with pytest.raises(ValueError):
        parent_derivative(H, 5e-5, "gaussian")


def test_schedule_is_linear():
    s = Schedule(0.001, 2.0, 10)
    assert s.beta(0.0) == 0.001 and s.beta(1.0) == 2.0
    assert s.beta(0.5) == pytest.approx(1.0005)
    assert s.speed == pytest.approx(1.999)


def test_trivial_schedule_keeps_fidelity_one():
    H = make_model("tfim", 2)
    sched = Schedule(1e-3, 1e-3, 5)
    res = adiabatic_run(H, sched, filt=QuasiAdiabaticFilter(0.5))
    assert res.fidelity == pytest.approx(1.0, abs=1e-12)


def test_short_run_tracks_ground_state():
    H = make_model("tfim", 2)
    sched = Schedule(1e-3, 1.0, 100)
    res = adiabatic_run(H, sched, prescan_points=11)
    assert res.unitarity < 1e-8 and res.hermiticity < 1e-6
    assert res.leakage < 1e-6
    assert res.fidelity > 0.99 and res.passed
    assert len(res.trace) == 100
    # ground-state tracking: the final energy is close to zero
    assert res.energies[-1] < 1e-3
    assert 0 < res.filter_gap <= 0.9 * gap_prescan(H, sched, points=11) + 1e-12


def test_spectral_flow_oracle_reaches_target():
    H = make_model("tfim", 2)
    sched = Schedule(1e-3, 1.0, 20)
    psi = spectral_flow(H, sched)
    assert abs(np.vdot(psi, purified_gibbs(H, 1.0))) == pytest.approx(1.0, abs=1e-9)


def test_parent_shells_vanish_for_commuting_chain():
    H = make_model("ising", 4)
    c = parent_decay_profile(H, LindbladSpec(1.0), site=1)
    assert c.values[0] > 1e-3
    assert max(c.values[1:]) < 1e-9


def test_parent_shells_decrease_tfim():
    c = parent_decay_profile(make_model("tfim", 5), LindbladSpec(1.0), site=1)
    assert list(c.abscissa) == [1.0, 2.0, 3.0, 4.0]
    assert c.decreasing(allowed=0)
    with pytest.raises(ChainError):
        parent_decay_profile(make_model("tfim", 3), LindbladSpec(1.0), site=4)
