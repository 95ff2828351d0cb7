import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from gibbslab.algebra import IdentityViolation, gibbs, induced_norm, random_operator, unvec, vec
from gibbslab.chain import Region, embed, make_model, single_site_paulis
from gibbslab.condexp import (
    ExpectationFamily,
    check,
    cond_expectation,
    conditional_covariance,
    conditional_variance,
    consistency_residual,
    distance,
    evolve_k,
    finite_time,
    finite_time_error,
    full_variance,
    in_image,
    lr_speed,
    truncated_expectation,
    truncation_error_scan,
)
from gibbslab.kgen import build_k

import oracles
from oracles import PAULI

X, Y, Z = PAULI["X"], PAULI["Y"], PAULI["Z"]


@pytest.mark.parametrize("model", ["tfim", "random"])
@pytest.mark.parametrize("R", [[1], [2, 3], [1, 3]])
def test_basis_route_matches_gram_oracle(model, R):
    H = make_model(model, 3, seed=2)
    E = cond_expectation(H, R, beta=1.0)
    oracle = oracles.kms_projection(H.matrix, 1.0, 3, R)
    rng = np.random.default_rng(0)
    for _ in range(3):
        O = random_operator(8, rng)
        np.testing.assert_allclose(E(O), oracle(O), atol=1e-10)


@pytest.mark.parametrize("model", ["xxz", "random"])
def test_full_chain_expectation_is_trace(model):
    H = make_model(model, 3, seed=1)
    s = gibbs(H, 1.0)
    E = cond_expectation(H, [1, 2, 3], s)
    O = random_operator(8, np.random.default_rng(3))
    np.testing.assert_allclose(E(O), s.expect(O) * np.eye(8), atol=1e-12)
    assert s.expect(O) == pytest.approx(np.trace(s.rho @ O), abs=1e-14)


@given(st.sampled_from(["tfim", "xxz", "random"]), st.sampled_from([0.2, 1.0, 2.0]),
       st.lists(st.integers(1, 4), min_size=1, max_size=3, unique=True), st.integers(0, 100))
def test_invariants_and_route_agreement(model, beta, R, seed):
    H = make_model(model, 4, seed=seed)
    s = gibbs(H, beta)
    Eb = cond_expectation(H, R, s, route="basis")
    res = check(Eb)
    assert res["projective"] < 1e-9 and res["unital"] < 1e-9
    Es = cond_expectation(H, R, s, route="spectral")
    assert distance(Eb, Es) < 1e-8


def test_routes_at_n5():
    H = make_model("random", 5, seed=0)
    s = gibbs(H, 1.0)
    for R in ([3], [2, 3, 4]):
        assert distance(cond_expectation(H, R, s), cond_expectation(H, R, s, route="spectral")) < 1e-8


def test_norm_and_consistency():
    H = make_model("tfim", 4)
    fam = ExpectationFamily(H, gibbs(H, 1.0))
    assert induced_norm(fam[[2]].superop()) == pytest.approx(1.0, abs=1e-10)
    assert consistency_residual(fam[[2]], fam[[1, 2, 3]]) < 1e-9
    assert consistency_residual(fam[[1, 2, 3]], fam[[2]]) > 1e-3
    assert fam[[2]] is fam[Region.of([2])]


def test_check_names_violated_identity():
    H = make_model("tfim", 2)
    E = cond_expectation(H, [1], beta=1.0)
    bad = type(E)(E.region, E.state, E.route, 2 * E.left, E.right)
    with pytest.raises(IdentityViolation, match="projectivity"):
        check(bad)


def test_image_characterisation():
    H = make_model("random", 3, seed=5)
    E = cond_expectation(H, [2], beta=1.0)
    for _, _, P in single_site_paulis(3, 1, [1, 3]):
        assert in_image(E, P) < 1e-10
    for _, _, P in single_site_paulis(3, 1, [2]):
        assert in_image(E, P) > 1e-3


def test_finite_time_against_expm():
    H = make_model("tfim", 2)
    K = build_k(H, 1.0, [1])
    O = random_operator(4, np.random.default_rng(4))
    for t in (0.0, 0.1, 0.7):
        want = unvec(expm(t * K.superop().matrix) @ vec(O))
        np.testing.assert_allclose(finite_time(K, t)(O), want, atol=1e-10)
        for got in evolve_k(K, O, [t]):
            np.testing.assert_allclose(got, want, atol=1e-9)


def test_finite_time_error_examples():
    H = make_model("random", 3, seed=1)
    K = build_k(H, 1.0, [2])
    assert finite_time_error(K, 0.0) == pytest.approx(1.0)
    gap = K.spectrum()[K.spectrum() > 1e-8].min()
    assert finite_time_error(K, 40 / gap) < 1e-15
    K0 = build_k(H, 0.0, [2])
    for t in (0.05, 0.3, 1.0):
        assert finite_time_error(K0, t) == pytest.approx(np.exp(-8 * t), rel=1e-9)
    with pytest.raises(ValueError):
        finite_time(K, -1.0)


def test_truncation_examples():
    H = make_model("tfim", 4)
    s = gibbs(H, 1.0)
    exact = cond_expectation(H, [2], s)
    assert distance(exact, truncated_expectation(H, [2], [1, 2, 3, 4], s)) < 1e-9
    Hc = make_model("ising", 5)
    sc = gibbs(Hc, 1.0)
    assert distance(cond_expectation(Hc, [3], sc), truncated_expectation(Hc, [3], [2, 3, 4], sc)) < 1e-9
    with pytest.raises(ValueError):
        truncated_expectation(H, [1], [2, 3], s)


def test_truncation_scan_tfim_n6():
    curve = truncation_error_scan(make_model("tfim", 6), 1.0, [3, 4], [0, 1, 2])
    assert all(b < a for a, b in zip(curve.y, curve.y[1:]))
    np.testing.assert_allclose(curve.y[:2], [1.90881827, 0.185942838], rtol=1e-6)
    assert curve.y[2] < 1e-12


def test_variance_examples():
    H = make_model("random", 3, seed=8)
    s = gibbs(H, 1.0)
    E = cond_expectation(H, [2], s)
    rng = np.random.default_rng(8)
    O = random_operator(8, rng)
    assert conditional_variance(E, E(O)) < 1e-20
    assert conditional_covariance(E, O, O).real == pytest.approx(conditional_variance(E, O), rel=1e-12)
    full = cond_expectation(H, [1, 2, 3], s)
    assert conditional_variance(full, O) == pytest.approx(full_variance(s, O), rel=1e-10)
    for R in ([1], [2, 3], [1, 3]):
        assert full_variance(s, O) >= conditional_variance(cond_expectation(H, R, s), O) * (1 - 1e-12)


def test_lr_speed_grid():
    H = make_model("tfim", 5)
    r = lr_speed(H, 1.0, 1, [1, 2, 3], [0.0, 0.5, 1.0, 2.0])
    for b in (1, 2, 3):
        assert r["lhs"][b][0] == 0.0
        assert all(y > x for x, y in zip(r["lhs"][b][1:], r["lhs"][b][2:]))
    for k in (1, 2, 3):
        assert r["lhs"][1][k] > r["lhs"][2][k] > r["lhs"][3][k]
    assert r["fit"]["holds"] and r["observables"] == "single-site Paulis on site 1"
    with pytest.raises(ValueError):
        lr_speed(H, 1.0, 1, [4], [0.5])


def test_lr_speed_commuting_far_edge():
    # the imaginary-time dressed jumps spread support even when H commutes,
    # so the signal is nonzero; it still shrinks with |B|
    r = lr_speed(make_model("ising", 6), 1.0, 2, [1, 2], [0.0, 0.5, 1.0, 2.0], edge="far")
    assert r["lhs"][1][0] == 0.0
    assert all(a > b for a, b in zip(r["lhs"][1][1:], r["lhs"][2][1:]))


def test_product_of_expectations_factorises_with_distance():
    H = make_model("tfim", 5)
    fam = ExpectationFamily(H, gibbs(H, 1.0))
    res = [distance(fam[[1]].then(fam[[c]]), fam[[1, c]]) for c in (2, 3, 4, 5)]
    assert all(b < a for a, b in zip(res, res[1:]))


@pytest.mark.slow
def test_product_of_expectations_n6_max_separation():
    H = make_model("tfim", 6)
    fam = ExpectationFamily(H, gibbs(H, 1.0))
    assert distance(fam[[1]].then(fam[[6]]), fam[[1, 6]]) < 1e-2
