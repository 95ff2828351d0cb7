"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import time
from pathlib import Path

import numpy as np
import pytest

from gibbslab.adiabatic import Schedule, adiabatic_run
from gibbslab.algebra import gibbs, random_operator
from gibbslab.chain import embed, make_model
from gibbslab.clustering import (
    island_scan,
    strong_clustering_scan,
    tripartition_scan,
    weak_clustering_scan,
)
from gibbslab.condexp import truncation_error_scan
from gibbslab.gapanalysis import compare, gap_report
from gibbslab.harness import emit, load_config, run
from gibbslab.kgen import build_k, conditional_gap, depolarizing_gap, gap_product_check
from gibbslab.lindblad import LindbladSpec, build_lindbladian, gap, jump_operators, weight
from gibbslab.locality import annulus, complex_norm_bound, evolve, expansional, expansional_bound

import oracles
from oracles import PAULI

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# First implementation run, TFIM, beta = 1, Metropolis; non-paper reference values.
GOLDEN_PLATEAU = {
    2: (1.1417302610235303, 4.124923600449282, 5.009438964159303),
    3: (1.0323812788547355, 3.0578802568691374, 7.238522708525868),
    4: (0.9150498569613459, 2.5847102511669595, 8.099745604382857),
    5: (0.8439984999443038, 2.320100135557908, 8.602072923980543),
}
GOLDEN_REL = 1e-6


def _texts(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.fixture(scope="module")
def identity_first_run(tmp_path_factory):
    cfg = load_config(CONFIGS / "identity_suite.yaml")
    t0 = time.perf_counter()
    bundle = run(cfg)
    elapsed = time.perf_counter() - t0
    out = tmp_path_factory.mktemp("identity_a")
    emit(bundle, out)
    return cfg, bundle, elapsed, _texts(out)


def test_criterion_1_identity_suite(identity_first_run, verdict):
    cfg, bundle, elapsed, _ = identity_first_run
    task = bundle.tasks[0]
    failed = task.payload["failed"]
    worst = max(r[7] / r[8] for r in task.rows)
    ok = bundle.ok and not failed and elapsed < 300
    verdict(1, ok, f"{len(task.rows)} checks, {len(failed)} failed, worst residual/tol {worst:.2e}, {elapsed:.1f}s")
    assert ok, failed[:5]


def _annulus_ops(rng):
    single = embed(PAULI["X"] + 0.5 * PAULI["Z"], 4, 8)
    pair = np.kron(np.kron(np.eye(8), random_operator(4, rng)), np.eye(8))
    return [single, pair]


def test_criterion_2_bound_suite(verdict):
    rng = np.random.default_rng(2024)
    zs = [0.25, 0.5, 1.0, 0.05j, 0.1j, 0.3j, 0.1 + 0.1j, 0.2 + 0.1j]
    checked, bad = 0, []
    for model in ("tfim", "xxz", "random", "ising"):
        H = make_model(model, 8, seed=3)
        for O in _annulus_ops(rng):
            O = O / np.linalg.norm(O, 2)
            for z in zs:
                dec = annulus(H, O, z)
                checked += 2 * len(dec.shells)
                bad += [(model, z, *v) for v in dec.violations()]
                if dec.completeness() > 1e-9:
                    bad.append((model, z, "completeness"))
                if np.imag(z) != 0:
                    width = dec.support[1] - dec.support[0]
                    checked += 1
                    if np.linalg.norm(evolve(H, O, z), 2) > complex_norm_bound(z, width) * (1 + 1e-9):
                        bad.append((model, z, "norm"))
        for A, B in (([1, 2, 3, 4], [5, 6, 7, 8]), ([1, 2, 3], [4, 5, 6, 7, 8])):
            for z in (0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 0.1 + 0.05j):
                _, nrm = expansional(H, A, B, z)
                checked += 1
                if not nrm <= expansional_bound(z) * (1 + 1e-9):
                    bad.append((model, z, "expansional"))
    ok = not bad
    verdict(2, ok, f"{checked} bound checks on n=8, {len(bad)} violations")
    assert ok, bad[:5]


def test_criterion_3_depolarizing(verdict):
    g1 = conditional_gap(build_k(make_model("tfim", 2), 0.0, [1])).gap
    g2 = conditional_gap(build_k(make_model("random", 2, q=2, seed=0), 0.0, [1])).gap
    rng = np.random.default_rng(3)
    worst = np.inf
    for k in range(500):
        q = 2 if k % 10 == 0 else 1
        n = 2 if q == 2 else 2 + k % 2
        R = [1] if (k % 3 or q == 2) else [1, 2]
        sigma = oracles.random_density(2 ** (q * (n - len(R))), rng)
        lhs, rhs = gap_product_check(random_operator(2 ** (q * n), rng), R, sigma, n, q)
        worst = min(worst, (lhs - rhs) / max(rhs, 1e-300))
    ok = (abs(g1 - depolarizing_gap(1)) < 1e-10 and abs(g2 - depolarizing_gap(2)) < 1e-10
          and depolarizing_gap(1) == 8 and depolarizing_gap(2) == 32 and worst >= -1e-10)
    verdict(3, ok, f"gap q=1 {g1:.12g}, q=2 {g2:.12g}, min relative slack over 500 ops {worst:.3e}")
    assert ok


def test_criterion_4_dirichlet_comparison(verdict):
    bad, count, gaps = [], 0, {}
    for model in ("tfim", "xxz", "random"):
        for seed in (0, 1, 2):
            for n in (2, 3, 4):
                H = make_model(model, n, seed=seed)
                for beta in (0.2, 1.0, 2.0):
                    st = gibbs(H, beta)
                    for kind in ("metropolis", "gaussian"):
                        L = build_lindbladian(H, LindbladSpec(beta, None, kind), st)
                        c = compare(L)
                        count += 1
                        gaps[(model, seed, n, beta, kind)] = c.lambda_l
                        if not (c.kernel_angle < 1e-8 and np.isfinite(c.alpha)
                                and c.lambda_l >= c.lambda_k / c.alpha - 1e-9):
                            bad.append((model, seed, n, beta, kind, c))
    order = [k[:4] for k in gaps if k[4] == "metropolis" and gaps[k] < gaps[(*k[:4], "gaussian")]]
    ok = not bad and not order
    verdict(4, ok, f"{count} configurations, {len(bad)} comparison failures, {len(order)} Metropolis<Gaussian")
    assert ok, (bad[:3], order[:3])


def _quantum_curves(H):
    st = gibbs(H, 1.0)
    return {
        "weak": weak_clustering_scan(H, 1.0, [1, 2, 3, 4, 5], state=st),
        "strong": strong_clustering_scan(H, 1.0, [1, 2, 3, 4], state=st),
        "local_indistinguishability": tripartition_scan(H, 1.0, [1, 2, 3, 4], "local_indistinguishability"),
        "partition_ratio": tripartition_scan(H, 1.0, [1, 2, 3, 4], "partition_ratio"),
        "island": island_scan(H, 1.0, 2, [0, 1, 2], state=st),
        "e_truncation": truncation_error_scan(H, 1.0, [3, 4], [0, 1, 2], state=st),
    }


def test_criterion_5_decay_suites(verdict):
    failures = []
    for model in ("tfim", "random"):
        for name, c in _quantum_curves(make_model(model, 6, seed=0)).items():
            if not c.decreasing(allowed=1):
                failures.append(f"{model} {name} inversions={c.inversions()}")

    Hc = make_model("ising", 6)
    st = gibbs(Hc, 1.0)
    weak = weak_clustering_scan(Hc, 1.0, [1, 2, 3, 4, 5], state=st)
    rate = weak.fit_exponential().rate
    expected = -np.log(np.tanh(1.0))
    if abs(rate - expected) > 0.02 * expected:
        failures.append(f"ising weak rate {rate} vs {expected}")
    for q in ("partition_ratio", "local_indistinguishability"):
        v = max(tripartition_scan(Hc, 1.0, [1, 2, 3, 4], q).values)
        if v > 1e-12:
            failures.append(f"ising {q} {v:.3e}")
    trunc = truncation_error_scan(Hc, 1.0, [3], [1, 2], state=st)
    if max(trunc.values) > 1e-12:
        failures.append(f"ising e_truncation {max(trunc.values):.3e}")
    isl = island_scan(Hc, 1.0, 2, [2], state=st).values[0]
    if isl > 1e-6:
        failures.append(f"ising island buffer 2 {isl:.3e}")
    strong3 = strong_clustering_scan(Hc, 1.0, [3], state=st).values[0]
    if strong3 > 1e-6:
        failures.append(f"ising strong |B|=3 {strong3:.6f} (tanh(1)^4 = {np.tanh(1.0) ** 4:.6f})")
    ok = not failures
    verdict(5, ok, "all decay and commuting checks hold" if ok else "; ".join(failures))
    assert ok, failures


def test_criterion_6_adiabatic(verdict):
    H = make_model("tfim", 2)
    fid = {k: adiabatic_run(H, Schedule(1e-3, 1.0, k)).fidelity for k in (100, 200, 400)}
    monotone = fid[100] <= fid[200] <= fid[400]
    ok = fid[400] >= 0.99 and monotone
    verdict(6, ok, "infidelity " + ", ".join(f"{k}: {1 - v:.2e}" for k, v in fid.items()))
    assert ok, fid


def _oracle_gap(H, beta):
    sigma = 1 / beta
    L = build_lindbladian(H, LindbladSpec(beta))
    jumps = [op for _, _, op in jump_operators(H, L.spec)]
    M = oracles.lindblad_oracle(H.matrix, beta, sigma, lambda w: weight("metropolis", beta, sigma, w), jumps,
                                points=20001)
    ev = np.sort(np.linalg.eigvals(M).real)[::-1]
    return -ev[1]


def test_criterion_7_gap_plateau(verdict):
    t0 = time.perf_counter()
    bad, gaps = [], {}
    for n, (gl, gk, ga) in GOLDEN_PLATEAU.items():
        r = gap_report(make_model("tfim", n), LindbladSpec(1.0))
        gaps[n] = r.lambda_l
        for got, want, name in ((r.lambda_l, gl, "lambda_L"), (r.lambda_k, gk, "lambda_K"), (r.alpha, ga, "alpha")):
            if not abs(got - want) <= GOLDEN_REL * abs(want):
                bad.append(f"n={n} {name} {got!r} vs golden {want!r}")
        if r.lambda_l <= 0:
            bad.append(f"n={n} gap not positive")
    elapsed = time.perf_counter() - t0
    ref = _oracle_gap(make_model("tfim", 2), 1.0)
    if abs(ref - gaps[2]) > 1e-6 * gaps[2]:
        bad.append(f"n=2 oracle gap {ref!r} vs {gaps[2]!r}")
    ok = not bad and elapsed < 1200
    detail = ", ".join(f"n={n}: {g:.8f}" for n, g in gaps.items()) + f"; {elapsed:.1f}s"
    verdict(7, ok, detail if ok else detail + "; " + "; ".join(bad))
    assert ok, bad


def test_criterion_8_determinism(identity_first_run, tmp_path, verdict):
    cfg, _, _, first = identity_first_run
    mismatched, compared = [], 0
    second = tmp_path / "identity_b"
    emit(run(cfg), second)
    compared += len(first)
    if _texts(second) != first:
        mismatched.append("identity_suite")
    for path in sorted(CONFIGS.glob("*.yaml")):
        if path.name == "identity_suite.yaml":
            continue
        c = load_config(path)
        a, b = tmp_path / f"{path.stem}_a", tmp_path / f"{path.stem}_b"
        emit(run(c), a)
        emit(run(c), b)
        ta = _texts(a)
        compared += len(ta)
        if ta != _texts(b):
            mismatched.append(path.stem)
    from dataclasses import replace

    smoke = load_config(CONFIGS / "smoke.yaml")
    emit(run(replace(smoke, jobs=2)), tmp_path / "smoke_pool")
    if _texts(tmp_path / "smoke_pool") != _texts(tmp_path / "smoke_a"):
        mismatched.append("smoke jobs=2")
    ok = not mismatched
    verdict(8, ok, f"{compared} files byte-compared across reruns, mismatches: {mismatched or 'none'}")
    assert ok, mismatched
