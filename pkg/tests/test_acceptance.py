"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
per-criterion lines for passing tests too).
"""

import time

import numpy as np
import pytest

from conftest import normalized_gaussian_design, orthogonal_design
from sparse_csg import (
    BgcpConfig,
    CoalitionUniverse,
    EpisodeBatch,
    GroundTruth,
    LassoConfig,
    RunRecord,
    ValueFunction,
    bgcp,
    emit_outputs,
    generate_design,
    gram_deviation,
    kkt_residual,
    lasso,
    mutual_coherence,
    pipeline_bgcp,
    preset,
    random_partition,
    rate_fit,
    regime_report,
    run_experiment,
    solve_csg_bruteforce,
    solve_csg_dp,
    validate_structure,
    welfare_lipschitz_check,
)
from sparse_csg.generation import DesignConfig


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion} failed: {detail}"


@pytest.fixture(scope="module")
def sparse_run():
    """One full sparse-preset experiment, shared by criteria 8 and 9."""
    cfg = preset("sparse")
    start = time.perf_counter()
    records = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    return cfg, records, elapsed


def test_criterion_1_noiseless_bgcp_exact_recovery():
    rng = np.random.default_rng(1001)
    m, k, t = 100, 4, 2000
    start = time.perf_counter()
    kept = recovered = 0
    for _ in range(100):
        x = normalized_gaussian_design(t, m, rng)
        if mutual_coherence(x) >= 1.0 / (2 * k - 1):
            continue
        kept += 1
        support = np.sort(rng.choice(m, size=k, replace=False))
        theta = np.zeros(m)
        theta[support] = rng.uniform(1.0, 2.0, size=k) * rng.choice([-1.0, 1.0], size=k)
        batch = EpisodeBatch(design=x, response=x @ theta, column_normalised=True)
        result, _ = bgcp(batch, BgcpConfig(k_max=k))
        recovered += result.support_hat == tuple(int(j) for j in support)
    elapsed = time.perf_counter() - start
    ok = kept >= 50 and recovered == kept and elapsed < 10
    _report(1, ok, f"recovered {recovered}/{kept} kept instances in {elapsed:.1f}s")


def test_criterion_2_noisy_bgcp_recovery_frequency():
    rng = np.random.default_rng(2002)
    m, k, sigma = 200, 5, 0.5
    start = time.perf_counter()
    freqs = {}
    for t in (125, 250, 500):
        theta_min = 3 * sigma * np.sqrt(np.log(m) / t)
        hits = 0
        for _ in range(200):
            x = normalized_gaussian_design(t, m, rng)
            support = np.sort(rng.choice(m, size=k, replace=False))
            theta = np.zeros(m)
            theta[support] = rng.uniform(theta_min, 2 * theta_min, size=k) * rng.choice(
                [-1.0, 1.0], size=k
            )
            eps = rng.normal(0, sigma, t)
            batch = EpisodeBatch(design=x, response=x @ theta + eps, noise=eps,
                                 column_normalised=True)
            result, _ = bgcp(batch, BgcpConfig(k_max=k))
            hits += result.support_hat == tuple(int(j) for j in support)
        freqs[t] = hits / 200
    elapsed = time.perf_counter() - start
    non_decreasing = freqs[250] >= freqs[125] - 0.05 and freqs[500] >= freqs[250] - 0.05
    ok = all(f >= 0.9 for f in freqs.values()) and non_decreasing and elapsed < 120
    _report(2, ok, f"recovery freqs {freqs} in {elapsed:.1f}s")


def test_criterion_3_lasso_kkt_and_cone():
    rng = np.random.default_rng(3003)
    m, t, k, sigma = 60, 150, 4, 0.5
    lam = 4 * sigma * np.sqrt(np.log(m) / t)
    kkt_ok = runs = event_runs = cone_ok = 0
    for _ in range(100):
        x = normalized_gaussian_design(t, m, rng)
        support = rng.choice(m, size=k, replace=False)
        theta = np.zeros(m)
        theta[support] = rng.uniform(0.8, 1.6, size=k) * rng.choice([-1.0, 1.0], size=k)
        eps = rng.normal(0, sigma, t)
        batch = EpisodeBatch(design=x, response=x @ theta + eps, noise=eps,
                             column_normalised=True)
        result = lasso(batch, LassoConfig(lam=lam, tol=1e-8))
        if not result.tuning["converged"]:
            continue
        runs += 1
        kkt_ok += kkt_residual(x, batch.response, result.theta_hat, lam) <= 1e-6
        if np.max(np.abs(x.T @ eps)) / t <= lam / 2:
            event_runs += 1
            delta = result.theta_hat - theta
            on = np.zeros(m, dtype=bool)
            on[support] = True
            cone_ok += np.sum(np.abs(delta[~on])) <= 3 * np.sum(np.abs(delta[on])) + 1e-6
    ok = runs >= 90 and kkt_ok == runs and event_runs >= 30 and cone_ok / event_runs >= 0.99
    _report(3, ok, f"KKT {kkt_ok}/{runs} converged runs; cone {cone_ok}/{event_runs} event runs")


def test_criterion_4_lasso_l2_rate():
    rng = np.random.default_rng(4004)
    m, k, sigma, reps = 200, 5, 1.0, 50
    start = time.perf_counter()
    records = []
    for t in (200, 400, 800, 1600):
        for rep in range(reps):
            x = normalized_gaussian_design(t, m, rng)
            support = rng.choice(m, size=k, replace=False)
            theta = np.zeros(m)
            theta[support] = rng.uniform(1.0, 2.0, size=k) * rng.choice([-1.0, 1.0], size=k)
            eps = rng.normal(0, sigma, t)
            batch = EpisodeBatch(design=x, response=x @ theta + eps, noise=eps,
                                 column_normalised=True)
            result = lasso(batch, LassoConfig())  # automatic lambda
            records.append(
                RunRecord(
                    replication=rep, seed=rep, episodes=t, method="LASSO", status="ok",
                    support_recovered=None,
                    l2_error=float(np.linalg.norm(result.theta_hat - theta)),
                    l1_error=None, prediction_error=None, false_positives=None,
                    welfare_gap=None, coherence=None, coherence_condition_met=None,
                )
            )
    fit = rate_fit(records, "l2_error", "LASSO")
    elapsed = time.perf_counter() - start
    ok = -0.65 <= fit.slope <= -0.35 and elapsed < 300
    _report(4, ok, f"l2-error slope {fit.slope:.3f} (r2={fit.r_squared:.3f}) in {elapsed:.1f}s")


def test_criterion_5_orthogonal_lasso_closed_form():
    rng = np.random.default_rng(5005)
    worst = 0.0
    for _ in range(50):
        t = int(rng.integers(20, 60))
        m = int(rng.integers(5, min(t, 20)))
        x = orthogonal_design(t, m, rng)
        theta = rng.normal(size=m) * (rng.random(m) < 0.5)
        y = x @ theta + rng.normal(0, 0.3, t)
        batch = EpisodeBatch(design=x, response=y, column_normalised=True)
        lam = float(rng.uniform(0.02, 0.3))
        result = lasso(batch, LassoConfig(lam=lam, tol=1e-12))
        rho = x.T @ y / t
        closed = np.sign(rho) * np.maximum(np.abs(rho) - lam, 0.0)
        worst = max(worst, float(np.max(np.abs(result.theta_hat - closed))))
    ok = worst <= 1e-8
    _report(5, ok, f"max deviation from soft-threshold solution {worst:.2e}")


def test_criterion_6_csg_solver_equivalence():
    rng = np.random.default_rng(6006)
    start = time.perf_counter()
    checked = 0
    for n in range(2, 9):
        universe = CoalitionUniverse.all_up_to_size(n, n)
        for _ in range(500):
            values = {j: float(v) for j, v in enumerate(rng.normal(size=universe.m))}
            if rng.random() < 0.25:
                keep = rng.choice(universe.m, size=max(1, universe.m // 5), replace=False)
                values = {int(j): values[int(j)] for j in keep}
            vf = ValueFunction(universe=universe, values=values)
            a = solve_csg_dp(vf)
            b = solve_csg_bruteforce(vf)
            assert vf.total(a.blocks) == vf.total(b.blocks), (n, values)
            assert a.blocks == b.blocks, (n, values)
            checked += 1
    elapsed = time.perf_counter() - start
    ok = checked == 3500 and elapsed < 60
    _report(6, ok, f"DP == brute force on {checked} instances in {elapsed:.1f}s")


def test_criterion_7_end_to_end_bgcp_welfare_optimality():
    rng = np.random.default_rng(7007)
    universe = CoalitionUniverse.all_up_to_size(12, 3)
    m, k, t = universe.m, 4, 2000
    kept = zero_gap = 0
    for _ in range(40):
        x = normalized_gaussian_design(t, m, rng)
        if mutual_coherence(x) >= 1.0 / (2 * k - 1):
            continue
        kept += 1
        support = np.sort(rng.choice(m, size=k, replace=False))
        theta = np.zeros(m)
        theta[support] = rng.uniform(0.5, 2.0, size=k)
        truth = GroundTruth(theta_star=theta, support=tuple(int(j) for j in support),
                            sparsity=k, theta_min=0.5)
        batch = EpisodeBatch(design=x, response=x @ theta, column_normalised=True)
        out = pipeline_bgcp(batch, universe, BgcpConfig(k_max=k), truth_for_eval=truth)
        zero_gap += abs(out.welfare_gap) <= 1e-9
    ok = kept >= 20 and zero_gap == kept
    _report(7, ok, f"zero welfare gap on {zero_gap}/{kept} kept instances (m={m})")


def test_criterion_8_regime_ordering(sparse_run):
    cfg, records, elapsed = sparse_run
    universe = cfg.universe.build(cfg.master_seed)
    report = regime_report(records)
    ordering = report["ordering"]
    ordered = len(ordering) == len(cfg.t_grid) and all(f["ordered"] for f in ordering)
    ill_flags = {
        (c["T"], c["ill_posed"]) for c in report["cells"] if c["method"] == "DLS"
    }
    dls_ok = all(flag == (t < universe.m) for t, flag in ill_flags)
    ok = ordered and dls_ok and elapsed < 600
    meds = {
        (c["method"], c["T"]): c["median_welfare_gap"]
        for c in report["cells"] if c["method"] in ("BGCP", "LASSO", "EPC")
    }
    _report(8, ok, f"ordering at all T={cfg.t_grid}, DLS flags {sorted(ill_flags)}, "
                   f"medians {meds}, {elapsed:.1f}s")


def test_criterion_9_epc_gap_decay(sparse_run):
    cfg, records, _ = sparse_run
    assert cfg.design.row_cap >= 5
    report = regime_report(records)
    epc_medians = {
        c["T"]: c["median_welfare_gap"] for c in report["cells"] if c["method"] == "EPC"
    }
    positive = all(v is not None and v > 0 for v in epc_medians.values())
    fit = rate_fit(records, "welfare_gap", "EPC")
    ok = positive and -0.8 <= fit.slope <= -0.2
    _report(9, ok, f"EPC medians {epc_medians}, slope {fit.slope:.3f}")


def test_criterion_10_gram_concentration():
    m, p = 100, 0.2
    sigma_pop = np.full((m, m), p * p)
    np.fill_diagonal(sigma_pop, p)
    medians = {}
    for t in (1000, 4000, 16000):
        devs = []
        for s in range(30):
            x, _ = generate_design(
                DesignConfig(m=m, episodes=t, activation_probs=p, row_cap=m,
                             normalise_columns=False, seed=5000 + s)
            )
            devs.append(gram_deviation(x, sigma_pop))
        medians[t] = float(np.median(devs))
    slope = float(np.polyfit(np.log(list(medians)), np.log(list(medians.values())), 1)[0])
    ok = -0.65 <= slope <= -0.35
    _report(10, ok, f"gram deviation medians {medians}, slope {slope:.3f}")


def test_criterion_11_welfare_lipschitz():
    rng = np.random.default_rng(11011)
    failures = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 8))
        universe = CoalitionUniverse.all_up_to_size(n, n)
        structure = validate_structure(random_partition(n, rng), universe)
        scale = 10.0 ** int(rng.integers(-2, 3))
        a = rng.normal(size=universe.m) * scale
        b = rng.normal(size=universe.m) * scale
        gap, bound = welfare_lipschitz_check(structure, a, b)
        failures += gap > bound
    ok = failures == 0
    _report(11, ok, f"{failures} violations over 10000 randomized triples")


def test_criterion_12_determinism(tmp_path):
    cfg = preset("sparse")
    first = emit_outputs(run_experiment(cfg), {}, tmp_path / "run1", config=cfg)
    second = emit_outputs(run_experiment(cfg), {}, tmp_path / "run2", config=cfg)
    ok = first["runs"].read_bytes() == second["runs"].read_bytes()
    _report(12, ok, "two executions produced bit-identical runs.csv")
