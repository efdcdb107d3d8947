"""Acceptance gate: the twelve properties this laboratory must exhibit.

One test per criterion, in order.  Each prints a single line
"criterion N: PASS/FAIL - detail" straight to the terminal (bypassing
capture) and then asserts, so a full run always shows the scoreboard.
The two point-goal criteria share one expensive calibration fixture."""

import time

import numpy as np
import pytest

from safedr.cmdp import evaluate_policy, solve_cmdp_lp
from safedr.envs import (ChainSpec, build_chain, make_cartpole_family,
                         upsilon_heatmap)
from safedr.harness import verification
from safedr.harness.config import from_mapping, load_config, preset_path
from safedr.harness.runner import (calibrate_and_refine, mean_stderr,
                                   run_experiment, run_seeds)
from safedr.pessimism import upsilon_sampled


@pytest.fixture
def announce(capsys):
    def _announce(num, ok, detail):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}"
        with capsys.disabled():
            print(line, flush=True)
        assert ok, line
    return _announce


def chain_cfg(lam):
    return from_mapping({
        "experiment": {"name": f"accept-lam{lam:g}", "seed": 0,
                       "out": "unused"},
        "env": {"kind": "chain"},
        "penalty": {"lam": lam, "mode": "exact"}})


@pytest.fixture(scope="module")
def pointgoal_calibration():
    cfg = load_config(preset_path("pointgoal"))
    start = time.perf_counter()
    outcome = calibrate_and_refine(cfg, seeds=(0, 1, 2, 3, 4))
    return cfg, outcome, time.perf_counter() - start


def test_criterion_01_randomized_training_lands_unsafe(announce):
    start = time.perf_counter()
    pair = build_chain(ChainSpec())
    sol = solve_cmdp_lp(pair.sim_env)
    real_cost = evaluate_policy(pair.real_env, sol.policy).c_value
    elapsed = time.perf_counter() - start
    mass = float(sol.policy.probs[0, 0])
    ratio = real_cost / pair.budget
    ok = (mass >= 0.99 and abs(real_cost - 9.0) <= 1e-6
          and abs(ratio - 4.0 / 3.0) <= 1e-9 and elapsed < 1.0)
    announce(1, ok, f"sim optimum puts {mass:.4f} on the risky arm; deployed "
                    f"cost {real_cost:.6f} = {ratio:.6f}x budget "
                    f"{pair.budget:.6f} ({elapsed:.2f} s)")


def test_criterion_02_penalty_restores_safety(announce):
    details = []
    ok = True
    for lam in (2.0, 4.0, 8.0):
        start = time.perf_counter()
        out = run_experiment(chain_cfg(lam))
        elapsed = time.perf_counter() - start
        mass = float(out.result.policy.probs[0, 1])
        real_cost = out.result.final_c_eval
        ok = ok and (mass >= 0.99 and real_cost <= 6.75 + 1e-6
                     and not out.result.infeasible and elapsed < 5.0)
        details.append(f"lam={lam:g}: safe-arm mass {mass:.2f}, "
                       f"cost {real_cost:.4f}")
    start = time.perf_counter()
    out12 = run_experiment(chain_cfg(12.0))
    elapsed12 = time.perf_counter() - start
    ok = ok and out12.result.infeasible and elapsed12 < 5.0
    details.append("lam=12: infeasible flag "
                   + ("set" if out12.result.infeasible else "NOT set"))
    announce(2, ok, "; ".join(details))


def test_criterion_03_cost_gap_decomposition(announce):
    start = time.perf_counter()
    res = verification.suite_telescoping()
    elapsed = time.perf_counter() - start
    ok = (res.count == 50 and res.failures == 0 and res.worst < 1e-8
          and elapsed < 10.0)
    announce(3, ok, f"{res.count} kernel pairs, {res.failures} failures, "
                    f"worst residual {res.worst:.2e} ({elapsed:.1f} s)")


def test_criterion_04_transfer_bound_slack(announce):
    start = time.perf_counter()
    res = verification.suite_transfer_bound()
    elapsed = time.perf_counter() - start
    ok = (res.count == 50 and res.failures == 0 and res.worst >= -1e-8
          and elapsed < 60.0)
    announce(4, ok, f"{res.count} certified triples, minimum slack "
                    f"{res.worst:.2e} >= -1e-8 ({elapsed:.1f} s)")


def test_criterion_05_oracle_penalty_conservatism(announce):
    start = time.perf_counter()
    res = verification.suite_oracle_conservatism()
    elapsed = time.perf_counter() - start
    ok = res.count == 1000 and res.failures == 0 and res.worst >= -1e-8
    announce(5, ok, f"{res.count} policy checks (domination plus feasibility "
                    f"transfer), worst margin {res.worst:.2e} "
                    f"({elapsed:.1f} s)")


def test_criterion_06_wasserstein_cross_validation(announce):
    start = time.perf_counter()
    res = verification.suite_wasserstein()
    elapsed = time.perf_counter() - start
    ok = res.count == 200 and res.failures == 0 and res.worst <= 1e-8
    announce(6, ok, f"{res.count} checks: CDF route vs transport program "
                    f"plus metric axioms, worst gap {res.worst:.2e} "
                    f"({elapsed:.1f} s)")


def test_criterion_07_sampled_estimator_bias(announce):
    # population-variance estimator over n siblings has mean (n-1)/n * exact
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        p = rng.dirichlet(np.ones(5))
        emb = rng.normal(size=(5, 2))
        mean_emb = p @ emb
        exact = float(((emb - mean_emb) ** 2 * p[:, None]).sum())
        for n in (2, 8, 32):
            idx = rng.choice(5, size=(10000, n), p=p)
            vals = [upsilon_sampled(emb[row]) for row in idx]
            target = (n - 1) / n * exact
            worst = max(worst, abs(float(np.mean(vals)) - target) / target)
    ok = worst <= 0.02
    announce(7, ok, f"10 kernels x n in (2, 8, 32) x 10000 draws, worst "
                    f"relative bias error {worst:.4f} (tolerance 0.02)")


def test_criterion_08_gradient_check(announce):
    start = time.perf_counter()
    res = verification.suite_gradients()
    elapsed = time.perf_counter() - start
    ok = res.count == 40 and res.failures == 0 and res.worst <= 1e-5
    announce(8, ok, f"{res.count} objective and constraint gradients vs "
                    f"central differences, worst relative error "
                    f"{res.worst:.2e} ({elapsed:.1f} s)")


def test_criterion_09_pointgoal_calibration(pointgoal_calibration, announce):
    _, outcome, elapsed = pointgoal_calibration
    base_c = mean_stderr([o.result.final_c_eval
                          for o in outcome.baseline])[0]
    retention = outcome.final_j / outcome.baseline_j
    ok = (base_c > outcome.budget and outcome.final_c <= outcome.budget
          and retention >= 0.6 and elapsed < 900.0)
    announce(9, ok, f"lam=0 eval cost {base_c:.3f} > budget "
                    f"{outcome.budget:g}; calibrated lam "
                    f"{outcome.lam_final:.1f} gives cost "
                    f"{outcome.final_c:.3f} at {100 * retention:.1f}% of the "
                    f"unpenalized objective ({elapsed:.0f} s, 5 seeds)")


def test_criterion_10_sibling_count_scaling(pointgoal_calibration, announce):
    cfg, outcome, _ = pointgoal_calibration
    seeds = outcome.seeds
    base_times = []
    for s in seeds:
        out0 = run_experiment(cfg.replace(seed=s, lam=0.0),
                              probe_upsilon=False)
        base_times.append(out0.result.runtime_s)
    t0 = float(np.mean(base_times))
    costs = {}
    rel32 = float("inf")
    for n in (8, 16, 32, 64, 128):
        outs = run_seeds(cfg.replace(num_siblings=n), seeds,
                         lam=outcome.lam_final)
        costs[n] = mean_stderr([o.result.final_c_eval for o in outs])[0]
        if n == 32:
            rel32 = float(np.mean([o.result.runtime_s for o in outs])) / t0
    ok = all(c <= outcome.budget for c in costs.values()) and rel32 < 2.0
    cost_text = ", ".join(f"n={n}: {c:.3f}" for n, c in costs.items())
    announce(10, ok, f"eval cost {cost_text} (budget {outcome.budget:g}); "
                     f"n=32 runtime {rel32:.2f}x the unpenalized baseline")


def test_criterion_11_disagreement_heatmap(announce):
    res = upsilon_heatmap(make_cartpole_family(), n=64, seed=0)
    means = res.mean_by_action()
    monotone = all(b >= a - 1e-12 for a, b in zip(means, means[1:]))
    hi = res.mean_near(np.pi, len(res.actions) - 1)
    lo = res.mean_near(0.0, len(res.actions) - 1)
    ok = (list(res.actions) == [0.0, 0.3, 0.7, 1.0] and monotone and hi > lo)
    mean_text = ", ".join(f"{m:.4f}" for m in means)
    announce(11, ok, f"mean disagreement by action ({mean_text}) is "
                     f"nondecreasing; at full push, near-upright {hi:.4f} > "
                     f"near-rest {lo:.4f}")


def test_criterion_12_exact_mode_determinism(tmp_path, announce):
    run_experiment(chain_cfg(4.0), write=True, out=tmp_path / "first")
    run_experiment(chain_cfg(4.0), write=True, out=tmp_path / "second")
    first = (tmp_path / "first" / "metrics.csv").read_bytes()
    second = (tmp_path / "second" / "metrics.csv").read_bytes()
    ok = first == second and len(first) > 0
    announce(12, ok, f"repeated exact run wrote byte-identical metrics "
                     f"({len(first)} bytes)")
