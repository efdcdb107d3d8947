"""Harness tests: config validation, report files, the runner, calibration
arithmetic, and the verification suite plumbing (including the negative
control where an injected bad kernel must make a suite fail)."""

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
import yaml

from safedr.harness import reports, verification
from safedr.harness.config import (ConfigError, ExperimentConfig, dump_config,
                                   from_mapping, load_config, preset_path)
from safedr.harness.runner import (build_bundle, calibrate_and_refine,
                                   mean_stderr, refine_lambda, run_experiment,
                                   run_seeds, save_policy, write_run_charts)
from safedr.policies import (LinearGaussianPolicy, SoftmaxTabularPolicy,
                             TabularPolicy)
from safedr.solvers import MetricsRecord


def chain_mapping(**extra):
    m = {"experiment": {"name": "chaintest", "seed": 0, "out": "unused"},
         "env": {"kind": "chain"},
         "penalty": {"lam": 4.0, "mode": "exact"}}
    m.update(extra)
    return m


def chain_cfg(**extra):
    return from_mapping(chain_mapping(**extra))


# ---------------------------------------------------------------------------
# configuration


class TestConfig:
    def test_defaults(self):
        cfg = from_mapping({"env": {"kind": "chain"}})
        assert cfg.name == "run"
        assert cfg.seed == 0
        assert cfg.out == "runs/run"
        assert cfg.lam == 0.0
        assert cfg.mode == "sampled"
        assert cfg.num_rollout == 4
        assert cfg.num_siblings == 8
        assert cfg.budget is None
        assert cfg.seeds == ()
        assert cfg.env == {"epsilon": 0.25, "gamma": 0.9}
        s = cfg.solver
        assert (s.algorithm, s.iterations, s.step_size) == ("crpo", 200, 0.2)
        assert (s.dual_step, s.crpo_tolerance) == (0.05, 0.0)
        assert (s.batch_episodes, s.eval_every, s.eval_samples) == (16, 10, 8)
        assert (s.policy_std, s.baseline, s.max_grad_norm) == (0.4, True, 0.0)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            from_mapping(chain_mapping(extra_section={}))

    def test_unknown_env_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown field for kind 'chain'"):
            from_mapping({"env": {"kind": "chain", "mass": 2.0}})

    def test_unknown_solver_field_rejected(self):
        with pytest.raises(ConfigError, match="solver.horizon"):
            from_mapping(chain_mapping(solver={"horizon": 10}))

    def test_all_errors_collected_at_once(self):
        bad = {"experiment": {"name": "", "seed": -1},
               "env": {"kind": "chain", "epsilon": 0.3},
               "penalty": {"lam": -2.0},
               "solver": {"step_size": 0.0},
               "budget": -1.0}
        with pytest.raises(ConfigError) as exc:
            from_mapping(bad)
        text = "\n".join(exc.value.errors)
        for path in ("experiment.name", "experiment.seed", "env.epsilon",
                     "penalty.lam", "solver.step_size", "budget"):
            assert path in text
        assert len(exc.value.errors) >= 6

    def test_epsilon_bounds(self):
        assert chain_cfg(env={"kind": "chain", "epsilon": 0.25}).env["epsilon"] == 0.25
        with pytest.raises(ConfigError, match="must be <= 0.25"):
            chain_cfg(env={"kind": "chain", "epsilon": 0.251})
        with pytest.raises(ConfigError, match="must be > 0"):
            chain_cfg(env={"kind": "chain", "epsilon": 0.0})

    def test_bad_kind_short_circuits(self):
        with pytest.raises(ConfigError, match="env.kind"):
            from_mapping({"env": {"kind": "sphere"}})
        with pytest.raises(ConfigError, match="env.kind"):
            from_mapping({})

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigError, match="top level"):
            from_mapping([1, 2])

    def test_exact_mode_rejected_on_continuous(self):
        for kind in ("pointgoal", "cartpole"):
            with pytest.raises(ConfigError,
                               match="sampled mode only"):
                from_mapping({"env": {"kind": kind},
                              "penalty": {"mode": "exact"}})

    def test_seeds_validation(self):
        cfg = chain_cfg(experiment={"name": "s", "seeds": [3, 5]})
        assert cfg.seeds == (3, 5)
        assert cfg.repeat_seeds() == (3, 5)
        assert chain_cfg().repeat_seeds() == (0,)
        with pytest.raises(ConfigError, match="experiment.seeds"):
            chain_cfg(experiment={"seeds": "0,1"})
        with pytest.raises(ConfigError, match="experiment.seeds"):
            chain_cfg(experiment={"seeds": [1, -2]})
        with pytest.raises(ConfigError, match="experiment.seeds"):
            chain_cfg(experiment={"seeds": [True]})

    def test_budget_validation(self):
        assert chain_cfg(budget=3).budget == 3.0
        assert chain_cfg(budget=None).budget is None
        with pytest.raises(ConfigError, match="must be positive"):
            chain_cfg(budget=-1.0)
        with pytest.raises(ConfigError, match="must be a number or null"):
            chain_cfg(budget=True)

    def test_round_trip_preserves_config_and_hash(self):
        cfg = from_mapping({
            "experiment": {"name": "rt", "seed": 7, "out": "runs/rt",
                           "seeds": [0, 1, 2]},
            "env": {"kind": "random", "num_states": 5, "num_actions": 2,
                    "kl_radius": 0.02, "embedding_dim": 2, "env_seed": 3},
            "penalty": {"lam": 1.5, "mode": "sampled"},
            "ensemble": {"num_rollout": 6, "num_siblings": 12},
            "solver": {"algorithm": "primal_dual", "iterations": 33,
                       "step_size": 0.1, "policy_std": 0.2},
            "budget": 4.0})
        again = from_mapping(cfg.to_dict())
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_dump_and_load_round_trip(self, tmp_path):
        cfg = chain_cfg(budget=5.0)
        path = tmp_path / "cfg.yaml"
        dump_config(cfg, path)
        loaded = load_config(path)
        assert loaded == cfg
        assert loaded.config_hash() == cfg.config_hash()

    def test_replace(self):
        cfg = chain_cfg()
        other = cfg.replace(lam=7.0, seed=3)
        assert (other.lam, other.seed) == (7.0, 3)
        assert other.name == cfg.name
        assert cfg.lam == 4.0  # original untouched

    def test_presets_exist_and_parse(self):
        kinds = {"example1": "chain", "pointgoal": "pointgoal",
                 "cartpole": "cartpole"}
        for name, kind in kinds.items():
            path = preset_path(name)
            assert path.exists()
            cfg = load_config(path)
            assert cfg.env_kind == kind

    def test_preset_miss_lists_available(self):
        with pytest.raises(ConfigError, match="preset 'nope' not found"):
            preset_path("nope")
        try:
            preset_path("nope")
        except ConfigError as exc:
            for name in ("example1", "pointgoal", "cartpole"):
                assert name in exc.errors[0]

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="no such file"):
            load_config(tmp_path / "absent.yaml")

    def test_load_config_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("env: [unclosed\n  kind: chain\n")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_config(path)

    def test_config_error_message_lists_each_issue(self):
        err = ConfigError(["a: broken", "b: worse"])
        assert str(err) == "invalid configuration:\n  a: broken\n  b: worse"
        assert err.errors == ["a: broken", "b: worse"]


# ---------------------------------------------------------------------------
# report formatting


class TestReports:
    def test_format_value_pins(self):
        assert reports.format_value(None) == ""
        assert reports.format_value(True) == "yes"
        assert reports.format_value(False) == "no"
        assert reports.format_value(3) == "3"
        assert reports.format_value(4.5) == "4.5"
        assert reports.format_value(1.0 / 3.0) == "0.3333333333333333"
        assert reports.format_value(np.float64(0.25)) == "0.25"
        assert reports.format_value(np.int64(7)) == "7"
        assert reports.format_value("text") == "text"

    def test_metrics_round_trip_with_blanks(self, tmp_path):
        recs = [MetricsRecord(iteration=0, j_train=1.5, c_train_raw=0.5,
                              c_train_penalized=0.75, j_eval=None, c_eval=None,
                              dual=0.0, mean_upsilon=0.1, max_upsilon=0.2),
                MetricsRecord(iteration=1, j_train=1.25, c_train_raw=0.5,
                              c_train_penalized=0.7, j_eval=2.0, c_eval=0.6,
                              dual=0.05, mean_upsilon=0.1, max_upsilon=0.2)]
        path = reports.write_metrics(tmp_path / "metrics.csv", recs)
        cols = reports.read_metrics(path)
        assert tuple(cols) == reports.METRIC_COLUMNS
        assert np.isnan(cols["J_eval"][0]) and np.isnan(cols["C_eval"][0])
        assert cols["J_eval"][1] == 2.0
        assert np.array_equal(cols["iteration"], [0.0, 1.0])
        assert np.array_equal(cols["J_train"], [1.5, 1.25])
        # blanks written as empty cells, not "nan"
        lines = path.read_text().splitlines()
        assert "nan" not in lines[1]
        assert ",," in lines[1]

    def test_read_metrics_rejects_foreign_header(self, tmp_path):
        path = reports.write_rows(tmp_path / "other.csv", ("a", "b"), [[1, 2]])
        with pytest.raises(ValueError, match="unexpected metrics header"):
            reports.read_metrics(path)

    def test_write_rows_uses_unix_newlines(self, tmp_path):
        path = reports.write_rows(tmp_path / "rows.csv", ("a",), [[1], [2]])
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw == b"a\n1\n2\n"

    def test_summary_row_and_write_summary(self, tmp_path):
        cfg = chain_cfg()
        out = run_experiment(cfg)
        row = out.summary
        assert row["name"] == "chaintest"
        assert (row["seed"], row["lam"], row["mode"]) == (0, 4.0, "exact")
        assert row["safety"] == "SAFE"
        assert row["infeasible"] is False
        assert abs(row["gap"] - 2.25) < 1e-9
        assert abs(row["J_eval"] - 6.75) < 1e-9
        assert abs(row["C_eval"] - 6.75) < 1e-9
        assert abs(row["budget"] - 6.75) < 1e-9
        # penalty added 1.0 to the raw cost, gap is 2.25: shortfall 1.25
        assert abs(row["penalty_sufficiency"] + 1.25) < 1e-9
        assert row["config_hash"] == cfg.config_hash()
        assert len(row["env_fingerprint"]) == 64
        path = reports.write_summary(tmp_path / "summary.csv", [row])
        header, rows = reports.read_rows(path)
        assert tuple(header) == reports.SUMMARY_COLUMNS
        cells = dict(zip(header, rows[0]))
        assert cells["safety"] == "SAFE"
        assert cells["infeasible"] == "no"
        assert cells["lam"] == "4.0"


# ---------------------------------------------------------------------------
# runner: bundles, runs, artifacts


class TestBundles:
    def test_chain_bundle(self):
        b = build_bundle(chain_cfg())
        assert b.kind == "chain"
        assert abs(b.budget - 6.75) < 1e-9
        assert b.c_max == 1.0
        assert b.embedding.shape == (3, 1)
        assert b.real_env is not None and b.task is None
        assert len(b.fingerprint) == 64

    def test_budget_override(self):
        assert build_bundle(chain_cfg(budget=3.0)).budget == 3.0

    def test_random_bundle(self):
        cfg = from_mapping({"env": {"kind": "random", "num_states": 4,
                                    "num_actions": 2, "env_seed": 1}})
        b = build_bundle(cfg)
        assert b.kind == "random"
        assert "probe" in b.extras
        assert b.embedding.shape == (4, 1)
        assert b.budget > 0.0
        assert b.real_env is not None and b.task is None

    def test_pointgoal_bundle(self):
        b = build_bundle(from_mapping({"env": {"kind": "pointgoal"}}))
        assert b.kind == "pointgoal"
        assert b.c_max == 0.5
        assert b.task is not None and b.real_env is None
        assert b.budget == b.spec.budget

    def test_cartpole_bundle(self):
        b = build_bundle(from_mapping({"env": {"kind": "cartpole"}}))
        assert b.kind == "cartpole"
        assert b.c_max == 1.0
        assert b.task is not None and b.real_env is None


# exact chain run at lambda 4: single enumeration record, all values closed form
_METRICS_PIN = (
    "iteration,J_train,C_train_raw,C_train_penalized,J_eval,C_eval,"
    "dual,mean_upsilon,max_upsilon\n"
    "0,4.500000000000001,4.500000000000001,5.500000000000001,"
    "6.750000000000002,6.750000000000002,0.0,0.024999999999999994,0.25\n")


class TestRunner:
    def test_chain_artifacts_and_metrics_pin(self, tmp_path):
        out = run_experiment(chain_cfg(), write=True, out=tmp_path / "r")
        names = sorted(p.name for p in (tmp_path / "r").iterdir())
        assert names == ["config.yaml", "constraint.csv", "constraint.svg",
                         "metrics.csv", "objective.csv", "objective.svg",
                         "policy.npz", "summary.csv"]
        assert (tmp_path / "r" / "metrics.csv").read_text() == _METRICS_PIN
        assert out.summary["safety"] == "SAFE"
        assert out.out_dir == tmp_path / "r"
        saved = yaml.safe_load((tmp_path / "r" / "config.yaml").read_text())
        assert from_mapping(saved) == out.config

    def test_exact_runs_are_bit_reproducible(self, tmp_path):
        run_experiment(chain_cfg(), write=True, out=tmp_path / "a")
        run_experiment(chain_cfg(), write=True, out=tmp_path / "b")
        assert ((tmp_path / "a" / "metrics.csv").read_bytes()
                == (tmp_path / "b" / "metrics.csv").read_bytes())
        # summary matches except the wall-clock column
        rows = []
        for sub in ("a", "b"):
            header, data = reports.read_rows(tmp_path / sub / "summary.csv")
            cells = dict(zip(header, data[0]))
            cells.pop("runtime_s")
            rows.append(cells)
        assert rows[0] == rows[1]

    def test_sampled_mode_needs_two_siblings(self):
        cfg = chain_cfg(penalty={"lam": 1.0, "mode": "sampled"},
                        ensemble={"num_rollout": 2, "num_siblings": 1},
                        solver={"iterations": 2, "batch_episodes": 2})
        with pytest.raises(ValueError, match="at least 2 siblings"):
            run_experiment(cfg)
        # without probing and at lambda 0 a single sibling is fine
        ok = cfg.replace(lam=0.0)
        run_experiment(ok, probe_upsilon=False)

    def test_probe_off_records_no_disagreement(self):
        cfg = chain_cfg(penalty={"lam": 0.0, "mode": "sampled"},
                        solver={"iterations": 3, "batch_episodes": 4})
        out = run_experiment(cfg, probe_upsilon=False)
        assert all(m.mean_upsilon == 0.0 for m in out.result.metrics)
        assert not np.any(out.result.upsilon_trace)

    def test_run_seeds_overrides(self):
        outs = run_seeds(chain_cfg(), seeds=(0, 1), lam=9.0)
        assert [o.config.seed for o in outs] == [0, 1]
        assert all(o.config.lam == 9.0 for o in outs)
        assert all(o.summary["safety"] == "SAFE" for o in outs)

    def test_save_policy_kinds(self, tmp_path):
        soft = SoftmaxTabularPolicy(3, 2)
        save_policy(tmp_path / "soft.npz", soft)
        with np.load(tmp_path / "soft.npz") as data:
            assert str(data["kind"]) == "tabular-softmax"
            assert np.array_equal(data["logits"], soft.logits)
        tab = TabularPolicy(np.full((3, 2), 0.5))
        save_policy(tmp_path / "tab.npz", tab)
        with np.load(tmp_path / "tab.npz") as data:
            assert str(data["kind"]) == "tabular"
            assert np.array_equal(data["probs"], tab.probs)
        lin = LinearGaussianPolicy(lambda s: np.ones(4), 4, 2, std=0.3)
        save_policy(tmp_path / "lin.npz", lin)
        with np.load(tmp_path / "lin.npz") as data:
            assert str(data["kind"]) == "linear-gaussian"
            assert np.array_equal(data["weights"], lin.weights)
            assert float(data["std"]) == 0.3

    def test_charts_are_valid_svg_with_budget_rule(self, tmp_path):
        run_experiment(chain_cfg(), write=True, out=tmp_path / "r")
        for name in ("objective.svg", "constraint.svg"):
            root = ET.parse(tmp_path / "r" / name).getroot()
            assert root.tag.endswith("svg")
        assert "budget = 6.75" in (tmp_path / "r" / "constraint.svg").read_text()

    def test_charts_regenerate_from_metrics_file(self, tmp_path):
        run_experiment(chain_cfg(), write=True, out=tmp_path / "r")
        cols = reports.read_metrics(tmp_path / "r" / "metrics.csv")
        fresh = tmp_path / "fresh"
        paths = write_run_charts(fresh, cols, budget=6.75)
        assert sorted(p.name for p in fresh.iterdir()) == [
            "constraint.csv", "constraint.svg", "objective.csv",
            "objective.svg"]
        assert set(paths) == {"objective_svg", "objective_csv",
                              "constraint_svg", "constraint_csv"}


# ---------------------------------------------------------------------------
# calibration helpers


class _FakeResult:
    def __init__(self, c_eval, c_train, ups_return):
        self.final_c_eval = c_eval
        self.final_j_eval = 0.0
        self._c_train = c_train
        self.tail_upsilon_return = ups_return

    def tail_mean(self, attr):
        assert attr == "c_train_raw"
        return self._c_train


class _FakeOutput:
    def __init__(self, *args):
        self.result = _FakeResult(*args)


class TestCalibration:
    def test_mean_stderr(self):
        m, e = mean_stderr([])
        assert np.isnan(m) and np.isnan(e)
        assert mean_stderr([2.5]) == (2.5, 0.0)
        m, e = mean_stderr([1.0, 3.0])
        assert m == 2.0
        assert abs(e - 1.0) < 1e-12  # std(ddof=1)=sqrt(2), over sqrt(2)

    def test_refine_lambda_ratio(self):
        # penalty per unit lambda is the disagreement return; size it to
        # cover the observed transfer gap exactly
        assert refine_lambda([_FakeOutput(9.0, 6.75, 0.1875)]) == 12.0
        assert refine_lambda([_FakeOutput(5.0, 6.0, 0.2)]) == 0.0   # no gap
        assert refine_lambda([_FakeOutput(9.0, 6.75, 0.0)]) == 0.0  # no signal

    def test_calibrate_and_refine_on_chain(self):
        outcome = calibrate_and_refine(chain_cfg(), seeds=(0,))
        assert outcome.seeds == (0,)
        assert abs(outcome.budget - 6.75) < 1e-9
        # zero-penalty baseline lands on the unsafe arm
        assert abs(outcome.baseline_j - 9.0) < 1e-9
        # decade rule: c_max over visited mean disagreement 0.01875
        assert abs(outcome.suggestion.lam_suggested - 1.0 / 0.01875) < 1e-6
        # that weight paralyzes every arm, so one gap-matched refinement runs
        assert all(o.result.infeasible for o in outcome.suggested)
        assert outcome.refined
        assert abs(outcome.lam_final - 12.0) < 1e-9
        rows = outcome.table()
        assert [r["stage"] for r in rows] == ["baseline", "suggested",
                                              "refined"]
        assert rows[0]["safety"] == "UNSAFE"
        assert rows[1]["infeasible"] == 1
        # the refined run picks the safe arm even while flagged infeasible
        assert abs(outcome.final_c - 6.75) < 1e-9


# ---------------------------------------------------------------------------
# verification suites


class TestVerification:
    def test_suite_result_line_format(self):
        ok = verification.SuiteResult("demo", 3, 0, 1e-10, 1e-8)
        assert ok.line().startswith("PASS  demo: 3 checks, 0 failures")
        bad = verification.SuiteResult("demo", 3, 2, 0.5, 1e-8, note="(hint)")
        assert bad.line().startswith("FAIL  demo: 3 checks, 2 failures")
        assert bad.line().endswith("(hint)")
        assert not bad.passed

    def test_report_lines_end_with_verdict(self):
        report = verification.run_suites(["wasserstein"])
        assert report.passed
        assert len(report.suites) == 1
        lines = report.lines()
        assert lines[0].startswith("PASS  wasserstein:")
        assert lines[-1] == "verification PASSED"

    def test_unknown_suite_rejected(self):
        with pytest.raises(ValueError, match="unknown suite 'nope'"):
            verification.run_suites(["nope"])

    def test_injected_bad_kernel_fails_invariants(self):
        # negative control: rows not summing to one must be caught
        good = np.full((4, 2, 4), 0.25)
        bad = np.full((4, 2, 4), 0.3)
        res = verification.suite_cmdp_invariants(kernels=[good, bad])
        assert res.count == 2
        assert res.failures == 1
        assert not res.passed
        assert res.worst >= 0.19
        report = verification.VerificationReport([res])
        assert report.lines()[-1] == "verification FAILED"

    def test_telescoping_refuses_mismatched_costs(self):
        rng = np.random.default_rng(0)
        env_p = verification._random_env(rng)
        env_q = verification._random_env(rng)  # fresh rewards and costs
        policy = verification._random_policy(rng, 6, 3)
        with pytest.raises(ValueError, match="must share"):
            verification.suite_telescoping(pairs=[(env_p, env_q, policy)])

    def test_injected_valid_pairs_pass_telescoping(self):
        rng = np.random.default_rng(1)
        env_p = verification._random_env(rng)
        trans_q = rng.dirichlet(np.ones(6), size=(6, 3))
        from safedr.cmdp import TabularCMDP
        env_q = TabularCMDP(transitions=trans_q, rewards=env_p.rewards,
                            costs=env_p.costs, gamma=env_p.gamma,
                            rho=env_p.rho, budget=env_p.budget)
        policy = verification._random_policy(rng, 6, 3)
        res = verification.suite_telescoping(pairs=[(env_p, env_q, policy)])
        assert res.count == 1 and res.failures == 0
        assert res.worst < 1e-10
