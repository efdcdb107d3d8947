"""End-to-end CLI tests, run in process through main(argv).

Exit status contract: 0 success, 1 configuration error, 2 verification
failure.  Artifact layouts are checked on a tmp directory per test."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest
import yaml

from safedr.harness import cli, reports, verification


def write_config(path, mapping):
    path.write_text(yaml.safe_dump(mapping))
    return str(path)


@pytest.fixture
def chain_yaml(tmp_path):
    return write_config(tmp_path / "chain.yaml", {
        "experiment": {"name": "clichain", "seed": 0,
                       "out": str(tmp_path / "out")},
        "env": {"kind": "chain"},
        "penalty": {"lam": 4.0, "mode": "exact"}})


@pytest.fixture
def sampled_yaml(tmp_path):
    return write_config(tmp_path / "sampled.yaml", {
        "experiment": {"name": "clisampled", "seed": 0,
                       "out": str(tmp_path / "out")},
        "env": {"kind": "chain"},
        "penalty": {"lam": 0.5, "mode": "sampled"},
        "ensemble": {"num_rollout": 2, "num_siblings": 2},
        "solver": {"iterations": 3, "batch_episodes": 4, "eval_every": 2}})


class TestRunCommand:
    def test_single_seed_run(self, chain_yaml, tmp_path, capsys):
        out = tmp_path / "single"
        assert cli.main(["run", "--config", chain_yaml,
                         "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "seed" in text and "SAFE" in text
        assert f"artifacts in {out}" in text
        for name in ("config.yaml", "metrics.csv", "summary.csv",
                     "policy.npz", "objective.svg", "constraint.svg"):
            assert (out / name).exists()

    def test_multi_seed_run_pools_summary(self, chain_yaml, tmp_path, capsys):
        out = tmp_path / "multi"
        assert cli.main(["run", "--config", chain_yaml, "--out", str(out),
                         "--seeds", "0,1"]) == 0
        assert (out / "seed_0" / "metrics.csv").exists()
        assert (out / "seed_1" / "metrics.csv").exists()
        header, rows = reports.read_rows(out / "summary.csv")
        assert tuple(header) == reports.SUMMARY_COLUMNS
        assert [r[header.index("seed")] for r in rows] == ["0", "1"]
        assert "mean over 2 seeds" in capsys.readouterr().out

    def test_lam_override_exposes_unsafe_baseline(self, chain_yaml, tmp_path,
                                                  capsys):
        assert cli.main(["run", "--config", chain_yaml,
                         "--out", str(tmp_path / "lam0"), "--lam", "0"]) == 0
        assert "UNSAFE" in capsys.readouterr().out

    def test_missing_config_is_exit_1(self, tmp_path, capsys):
        assert cli.main(["run", "--config", str(tmp_path / "nope.yaml")]) == 1
        assert "config error:" in capsys.readouterr().err

    def test_invalid_override_is_exit_1(self, chain_yaml, capsys):
        assert cli.main(["run", "--config", chain_yaml, "--seed", "-3"]) == 1
        assert "experiment.seed" in capsys.readouterr().err

    def test_no_subcommand_prints_help(self, capsys):
        assert cli.main([]) == 1
        assert "usage:" in capsys.readouterr().out


class TestExample1:
    def test_default_grid_reproduces_failure_mode(self, tmp_path, capsys):
        out = tmp_path / "ex1"
        assert cli.main(["example1", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "safety performance under different lambda values" in text
        assert "budget 6.75" in text
        header, rows = reports.read_rows(out / "example1.csv")
        assert list(header) == ["lam", "J_sim", "C_sim_penalized", "J_eval",
                                "C_eval", "safety", "infeasible"]
        by_lam = {float(r[0]): r for r in rows}
        assert set(by_lam) == {0.0, 4.0, 9.0, 12.0}
        safety = [by_lam[g][5] for g in (0.0, 4.0, 9.0, 12.0)]
        assert safety == ["UNSAFE", "SAFE", "SAFE", "SAFE"]
        flags = [by_lam[g][6] for g in (0.0, 4.0, 9.0, 12.0)]
        assert flags == ["no", "no", "no", "yes"]  # lam 12 paralyzes
        evals = [float(by_lam[g][4]) for g in (0.0, 4.0, 9.0, 12.0)]
        assert all(a >= b - 1e-9 for a, b in zip(evals, evals[1:]))
        assert abs(evals[0] - 9.0) < 1e-9
        assert abs(evals[1] - 6.75) < 1e-9
        for g in ("0", "4", "9", "12"):
            assert (out / f"lam_{g}" / "metrics.csv").exists()
        ET.parse(out / "example1.svg")


class TestSweeps:
    def test_sweep_lambda_reports_suggestions(self, chain_yaml, tmp_path,
                                              capsys):
        out = tmp_path / "sl"
        assert cli.main(["sweep-lambda", "--config", chain_yaml,
                         "--out", str(out), "--lams", "0,4"]) == 0
        text = capsys.readouterr().out
        assert "lambda sweep over seeds [0]" in text
        assert "calibrate_lambda suggestion (from lam=0 runs)" in text
        assert "gap-matched refinement" in text
        header, rows = reports.read_rows(out / "sweep_lambda.csv")
        assert [float(r[0]) for r in rows] == [0.0, 4.0]
        safety_col = list(header).index("safety")
        assert [r[safety_col] for r in rows] == ["UNSAFE", "SAFE"]
        ET.parse(out / "sweep_lambda_constraint.svg")
        ET.parse(out / "sweep_lambda_objective.svg")

    def test_sweep_n_marks_single_sibling_invalid(self, sampled_yaml,
                                                  tmp_path, capsys):
        out = tmp_path / "sn"
        assert cli.main(["sweep-n", "--config", sampled_yaml,
                         "--out", str(out), "--grid", "1,2,4"]) == 0
        text = capsys.readouterr().out
        assert "lam=0 baseline (no disagreement probing)" in text
        assert "baseline under 1 s" in text  # chain runs are instant
        header, rows = reports.read_rows(out / "sweep_n.csv")
        note_col = list(header).index("note")
        by_n = {r[0]: r for r in rows}
        assert by_n["1"][note_col].startswith("invalid: sampled disagreement "
                                              "needs at least 2 siblings")
        assert by_n["1"][1] == ""  # no measurements for the rejected row
        for n in ("2", "4"):
            assert by_n[n][note_col] in ("SAFE", "UNSAFE")
            assert float(by_n[n][5]) > 0.0  # relative runtime recorded
        ET.parse(out / "sweep_n_constraint.svg")
        ET.parse(out / "sweep_n_runtime.svg")

    def test_sweep_n_rejects_exact_mode(self, chain_yaml, capsys):
        assert cli.main(["sweep-n", "--config", chain_yaml]) == 1
        err = capsys.readouterr().err
        assert "config error: sweep-n:" in err
        assert "sampled-mode" in err


class TestHeatmapCommand:
    def test_heatmap_artifacts(self, tmp_path, capsys):
        out = tmp_path / "hm"
        assert cli.main(["heatmap", "--out", str(out),
                         "--siblings", "8"]) == 0
        text = capsys.readouterr().out
        assert "at max action: mean upsilon near theta=pi" in text
        assert "ratio" in text
        header, rows = reports.read_rows(out / "heatmap.csv")
        assert list(header) == ["action", "theta", "thetadot", "upsilon"]
        actions = {r[0] for r in rows}
        assert len(actions) == 4
        assert len(rows) % len(actions) == 0
        assert all(float(r[3]) >= 0.0 for r in rows)
        for i in range(4):
            ET.parse(out / f"heatmap_action_{i}.svg")


class TestVerifyCommand:
    def test_single_suite_passes(self, capsys):
        assert cli.main(["verify", "--suites", "wasserstein"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("PASS  wasserstein:")
        assert out.splitlines()[-1] == "verification PASSED"

    def test_unknown_suite_is_exit_1(self, capsys):
        assert cli.main(["verify", "--suites", "nope"]) == 1
        assert "unknown suite" in capsys.readouterr().err

    def test_suite_failure_is_exit_2(self, monkeypatch, capsys):
        failing = verification.VerificationReport(
            [verification.SuiteResult("demo", 1, 1, 0.5, 1e-8)])
        monkeypatch.setattr(cli.verification, "run_suites",
                            lambda names: failing)
        assert cli.main(["verify"]) == 2
        assert "verification FAILED" in capsys.readouterr().out


class TestReportCommand:
    def test_regenerates_charts(self, chain_yaml, tmp_path, capsys):
        run_dir = tmp_path / "r"
        assert cli.main(["run", "--config", chain_yaml,
                         "--out", str(run_dir)]) == 0
        (run_dir / "objective.svg").unlink()
        (run_dir / "constraint.svg").unlink()
        capsys.readouterr()
        assert cli.main(["report", str(run_dir)]) == 0
        text = capsys.readouterr().out
        assert f"charts regenerated in {run_dir}" in text
        assert "SAFE" in text
        ET.parse(run_dir / "objective.svg")
        ET.parse(run_dir / "constraint.svg")
        assert "budget = 6.75" in (run_dir / "constraint.svg").read_text()

    def test_rejects_non_run_directory(self, tmp_path, capsys):
        assert cli.main(["report", str(tmp_path)]) == 1
        assert "not a run directory" in capsys.readouterr().err
