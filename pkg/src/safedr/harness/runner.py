"""Experiment orchestration: build environments, train, emit artifacts.

A config names one environment bundle; run_experiment trains on it and can
write the full artifact set (config copy, metrics.csv, summary.csv, policy
file, SVG charts with companion CSVs) into the output directory.  The
penalty-weight calibration loop lives here too: a decade-rule suggestion
from zero-penalty disagreement statistics, then one evidence-based
refinement that sizes lambda to the observed transfer gap.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cmdp import TabularCMDP
from ..domains import DomainFamily, EnsembleSpec
from ..envs import (CartpoleSpec, ChainSpec, PointGoalSpec, RandomCmdpSpec,
                    build_chain, build_random_pair, make_cartpole_family,
                    make_pointgoal_family)
from ..pessimism import CalibrationResult, PenaltyConfig, calibrate_lambda
from ..solvers import (ContinuousTask, TrainResult, make_cartpole_task,
                       make_pointgoal_task, train_continuous, train_tabular)
from . import reports, svg
from .config import ExperimentConfig, dump_config

__all__ = [
    "EnvBundle",
    "RunOutput",
    "CalibrationOutcome",
    "build_bundle",
    "run_experiment",
    "run_seeds",
    "calibrate_and_refine",
    "mean_stderr",
]


@dataclass(frozen=True)
class EnvBundle:
    """Everything a solver needs for one environment kind.

    Tabular kinds carry an embedding and the deployment env; continuous
    kinds carry the vectorized task hooks.  c_max is the one-step cost
    scale used to seed lambda calibration.
    """

    kind: str
    family: DomainFamily
    budget: float
    c_max: float
    fingerprint: str
    embedding: np.ndarray | None = None
    real_env: TabularCMDP | None = None
    task: ContinuousTask | None = None
    spec: object = None
    extras: dict = field(default_factory=dict)


def _spec_fingerprint(spec) -> str:
    return hashlib.sha256(repr(spec).encode()).hexdigest()


def build_bundle(cfg: ExperimentConfig) -> EnvBundle:
    if cfg.env_kind == "chain":
        spec = ChainSpec(epsilon=cfg.env["epsilon"], gamma=cfg.env["gamma"])
        pair = build_chain(spec)
        budget = pair.budget if cfg.budget is None else cfg.budget
        return EnvBundle(kind="chain", family=pair.family, budget=budget,
                         c_max=pair.real_env.c_max,
                         fingerprint=pair.real_env.fingerprint(),
                         embedding=pair.embedding, real_env=pair.real_env,
                         spec=spec)
    if cfg.env_kind == "random":
        spec = RandomCmdpSpec(num_states=cfg.env["num_states"],
                              num_actions=cfg.env["num_actions"],
                              embedding_dim=cfg.env["embedding_dim"],
                              kl_radius=cfg.env["kl_radius"],
                              seed=cfg.env["env_seed"])
        pair = build_random_pair(spec)
        budget = pair.real_env.budget if cfg.budget is None else cfg.budget
        return EnvBundle(kind="random", family=pair.family, budget=budget,
                         c_max=pair.real_env.c_max,
                         fingerprint=pair.real_env.fingerprint(),
                         embedding=pair.embedding, real_env=pair.real_env,
                         spec=spec, extras={"probe": pair.probe})
    if cfg.env_kind == "pointgoal":
        spec = PointGoalSpec()
        budget = spec.budget if cfg.budget is None else cfg.budget
        # crossing cost is kinetic: 0.5 per step at unit speed sets the scale
        return EnvBundle(kind="pointgoal", family=make_pointgoal_family(spec),
                         budget=budget, c_max=0.5,
                         fingerprint=_spec_fingerprint(spec),
                         task=make_pointgoal_task(spec), spec=spec)
    if cfg.env_kind == "cartpole":
        spec = CartpoleSpec()
        budget = spec.budget if cfg.budget is None else cfg.budget
        return EnvBundle(kind="cartpole", family=make_cartpole_family(spec),
                         budget=budget, c_max=1.0,
                         fingerprint=_spec_fingerprint(spec),
                         task=make_cartpole_task(spec), spec=spec)
    raise ValueError(f"unknown environment kind '{cfg.env_kind}'")


@dataclass
class RunOutput:
    config: ExperimentConfig
    bundle: EnvBundle
    result: TrainResult
    summary: dict
    out_dir: Path | None = None
    paths: dict = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig, write: bool = False,
                   out: str | Path | None = None,
                   probe_upsilon: bool = True) -> RunOutput:
    """Train one configuration; optionally write the artifact set.

    probe_upsilon=False with lam == 0 skips disagreement probing entirely;
    that is the plain randomization baseline sweeps time themselves against.
    """
    bundle = build_bundle(cfg)
    needs_probe = probe_upsilon or cfg.lam > 0.0
    if needs_probe and cfg.mode == "sampled" and cfg.num_siblings < 2:
        raise ValueError("sampled disagreement needs at least 2 siblings "
                         "per domain: the variance of one prediction is "
                         "undefined")
    penalty = PenaltyConfig(lam=cfg.lam, mode=cfg.mode) if needs_probe else None
    ensemble = EnsembleSpec(num_rollout=cfg.num_rollout,
                            num_siblings=cfg.num_siblings, seed=cfg.seed)
    if bundle.task is not None:
        result = train_continuous(bundle.task, bundle.family, bundle.budget,
                                  penalty, ensemble, cfg.solver, cfg.seed)
    else:
        result = train_tabular(bundle.family, bundle.budget, bundle.embedding,
                               penalty, ensemble, cfg.solver, cfg.seed)
    summary = reports.summary_row(cfg, result, bundle.budget, bundle.fingerprint)
    output = RunOutput(config=cfg, bundle=bundle, result=result, summary=summary)
    if write:
        output.out_dir = Path(out if out is not None else cfg.out)
        output.paths = write_artifacts(output.out_dir, output)
    return output


def write_artifacts(out_dir: Path, output: RunOutput) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"config": out_dir / "config.yaml"}
    dump_config(output.config, paths["config"])
    paths["metrics"] = reports.write_metrics(out_dir / "metrics.csv",
                                             output.result.metrics)
    paths["summary"] = reports.write_summary(out_dir / "summary.csv",
                                             [output.summary])
    paths["policy"] = save_policy(out_dir / "policy.npz", output.result.policy)
    paths.update(write_run_charts(out_dir,
                                  reports.metrics_columns(output.result.metrics),
                                  output.bundle.budget))
    return paths


def save_policy(path: Path, policy) -> Path:
    if hasattr(policy, "logits"):
        np.savez(path, kind="tabular-softmax", logits=policy.logits)
    elif hasattr(policy, "probs"):
        np.savez(path, kind="tabular", probs=policy.probs)
    else:
        np.savez(path, kind="linear-gaussian", weights=policy.weights,
                 std=np.asarray(policy.std))
    return path


def _chart_rows(cols: dict, names) -> list[list]:
    """Column dict -> rows for a companion CSV, NaN back to blank cells."""
    length = len(cols["iteration"])
    rows = []
    for i in range(length):
        row = []
        for name in names:
            v = float(cols[name][i])
            row.append(None if np.isnan(v) else
                       (int(v) if name == "iteration" else v))
        rows.append(row)
    return rows


def write_run_charts(out_dir: Path, cols: dict, budget: float) -> dict:
    """Objective and constraint training charts, each with a companion CSV."""
    out_dir = Path(out_dir)
    it = cols["iteration"]
    paths = {}
    j_series = [svg.Series("J_train", it, cols["J_train"]),
                svg.Series("J_eval", it, cols["J_eval"], color="#2ca02c")]
    paths["objective_svg"] = svg.line_chart(
        out_dir / "objective.svg", j_series, title="Objective",
        xlabel="iteration", ylabel="discounted return")
    paths["objective_csv"] = reports.write_rows(
        out_dir / "objective.csv", ("iteration", "J_train", "J_eval"),
        _chart_rows(cols, ("iteration", "J_train", "J_eval")))
    c_series = [svg.Series("C_train_raw", it, cols["C_train_raw"]),
                svg.Series("C_train_penalized", it, cols["C_train_penalized"],
                           color="#9467bd"),
                svg.Series("C_eval", it, cols["C_eval"], color="#d62728")]
    paths["constraint_svg"] = svg.line_chart(
        out_dir / "constraint.svg", c_series, title="Constraint",
        xlabel="iteration", ylabel="discounted cost", budget=budget)
    paths["constraint_csv"] = reports.write_rows(
        out_dir / "constraint.csv",
        ("iteration", "C_train_raw", "C_train_penalized", "C_eval"),
        _chart_rows(cols, ("iteration", "C_train_raw", "C_train_penalized",
                           "C_eval")))
    return paths


def run_seeds(cfg: ExperimentConfig, seeds=None, lam: float | None = None,
              probe_upsilon: bool = True) -> list[RunOutput]:
    """One run per seed; lam overrides the config's penalty weight."""
    seeds = tuple(int(s) for s in (seeds if seeds is not None
                                   else cfg.repeat_seeds()))
    outputs = []
    for s in seeds:
        kw = {"seed": s}
        if lam is not None:
            kw["lam"] = float(lam)
        outputs.append(run_experiment(cfg.replace(**kw),
                                      probe_upsilon=probe_upsilon))
    return outputs


def mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


@dataclass
class CalibrationOutcome:
    """Full record of the calibrate-then-refine procedure.

    Stage 1 runs the seeds at lambda = 0 to expose the transfer gap and
    collect visited disagreement.  Stage 2 runs the decade-rule suggestion.
    If those runs violate the budget at evaluation, collapse the objective
    below the retention floor, or end infeasible, stage 3 makes one
    refinement: lambda sized so the penalty it adds per episode matches the
    transfer gap the zero-penalty runs actually showed.
    """

    seeds: tuple[int, ...]
    budget: float
    baseline: list[RunOutput]
    suggestion: CalibrationResult
    suggested: list[RunOutput]
    final: list[RunOutput]
    lam_final: float
    refined: bool
    retention: float

    @staticmethod
    def _stage_stats(outputs):
        j_mean, j_err = mean_stderr([o.result.final_j_eval for o in outputs])
        c_mean, c_err = mean_stderr([o.result.final_c_eval for o in outputs])
        return {"J_mean": j_mean, "J_stderr": j_err, "C_mean": c_mean,
                "C_stderr": c_err,
                "infeasible": sum(o.result.infeasible for o in outputs)}

    def table(self) -> list[dict]:
        rows = []
        stages = [("baseline", 0.0, self.baseline),
                  ("suggested", self.suggestion.lam_suggested, self.suggested)]
        if self.refined:
            stages.append(("refined", self.lam_final, self.final))
        for stage, lam, outputs in stages:
            row = {"stage": stage, "lam": lam}
            row.update(self._stage_stats(outputs))
            row["safety"] = ("SAFE" if row["C_mean"] <= self.budget + 1e-9
                             else "UNSAFE")
            rows.append(row)
        return rows

    @property
    def baseline_j(self) -> float:
        return mean_stderr([o.result.final_j_eval for o in self.baseline])[0]

    @property
    def final_j(self) -> float:
        return mean_stderr([o.result.final_j_eval for o in self.final])[0]

    @property
    def final_c(self) -> float:
        return mean_stderr([o.result.final_c_eval for o in self.final])[0]


def _stage_acceptable(outputs, budget: float, j_floor: float) -> bool:
    c_mean = mean_stderr([o.result.final_c_eval for o in outputs])[0]
    j_mean = mean_stderr([o.result.final_j_eval for o in outputs])[0]
    if any(o.result.infeasible for o in outputs):
        return False
    return c_mean <= budget and j_mean >= j_floor


def refine_lambda(baseline: list[RunOutput]) -> float:
    """Size lambda so its added penalty matches the observed transfer gap.

    From the zero-penalty runs: gap = mean evaluation cost minus mean tail
    raw training cost (what randomized training failed to anticipate), and
    one unit of lambda adds the tail disagreement return to the penalized
    cost.  Their ratio is the smallest weight whose penalty covers the gap.
    """
    c_eval = mean_stderr([o.result.final_c_eval for o in baseline])[0]
    c_train = mean_stderr([o.result.tail_mean("c_train_raw")
                           for o in baseline])[0]
    ups_return = mean_stderr([o.result.tail_upsilon_return
                              for o in baseline])[0]
    gap = c_eval - c_train
    if gap <= 0.0 or ups_return <= 0.0:
        return 0.0
    return gap / ups_return


def calibrate_and_refine(cfg: ExperimentConfig, seeds=None,
                         retention: float = 0.6) -> CalibrationOutcome:
    seeds = tuple(int(s) for s in (seeds if seeds is not None
                                   else cfg.repeat_seeds()))
    bundle = build_bundle(cfg)
    baseline = run_seeds(cfg, seeds, lam=0.0)
    pooled = np.concatenate([o.result.upsilon_trace for o in baseline])
    suggestion = calibrate_lambda(pooled, bundle.c_max)
    j_floor = retention * mean_stderr(
        [o.result.final_j_eval for o in baseline])[0]
    suggested = run_seeds(cfg, seeds, lam=suggestion.lam_suggested)
    if _stage_acceptable(suggested, bundle.budget, j_floor):
        return CalibrationOutcome(seeds=seeds, budget=bundle.budget,
                                  baseline=baseline, suggestion=suggestion,
                                  suggested=suggested, final=suggested,
                                  lam_final=suggestion.lam_suggested,
                                  refined=False, retention=retention)
    lam_ref = refine_lambda(baseline)
    final = run_seeds(cfg, seeds, lam=lam_ref)
    return CalibrationOutcome(seeds=seeds, budget=bundle.budget,
                              baseline=baseline, suggestion=suggestion,
                              suggested=suggested, final=final,
                              lam_final=lam_ref, refined=True,
                              retention=retention)
