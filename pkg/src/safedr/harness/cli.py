"""Command-line entry point.

Subcommands: run, sweep-lambda, sweep-n, example1, heatmap, verify, report.
Exit status: 0 success, 1 configuration error, 2 verification failure.
Sweeps evaluate against the shifted evaluation distribution, which stands
in for a real system here; reports say so rather than claiming equivalence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..envs import make_cartpole_family, upsilon_heatmap
from ..pessimism import calibrate_lambda
from . import reports, svg, verification
from .config import ConfigError, ExperimentConfig, from_mapping, load_config, preset_path
from .runner import (build_bundle, mean_stderr, refine_lambda, run_experiment,
                     run_seeds, write_run_charts)

__all__ = ["main"]

_EVAL_NOTE = ("evaluation uses the shifted eval distribution as a stand-in "
              "for the real system")


def _parse_floats(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError([f"could not parse number list '{text}'"])
    if not values:
        raise ConfigError([f"empty number list '{text}'"])
    return values


def _parse_ints(text: str) -> list[int]:
    values = _parse_floats(text)
    if any(v != int(v) for v in values):
        raise ConfigError([f"expected integers, got '{text}'"])
    return [int(v) for v in values]


def _revalidated(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Apply overrides and re-run full config validation."""
    return from_mapping(cfg.replace(**overrides).to_dict())


def _load_with_overrides(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if getattr(args, "lam", None) is not None:
        overrides["lam"] = args.lam
    return _revalidated(cfg, **overrides) if overrides else cfg


def _seed_list(args, cfg: ExperimentConfig) -> tuple[int, ...]:
    if getattr(args, "seeds", None):
        return tuple(_parse_ints(args.seeds))
    return cfg.repeat_seeds()


def _fmt(value, digits=4) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def _print_table(header, rows) -> None:
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _cmd_run(args) -> int:
    cfg = _load_with_overrides(args)
    seeds = _seed_list(args, cfg)
    out_root = Path(cfg.out)
    outputs = []
    for s in seeds:
        sub = out_root if len(seeds) == 1 else out_root / f"seed_{s}"
        outputs.append(run_experiment(cfg.replace(seed=s), write=True, out=sub))
    rows = [o.summary for o in outputs]
    reports.write_summary(out_root / "summary.csv", rows)
    _print_table(("seed", "J_eval", "C_eval", "budget", "safety", "infeasible"),
                 [(r["seed"], r["J_eval"], r["C_eval"], r["budget"],
                   r["safety"], "yes" if r["infeasible"] else "no")
                  for r in rows])
    if len(rows) > 1:
        jm, je = mean_stderr([r["J_eval"] for r in rows])
        cm, ce = mean_stderr([r["C_eval"] for r in rows])
        print(f"mean over {len(rows)} seeds: J_eval {jm:.4g} +- {je:.2g}, "
              f"C_eval {cm:.4g} +- {ce:.2g}")
    print(f"artifacts in {out_root}")
    return 0


def _sweep_suggestion(cfg: ExperimentConfig, by_lam: dict) -> list[str]:
    """Calibration lines for a sweep report, from its lowest-lambda runs."""
    done = {lam: outs for lam, outs in by_lam.items() if outs}
    if not done:
        return []
    ref_lam = 0.0 if 0.0 in done else min(done)
    outs = done[ref_lam]
    pooled = np.concatenate([o.result.upsilon_trace for o in outs])
    if pooled.size == 0 or not np.any(pooled > 0.0):
        return ["calibration: no disagreement recorded, no suggestion"]
    sug = calibrate_lambda(pooled, build_bundle(cfg).c_max)
    lines = [f"calibrate_lambda suggestion (from lam={ref_lam:g} runs): "
             f"lam ~ {sug.lam_suggested:.4g} "
             f"(decade range {sug.lam_range[0]:.4g} .. {sug.lam_range[1]:.4g})"]
    if ref_lam == 0.0:
        refined = refine_lambda(outs)
        if refined > 0.0:
            lines.append(f"gap-matched refinement (transfer gap / disagreement "
                         f"return at lam=0): lam ~ {refined:.4g}")
    return lines


def _cmd_sweep_lambda(args) -> int:
    cfg = _load_with_overrides(args)
    lams = sorted(set(_parse_floats(args.lams)))
    seeds = _seed_list(args, cfg)
    out_root = Path(args.out or cfg.out)
    by_lam: dict[float, list] = {}
    errors: dict[float, str] = {}
    for lam in sorted(lams, reverse=True):  # largest first: safest end first
        try:
            by_lam[lam] = run_seeds(cfg, seeds, lam=lam)
        except Exception as exc:  # isolate per-lambda failures, keep sweeping
            by_lam[lam] = []
            errors[lam] = str(exc)
    budget = build_bundle(cfg).budget
    rows = []
    for lam in lams:
        outs = by_lam[lam]
        if not outs:
            rows.append([lam, None, None, None, None, None, None,
                         errors.get(lam, "failed")])
            continue
        jm, je = mean_stderr([o.result.final_j_eval for o in outs])
        cm, ce = mean_stderr([o.result.final_c_eval for o in outs])
        inf = sum(o.result.infeasible for o in outs)
        rows.append([lam, jm, je, cm, ce,
                     "SAFE" if cm <= budget + 1e-9 else "UNSAFE", inf, None])
    header = ("lam", "J_mean", "J_stderr", "C_mean", "C_stderr", "safety",
              "infeasible_runs", "error")
    print(f"lambda sweep over seeds {list(seeds)}; {_EVAL_NOTE}")
    _print_table(header, rows)
    for line in _sweep_suggestion(cfg, by_lam):
        print(line)
    reports.write_rows(out_root / "sweep_lambda.csv", header, rows)
    plotted = [r for r in rows if r[1] is not None]
    if len(plotted) >= 2:
        lam_axis = np.array([r[0] for r in plotted])
        svg.line_chart(out_root / "sweep_lambda_constraint.svg",
                       [svg.Series("C_eval mean", lam_axis,
                                   np.array([r[3] for r in plotted]),
                                   color="#d62728")],
                       title="Evaluation constraint vs penalty weight",
                       xlabel="lambda", ylabel="discounted cost",
                       budget=budget, note=_EVAL_NOTE)
        svg.line_chart(out_root / "sweep_lambda_objective.svg",
                       [svg.Series("J_eval mean", lam_axis,
                                   np.array([r[1] for r in plotted]))],
                       title="Evaluation objective vs penalty weight",
                       xlabel="lambda", ylabel="discounted return",
                       note=_EVAL_NOTE)
    print(f"sweep artifacts in {out_root}")
    return 0


def _cmd_sweep_n(args) -> int:
    cfg = _load_with_overrides(args)
    if cfg.mode != "sampled":
        raise ConfigError(["sweep-n: sibling scaling only applies to "
                           "sampled-mode disagreement"])
    grid = sorted(set(_parse_ints(args.grid)))
    seeds = _seed_list(args, cfg)
    out_root = Path(args.out or cfg.out)
    budget = build_bundle(cfg).budget

    base_times = []
    for s in seeds:
        out0 = run_experiment(cfg.replace(seed=s, lam=0.0), probe_upsilon=False)
        base_times.append(out0.result.runtime_s)
    t0 = float(np.mean(base_times))
    print(f"lam=0 baseline (no disagreement probing): {t0:.2f} s mean over "
          f"{len(seeds)} seeds; {_EVAL_NOTE}")
    if t0 < 1.0:
        print("warning: baseline under 1 s, relative runtimes will be noisy")

    rows = []
    for n in grid:
        try:
            outs = run_seeds(cfg.replace(num_siblings=n), seeds)
        except ValueError as exc:
            rows.append([n, None, None, None, None, None, "invalid: "
                         + str(exc)])
            continue
        jm, je = mean_stderr([o.result.final_j_eval for o in outs])
        cm, ce = mean_stderr([o.result.final_c_eval for o in outs])
        rel = float(np.mean([o.result.runtime_s for o in outs])) / t0
        rows.append([n, jm, je, cm, ce, rel,
                     "SAFE" if cm <= budget + 1e-9 else "UNSAFE"])
    header = ("n", "J_mean", "J_stderr", "C_mean", "C_stderr",
              "relative_runtime", "note")
    _print_table(header, rows)
    reports.write_rows(out_root / "sweep_n.csv", header, rows)
    plotted = [r for r in rows if r[1] is not None]
    if len(plotted) >= 2:
        n_axis = np.array([float(r[0]) for r in plotted])
        svg.line_chart(out_root / "sweep_n_constraint.svg",
                       [svg.Series("C_eval mean", n_axis,
                                   np.array([r[3] for r in plotted]),
                                   color="#d62728")],
                       title="Evaluation constraint vs sibling count",
                       xlabel="siblings n", ylabel="discounted cost",
                       budget=budget, note=_EVAL_NOTE)
        svg.line_chart(out_root / "sweep_n_runtime.svg",
                       [svg.Series("runtime / baseline", n_axis,
                                   np.array([r[5] for r in plotted]))],
                       title="Relative runtime vs sibling count",
                       xlabel="siblings n", ylabel="runtime ratio")
    print(f"sweep artifacts in {out_root}")
    return 0


def _cmd_example1(args) -> int:
    cfg = load_config(preset_path("example1"))
    if args.out is not None:
        cfg = _revalidated(cfg, out=args.out)
    if args.seed is not None:
        cfg = _revalidated(cfg, seed=args.seed)
    lams = sorted(set(_parse_floats(args.lams)))
    out_root = Path(cfg.out)
    budget = build_bundle(cfg).budget
    outputs = {}
    for lam in sorted(lams, reverse=True):
        outputs[lam] = run_experiment(
            cfg.replace(lam=lam, name=f"example1-lam{lam:g}"),
            write=True, out=out_root / f"lam_{lam:g}")
    rows = []
    for lam in lams:
        o = outputs[lam]
        m = o.result.final_metrics
        rows.append([lam, m.j_train, m.c_train_penalized, o.result.final_j_eval,
                     o.result.final_c_eval, o.summary["safety"],
                     "yes" if o.result.infeasible else "no"])
    header = ("lam", "J_sim", "C_sim_penalized", "J_eval", "C_eval", "safety",
              "infeasible")
    print(f"safety performance under different lambda values; budget "
          f"{budget:g}; {_EVAL_NOTE}")
    _print_table(header, rows)
    reports.write_rows(out_root / "example1.csv", header, rows)
    lam_axis = np.array(lams, dtype=float)
    svg.line_chart(out_root / "example1.svg",
                   [svg.Series("C_eval", lam_axis,
                               np.array([r[4] for r in rows]), color="#d62728"),
                    svg.Series("J_eval", lam_axis,
                               np.array([r[3] for r in rows]))],
                   title="Worst-case chain: deployment cost vs penalty weight",
                   xlabel="lambda", ylabel="discounted value", budget=budget,
                   note=_EVAL_NOTE)
    print(f"artifacts in {out_root}")
    return 0


def _cmd_heatmap(args) -> int:
    family = make_cartpole_family()
    res = upsilon_heatmap(family, n=args.siblings, seed=args.seed or 0)
    out_root = Path(args.out or "runs/heatmap")
    rows = []
    for ai, action in enumerate(res.actions):
        for ti, theta in enumerate(res.theta_grid):
            for di, thetadot in enumerate(res.thetadot_grid):
                rows.append([float(action), float(theta), float(thetadot),
                             float(res.values[ai, ti, di])])
    reports.write_rows(out_root / "heatmap.csv",
                       ("action", "theta", "thetadot", "upsilon"), rows)
    for ai, action in enumerate(res.actions):
        svg.heatmap_chart(out_root / f"heatmap_action_{ai}.svg",
                          res.values[ai],
                          [f"{t:.2f}" for t in res.theta_grid],
                          [f"{d:.1f}" for d in res.thetadot_grid],
                          title=f"Disagreement map, action = {action:g}",
                          xlabel="theta_dot", ylabel="theta")
    means = res.mean_by_action()
    _print_table(("action", "mean_upsilon"),
                 [[float(a), float(m)] for a, m in zip(res.actions, means)])
    hi = res.mean_near(np.pi, len(res.actions) - 1)
    lo = res.mean_near(0.0, len(res.actions) - 1)
    print(f"at max action: mean upsilon near theta=pi {hi:.3e} vs near "
          f"theta=0 {lo:.3e} (ratio {hi / lo:.2f})")
    print(f"heatmap artifacts in {out_root}")
    return 0


def _cmd_verify(args) -> int:
    names = args.suites.split(",") if args.suites else None
    try:
        report = verification.run_suites(names)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in report.lines():
        print(line)
    return 0 if report.passed else 2


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    metrics_path = run_dir / "metrics.csv"
    summary_path = run_dir / "summary.csv"
    if not metrics_path.exists() or not summary_path.exists():
        raise ConfigError([f"{run_dir}: not a run directory "
                           "(need metrics.csv and summary.csv)"])
    header, rows = reports.read_rows(summary_path)
    _print_table(header, rows)
    budget_idx = header.index("budget")
    budget = float(rows[0][budget_idx])
    cols = reports.read_metrics(metrics_path)
    write_run_charts(run_dir, cols, budget)
    print(f"charts regenerated in {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safedr",
        description="Constrained training across randomized domains, with "
                    "disagreement penalties and exact verification suites.")
    sub = parser.add_subparsers(dest="command")

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="YAML config path")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")

    p_run = sub.add_parser("run", help="run one experiment, write artifacts")
    common(p_run)
    p_run.add_argument("--mode", choices=("exact", "sampled"), default=None,
                       help="disagreement estimator override")
    p_run.add_argument("--lam", type=float, default=None,
                       help="penalty weight override")
    p_run.add_argument("--seeds", default=None,
                       help="comma-separated seed list override")
    p_run.set_defaults(handler=_cmd_run)

    p_sl = sub.add_parser("sweep-lambda",
                          help="evaluate a grid of penalty weights")
    common(p_sl)
    p_sl.add_argument("--mode", choices=("exact", "sampled"), default=None)
    p_sl.add_argument("--lams", required=True,
                      help="comma-separated lambda grid")
    p_sl.add_argument("--seeds", default=None)
    p_sl.set_defaults(handler=_cmd_sweep_lambda)

    p_sn = sub.add_parser("sweep-n", help="evaluate sibling-count scaling")
    common(p_sn)
    p_sn.add_argument("--grid", default="1,2,4,8,16,32,64,128",
                      help="comma-separated sibling counts")
    p_sn.add_argument("--seeds", default=None)
    p_sn.add_argument("--lam", type=float, default=None,
                      help="penalty weight override")
    p_sn.set_defaults(handler=_cmd_sweep_n)

    p_e1 = sub.add_parser("example1",
                          help="worst-case chain: penalty weight study")
    p_e1.add_argument("--seed", type=int, default=None)
    p_e1.add_argument("--out", default=None)
    p_e1.add_argument("--lams", default="0,4,9,12")
    p_e1.set_defaults(handler=_cmd_example1)

    p_hm = sub.add_parser("heatmap",
                          help="cartpole disagreement map over the state grid")
    p_hm.add_argument("--seed", type=int, default=None)
    p_hm.add_argument("--out", default=None)
    p_hm.add_argument("--siblings", type=int, default=64)
    p_hm.set_defaults(handler=_cmd_heatmap)

    p_vf = sub.add_parser("verify", help="run the invariant suites")
    p_vf.add_argument("--suites", default=None,
                      help="comma-separated suite names (default: all)")
    p_vf.set_defaults(handler=_cmd_verify)

    p_rp = sub.add_parser("report",
                          help="regenerate charts and summary from a run dir")
    p_rp.add_argument("run", help="run directory containing metrics.csv")
    p_rp.set_defaults(handler=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.print_help()
        return 1
    try:
        return args.handler(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
