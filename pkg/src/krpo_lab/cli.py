"""Command line entry point: ``krpo-lab {run,sweep,compare,selftest}``."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import selftest, stats, svgplot
from .config import SWEEP_AXES, ConfigError, ExperimentConfig, parse_config, serialize_config
from .trainer import ESTIMATORS, RunReport, TrainConfig, run

log = logging.getLogger("krpo_lab")

INCOMPLETE = ".incomplete"
METRICS_FILE = "metrics.csv"
REPORT_FILE = "report.json"
CURVE_FILE = "reward_curve.svg"


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    text = Path(args.config).read_text() if args.config else ""
    cfg = parse_config(text)
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.estimator is not None:
        overrides["estimator"] = args.estimator
    if args.fixed_b is not None:
        overrides["fixed_b"] = args.fixed_b
    if getattr(args, "steps", None) is not None:
        overrides["steps"] = args.steps
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    if args.out:
        cfg = replace(cfg, outdir=args.out)
    return cfg


def run_dir_name(train: TrainConfig) -> str:
    return f"{train.estimator}_{train.seed}"


def curve_svg(title: str, named_curves: Sequence[tuple[str, Sequence[float]]], faint=()) -> str:
    return svgplot.line_chart(named_curves, title=title, y_label="smoothed mean reward", faint=faint)


def smoothed(values: Sequence[float]) -> list[float]:
    return stats.running_average(values, stats.smoothing_window(len(values)))


def execute_run(train: TrainConfig, run_dir: Path, quiet: bool = True) -> RunReport:
    """Train once and write metrics CSV, report JSON and reward curve into ``run_dir``.

    A ``.incomplete`` marker exists while the run is in flight and stays behind
    if anything fails.
    """
    run_dir.mkdir(parents=True, exist_ok=True)
    marker = run_dir / INCOMPLETE
    marker.write_text("run did not finish\n")

    def progress(m):
        if not quiet and (m.step == 1 or m.step % 50 == 0 or m.step == train.steps):
            log.info("%s step %d mean_reward=%.4f loss=%.4f", run_dir.name, m.step, m.mean_reward, m.loss)

    report = run(train, on_step=progress)
    _write(run_dir / METRICS_FILE, report.metrics_csv())
    _write(run_dir / REPORT_FILE, report.to_json())
    title = f"{train.estimator} seed {train.seed} ({train.tier})"
    _write(run_dir / CURVE_FILE, curve_svg(title, [(train.estimator, smoothed(report.mean_rewards))]))
    marker.unlink()
    return report


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    run_dir = Path(cfg.outdir) / run_dir_name(cfg.train)
    try:
        report = execute_run(cfg.train, run_dir, args.quiet)
    except OSError as exc:
        print(f"error: cannot write run artifacts under {run_dir}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"{run_dir}: final accuracy {report.final_accuracy:.4f}, final smoothed reward {report.final_smoothed_reward:.4f}")
    return 0


def sweep_combinations(cfg: ExperimentConfig) -> list[dict[str, Any]]:
    axes = cfg.sweep_axes()
    return [dict(zip(axes, values)) for values in itertools.product(*(cfg.sweep[a] for a in axes))]


def combo_name(combo: dict[str, Any]) -> str:
    return "-".join(f"{axis}={value}" for axis, value in combo.items()) or "base"


def _sweep_job(job: tuple[dict, str, bool]) -> tuple[str, float, float, str]:
    train_dict, run_dir, quiet = job
    try:
        report = execute_run(TrainConfig.from_dict(train_dict), Path(run_dir), quiet)
    except Exception as exc:  # recorded in the index, sweep continues
        return "failed", float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"
    return "ok", report.final_smoothed_reward, report.final_accuracy, ""


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if not cfg.sweep:
        print("error: sweep needs at least one 'sweep.<axis> = v1, v2, ...' line", file=sys.stderr)
        return 2
    outdir = Path(cfg.outdir)
    combos = sweep_combinations(cfg)
    jobs = []
    for combo in combos:
        train = replace(cfg.train, **{SWEEP_AXES[a]: v for a, v in combo.items()})
        run_dir = outdir / combo_name(combo) / run_dir_name(train)
        jobs.append((train.to_dict(), str(run_dir), args.quiet))
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create sweep directory {outdir}: {exc}", file=sys.stderr)
        return 1
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(job) for job in jobs]
    axes = cfg.sweep_axes()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(axes + ["status", "path", "final_smoothed_reward", "final_accuracy", "error"])
    for combo, (_, run_dir, _), (status, reward, acc, err) in zip(combos, jobs, results):
        rel = Path(run_dir).relative_to(outdir).as_posix()
        w.writerow([combo[a] for a in axes] + [status, rel, repr(reward), repr(acc), err])
    _write(outdir / "sweep_index.csv", buf.getvalue())
    _write(outdir / "sweep_config.txt", serialize_config(cfg))
    failed = sum(r[0] != "ok" for r in results)
    if not args.quiet:
        print(f"{len(combos)} runs, {failed} failed; index at {outdir / 'sweep_index.csv'}")
    return 1 if failed else 0


def collect_reports(paths: Sequence[str]) -> list[RunReport]:
    """Load reports from report files, run directories, or trees of run directories."""
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_file():
            files.append(p)
        elif (p / REPORT_FILE).is_file():
            files.append(p / REPORT_FILE)
        elif p.is_dir():
            found = sorted(p.rglob(REPORT_FILE))
            if not found:
                raise ValueError(f"{p}: no {REPORT_FILE} found")
            files += found
        else:
            raise ValueError(f"{p}: no such file or directory")
    return [RunReport.from_dict(json.loads(f.read_text())) for f in files]


def _label(reports: Sequence[RunReport], fallback: str) -> str:
    names = sorted({r.estimator for r in reports})
    return names[0] if len(names) == 1 else fallback


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        reports_a = collect_reports(args.a)
        reports_b = collect_reports(args.b)
        pairing = args.pairing or load_config(args).pairing
        cmp = stats.compare_runs(reports_a, reports_b, pairing, _label(reports_a, "a"), _label(reports_b, "b"))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    outdir = Path(args.out or "compare")
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        _write(outdir / "comparison.csv", cmp.to_csv())
        _write(outdir / "comparison.json", cmp.to_json())
        curves = []
        faint = []
        for k, reports in enumerate((reports_a, reports_b)):
            per_seed = [smoothed(r.mean_rewards) for r in sorted(reports, key=lambda r: r.seed)]
            faint += [(k, c) for c in per_seed]
            length = min(len(c) for c in per_seed)
            curves.append(np.mean([c[:length] for c in per_seed], axis=0).tolist())
        names = [f"{cmp.label_a} (mean)", f"{cmp.label_b} (mean)"]
        _write(outdir / "comparison.svg", curve_svg(f"{cmp.label_b} vs {cmp.label_a}", list(zip(names, curves)), faint))
    except OSError as exc:
        print(f"error: cannot write comparison under {outdir}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(cmp.to_csv(), end="")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    echo = (lambda line: None) if args.quiet else print
    return 0 if selftest.run_all(args.seed or 0, echo) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, metavar="N", help="override the seed")
    common.add_argument("--estimator", choices=ESTIMATORS, help="override the advantage estimator")
    common.add_argument("--fixed-b", type=float, metavar="VALUE", help="baseline for --estimator fixed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="krpo-lab", description="Kalman-filtered vs group-mean advantage lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="train one configuration")
    p.add_argument("--steps", type=int, metavar="N", help="override the number of steps")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="train the Cartesian product of sweep axes")
    p.add_argument("--steps", type=int, metavar="N", help="override the number of steps")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel sub-runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", parents=[common], help="compare two seed-matched run sets (b vs a)")
    p.add_argument("--a", nargs="+", required=True, metavar="PATH", help="baseline runs")
    p.add_argument("--b", nargs="+", required=True, metavar="PATH", help="candidate runs")
    p.add_argument("--pairing", choices=("question", "seed"), help="t-test pairing (default: compare.pairing)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("selftest", parents=[common], help="run the invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
