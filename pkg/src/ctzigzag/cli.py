"""Command-line entry point: ``ctzigzag {run,calibrate,experiment}``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfg
from .experiments import EXPERIMENTS, make_experiment, run_experiment, write_report_csv
from .harness import (
    calibrate,
    mean_or_none,
    replicate_seed,
    run_config,
    start_position,
    with_seed,
    write_json,
    write_skeleton_csv,
)


def _aggregate(summaries: list[dict]) -> dict:
    out = {}
    for key in ("occupancy", "thinning_efficiency"):
        out[key] = mean_or_none(s[key] for s in summaries)
    est = [s["estimates"] for s in summaries if "estimates" in s]
    if est:
        out["estimates"] = {
            key: np.mean([e[key] for e in est], axis=0).tolist()
            for key in ("mean", "second_moment", "exact_mean", "exact_second_moment")
            if key in est[0]
        }
    if "inclusion_probability" in summaries[0]:
        out["inclusion_probability"] = np.mean(
            [s["inclusion_probability"] for s in summaries], axis=0
        ).tolist()
    return out


def cmd_run(args) -> int:
    config = with_seed(cfg.load_config(args.config), args.seed, args.replicates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    results = run_config(config, threads=args.threads)
    csv_name = Path(config.outputs["csv"])
    for r, result in enumerate(results):
        name = csv_name if len(results) == 1 else csv_name.with_name(
            f"{csv_name.stem}_{r:03d}{csv_name.suffix}")
        write_skeleton_csv(result.skeleton, out / name)
    summaries = [res.summary for res in results]
    summary = dict(
        config=config.to_dict(), seed=config.seed, replicates=summaries,
        wall_time=time.perf_counter() - started, **_aggregate(summaries),
    )
    write_json(summary, out / config.outputs["summary"])
    print(f"wrote {len(results)} skeleton(s) and {out / config.outputs['summary']}")
    return 0


def cmd_calibrate(args) -> int:
    config = with_seed(cfg.load_config(args.config), args.seed, None)
    if config.is_sticky:
        raise cfg.ConfigError("spike-and-slab tempering uses a constant kappa", "/model")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = cfg.build_path(config)
    rng = np.random.default_rng(replicate_seed(config.seed, 0))
    x0 = start_position(config, path.target, rng)
    _, record, _ = calibrate(config, path, x0, rng)
    record["seed"] = config.seed
    write_json(record, out / config.outputs["kappa"])
    print(f"psi = {record['psi']}")
    return 0


def cmd_experiment(args) -> int:
    overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    experiment = make_experiment(args.name, overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(experiment, threads=args.threads)
    write_json(report.to_dict(), out / f"{args.name}_report.json")
    write_report_csv(report, out / f"{args.name}_report.csv")
    for row in report.rows:
        print(json.dumps(row))
    return 0 if all(row["failed"] == 0 for row in report.rows) else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctzigzag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", default=".", help="output directory")

    run = sub.add_parser("run", help="simulate and summarize one configuration")
    common(run)
    run.add_argument("--replicates", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate", help="fit kappa and write it as JSON")
    common(cal)
    cal.set_defaults(func=cmd_calibrate)

    exp = sub.add_parser("experiment", help="run a benchmark replicate study")
    exp.add_argument("name", choices=sorted(EXPERIMENTS))
    common(exp, config_required=False)
    exp.add_argument("--replicates", type=int)
    exp.add_argument("--threads", type=int, default=1)
    exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "replicates", None) is not None and args.replicates < 1:
        print("error: --replicates must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"config error at {exc.pointer or '/'}: {exc.message}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
