"""Command-line entry point: simulate, run, eval, and report subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import MODES, RunConfig


def _cmd_simulate(args) -> int:
    from .io import write_dataset
    from .sim import Scenario, preset_scenario

    if args.scenario:
        with open(args.scenario) as f:
            spec = json.load(f)
    else:
        spec = preset_scenario(
            args.preset, n_lidars=args.lidars, noisy=not args.zero_noise
        )
    if args.seed is not None:
        spec["seed"] = args.seed
    scenario = Scenario.from_dict(spec)
    manifest = write_dataset(scenario, args.out, binary=args.binary)
    print(f"dataset written: {manifest}")
    return 0


def _cmd_run(args) -> int:
    from .pipeline import run_and_export

    overrides = {"mode": args.mode} if args.mode else {}
    config = RunConfig.load(args.config, overrides)
    out = args.out or (Path(args.dataset) / f"run_{config.mode}")
    metrics = run_and_export(args.dataset, config, out)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    print(f"outputs written to {out}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluate import ate, load_tum, rte

    est = load_tum(args.est)
    truth = load_tum(args.truth)
    ate_t, ate_r = ate(est, truth)
    metrics = {"ATE_t": ate_t, "ATE_r": ate_r}
    try:
        rte_t, rte_r = rte(est, truth, delta=args.rte_delta)
        metrics.update({"RTE_t": rte_t, "RTE_r": rte_r})
    except ValueError as err:
        print(f"RTE skipped: {err}", file=sys.stderr)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "eval.json", "w") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
    return 0


def _cmd_report(args) -> int:
    from .report import render_report

    written = render_report(args.run_dir, args.out, args.truth)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asynclio",
        description="Asynchronous multi-LiDAR-inertial odometry toolkit",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize a dataset")
    p_sim.add_argument("scenario", nargs="?", help="scenario JSON file")
    p_sim.add_argument(
        "--preset",
        default="corridor",
        choices=("corridor", "tunnel", "stationary", "circle"),
        help="built-in scenario when no JSON is given",
    )
    p_sim.add_argument("--lidars", type=int, default=3)
    p_sim.add_argument("--zero-noise", action="store_true")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--binary", action="store_true", help="binary scan files")
    p_sim.add_argument("--out", required=True, help="output dataset directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_run = sub.add_parser("run", help="run odometry over a dataset")
    p_run.add_argument("dataset", help="dataset directory with manifest.json")
    p_run.add_argument("--config", default=None, help="config JSON file")
    p_run.add_argument("--mode", default=None, choices=MODES)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate a trajectory against truth")
    p_eval.add_argument("est", help="estimated trajectory (TUM)")
    p_eval.add_argument("truth", help="ground-truth trajectory (TUM)")
    p_eval.add_argument("--rte-delta", type=float, default=2.0)
    p_eval.add_argument("--out", default=None, help="directory for eval.json")
    p_eval.set_defaults(func=_cmd_eval)

    p_rep = sub.add_parser("report", help="render figures + summary for a run")
    p_rep.add_argument("run_dir", help="directory produced by `run`")
    p_rep.add_argument("--truth", default=None, help="truth TUM for overlay")
    p_rep.add_argument("--out", default=None, help="report output directory")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
