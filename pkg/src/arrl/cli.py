"""Command-line entry point: ``arrl {train,plot,transfer,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from arrl.errors import ARRLError
from arrl.experiment import (TransferProfile, find_runs, load_config, load_run, run_experiment,
                             seeds_from_arg, transfer_table)
from arrl.plotting import plot_runs
from arrl.transfer import write_table


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    counts = run_experiment(cfg, out=args.out, seeds=seeds_from_arg(args.seeds), jobs=args.jobs)
    print(f"runs: {counts['done']} done, {counts['skipped']} skipped, {counts['failed']} failed")
    return 1 if counts["failed"] else 0


def _cmd_plot(args) -> int:
    records = [load_run(r)[1] for r in find_runs(args.runs)]
    csv_path, svg_path = plot_runs(records, args.out)
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def _cmd_transfer(args) -> int:
    profile = load_config(args.config).transfer if args.config else TransferProfile()
    env_cfg = load_config(args.config).env_config() if args.config else None
    if args.seeds:
        profile = profile.model_copy(update={"eval_seeds": seeds_from_arg(args.seeds)})
    rows, _ = transfer_table(args.checkpoints, profile, env_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(rows, out / "transfer.csv")
    for r in rows:
        print(f"{r.method:>16} {r.gait:>9}  direct {r.direct_return:9.2f} ({r.direct_distance:.2f} m)"
              f"  progressive {r.progressive_return:9.2f} ({r.progressive_distance:.2f} m)")
    return 0


def _cmd_selftest(args) -> int:
    from arrl.selftest import run_selftest

    return 0 if run_selftest(verbose=True) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arrl", description="Residual RL with black-box tuned gait controllers")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run every method x seed in a config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None, help="output root (defaults to the config's output_dir)")
    t.add_argument("--seeds", default=None, help="override seeds, e.g. 0,1,2 or 0-4")
    t.add_argument("--jobs", type=int, default=1, help="parallel runs")
    t.set_defaults(func=_cmd_train)

    pl = sub.add_parser("plot", help="best-so-far curves from completed runs")
    pl.add_argument("runs", nargs="+", help="run directories or roots to search")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)

    tr = sub.add_parser("transfer", help="direct vs progressive evaluation on perturbed dynamics")
    tr.add_argument("checkpoints", help="root containing run checkpoints")
    tr.add_argument("--config", default=None, help="experiment config supplying the transfer profile")
    tr.add_argument("--out", required=True)
    tr.add_argument("--seeds", default=None, help="evaluation seeds")
    tr.set_defaults(func=_cmd_transfer)

    st = sub.add_parser("selftest", help="run the built-in property checks")
    st.set_defaults(func=_cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ARRLError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
