"""Command line: ``run``, ``bench``, ``plot`` and ``resume``.

Failures exit nonzero after printing one line ``error: <category>: <message>``
to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import runner
from .config import RunConfig
from .errors import CftMarlError
from .plot import plot_emit

EXIT_CODES = {"config": 2, "input": 3, "checkpoint": 4, "numerical": 5,
              "dimension": 6, "io": 7, "error": 1}


def _int_list(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _progress(quiet):
    if quiet:
        return None

    def report(entry):
        rewards = " ".join(f"{r:.1f}" for r in entry.raw)
        print(f"episode {entry.episode:4d}  raw [{rewards}]  {entry.wall_ms:.0f} ms",
              flush=True)
    return report


def cmd_run(args):
    config = RunConfig.load(args.config)
    if args.output_dir:
        config = config.replace(output_dir=args.output_dir)
    runner.run(config, progress=_progress(args.quiet))
    print(f"wrote {runner.output_dir(config)}")


def cmd_resume(args):
    runner.resume(args.checkpoint, episodes=args.episodes, progress=_progress(args.quiet))


def cmd_bench(args):
    config = RunConfig.load(args.config)
    if args.sweep_k:
        sweep, values = "K", args.sweep_k
    else:
        sweep, values = "agents", args.sweep_agents
    rows = runner.bench(config, sweep, values, episodes=args.episodes, warmup=args.warmup)
    out = Path(args.out) if args.out else runner.output_dir(config) / "bench.csv"
    runner.write_bench(rows, out)
    for _, v, ms in rows:
        print(f"{sweep}={v}: {ms:.1f} ms/episode")
    print(f"wrote {out}")


def cmd_plot(args):
    for p in plot_emit(args.input, args.out):
        print(f"wrote {p}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cftmarl",
        description="Counterfactual-thinking vs DDPG agents in competitive Markov games.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train agents from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue a run from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, help="new total episode count")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("bench", help="time training episodes across a sweep")
    p.add_argument("--config", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sweep-k", type=_int_list, help="e.g. 2,4,6,8,10")
    g.add_argument("--sweep-agents", type=_int_list, help="e.g. 2,3,4")
    p.add_argument("--episodes", type=int, default=3, help="timed episodes per point")
    p.add_argument("--warmup", type=int, default=1, help="untimed episodes per point")
    p.add_argument("--out", help="CSV path (default: <output_dir>/bench.csv)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="emit plot data from rewards.csv")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CftMarlError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {exc.category}: {msg}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
