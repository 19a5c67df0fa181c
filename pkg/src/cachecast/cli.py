"""Command-line front end.

Exit codes: 0 ok, 2 verification failure, 3 config error, 4 budget exceeded.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError
from .report import EXIT_CODES, CONFIG_ERROR, ExperimentSpec, run_experiment

STAGES = {
    "plan": ("plan",),
    "simulate": ("plan", "simulate", "bound"),
    "bound": ("bound",),
    "oracle": ("oracle", "bound"),
    "sweep": ("plan", "simulate", "bound"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cachecast", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "plan": "build placement and schedule, check counts and exactly-once delivery",
        "simulate": "plan, then simulate precoded transmission and decode every block",
        "bound": "evaluate the delivery-time lower bound and its tightness",
        "oracle": "exhaustive minimum-block search on a tiny instance",
        "sweep": "run a grid of configs (comma lists in the config file)",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", type=Path, required=True, help="key = value config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--trials", type=int, default=10, help="channel realizations per config")
        sp.add_argument("--payload-bytes", type=int, default=64, help="bytes per delivery piece (even)")
        sp.add_argument("--out", type=Path, default=None, help="directory for report and CSV files")
        sp.add_argument("--json", action="store_true", help="print the JSON report to stdout")
        sp.add_argument("--trace", action="store_true", help="export per-block trace (needs --out)")
        if name == "sweep":
            sp.add_argument("--oracle", action="store_true", help="also run the oracle per config")
            sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


def _summary_line(r: dict) -> str:
    cfg = r["config"]
    head = f"[{r['index']}] K={cfg['K']} L={cfg['L']} gamma={cfg['gamma']} C={cfg['C']}: {r['status']}"
    if "error" in r:
        return f"{head} ({r['error']})"
    if "schedule_skipped" in r:
        head += f" (schedule skipped: {r['schedule_skipped']})"
    bits = []
    if "metrics" in r:
        m = r["metrics"]
        bits.append(f"blocks={m['block_count']} T={m['T']} DoF={m['DoF']} feedback={m['feedback_cost']}")
    if "simulation" in r:
        s = r["simulation"]
        bits.append(f"decoded={s['decodes']} failures={s['decode_failures']} files_ok={s['files_ok']}")
    if "bound" in r:
        b = r["bound"]
        bits.append(f"T_lb={b['T_lower_bound']} tight={b['tight']}")
    if "oracle" in r:
        o = r["oracle"]
        bits.append(o["error"] if "error" in o else f"oracle T*={o['T_star']} ok={o['ok']}")
    return head + (" | " + " | ".join(bits) if bits else "")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configs = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CODES[CONFIG_ERROR]
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES[CONFIG_ERROR]
    if args.command != "sweep" and len(configs) > 1:
        print(f"error: {args.command} takes a single config; use sweep for lists", file=sys.stderr)
        return EXIT_CODES[CONFIG_ERROR]

    sweep = args.command == "sweep"
    spec = ExperimentSpec(
        configs=configs, stages=STAGES[args.command], trials=args.trials,
        payload_bytes=args.payload_bytes, seed=args.seed, trace=args.trace,
        oracle=sweep and args.oracle, jobs=args.jobs if sweep else 1,
        out=args.out, skip_unschedulable=sweep,
    )
    report = run_experiment(spec, command=args.command)
    if args.json:
        print(report.to_json())
    else:
        for r in report.results:
            print(_summary_line(r))
        print(f"status: {report.status}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
