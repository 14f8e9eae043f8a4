"""Command-line entry points: run, bench, plot, oracle-dump.

Output goes under --out, the DCS_OUT_DIR environment variable, or ./runs,
in that order of precedence. Config files are YAML trees validated
against the experiment schema; see the README for the full key listing.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

import yaml

from . import __version__
from .activeloop import (
    ExperimentConfig,
    SchemaError,
    build_oracle,
    config_from_mapping,
    config_hash,
    run_experiment,
)
from .oracle import SpaceTooLargeError, enumerate_space
from .plots import render_standard_plots
from .presets import PRESET_NAMES, apply_overrides, run_bench

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_SCHEMA = 2


def _out_root(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get("DCS_OUT_DIR")
    if env:
        return Path(env)
    return Path("runs")


def _load_config(path: str, seed: int | None, sets: list[str]) -> ExperimentConfig:
    try:
        with open(path) as fh:
            mapping = yaml.safe_load(fh)
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise SchemaError(f"config is not valid YAML: {exc}") from None
    config = config_from_mapping(mapping if mapping is not None else {})
    overrides = dict(_parse_set(s) for s in sets)
    if seed is not None:
        overrides["master_seed"] = seed
    if overrides:
        try:
            config = apply_overrides(config, overrides)
        except (TypeError, ValueError, AttributeError) as exc:
            raise SchemaError(f"invalid override: {exc}") from None
    return config


def _parse_set(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise SchemaError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed, args.set or [])
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    out_dir = _out_root(args.out) / f"{stamp}-{config_hash(config)[:8]}"
    result = run_experiment(config, out_dir)
    print(f"run complete: {len(result.logs)} rounds -> {out_dir}")
    if result.logs:
        final = result.logs[-1].dataset_metrics
        print(f"final top-{config.top_k}: max={final.max:.4f} median={final.median:.4f} mean={final.mean:.4f}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    if not seeds:
        raise SchemaError("no seeds given")
    overrides = dict(_parse_set(s) for s in (args.set or []))
    methods = args.methods.split(",") if args.methods else None
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    out_dir = _out_root(args.out) / f"bench-{args.preset}-{stamp}"
    result = run_bench(
        args.preset, seeds, jobs=args.jobs, out_dir=out_dir, overrides=overrides, methods=methods
    )
    print(result.table_text(), end="")
    print(f"cells and summary -> {out_dir}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    out_dir = _out_root(args.out) / "plots" if args.out is None else Path(args.out)
    written = render_standard_plots(args.reports, out_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_oracle_dump(args: argparse.Namespace) -> int:
    config = _load_config(args.config, None, args.set or [])
    oracle = build_oracle(config.oracle)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "score"])
        for seq, score in enumerate_space(oracle):
            writer.writerow([seq.to_string(oracle.vocab), repr(score)])
    print(f"wrote {out_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consearch",
        description="Conservative off-policy search for discrete sequence design.",
    )
    parser.add_argument("--version", action="version", version=f"consearch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("--config", required=True, help="YAML config path")
    run_p.add_argument("--seed", type=int, default=None, help="override master_seed")
    run_p.add_argument("--out", default=None, help="output root directory")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field by dotted key")
    run_p.set_defaults(func=cmd_run)

    bench_p = sub.add_parser("bench", help="run a preset method grid across seeds")
    bench_p.add_argument("--preset", required=True, choices=PRESET_NAMES)
    bench_p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seed list")
    bench_p.add_argument("--jobs", type=int, default=1, help="parallel worker threads")
    bench_p.add_argument("--out", default=None, help="output root directory")
    bench_p.add_argument("--methods", default=None,
                         help="comma-separated subset of the preset's methods")
    bench_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a config field in every cell")
    bench_p.set_defaults(func=cmd_bench)

    plot_p = sub.add_parser("plot", help="render figures from rounds.csv reports")
    plot_p.add_argument("reports", nargs="+", help="one rounds.csv per seed")
    plot_p.add_argument("--out", default=None, help="directory for the images")
    plot_p.set_defaults(func=cmd_plot)

    dump_p = sub.add_parser("oracle-dump", help="write the full sequence,score table")
    dump_p.add_argument("--config", required=True, help="YAML config path")
    dump_p.add_argument("--out", required=True, help="output CSV path")
    dump_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field by dotted key")
    dump_p.set_defaults(func=cmd_oracle_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SpaceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
