"""Command line entry point.

    kernelucb run --config exp.yaml [--gamma 0.5 --env.noise gaussian ...]
    kernelucb report --dir results/
    kernelucb spectrum --dir results/

Every config key is also a flag of the same name; ``--env.<key>`` flags
are passed through to the environment spec. Exit codes: 0 success,
1 configuration error, 2 numerical breakdown.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from .gram import NumericalBreakdown
from .harness import (CONFIG_KEYS, ConfigError, ExperimentConfig, format_summary, load_config,
                      report_dir, run_experiment, spectrum_dir, summarize)

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN = 0, 1, 2

log = logging.getLogger("kernelucb")


def _value(text: str):
    # same scalar rules as the config file
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kernelucb", description="Kernel UCB contextual bandit experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="flat key: value YAML file")
    for key in CONFIG_KEYS:
        if key != "config":
            run.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE", default=None)
    run.add_argument("--print-summary", action="store_true", help="print the summary table")

    rep = sub.add_parser("report", help="re-summarise a run directory")
    rep.add_argument("--dir", required=True)
    rep.add_argument("--json", action="store_true", help="print JSON instead of a table")

    spec = sub.add_parser("spectrum", help="recompute diagnostics from checkpoints")
    spec.add_argument("--dir", required=True)
    spec.add_argument("--delta", type=float, default=None)
    return p


def _overrides(args, extra) -> dict:
    out = {k[4:]: _value(v) for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--env."):
            raise ConfigError(f"unrecognised argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            val = next(it, None)
            if val is None:
                raise ConfigError(f"{tok} needs a value")
        out[key] = _value(val)
    return out


def _run(args, extra) -> int:
    overrides = _overrides(args, extra)
    cfg = load_config(args.config, overrides) if args.config else ExperimentConfig.from_mapping(overrides)
    traces, reports = run_experiment(cfg)
    summary = summarize(traces, reports)
    if args.print_summary or not cfg.out_dir:
        print(format_summary(summary))
    if cfg.out_dir:
        log.info("wrote %d replications to %s", len(traces), cfg.out_dir)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if extra and args.command != "run":
        parser.error(f"unrecognised arguments: {' '.join(extra)}")
    try:
        if args.command == "run":
            return _run(args, extra)
        if args.command == "report":
            summary = report_dir(args.dir)
            print(json.dumps(summary, indent=2) if args.json else format_summary(summary))
            return EXIT_OK
        kw = {} if args.delta is None else {"delta": args.delta}
        for i, rep in enumerate(spectrum_dir(args.dir, **kw)):
            print(f"{i:03d} d_eff={rep.effective_dim} info_gain={rep.info_gain:.4f}")
        return EXIT_OK
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBreakdown as exc:
        print(f"numerical breakdown at round {exc.round_index}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN


if __name__ == "__main__":
    sys.exit(main())
