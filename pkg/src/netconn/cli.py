"""Command-line experiment runner.

Subcommands map one-to-one onto the harness scenarios plus an ``oracle``
report; every run is driven by a JSON config file, with a few common
flags overriding config keys.  Exit codes: 0 success, 2 config error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .harness import SCENARIOS, ConfigError, compare_oracle, config_hash, resolve_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the JSON config document")
    parser.add_argument("--seed", type=int, default=None, help="run a single seed (overrides config)")
    parser.add_argument("--seeds", default=None, help="seed range A..B (overrides config)")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent seeds (default 1)")
    parser.add_argument("--print-config", action="store_true",
                        help="echo the fully resolved config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netconn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        _add_common(p)
    p = sub.add_parser("oracle", help="compare scenario estimates against the dense eigensolver")
    _add_common(p)
    return parser


def _load_config(args) -> dict:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {args.config}: {exc}") from exc
    overrides = {}
    if args.command != "oracle":
        overrides["scenario"] = args.command
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object at the top level")
    doc = dict(doc)
    for key, value in overrides.items():
        doc[key] = value
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = _load_config(args)
        rc = resolve_config(doc)  # full validation up front
        if args.print_config:
            resolved = dict(rc.doc)
            resolved["seeds"] = rc.seeds
            resolved["config_hash"] = config_hash(rc.doc)
            print(json.dumps(resolved, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "oracle":
            report = compare_oracle(doc)
            import os

            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "oracle_report.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            print(f"oracle report written to {path}")
            return EXIT_OK
        summary = run_scenario(doc, args.out, jobs=args.jobs)
        print(f"summary written to {summary['summary_path']}")
        if summary["errors"]:
            for err in summary["errors"]:
                print(f"seed {err['seed']} failed: {err['error']}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
