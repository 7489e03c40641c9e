"""Command-line front end.

Subcommands: ingest, run, compare, report. Every config key doubles as an
override flag of the same name (e.g. --split.seed 9). Exit codes: 0 ok,
2 config error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import CONFIG_KEYS, load_config
from .errors import ConfigError, DataError
from .pipeline import cmd_compare, cmd_ingest, cmd_report, cmd_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", metavar="FILE",
                        help="pipeline config file (key = value lines)")
    group = parser.add_argument_group("config overrides")
    for key, (_, default, help_text) in CONFIG_KEYS.items():
        group.add_argument(f"--{key}", dest=key.replace(".", "__"),
                           metavar="V", help=f"{help_text} (default {default})")


def _collect_overrides(args: argparse.Namespace) -> list[str]:
    overrides = []
    for key in CONFIG_KEYS:
        value = getattr(args, key.replace(".", "__"), None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skullct",
        description="Skull-fracture CT classification pipeline")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser(
        "ingest", help="parse DICOM files, preprocess, build the manifest")
    _add_config_options(p_ingest)

    p_run = sub.add_parser(
        "run", help="split, balance, extract, train and evaluate")
    _add_config_options(p_run)

    p_compare = sub.add_parser(
        "compare", help="metric grid across runs sharing a test partition")
    p_compare.add_argument("records", nargs="+",
                           help="run directories or run_record.json paths")
    p_compare.add_argument("--json", action="store_true",
                           help="emit the grid as JSON")

    p_report = sub.add_parser("report", help="re-render a stored run report")
    p_report.add_argument("record", help="run directory or run_record.json")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "ingest":
            cfg = load_config(args.config, _collect_overrides(args))
            result = cmd_ingest(cfg)
            print(f"manifest: {result.manifest_path}")
            print(f"slices: {result.n_slices} "
                  f"(preprocessed {result.n_preprocessed}, "
                  f"cached {result.n_cached}, "
                  f"skipped {len(result.warnings)})")
        elif args.command == "run":
            cfg = load_config(args.config, _collect_overrides(args))
            record = cmd_run(cfg)
            print(f"run record: {record.run_dir}/run_record.json")
            panel = record.report["panel"]
            for key in ("f1_micro", "balanced_accuracy", "kappa"):
                value = panel[key]
                print(f"{key}: {'n/a' if value is None else f'{value:.4f}'}")
        elif args.command == "compare":
            text, payload = cmd_compare(args.records)
            if args.json:
                import json
                print(json.dumps(payload, indent=2, sort_keys=True))
            else:
                print(text, end="")
        elif args.command == "report":
            print(cmd_report(args.record), end="")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error ({args.command}): {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        logging.getLogger(__name__).exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
