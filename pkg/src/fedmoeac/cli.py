"""Command line front end: run, compare, hv, validate.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
failure. The only environment knob is FEDMOEAC_LOG_LEVEL, which sets the
stdlib logging level; everything else lives in the config file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import describe_schema, load_config
from .errors import ConfigError, DataError
from .metrics import hypervolume
from .runner import compare_runs, run_search, write_run_outputs

log = logging.getLogger(__name__)


def _parse_seeds(text: str) -> list[int]:
    text = text.strip()
    try:
        if ".." in text:
            lo, _, hi = text.partition("..")
            first, last = int(lo, 10), int(hi, 10)
            if last < first:
                raise ValueError
            return list(range(first, last + 1))
        return [int(part, 10) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse seed list {text!r} (use '0..4' or '0,1,2')") from None


def _parse_ref(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"reference point needs three comma-separated values, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ConfigError(f"reference point {text!r} is not numeric") from None


def _read_points_csv(path: str) -> np.ndarray:
    rows: list[list[float]] = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row or not any(cell.strip() for cell in row):
                    continue
                try:
                    values = [float(cell) for cell in row]
                except ValueError:
                    if lineno == 1:
                        continue  # header row
                    raise DataError(f"{path}:{lineno}: non-numeric row {row!r}") from None
                if len(values) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(values)}")
                rows.append(values)
    except OSError as exc:
        raise DataError(f"cannot read points file {path}: {exc}") from None
    return np.array(rows) if rows else np.empty((0, 3))


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    outdir = args.out or config.output_dir or f"runs/{config.algorithm}-seed{config.seed}"
    record = run_search(config)
    write_run_outputs(record, outdir)
    final_hv = record.hv[-1] if record.hv else 0.0
    print(f"run complete: algorithm={record.algorithm} seed={record.seed}")
    print(f"generations={len(record.generations)} final_hv={final_hv!r}")
    print(f"holdout_accuracy={record.final_global['holdout_accuracy']!r}")
    print(f"outputs: {Path(outdir).resolve()}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config_a = load_config(args.config_a)
    config_b = load_config(args.config_b)
    seeds = _parse_seeds(args.seeds)
    report = compare_runs(config_a, config_b, seeds, outdir=args.out)
    print(f"seeds: {','.join(str(s) for s in report.seeds)}")
    print(f"median_final_hv[{report.algorithm_a}] = {report.median_final_a!r}")
    print(f"median_final_hv[{report.algorithm_b}] = {report.median_final_b!r}")
    print(f"outputs: {Path(args.out).resolve()}")
    return 0


def _cmd_hv(args: argparse.Namespace) -> int:
    points = _read_points_csv(args.points)
    ref = _parse_ref(args.ref)
    print(repr(hypervolume(points, ref)))
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"OK: {args.config}")
    for key, value in config.echo().items():
        print(f"  {key} = {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedmoeac",
        description=(
            "Simulate federated training and search compression/privacy "
            "settings along the error / communication / privacy trade-off."
        ),
        epilog="Config keys:\n" + describe_schema(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run two configs across seeds")
    p_cmp.add_argument("--config-a", required=True, help="first config file")
    p_cmp.add_argument("--config-b", required=True, help="second config file")
    p_cmp.add_argument("--seeds", default="0..4", help="seed list: '0..4' or '0,1,2'")
    p_cmp.add_argument("--out", default="comparison", help="output directory")
    p_cmp.set_defaults(func=_cmd_compare)

    p_hv = sub.add_parser("hv", help="hypervolume of a 3-D point set")
    p_hv.add_argument("--points", required=True, help="CSV with three columns per row")
    p_hv.add_argument("--ref", default="1,1,1", help="reference point, e.g. 1,1,1")
    p_hv.set_defaults(func=_cmd_hv)

    p_val = sub.add_parser("validate", help="check a config file and show the resolved values")
    p_val.add_argument("--config", required=True, help="experiment config file")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("FEDMOEAC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
