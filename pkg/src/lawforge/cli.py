"""Command line interface: run, gap and extract subcommands."""

from __future__ import annotations

import argparse
import logging
import sys

from . import extract as extract_mod
from . import harness, symnet

CONFIG_SCHEMA_VERSION = 1

# config keys and their parsers; m_values is a comma-separated int list
_CONFIG_TYPES = {
    "experiment": str,
    "a": float,
    "b": float,
    "t_max": float,
    "x_max": float,
    "n_t": int,
    "n_x": int,
    "M": int,
    "seed": int,
    "quick": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "out_dir": str,
    "prune_threshold": float,
    "reg_u_weight": float,
    "reg_theta_weight": float,
    "adam_lr": float,
    "step_scale": float,
    "temperature": float,
    "bfgs_max_iters": int,
    "cycles": int,
    "n_hops": int,
    "adam_epochs": int,
    "m_values": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
}


def parse_config(path) -> dict:
    """Flat key = value text with '#' comments; schema_version required."""
    options = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "schema_version":
                if int(value) != CONFIG_SCHEMA_VERSION:
                    raise ValueError(
                        f"{path}: unsupported schema_version {value}; "
                        f"this build reads version {CONFIG_SCHEMA_VERSION}"
                    )
                continue
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            options[key] = _CONFIG_TYPES[key](value)
    return options


def _build_config(args) -> harness.ExperimentConfig:
    options = parse_config(args.config) if args.config else {}
    for key in ("experiment", "M", "seed", "out_dir"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            options[key] = value
    if args.quick:
        options["quick"] = True
    if getattr(args, "m_values", None):
        options["m_values"] = tuple(int(v) for v in args.m_values.split(","))
    return harness.ExperimentConfig(**options)


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    rows, n_failed = harness.run_sweep(cfg)
    total = len(rows) + n_failed
    print(f"wrote convergence.csv, report.txt and figures to {cfg.out_dir}")
    if rows:
        print(harness.identifiability_report(rows, cfg))
    if total and n_failed / total > 0.2:
        print(f"error: {n_failed}/{total} measurement levels failed", file=sys.stderr)
        return 1
    return 0


def _cmd_gap(args) -> int:
    cfg = _build_config(args)
    m_values = tuple(int(v) for v in args.m_list.split(","))
    gaps = harness.gap_sweep(cfg, m_values)
    print(f"{'m':>6}  operator_gap")
    for m, g in gaps:
        print(f"{m:>6}  {g:.6e}")
    print(f"wrote gap.csv and gap.png to {cfg.out_dir}")
    return 0


def _cmd_extract(args) -> int:
    spec, theta = symnet.load_checkpoint(args.checkpoint)
    expr = extract_mod.to_expression(spec, theta, args.threshold)
    decimals = None if args.full_precision else 3
    print(extract_mod.to_text(expr, decimals))
    if args.tree:
        extract_mod.write_tree(expr, args.tree)
        print(f"wrote expression tree to {args.tree}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lawforge",
        description="Joint recovery of a PDE state and a symbolic physical law "
        "from reduced spectral measurements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the measurement-level sweep")
    run.add_argument("--experiment", choices=harness.EXPERIMENTS)
    run.add_argument("--config", help="key = value config file (schema_version 1)")
    run.add_argument("--M", type=int, dest="M")
    run.add_argument("--seed", type=int)
    run.add_argument("--quick", action="store_true",
                     help="reduced cycles/hops/epochs for desk-scale runs")
    run.add_argument("--out-dir", dest="out_dir")
    run.add_argument("--m-values", dest="m_values",
                     help="comma-separated measurement levels, e.g. 50,70,90")
    run.set_defaults(func=_cmd_run)

    gap = sub.add_parser("gap", help="operator-gap diagnostic sweep")
    gap.add_argument("--experiment", choices=harness.EXPERIMENTS)
    gap.add_argument("--config")
    gap.add_argument("--M", type=int, dest="M")
    gap.add_argument("--seed", type=int)
    gap.add_argument("--out-dir", dest="out_dir")
    gap.add_argument("--m-list", default="8,16,32,64")
    gap.set_defaults(func=_cmd_gap, quick=False)

    ext = sub.add_parser("extract", help="print the pruned law of a checkpoint")
    ext.add_argument("--checkpoint", required=True)
    ext.add_argument("--threshold", type=float, default=1e-3)
    ext.add_argument("--full-precision", action="store_true")
    ext.add_argument("--tree", help="also write the structured tree file here")
    ext.set_defaults(func=_cmd_extract)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
