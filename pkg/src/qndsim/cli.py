"""Command-line experiment runner.

    qndsim run <config.cfg> [--validate-only] [--seed S] [--out DIR] [--threads N]
    qndsim sweep <config.cfg> --axis key=v1,v2,... [--axis ...] [--seed S]
                 [--out DIR] [--threads N]

``run`` executes one configuration and writes manifest, summary, Wigner
grids and the seed ledger into the output directory.  ``sweep`` executes the
Cartesian product of the supplied axes, one subdirectory per point, each
with its own manifest; failing points are logged and the sweep continues.
All randomness flows from the manifest's master seed through counter-based
per-trajectory streams, so identical manifests give bitwise-identical
outputs in single-threaded mode.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor

from .config import load_config
from .errors import ConfigError
from .experiments import run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qndsim",
                                     description="cubic-QND state engineering simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment config")
    run_p.add_argument("config", help="path to a .cfg file")
    run_p.add_argument("--validate-only", action="store_true",
                       help="check the config and exit")
    run_p.add_argument("--seed", type=int, default=None, help="override master seed")
    run_p.add_argument("--set", action="append", default=[], metavar="key=value",
                       help="override one config key (repeatable)")
    run_p.add_argument("--out", default=None, help="override output directory")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads (bitwise determinism only at 1)")

    sweep_p = sub.add_parser("sweep", help="Cartesian sweep over config keys")
    sweep_p.add_argument("config", help="path to a .cfg file")
    sweep_p.add_argument("--axis", action="append", default=[],
                         metavar="key=v1,v2,...", help="sweep axis (repeatable)")
    sweep_p.add_argument("--validate-only", action="store_true")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--threads", type=int, default=1)
    return parser


def _parse_axes(axis_args: list[str]) -> list[tuple[str, list[str]]]:
    axes = []
    for axis in axis_args:
        if "=" not in axis:
            raise ConfigError(f"config violates: sweep axis {axis!r} is not key=v1,v2,...")
        key, _, values = axis.partition("=")
        vals = [v for v in values.split(",") if v != ""]
        if not vals:
            raise ConfigError(f"config violates: sweep axis {key!r} has no values")
        axes.append((key.strip(), vals))
    return axes


def _cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"config violates: --set {item!r} is not key=value")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
        cfg = load_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.validate_only:
        print("config ok")
        return 0
    run_experiment(cfg, out_dir=args.out)
    print(f"wrote artifacts to {args.out or cfg.out_dir}")
    return 0


def _cmd_sweep(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        base = load_config(args.config, overrides=overrides)
        axes = _parse_axes(args.axis)
        if not axes:
            raise ConfigError("config violates: sweep needs at least one --axis")
        # validate every point before any computation starts
        points = []
        for combo in itertools.product(*(vals for _, vals in axes)):
            point_overrides = dict(overrides)
            point_overrides.update({key: val for (key, _), val in zip(axes, combo)})
            tag = "_".join(f"{key}_{val}" for (key, _), val in zip(axes, combo))
            cfg = load_config(args.config, overrides=point_overrides)
            points.append((tag, cfg))
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.validate_only:
        print(f"config ok ({len(points)} sweep points)")
        return 0

    root = args.out or base.out_dir
    failures = []

    def run_point(item):
        tag, cfg = item
        try:
            run_experiment(cfg, out_dir=os.path.join(root, tag))
            return tag, None
        except Exception as exc:
            return tag, f"{type(exc).__name__}: {exc}"

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_point, points))
    else:
        results = [run_point(item) for item in points]
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "sweep_log.txt"), "w") as fh:
        for tag, err in results:
            fh.write(f"{tag}: {'ok' if err is None else err}\n")
            if err is not None:
                failures.append((tag, err))
    for tag, err in failures:
        print(f"sweep point {tag} failed: {err}", file=sys.stderr)
    print(f"sweep finished: {len(results) - len(failures)}/{len(results)} points ok, "
          f"artifacts in {root}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
