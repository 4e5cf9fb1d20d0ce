"""Command-line front end.

Every experiment flag mirrors an ``ExperimentConfig`` field.  Values resolve
in precedence order: command-line flag, then ``WALKNN_<FIELD>`` environment
variable, then a ``key=value`` config file given with ``--config``, then the
built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

from . import bench, spectral
from .bench import ExperimentConfig
from .graph import load_snapshot, save_snapshot

_SENTINEL = object()
_SUBCOMMANDS = (
    "build",
    "query",
    "mass-delete",
    "steady-state",
    "turnover",
    "rhat-sweep",
    "verify-spectral",
)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _field_caster(field: dataclasses.Field):
    text = str(field.type)
    if "bool" in text:
        return _parse_bool
    if "int" in text:
        return int
    if "float" in text:
        return float
    return str


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key=value`` file; blank lines and ``#`` comments are skipped."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve_config(args: argparse.Namespace, environ=None) -> ExperimentConfig:
    """Merge defaults, config file, environment, and explicit flags."""
    environ = environ if environ is not None else os.environ
    merged: dict[str, object] = {}
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
    for field in dataclasses.fields(ExperimentConfig):
        cast = _field_caster(field)
        value: object = _SENTINEL
        if field.name in file_values:
            value = cast(file_values[field.name])
        env_key = f"WALKNN_{field.name.upper()}"
        if env_key in environ:
            value = cast(environ[env_key])
        cli_value = getattr(args, field.name, _SENTINEL)
        if cli_value is not _SENTINEL:
            value = cli_value
        if value is not _SENTINEL:
            merged[field.name] = value
    return ExperimentConfig(**merged)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walknn")
    sub = parser.add_subparsers(dest="command", required=True)
    aliases = {"r_hat_delete": ["--rhat-delete"], "r_hat": ["--rhat"]}
    for name in _SUBCOMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="key=value config file")
        for field in dataclasses.fields(ExperimentConfig):
            flags = ["--" + field.name.replace("_", "-"), *aliases.get(field.name, [])]
            cmd.add_argument(*flags, dest=field.name, type=_field_caster(field), default=_SENTINEL)
        if name == "build":
            cmd.add_argument("--snapshot", required=True, help="output .wnng path")
        if name == "query":
            cmd.add_argument("--snapshot", default=None, help="load a prebuilt .wnng graph")
        if name == "rhat-sweep":
            cmd.add_argument("--rhat-values", default="1,3,7,15,30")
            cmd.add_argument("--sweep-seeds", type=int, default=5)
    return parser


def _emit(rows: list, cfg: ExperimentConfig) -> None:
    if cfg.output:
        bench.emit_report(rows, cfg.output, cfg.format)
    else:
        json.dump([dataclasses.asdict(r) for r in rows], sys.stdout, indent=1)
        sys.stdout.write("\n")


def _cmd_build(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    ctx = bench.build_context(cfg)
    save_snapshot(ctx.index.graph, args.snapshot)
    graph = ctx.index.graph
    print(
        f"built {len(ctx.dataset.base)} points, {graph.num_layers} layers, "
        f"{graph.edge_count(0)} bottom edges -> {args.snapshot}"
    )
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    ctx = bench.build_context(cfg)
    if args.snapshot:
        ctx.index.graph = load_snapshot(args.snapshot)
    row = bench.measure(ctx, step=0)
    json.dump(dataclasses.asdict(row), sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


def _cmd_rhat_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    values = [float(v) for v in args.rhat_values.split(",") if v.strip()]
    rows = bench.run_rhat_sweep(cfg, values, n_seeds=args.sweep_seeds)
    _emit(rows, cfg)
    return 0


def _cmd_verify_spectral(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    checks = spectral.verify_suite(cfg.seed)
    passed = all(c.passed for c in checks)
    report = {
        "passed": passed,
        "checks": [dataclasses.asdict(c) for c in checks],
    }
    if cfg.output:
        with open(cfg.output, "w") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
    else:
        json.dump(report, sys.stdout, indent=1)
        sys.stdout.write("\n")
    for check in checks:
        status = "pass" if check.passed else "FAIL"
        print(f"{status} {check.name}: {check.detail}", file=sys.stderr)
    return 0 if passed else 2


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    if command == "build":
        return _cmd_build(args)
    if command == "query":
        return _cmd_query(args)
    if command == "rhat-sweep":
        return _cmd_rhat_sweep(args)
    if command == "verify-spectral":
        return _cmd_verify_spectral(args)
    cfg = resolve_config(args)
    runner = {
        "mass-delete": bench.run_mass_deletion,
        "steady-state": bench.run_steady_state,
        "turnover": bench.run_turnover,
    }[command]
    rows = runner(cfg)
    if not cfg.output:
        _emit(rows, cfg)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
