"""Command line harness for the published cases and the convergence study.

Configuration is a flat ``key = value`` text file (see README for the
schema) plus ``--set key=value`` overrides; every run directory receives a
resolved config echo, delimited CSV outputs, rendered figures and - for the
convergence study - a gnuplot script alongside the data.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import basis as basis_mod
from . import runner
from .fem1d import SolverError
from .runner import ConfigError, ExperimentConfig
from .transform import CellCollapseError, TraceError

ENV_OUT = "MSFEM1D_OUT"

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_TUPLE_KEYS = {"transforms", "snapshot_times", "n_list"}
_STR_KEYS = {"n_counts"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_value(key: str, text: str):
    if key in _TUPLE_KEYS:
        items = [p for p in (s.strip() for s in text.split(",")) if p]
        return tuple(_parse_scalar(p) for p in items)
    if key in _STR_KEYS:
        return text.strip()
    return _parse_scalar(text)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` file with ``#`` comments."""
    settings = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        settings[key] = _parse_value(key, text)
    return settings


def build_config(args) -> ExperimentConfig:
    settings = {}
    if args.config:
        settings.update(parse_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, text = (part.strip() for part in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        settings[key] = _parse_value(key, text)
    for key in ("case", "k", "v", "alpha", "n_coarse", "dry_run"):
        value = getattr(args, key, None)
        if value is not None and value is not False:
            settings[key] = value
    try:
        return ExperimentConfig(**settings)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_echo(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ",".join(_fmt(v) for v in value)
        else:
            text = _fmt(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def _out_dir(args, cfg: ExperimentConfig, suffix: str = "") -> Path:
    root = Path(args.out or os.environ.get(ENV_OUT, "runs"))
    out = root / (cfg.label() + suffix)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text)


def write_summary_csv(result, path: Path):
    rows = ["case,variant,metric,value"]
    label = result.config.label()
    for name, variant in result.variants.items():
        status = variant.failure or "ok"
        rows.append(f"{label},{name},status,{status}")
        report = variant.final_report
        for metric in ("rel_l2", "rel_linf", "rel_h1", "max_dev"):
            value = getattr(report, metric) if report else float("nan")
            rows.append(f"{label},{name},{metric},{_fmt(value)}")
    _write(path, "\n".join(rows) + "\n")


def write_error_series_csv(result, path: Path):
    rows = ["method,t,rel_l2,rel_linf,rel_h1,max_dev"]
    for name, variant in result.variants.items():
        for rep in variant.errors:
            rows.append(",".join([name, _fmt(rep.time), _fmt(rep.rel_l2),
                                  _fmt(rep.rel_linf), _fmt(rep.rel_h1),
                                  _fmt(rep.max_dev)]))
    _write(path, "\n".join(rows) + "\n")


def write_snapshot_csvs(result, directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    named = [("reference", result.reference)]
    named += [(name, v.snapshots) for name, v in result.variants.items() if not v.failure]
    for name, snapshots in named:
        for snap in snapshots:
            if snap.time not in result.config.snapshot_times and snap.time != result.config.t_end:
                continue
            rows = ["t,x,u"]
            rows += [f"{_fmt(snap.time)},{_fmt(x)},{_fmt(u)}"
                     for x, u in zip(snap.x, snap.values)]
            _write(directory / f"{name}_t{snap.time:g}.csv", "\n".join(rows) + "\n")


def write_convergence_csv(result, path: Path):
    rows = ["n,rel_l2,rel_linf"]
    rows += [f"{n},{_fmt(l2)},{_fmt(linf)}" for n, l2, linf in result.rows]
    for n, message in sorted(result.failures.items()):
        rows.append(f"{n},nan,nan  # {message}")
    _write(path, "\n".join(rows) + "\n")


def write_gnuplot_script(result, csv_path: Path, path: Path):
    script = "\n".join([
        "set datafile separator ','",
        "set logscale xy",
        "set xlabel 'coarse cells'",
        "set ylabel 'relative error'",
        f"set title '{result.config.label()}'",
        "set key left bottom",
        "set terminal pngcairo size 640,480",
        f"set output '{csv_path.stem}.png'",
        f"plot '{csv_path.name}' every ::1 using 1:2 with linespoints title 'L2', \\",
        f"     '{csv_path.name}' every ::1 using 1:3 with linespoints title 'Linf'",
        "",
    ])
    _write(path, script)


def cmd_run_case(args) -> int:
    cfg = build_config(args)
    cfg.validate()
    if cfg.dry_run:
        sys.stdout.write(config_echo(cfg))
        return 0
    result = runner.run_case_experiment(cfg)
    out = _out_dir(args, cfg)
    _write(out / "config.txt", config_echo(cfg))
    write_summary_csv(result, out / "summary.csv")
    write_error_series_csv(result, out / f"errors_{cfg.label()}.csv")
    write_snapshot_csvs(result, out / "snapshots")
    from . import plots

    plots.render_case_figures(result, out / "figures")
    failures = {n: v.failure for n, v in result.variants.items() if v.failure}
    for name, message in failures.items():
        sys.stderr.write(f"variant {name} failed: {message}\n")
    sys.stdout.write(f"wrote {out}\n")
    return 3 if failures else 0


def cmd_run_convergence(args) -> int:
    cfg = build_config(args)
    cfg.validate(convergence=True)
    if cfg.dry_run:
        sys.stdout.write(config_echo(cfg))
        return 0
    result = runner.run_convergence_experiment(cfg)
    out = _out_dir(args, cfg)
    _write(out / "config.txt", config_echo(cfg))
    csv_path = out / "table_convergence.csv"
    write_convergence_csv(result, csv_path)
    write_gnuplot_script(result, csv_path, out / "table_convergence.gp")
    from . import plots

    if result.rows:
        plots.render_convergence_figure(result, out / "figures" / "convergence.png")
    for n, message in result.failures.items():
        sys.stderr.write(f"n={n} failed: {message}\n")
    sys.stdout.write(f"wrote {out}\n")
    return 3 if result.failures else 0


def cmd_trace_chars(args) -> int:
    cfg = build_config(args)
    cfg.validate()
    if cfg.dry_run:
        sys.stdout.write(config_echo(cfg))
        return 0
    tab = runner.trace_table_for(cfg, kind=args.transform)
    out = _out_dir(args, cfg, suffix="_chars")
    _write(out / "config.txt", config_echo(cfg))
    rows = ["t,node,x,x_mod1"]
    for m in range(tab.node_paths.shape[0]):
        for n, t in enumerate(tab.times):
            x = tab.node_paths[m, n]
            rows.append(f"{_fmt(float(t))},{m},{_fmt(float(x))},{_fmt(float(x % 1.0))}")
    _write(out / "chars.csv", "\n".join(rows) + "\n")
    from . import plots

    plots.render_characteristics_figure(tab, out / "figures" / "characteristics.png")
    sys.stdout.write(f"wrote {out}\n")
    return 0


def cmd_dump_basis(args) -> int:
    cfg = build_config(args)
    cfg.validate()
    if cfg.dry_run:
        sys.stdout.write(config_echo(cfg))
        return 0
    bset = runner.basis_set_for(cfg, kind=args.transform)
    out = _out_dir(args, cfg, suffix="_basis")
    _write(out / "config.txt", config_echo(cfg))
    basis_mod.save_basis(bset, out / "basis.npz")
    basis_mod.export_alphas_csv(bset, out / "alphas")
    from . import plots

    plots.render_basis_figure(bset, out / "figures" / "basis.png")
    sys.stdout.write(f"wrote {out}\n")
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--case", type=lambda s: _parse_scalar(s))
    parser.add_argument("--k", type=int)
    parser.add_argument("--v", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--n-coarse", dest="n_coarse", type=int)
    parser.add_argument("--out", help=f"output root (default $'{ENV_OUT}' or ./runs)")
    parser.add_argument("--dry-run", dest="dry_run", action="store_true",
                        help="echo the resolved config and exit")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msfem1d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-case", help="run one published case with all comparators")
    _add_common(p)
    p.set_defaults(func=cmd_run_case)

    p = sub.add_parser("run-convergence", help="coarse-resolution sweep of the "
                                               "characteristic method")
    _add_common(p)
    p.set_defaults(func=cmd_run_convergence)

    p = sub.add_parser("trace-chars", help="emit coarse-node characteristics as CSV")
    _add_common(p)
    p.add_argument("--transform", choices=("char", "mf", "eulerian"), default="char")
    p.set_defaults(func=cmd_trace_chars)

    p = sub.add_parser("dump-basis", help="precompute and dump the basis trajectories")
    _add_common(p)
    p.add_argument("--transform", choices=("char", "mf", "eulerian"), default="char")
    p.set_defaults(func=cmd_dump_basis)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (CellCollapseError, TraceError, SolverError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
