"""Experiment drivers: configured end-to-end runs of the published cases.

Pure computation lives here; file and figure emission is handled by the
command line layer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import basis, fem1d, online
from .analysis import ErrorReport, error_series
from .coeffs import CaseParams, CoefficientSet, make_case
from .mesh import CoarseMesh, build_coarse
from .transform import (
    CellCollapseError,
    TraceError,
    eulerian_table,
    mean_flow_table,
    trace_characteristics,
)

#: comparator and multiscale variants of a case run
ALL_VARIANTS = ("fem", "mf-msfem", "char-msfem")

#: storing per-step local matrices beyond this many floats is not worth it
_KEEP_SYSTEMS_LIMIT = 8_000_000

_NUMERICAL_FAILURES = (CellCollapseError, TraceError, fem1d.SolverError)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one case run or convergence sweep.

    ``n_coarse`` counts nodes or cells depending on ``n_counts`` (the
    published tables are ambiguous, so both conventions are supported).
    """

    case: int | str = 1
    k: Optional[int] = 30
    v: Optional[float] = 4.0
    alpha: Optional[float] = 0.0
    sigma: float = 0.1
    nu: float = 0.5
    n_coarse: int = 10
    n_counts: str = "nodes"
    n_fine: int = 75
    dt: float = 1e-3
    t_end: float = 1.0
    transforms: tuple = ALL_VARIANTS
    n_ref: int = 750
    dt_ref: Optional[float] = None
    ode_tol: float = 1e-9
    snapshot_times: tuple = (0.25, 0.5, 0.75, 1.0)
    series_stride: int = 10
    eval_points: Optional[int] = None
    workers: Optional[int] = None
    keep_systems: Optional[bool] = None
    n_list: tuple = (24, 48, 96, 192, 384)
    motion_rate: str = "centered"
    mass_midpoint: bool = False
    jacobian_measure: bool = True
    dry_run: bool = False

    def validate(self, convergence: bool = False):
        if self.t_end <= 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        n_steps = round(self.t_end / self.dt)
        if n_steps < 1 or abs(n_steps * self.dt - self.t_end) > 1e-9:
            raise ConfigError(f"dt={self.dt} does not divide t_end={self.t_end}")
        if self.n_counts not in ("nodes", "cells"):
            raise ConfigError(f"n_counts must be 'nodes' or 'cells', got {self.n_counts!r}")
        if self.n_nodes < 3:
            raise ConfigError(f"coarse mesh needs at least 3 nodes, got {self.n_nodes}")
        if self.n_fine < 3:
            raise ConfigError(f"n_fine must be at least 3, got {self.n_fine}")
        unknown = set(self.transforms) - set(ALL_VARIANTS)
        if unknown:
            raise ConfigError(f"unknown transforms: {sorted(unknown)}")
        if self.motion_rate not in ("centered", "backward"):
            raise ConfigError(f"motion_rate must be 'centered' or 'backward', "
                              f"got {self.motion_rate!r}")
        if not convergence and self.n_ref < 10 * self.n_coarse:
            raise ConfigError(
                f"reference resolution n_ref={self.n_ref} below 10x coarse n={self.n_coarse}")
        if convergence and list(self.n_list) != sorted(self.n_list):
            raise ConfigError("n_list must be sorted ascending")
        try:
            for t in self.snapshot_times:
                if t > self.t_end + 1e-9:
                    raise ConfigError(f"snapshot time {t} beyond t_end={self.t_end}")
                fem1d.time_to_index(t, self.dt)
                fem1d.time_to_index(t, self.dt_ref or self.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def n_nodes(self) -> int:
        return self.n_coarse if self.n_counts == "nodes" else self.n_coarse + 1

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def params(self) -> CaseParams:
        return CaseParams(self.case, k=self.k, v=self.v, alpha=self.alpha,
                          sigma=self.sigma, nu=self.nu)

    def resolved_workers(self) -> int:
        return self.workers if self.workers else (os.cpu_count() or 1)

    def label(self) -> str:
        if self.case == "convergence":
            return f"convergence_a{self.alpha:g}_k{self.k}"
        return make_case(self.params()).label


@dataclass
class VariantResult:
    name: str
    snapshots: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    failure: Optional[str] = None

    @property
    def final_report(self) -> Optional[ErrorReport]:
        return self.errors[-1] if self.errors else None


@dataclass
class CaseRunResult:
    config: ExperimentConfig
    record_times: list
    reference: list
    variants: dict


def _keep_systems(cfg: ExperimentConfig, mesh: CoarseMesh) -> bool:
    if cfg.keep_systems is not None:
        return cfg.keep_systems
    return mesh.n_cells * (cfg.n_steps + 1) * cfg.n_fine <= _KEEP_SYSTEMS_LIMIT


def _record_indices(cfg: ExperimentConfig) -> list:
    n_steps = cfg.n_steps
    idx = set(range(0, n_steps + 1, max(1, cfg.series_stride)))
    idx.add(n_steps)
    idx.update(fem1d.time_to_index(t, cfg.dt) for t in cfg.snapshot_times)
    return sorted(idx)


def _run_msfem(cfg: ExperimentConfig, cs: CoefficientSet, mesh: CoarseMesh,
               tab, record_indices, eval_points: int) -> list:
    keep = _keep_systems(cfg, mesh)
    bset = basis.compute_basis_set(mesh, cfg.n_fine, cs, tab,
                                   workers=cfg.resolved_workers(), keep_systems=keep)
    sol = online.solve_online(bset, cs, tab, rate=cfg.motion_rate,
                              mass_midpoint=cfg.mass_midpoint,
                              measure=cfg.jacobian_measure)
    return [online.reconstruct(sol, tab, idx, eval_points) for idx in record_indices]


def run_case_experiment(cfg: ExperimentConfig) -> CaseRunResult:
    """Reference, coarse comparator FEM and the requested multiscale variants.

    Numerical failures (cell collapse, solver breakdown) are recorded per
    variant without aborting the others.
    """
    cfg.validate()
    cs = make_case(cfg.params())
    mesh = build_coarse(cfg.n_nodes)
    times = cfg.times()
    record_indices = _record_indices(cfg)
    record_times = [float(times[i]) for i in record_indices]
    eval_points = cfg.eval_points or cfg.n_ref

    dt_ref = cfg.dt_ref or cfg.dt
    reference = fem1d.reference_solve(cs, cfg.n_ref, dt_ref, cfg.t_end,
                                      record_times=record_times,
                                      eval_points=eval_points, tol=cfg.ode_tol)

    mf_tab = mean_flow_table(cs, mesh, times, tol=cfg.ode_tol)
    shift = mf_tab.node_paths[0] - mesh.nodes[0]
    shift_rate = mf_tab.node_velocities[0]

    variants = {}
    for name in cfg.transforms:
        result = VariantResult(name)
        try:
            if name == "fem":
                p1 = fem1d.solve_shifted_p1(cs, mesh.n_cells, cfg.dt, cfg.n_steps,
                                            shift, shift_rate, record_indices, eval_points)
                result.snapshots = p1.snapshots
            elif name == "mf-msfem":
                result.snapshots = _run_msfem(cfg, cs, mesh, mf_tab, record_indices,
                                              eval_points)
            elif name == "char-msfem":
                tab = trace_characteristics(cs, mesh, times, tol=cfg.ode_tol)
                result.snapshots = _run_msfem(cfg, cs, mesh, tab, record_indices,
                                              eval_points)
            result.errors = error_series(result.snapshots, reference)
        except _NUMERICAL_FAILURES as exc:
            result.failure = f"{type(exc).__name__}: {exc}"
        variants[name] = result
    return CaseRunResult(cfg, record_times, reference, variants)


@dataclass
class ConvergenceResult:
    config: ExperimentConfig
    rows: list  # (n, rel_l2, rel_linf)
    failures: dict


def run_convergence_sweep(params: CaseParams, n_cells_list, n_fine: int, dt: float,
                          t_end: float, n_ref: int = 750, dt_ref: Optional[float] = None,
                          ode_tol: float = 1e-9, eval_points: Optional[int] = None,
                          workers: Optional[int] = None):
    """Characteristic-transform errors against one shared reference."""
    cs = make_case(params)
    eval_points = eval_points or n_ref
    reference = fem1d.reference_solve(cs, n_ref, dt_ref or dt, t_end,
                                      record_times=[t_end], eval_points=eval_points,
                                      tol=ode_tol)[-1]
    rows = []
    failures = {}
    for n_cells in n_cells_list:
        cfg = ExperimentConfig(case=params.case, k=params.k, v=params.v,
                               alpha=params.alpha, sigma=params.sigma, nu=params.nu,
                               n_coarse=int(n_cells), n_counts="cells", n_fine=n_fine,
                               dt=dt, t_end=t_end, n_ref=n_ref, dt_ref=dt_ref,
                               ode_tol=ode_tol, eval_points=eval_points, workers=workers)
        mesh = build_coarse(cfg.n_nodes)
        times = cfg.times()
        try:
            tab = trace_characteristics(cs, mesh, times, tol=ode_tol)
            snaps = _run_msfem(cfg, cs, mesh, tab, [cfg.n_steps], eval_points)
            report = error_series(snaps, [reference])[0]
            rows.append((int(n_cells), report.rel_l2, report.rel_linf))
        except _NUMERICAL_FAILURES as exc:
            failures[int(n_cells)] = f"{type(exc).__name__}: {exc}"
    return rows, failures


def run_convergence_experiment(cfg: ExperimentConfig) -> ConvergenceResult:
    cfg.validate(convergence=True)
    rows, failures = run_convergence_sweep(
        cfg.params(), cfg.n_list, cfg.n_fine, cfg.dt, cfg.t_end, n_ref=cfg.n_ref,
        dt_ref=cfg.dt_ref, ode_tol=cfg.ode_tol, eval_points=cfg.eval_points,
        workers=cfg.workers)
    return ConvergenceResult(cfg, rows, failures)


def trace_table_for(cfg: ExperimentConfig, kind: str = "char"):
    """Characteristic (or mean-flow / identity) table for the configured case."""
    cfg.validate()
    cs = make_case(cfg.params())
    mesh = build_coarse(cfg.n_nodes)
    times = cfg.times()
    if kind == "char":
        return trace_characteristics(cs, mesh, times, tol=cfg.ode_tol)
    if kind == "mf":
        return mean_flow_table(cs, mesh, times, tol=cfg.ode_tol)
    if kind == "eulerian":
        return eulerian_table(mesh, times)
    raise ConfigError(f"unknown transform kind {kind!r}")


def basis_set_for(cfg: ExperimentConfig, kind: str = "char") -> basis.BasisSet:
    """Offline basis for the configured case (for dumps and inspection)."""
    tab = trace_table_for(cfg, kind)
    cs = make_case(cfg.params())
    return basis.compute_basis_set(tab.mesh, cfg.n_fine, cs, tab,
                                   workers=cfg.resolved_workers(),
                                   keep_systems=False)
