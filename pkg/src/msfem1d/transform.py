"""Advection-induced coordinate transforms.

Three coordinate systems are supported: the Eulerian identity, a global
shift by the integrated mean velocity, and per-node characteristics traced
through the background velocity.  Each produces a
:class:`CharacteristicTable` holding the (unwrapped) coarse-node
trajectories and their velocities, from which per-cell Jacobian factors and
the residual advection ("effective velocity") are derived.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .coeffs import CoefficientSet, mean_velocity
from .mesh import CoarseMesh

#: traced cells narrower than this fraction of the coarse width abort the run
COLLAPSE_FRACTION = 0.01


class CellCollapseError(RuntimeError):
    """Traced coarse-cell boundaries came too close; the per-cell map degenerated."""


class TraceError(RuntimeError):
    """The characteristic ODE solver failed (e.g. step size underflow)."""


class TransformKind(enum.Enum):
    EULERIAN = "eulerian"
    MEAN_FLOW = "mean-flow"
    CHARACTERISTIC = "characteristic"


@dataclass(frozen=True)
class CharacteristicTable:
    """Coarse-node trajectories sampled on the global time grid.

    ``node_paths[m, n]`` is the unwrapped position of node ``m`` at
    ``times[n]`` (no reduction modulo 1, so per-cell widths stay
    well-defined); ``node_velocities`` holds the corresponding path
    velocities.  The last node duplicates the first shifted by one period.
    """

    kind: TransformKind
    mesh: CoarseMesh
    times: np.ndarray
    node_paths: np.ndarray
    node_velocities: np.ndarray

    def __post_init__(self):
        for arr in (self.times, self.node_paths, self.node_velocities):
            arr.setflags(write=False)

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    def cell_widths(self) -> np.ndarray:
        return np.diff(self.node_paths, axis=0)


@dataclass(frozen=True)
class JacobianFactors:
    """Per-cell factors of the coordinate map at every stored time.

    ``dx_dxi[i, n]`` is the (piecewise-constant) slope of the linear map of
    cell ``i``; ``vel_left``/``vel_right`` are the nodal velocities that get
    interpolated linearly to form the time derivative of the map.
    """

    dx_dxi: np.ndarray
    vel_left: np.ndarray
    vel_right: np.ndarray


def _check_collapse(mesh: CoarseMesh, times: np.ndarray, paths: np.ndarray):
    widths = np.diff(paths, axis=0)
    bad = widths <= COLLAPSE_FRACTION * mesh.width
    if bad.any():
        cell, tidx = np.argwhere(bad)[0]
        raise CellCollapseError(
            f"cell {cell} collapsed to width {widths[cell, tidx]:.3e} "
            f"at t={times[tidx]:.6g} (threshold {COLLAPSE_FRACTION * mesh.width:.3e})"
        )


def _integrate(rhs, times: np.ndarray, tol: float) -> np.ndarray:
    sol = solve_ivp(rhs, (times[0], times[-1]), [0.0], method="RK45",
                    t_eval=times, rtol=tol, atol=tol)
    if not sol.success:
        raise TraceError(f"characteristic integration failed: {sol.message}")
    return sol.y[0]


def trace_characteristics(cs: CoefficientSet, mesh: CoarseMesh, times: np.ndarray,
                          tol: float = 1e-9) -> CharacteristicTable:
    """Trace every coarse node through ``dx/dtau = c(x, tau)``.

    Each node integrates the deviation from its start position with an
    adaptive embedded Runge-Kutta 4/5 pair, so the error control is
    identical for all nodes.  Raises :class:`CellCollapseError` if any cell
    narrows below ``COLLAPSE_FRACTION`` of the coarse width.
    """
    times = np.asarray(times, dtype=float)
    n = mesh.n_nodes
    paths = np.empty((n, times.shape[0]))
    for m in range(n - 1):
        start = mesh.nodes[m]
        shift = _integrate(lambda tau, y: (cs.c(start + y[0], tau),), times, tol)
        paths[m] = start + shift
    paths[n - 1] = paths[0] + 1.0
    speeds = cs.c(paths, times[None, :])
    speeds[n - 1] = speeds[0]
    _check_collapse(mesh, times, paths)
    return CharacteristicTable(TransformKind.CHARACTERISTIC, mesh, times, paths, speeds)


def mean_flow_shift(cs: CoefficientSet, times: np.ndarray, tol: float = 1e-9):
    """Integrated mean velocity and its rate on the stored grid."""
    times = np.asarray(times, dtype=float)
    shift = _integrate(lambda tau, y: (mean_velocity(cs, tau),), times, tol)
    rate = np.array([mean_velocity(cs, t) for t in times])
    return shift, rate


def mean_flow_table(cs: CoefficientSet, mesh: CoarseMesh, times: np.ndarray,
                    tol: float = 1e-9) -> CharacteristicTable:
    """All nodes share the single shift by the integrated mean velocity."""
    times = np.asarray(times, dtype=float)
    shift, rate = mean_flow_shift(cs, times, tol)
    paths = mesh.nodes[:, None] + shift[None, :]
    speeds = np.broadcast_to(rate, paths.shape).copy()
    return CharacteristicTable(TransformKind.MEAN_FLOW, mesh, times, paths, speeds)


def eulerian_table(mesh: CoarseMesh, times: np.ndarray) -> CharacteristicTable:
    """Identity transform: nodes do not move."""
    times = np.asarray(times, dtype=float)
    paths = np.repeat(mesh.nodes[:, None], times.shape[0], axis=1)
    speeds = np.zeros_like(paths)
    return CharacteristicTable(TransformKind.EULERIAN, mesh, times, paths, speeds)


def jacobian_factors(tab: CharacteristicTable) -> JacobianFactors:
    """Per-cell map slopes and nodal velocities; slopes must be positive."""
    widths = tab.cell_widths()
    if not (widths > 0).all():
        _check_collapse(tab.mesh, tab.times, tab.node_paths)
        raise CellCollapseError("non-positive cell width in characteristic table")
    return JacobianFactors(widths / tab.mesh.width,
                           tab.node_velocities[:-1], tab.node_velocities[1:])


def map_positions(tab: CharacteristicTable, xi, time_index: int):
    """Unwrapped image of coordinates ``xi`` under the per-cell linear map."""
    cells, local = tab.mesh.locate(xi)
    left = tab.node_paths[cells, time_index]
    right = tab.node_paths[np.asarray(cells) + 1, time_index]
    return left + local * (right - left)


def to_eulerian(tab: CharacteristicTable, xi, time_index: int):
    """Eulerian position of transformed coordinates, reduced modulo 1."""
    return np.mod(map_positions(tab, xi, time_index), 1.0)


def effective_velocity(cs: CoefficientSet, tab: CharacteristicTable,
                       jf: JacobianFactors, xi, time_index: int):
    """Residual advection seen in the transformed frame.

    Evaluates ``(c(x(xi)) - dx/dtau(xi)) / (dx/dxi)`` with the velocity
    composed exactly along the mapped position and ``dx/dtau`` interpolated
    linearly between the nodal velocities.  Vanishes identically at the
    coarse nodes for the characteristic transform.
    """
    cells, local = tab.mesh.locate(xi)
    cells = np.asarray(cells)
    left = tab.node_paths[cells, time_index]
    right = tab.node_paths[cells + 1, time_index]
    x = left + local * (right - left)
    vel = (jf.vel_left[cells, time_index]
           + local * (jf.vel_right[cells, time_index] - jf.vel_left[cells, time_index]))
    return (cs.c(x, tab.times[time_index]) - vel) / jf.dx_dxi[cells, time_index]


def periodic_interp(positions: np.ndarray, values: np.ndarray, x_eval: np.ndarray):
    """Piecewise-linear interpolation of a 1-periodic field.

    ``positions`` must be strictly increasing and span less than one period;
    the gap back to ``positions[0] + 1`` is closed periodically.  Exact for
    fields that are linear between adjacent sample points.
    """
    base = positions[0]
    pos_ext = np.concatenate([positions, [base + 1.0]])
    val_ext = np.concatenate([values, values[:1]])
    query = base + np.mod(np.asarray(x_eval, dtype=float) - base, 1.0)
    return np.interp(query, pos_ext, val_ext)


def pull_back(tab: CharacteristicTable, x_eval: np.ndarray, cell_values: np.ndarray,
              time_index: int) -> np.ndarray:
    """Field samples on a uniform Eulerian grid from per-cell fine values.

    ``cell_values`` has shape (n_cells, n_fine) with shared coarse nodes
    duplicated; the fine nodes are mapped through the per-cell linear map
    and the resulting piecewise-linear field is evaluated periodically.
    """
    n_cells, n_fine = cell_values.shape
    frac = np.linspace(0.0, 1.0, n_fine)
    left = tab.node_paths[:-1, time_index][:, None]
    right = tab.node_paths[1:, time_index][:, None]
    positions = left + frac[None, :] * (right - left)
    return periodic_interp(positions[:, :-1].ravel(), cell_values[:, :-1].ravel(), x_eval)
