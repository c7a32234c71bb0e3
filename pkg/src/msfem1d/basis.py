"""Offline phase: time-dependent multiscale basis functions per coarse cell.

Each coarse cell carries one evolving shape function with boundary values
fixed at 1 (left node) and 0 (right node); the companion shape is its
complement, so the glued nodal basis is a partition of unity by
construction.  Cells are independent and may be computed concurrently; the
batched kernels are lane-independent, so results are bit-identical for any
chunking of the cells.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fem1d
from .coeffs import CoefficientSet
from .mesh import CoarseMesh, FineMesh, fine_grid
from .transform import CharacteristicTable, JacobianFactors, jacobian_factors

log = logging.getLogger(__name__)


@dataclass
class BasisTrajectory:
    """Evolution of one cell's shape function on the stored time grid.

    ``nodal_values[n]`` holds the fine-node values at ``times[n]``; the
    boundary entries are exactly 1 and 0 at all times.  When system storage
    is enabled the per-step transport/diffusion matrices are kept for reuse
    by the online phase.
    """

    cell: int
    times: np.ndarray
    nodal_values: np.ndarray
    mass_bands: Optional[np.ndarray] = None
    advection_bands: Optional[np.ndarray] = None
    diffusion_bands: Optional[np.ndarray] = None

    @property
    def n_fine(self) -> int:
        return self.nodal_values.shape[1]

    @property
    def has_systems(self) -> bool:
        return self.advection_bands is not None


@dataclass
class BasisSet:
    """All cell trajectories glued into the periodic nodal basis."""

    mesh: CoarseMesh
    times: np.ndarray
    trajectories: list

    def __post_init__(self):
        stacked = np.stack([t.nodal_values for t in self.trajectories])
        stacked.setflags(write=False)
        self.stacked = stacked  # (n_cells, n_times, n_fine)

    @property
    def n_fine(self) -> int:
        return self.stacked.shape[2]

    @property
    def has_systems(self) -> bool:
        return all(t.has_systems for t in self.trajectories)

    def values_at(self, time_index: int) -> np.ndarray:
        """Left-shape values of every cell, shape (n_cells, n_fine)."""
        return self.stacked[:, time_index, :]

    def rate_at(self, time_index: int, dt: float, mode: str = "centered") -> np.ndarray:
        """Time derivative of the left shapes on the stored grid.

        ``centered`` (second order, one-sided at the ends) keeps the coarse
        motion matrix consistent with the rest of the scheme; ``backward``
        is the lagged first-order variant.
        """
        if mode == "backward":
            if time_index == 0:
                return np.zeros_like(self.stacked[:, 0, :])
            return (self.stacked[:, time_index, :] - self.stacked[:, time_index - 1, :]) / dt
        if mode != "centered":
            raise ValueError(f"unknown rate mode {mode!r}")
        lo = max(time_index - 1, 0)
        hi = min(time_index + 1, self.stacked.shape[1] - 1)
        return (self.stacked[:, hi, :] - self.stacked[:, lo, :]) / ((hi - lo) * dt)

    def evaluate(self, coarse_dofs: np.ndarray, time_index: int) -> np.ndarray:
        """Fine-node field of a coarse DOF vector, shape (n_cells, n_fine)."""
        alpha = self.values_at(time_index)
        left = coarse_dofs
        right = np.roll(coarse_dofs, -1)
        return left[:, None] * alpha + right[:, None] * (1.0 - alpha)


def cell_quad_geometry(tab: CharacteristicTable, jf: JacobianFactors, cells: np.ndarray,
                       frac: np.ndarray, time_index: int):
    """Mapped positions, map-time-derivatives and slopes at quadrature points.

    ``frac`` holds quadrature locations as fractions of the coarse cell,
    shape (n_elements, 3); the returned arrays have shape
    (len(cells), n_elements, 3) except the slope, which is per cell.
    """
    left = tab.node_paths[cells, time_index][:, None, None]
    right = tab.node_paths[cells + 1, time_index][:, None, None]
    x = left + frac[None, :, :] * (right - left)
    vl = jf.vel_left[cells, time_index][:, None, None]
    vr = jf.vel_right[cells, time_index][:, None, None]
    xdot = vl + frac[None, :, :] * (vr - vl)
    slope = jf.dx_dxi[cells, time_index]
    return x, xdot, slope


def assemble_cell_bands(mesh: CoarseMesh, cells: np.ndarray, n_fine: int,
                        cs: CoefficientSet, tab: CharacteristicTable,
                        jf: JacobianFactors, time_index: int):
    """Transport and diffusion bands of the local problems for many cells."""
    n_el = n_fine - 1
    frac = fem1d.quad_fractions(n_el)
    h = mesh.width / n_el
    x, xdot, slope = cell_quad_geometry(tab, jf, cells, frac, time_index)
    t = tab.times[time_index]
    ctilde = (cs.c(x, t) - xdot) / slope[:, None, None]
    dcoef = cs.mu(x, t) / slope[:, None, None] ** 2
    return fem1d.advection_bands(ctilde, h), fem1d.diffusion_bands(dcoef, h)


def assemble_local(fine: FineMesh, cs: CoefficientSet, tab: CharacteristicTable,
                   jf: JacobianFactors, time_index: int) -> fem1d.LocalSystem:
    """System matrices of one cell problem at one stored time."""
    cells = np.array([fine.parent])
    adv, diff = assemble_cell_bands(tab.mesh, cells, fine.n_nodes, cs, tab, jf, time_index)
    mass = fem1d.hat_mass_bands(fine.n_nodes, fine.h)
    return fem1d.LocalSystem(mass, adv[0], diff[0], cell=fine.parent, time_index=time_index)


def fine_load(mesh: CoarseMesh, cells: np.ndarray, n_fine: int, func,
              tab: CharacteristicTable, time_index: int) -> np.ndarray:
    """Fine hat-basis load vectors of ``func`` composed with the cell map."""
    n_el = n_fine - 1
    frac = fem1d.quad_fractions(n_el)
    h = mesh.width / n_el
    left = tab.node_paths[cells, time_index][:, None, None]
    right = tab.node_paths[cells + 1, time_index][:, None, None]
    x = left + frac[None, :, :] * (right - left)
    return fem1d.load_values(func(x), h)


def _compute_chunk(mesh, cells, n_fine, cs, tab, jf, keep_systems, alpha_bound):
    times = tab.times
    dt = float(times[1] - times[0])
    n_times = times.shape[0]
    n_cells = cells.shape[0]
    h = mesh.width / (n_fine - 1)

    nodal = np.empty((n_cells, n_times, n_fine))
    nodal[:, 0, :] = np.linspace(1.0, 0.0, n_fine)
    mass = fem1d.hat_mass_bands(n_fine, h)
    adv_store = np.empty((n_cells, n_times, n_fine, 3)) if keep_systems else None
    diff_store = np.empty_like(adv_store) if keep_systems else None

    adv_now, diff_now = assemble_cell_bands(mesh, cells, n_fine, cs, tab, jf, 0)
    if keep_systems:
        adv_store[:, 0], diff_store[:, 0] = adv_now, diff_now

    state = fem1d.StepperState(u=nodal[:, 0, :].copy(), dt=dt)
    bc = ("dirichlet", 1.0, 0.0)
    for idx in range(1, n_times):
        adv_next, diff_next = assemble_cell_bands(mesh, cells, n_fine, cs, tab, jf, idx)
        state = fem1d.imex_step(state,
                                fem1d.LocalSystem(mass, adv_now, diff_now),
                                fem1d.LocalSystem(mass, adv_next, diff_next), bc)
        nodal[:, idx, :] = state.u
        if keep_systems:
            adv_store[:, idx], diff_store[:, idx] = adv_next, diff_next
        adv_now, diff_now = adv_next, diff_next

    peak = float(np.max(np.abs(nodal)))
    if peak > alpha_bound:
        log.warning("basis values reached %.3f (bound %.3f); possible boundary layer",
                    peak, alpha_bound)

    out = []
    for j, cell in enumerate(cells):
        out.append(BasisTrajectory(
            int(cell), times, nodal[j],
            mass_bands=mass if keep_systems else None,
            advection_bands=adv_store[j] if keep_systems else None,
            diffusion_bands=diff_store[j] if keep_systems else None,
        ))
    return out


def compute_basis(cell: int, mesh: CoarseMesh, n_fine: int, cs: CoefficientSet,
                  tab: CharacteristicTable, keep_systems: bool = True,
                  alpha_bound: float = 1.5) -> BasisTrajectory:
    """Integrate the local problem of one coarse cell over the stored grid."""
    jf = jacobian_factors(tab)
    return _compute_chunk(mesh, np.array([cell]), n_fine, cs, tab, jf,
                          keep_systems, alpha_bound)[0]


def compute_basis_set(mesh: CoarseMesh, n_fine: int, cs: CoefficientSet,
                      tab: CharacteristicTable, workers: Optional[int] = None,
                      keep_systems: bool = True, alpha_bound: float = 1.5) -> BasisSet:
    """Offline driver: all cell problems, optionally across worker threads.

    Results are independent of the worker count: the per-cell arithmetic is
    lane-independent, so any chunking produces bit-identical trajectories.
    """
    _check_resolution(cs, mesh.width / (n_fine - 1))
    jf = jacobian_factors(tab)
    cells = np.arange(mesh.n_cells)
    if workers is None or workers < 1:
        workers = 1
    workers = min(workers, mesh.n_cells)
    if workers == 1:
        chunks = [_compute_chunk(mesh, cells, n_fine, cs, tab, jf, keep_systems, alpha_bound)]
    else:
        parts = np.array_split(cells, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(
                lambda part: _compute_chunk(mesh, part, n_fine, cs, tab, jf,
                                            keep_systems, alpha_bound),
                parts))
    trajectories = [traj for chunk in chunks for traj in chunk]
    return glue(trajectories, mesh)


def _check_resolution(cs: CoefficientSet, h: float):
    period = cs.min_period
    if np.isfinite(period) and h > period / 8.0:
        log.warning("fine mesh width %.3e resolves the shortest coefficient period "
                    "%.3e with fewer than 8 elements", h, period)


def glue(trajectories, mesh: CoarseMesh) -> BasisSet:
    """Assemble the periodic nodal basis from per-cell trajectories.

    The nodal function of coarse node ``m`` is the complement shape of cell
    ``m-1`` joined with the left shape of cell ``m``; it equals 1 at its
    node and vanishes at all others.
    """
    if len(trajectories) != mesh.n_cells:
        raise ValueError(f"need {mesh.n_cells} trajectories, got {len(trajectories)}")
    ordered = sorted(trajectories, key=lambda t: t.cell)
    if [t.cell for t in ordered] != list(range(mesh.n_cells)):
        raise ValueError("trajectory cell ids do not cover the mesh")
    times = ordered[0].times
    for t in ordered[1:]:
        if not np.array_equal(t.times, times):
            raise ValueError(f"trajectory of cell {t.cell} uses a different time grid")
    return BasisSet(mesh, times, ordered)


def basis_time_derivative(traj: BasisTrajectory, time_index: int) -> np.ndarray:
    """Backward difference of the stored shape values; zero at the start."""
    if time_index == 0:
        return np.zeros(traj.n_fine)
    dt = float(traj.times[time_index] - traj.times[time_index - 1])
    return (traj.nodal_values[time_index] - traj.nodal_values[time_index - 1]) / dt


def hat_basis_set(mesh: CoarseMesh, tab: CharacteristicTable, cs: CoefficientSet,
                  n_fine: int = 2, keep_systems: bool = True) -> BasisSet:
    """Basis frozen at the P1 hats (no fine-scale evolution).

    With ``n_fine == 2`` the online solve degenerates to the standard
    coarse P1 method in the chosen coordinates.
    """
    jf = jacobian_factors(tab)
    times = tab.times
    n_times = times.shape[0]
    cells = np.arange(mesh.n_cells)
    hat = np.linspace(1.0, 0.0, n_fine)
    mass = fem1d.hat_mass_bands(n_fine, mesh.width / (n_fine - 1))
    trajectories = []
    if keep_systems:
        adv = np.empty((mesh.n_cells, n_times, n_fine, 3))
        diff = np.empty_like(adv)
        for idx in range(n_times):
            adv[:, idx], diff[:, idx] = assemble_cell_bands(mesh, cells, n_fine, cs,
                                                            tab, jf, idx)
    for cell in cells:
        nodal = np.tile(hat, (n_times, 1))
        trajectories.append(BasisTrajectory(
            int(cell), times, nodal,
            mass_bands=mass if keep_systems else None,
            advection_bands=adv[cell] if keep_systems else None,
            diffusion_bands=diff[cell] if keep_systems else None,
        ))
    return glue(trajectories, mesh)


BASIS_DUMP_VERSION = 1


def save_basis(bset: BasisSet, path):
    """Versioned binary container with the stacked shape values."""
    np.savez_compressed(
        path,
        format_version=np.array(BASIS_DUMP_VERSION),
        coarse_nodes=bset.mesh.nodes,
        times=bset.times,
        nodal_values=bset.stacked,
    )


def load_basis(path) -> BasisSet:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != BASIS_DUMP_VERSION:
            raise ValueError(f"unsupported basis dump version {version}")
        mesh = CoarseMesh(data["coarse_nodes"].copy())
        times = data["times"].copy()
        stacked = data["nodal_values"]
        trajectories = [BasisTrajectory(i, times, stacked[i].copy())
                        for i in range(stacked.shape[0])]
    return glue(trajectories, mesh)


def export_alphas_csv(bset: BasisSet, directory):
    """One CSV per cell with rows ``t, v_0, ..., v_{nf-1}`` for inspection."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for traj in bset.trajectories:
        path = directory / f"basis_cell{traj.cell:04d}.csv"
        header = "t," + ",".join(f"v{i}" for i in range(traj.n_fine))
        rows = [header]
        for n, t in enumerate(traj.times):
            vals = ",".join(f"{v:.17g}" for v in traj.nodal_values[n])
            rows.append(f"{t:.17g},{vals}")
        path.write_text("\n".join(rows) + "\n")
        paths.append(path)
    return paths
