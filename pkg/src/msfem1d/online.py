"""Online phase: coarse system assembly and time integration.

The coarse matrices at each stored time come from the local matrices of the
offline phase through a two-sided multiplication with the cells' shape
coefficients, so no fine-scale quadrature loop runs during the online solve
unless the local systems were dropped to save memory (in which case they are
re-assembled with the identical kernels).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fem1d
from .basis import BasisSet, assemble_cell_bands, fine_load
from .coeffs import CoefficientSet
from .fem1d import PeriodicSystem, PeriodicTriDiag
from .transform import CharacteristicTable, jacobian_factors, pull_back
from .analysis import FieldSnapshot

CoarseSystem = PeriodicSystem


@dataclass
class CoarseSolution:
    """Coarse DOF trajectory together with the basis that defines it."""

    times: np.ndarray
    dofs: np.ndarray  # (n_times, n_dofs)
    basis: BasisSet


def _einsum_rows(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    # per-cell dot products; plain C loops, no BLAS dispatch, so results do
    # not depend on how cells were batched upstream
    return np.einsum("cn,cn->c", a, y)


def _sandwich(bands: np.ndarray, a1: np.ndarray, a2: np.ndarray):
    y1 = fem1d.tri_matvec(bands, a1)
    y2 = fem1d.tri_matvec(bands, a2)
    return (_einsum_rows(a1, y1), _einsum_rows(a1, y2),
            _einsum_rows(a2, y1), _einsum_rows(a2, y2))


def _scatter_blocks(b11, b12, b21, b22) -> PeriodicTriDiag:
    diag = b11 + np.roll(b22, 1)
    sup = np.concatenate([b12[:-1], [0.0]])
    sub = np.concatenate([[0.0], b21[:-1]])
    return PeriodicTriDiag(sub, diag, sup, corner_tr=b21[-1], corner_bl=b12[-1])


def _local_bands(bset: BasisSet, cs, tab, time_index):
    if bset.has_systems:
        mass = bset.trajectories[0].mass_bands
        adv = np.stack([t.advection_bands[time_index] for t in bset.trajectories])
        diff = np.stack([t.diffusion_bands[time_index] for t in bset.trajectories])
        return mass, adv, diff
    jf = jacobian_factors(tab)
    cells = np.arange(bset.mesh.n_cells)
    adv, diff = assemble_cell_bands(bset.mesh, cells, bset.n_fine, cs, tab, jf, time_index)
    mass = fem1d.hat_mass_bands(bset.n_fine, bset.mesh.width / (bset.n_fine - 1))
    return mass, adv, diff


def assemble_coarse(bset: BasisSet, cs: CoefficientSet, tab: CharacteristicTable,
                    time_index: int, dt: float, rate: str = "centered",
                    measure: bool = True) -> CoarseSystem:
    """Coarse mass/motion/transport/diffusion matrices and load at one time.

    Every cell contributes a 2x2 block per matrix, obtained by sandwiching
    the stored local matrix between the two cell shape vectors; the motion
    matrix pairs the shapes with the time derivative of the trial shapes
    (centered differences of the stored trajectory by default, which keeps
    the coarse solve second-order consistent).

    With ``measure`` the integrals carry the moving-cell volume factor, so
    each cell block is simply the unweighted block times the cell's map
    slope.  Cells that deform differently are then coupled consistently
    and the scheme tracks the Eulerian mean of the advective-form
    equation; without it the solve conserves the transformed-coordinate
    mean instead, which drifts once cells deform.
    """
    mass_bands, adv_bands, diff_bands = _local_bands(bset, cs, tab, time_index)
    a1 = bset.values_at(time_index)
    a2 = 1.0 - a1
    d1 = bset.rate_at(time_index, dt, mode=rate)
    d2 = -d1
    if measure:
        scale = jacobian_factors(tab).dx_dxi[:, time_index]
    else:
        scale = None

    def blocks(bands, left, right):
        b11, b12, b21, b22 = _sandwich_pairs(bands, a1, a2, left, right)
        if scale is not None:
            return (b11 * scale, b12 * scale, b21 * scale, b22 * scale)
        return (b11, b12, b21, b22)

    mass = _scatter_blocks(*blocks(mass_bands, (a1, a2), (a1, a2)))
    adv = _scatter_blocks(*blocks(adv_bands, (a1, a2), (a1, a2)))
    diff = _scatter_blocks(*blocks(diff_bands, (a1, a2), (a1, a2)))
    motion = _scatter_blocks(*blocks(mass_bands, (a1, a2), (d1, d2)))

    load = None
    if cs.has_forcing:
        cells = np.arange(bset.mesh.n_cells)
        ell = fine_load(bset.mesh, cells, bset.n_fine, cs.g, tab, time_index)
        g1 = _einsum_rows(a1, ell)
        g2 = _einsum_rows(a2, ell)
        if scale is not None:
            g1 = g1 * scale
            g2 = g2 * scale
        load = g1 + np.roll(g2, 1)

    return CoarseSystem(mass, adv, diff, motion=motion, load=load)


def _sandwich_pairs(bands, a1, a2, left, right):
    y1 = fem1d.tri_matvec(bands, right[0])
    y2 = fem1d.tri_matvec(bands, right[1])
    return (_einsum_rows(left[0], y1), _einsum_rows(left[0], y2),
            _einsum_rows(left[1], y1), _einsum_rows(left[1], y2))


def assemble_series(bset: BasisSet, cs: CoefficientSet, tab: CharacteristicTable,
                    dt: float, rate: str = "centered", measure: bool = True) -> list:
    """Coarse systems at every stored time."""
    return [assemble_coarse(bset, cs, tab, idx, dt, rate=rate, measure=measure)
            for idx in range(bset.times.shape[0])]


def project_initial(bset: BasisSet, cs: CoefficientSet, tab: CharacteristicTable,
                    mass: Optional[PeriodicTriDiag] = None) -> np.ndarray:
    """L2 projection of the initial condition onto the (hat) basis at t=0."""
    cells = np.arange(bset.mesh.n_cells)
    ell = fine_load(bset.mesh, cells, bset.n_fine, cs.f, tab, 0)
    a1 = bset.values_at(0)
    a2 = 1.0 - a1
    rhs = _einsum_rows(a1, ell) + np.roll(_einsum_rows(a2, ell), 1)
    if mass is None:
        mass_bands = _local_bands(bset, cs, tab, 0)[0]
        mass = _scatter_blocks(*_sandwich(mass_bands, a1, a2))
    return mass.solve(rhs)


def solve_online(bset: BasisSet, cs: CoefficientSet, tab: CharacteristicTable,
                 series: Optional[list] = None, rate: str = "centered",
                 mass_midpoint: bool = False, measure: bool = True) -> CoarseSolution:
    """Integrate the coarse ODE system with the shared IMEX convention.

    Transport and basis-motion terms are explicit (AB2 with a Heun
    bootstrap), diffusion is Crank-Nicolson, and the mass matrix of the new
    time level multiplies the implicit combination (optionally the midpoint
    average of the two levels).
    """
    times = bset.times
    dt = float(times[1] - times[0])
    if series is None:
        series = assemble_series(bset, cs, tab, dt, rate=rate, measure=measure)
    u0 = project_initial(bset, cs, tab, mass=series[0].mass)
    dofs = np.empty((times.shape[0], u0.shape[0]))
    dofs[0] = u0
    state = fem1d.StepperState(u=u0, dt=dt)
    for idx in range(1, times.shape[0]):
        state = fem1d.imex_step(state, series[idx - 1], series[idx], bc="periodic",
                                mass_midpoint=mass_midpoint)
        dofs[idx] = state.u
    return CoarseSolution(times, dofs, bset)


def reconstruct(sol: CoarseSolution, tab: CharacteristicTable, time_index: int,
                eval_points: int) -> FieldSnapshot:
    """Fine-detail field on the uniform Eulerian grid at one stored time."""
    values = sol.basis.evaluate(sol.dofs[time_index], time_index)
    x_eval = np.arange(eval_points) / eval_points
    return FieldSnapshot(float(sol.times[time_index]), x_eval,
                         pull_back(tab, x_eval, values, time_index))
