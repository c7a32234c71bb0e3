"""Discrete error norms and convergence-study aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FieldSnapshot:
    """Field values on a uniform Eulerian grid covering [0, 1) at one time."""

    time: float
    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.x.setflags(write=False)
        self.values.setflags(write=False)


@dataclass(frozen=True)
class ErrorReport:
    """Relative errors of a candidate snapshot against a reference.

    ``rel_h1`` is the seminorm variant (error of the derivative only);
    ``max_dev`` is the relative deviation of the field maximum.
    """

    time: float
    rel_l2: float
    rel_linf: float
    rel_h1: float
    max_dev: float


def _l2(values: np.ndarray) -> float:
    # composite trapezoid on a uniform periodic grid reduces to the mean
    return float(np.sqrt(np.mean(values**2)))


def _forward_diff(values: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(values, -1) - values) / dx


def error_norms(candidate: FieldSnapshot, reference: FieldSnapshot) -> ErrorReport:
    """Relative L2 / Linf / H1-seminorm errors and maximum deviation.

    Both snapshots must live on the same grid at the same time.
    """
    if candidate.x.shape != reference.x.shape or not np.array_equal(candidate.x, reference.x):
        raise ValueError("snapshots live on different grids")
    if abs(candidate.time - reference.time) > 1e-9:
        raise ValueError(f"snapshot times differ: {candidate.time} vs {reference.time}")
    dx = 1.0 / reference.x.shape[0]
    diff = candidate.values - reference.values
    rel_l2 = _l2(diff) / _l2(reference.values)
    rel_linf = float(np.max(np.abs(diff)) / np.max(np.abs(reference.values)))
    dref = _forward_diff(reference.values, dx)
    ddiff = _forward_diff(candidate.values, dx) - dref
    rel_h1 = _l2(ddiff) / _l2(dref)
    ref_max = float(np.max(reference.values))
    max_dev = abs(float(np.max(candidate.values)) - ref_max) / ref_max
    return ErrorReport(reference.time, rel_l2, rel_linf, rel_h1, max_dev)


def error_series(candidates, references) -> list[ErrorReport]:
    """One report per shared snapshot time; schedules must match exactly."""
    if len(candidates) != len(references):
        raise ValueError(f"snapshot schedules differ: {len(candidates)} vs {len(references)}")
    return [error_norms(c, r) for c, r in zip(candidates, references)]


def peak_position(snapshot: FieldSnapshot) -> float:
    """Grid position of the field maximum."""
    return float(snapshot.x[int(np.argmax(snapshot.values))])


def periodic_distance(a: float, b: float) -> float:
    """Distance on the periodic unit interval."""
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def convergence_table(params, n_cells_list, n_fine: int, dt: float, t_end: float,
                      **kwargs) -> list[tuple[int, float, float]]:
    """Errors of the characteristic method against one shared reference.

    Runs the full pipeline for every coarse resolution in ``n_cells_list``
    (counted in cells) and reports ``(n, rel_l2, rel_linf)`` at the final
    time.  Extra keyword arguments are passed to the experiment runner.
    """
    from .runner import run_convergence_sweep  # deferred: runner sits above this module

    return run_convergence_sweep(params, n_cells_list, n_fine, dt, t_end, **kwargs)
