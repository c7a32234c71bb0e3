"""Multiscale finite elements with advection-induced coordinates.

A coarse P1 finite element method for 1D periodic transient
advection-diffusion equations whose basis functions are precomputed on
moving coarse cells.  Cell boundaries follow either the spatially
averaged background velocity (mean-flow transform) or the true
characteristics emerging at the coarse nodes (characteristic transform),
which keeps advection from piling up against the local Dirichlet
boundary conditions of the basis problems.
"""

from .mesh import CoarseMesh, FineMesh, build_coarse, build_fine, locate_periodic
from .coeffs import CaseParams, CoefficientSet, make_case, mean_velocity
from .transform import (
    CellCollapseError,
    CharacteristicTable,
    TransformKind,
    eulerian_table,
    mean_flow_table,
    trace_characteristics,
)
from .analysis import ErrorReport, FieldSnapshot, error_norms

__all__ = [
    "CaseParams",
    "CellCollapseError",
    "CharacteristicTable",
    "CoarseMesh",
    "CoefficientSet",
    "ErrorReport",
    "FieldSnapshot",
    "FineMesh",
    "TransformKind",
    "build_coarse",
    "build_fine",
    "error_norms",
    "eulerian_table",
    "locate_periodic",
    "make_case",
    "mean_flow_table",
    "mean_velocity",
    "trace_characteristics",
]

__version__ = "0.1.0"
