"""Periodic coarse and fine 1D meshes on the unit interval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoarseMesh:
    """Uniform periodic mesh of the unit interval.

    ``nodes`` contains both endpoints, so a mesh with ``n_nodes`` nodes has
    ``n_nodes - 1`` cells.  The first and last node are the same periodic
    degree of freedom; every global vector therefore has length
    ``n_nodes - 1``.
    """

    nodes: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def n_dofs(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def width(self) -> float:
        return 1.0 / (self.nodes.shape[0] - 1)

    def locate(self, x):
        """Map positions to (cell index, local coordinate in [0, 1))."""
        x = np.asarray(x, dtype=float)
        y = np.mod(x, 1.0)
        scaled = y * self.n_cells
        cells = np.minimum(scaled.astype(np.int64), self.n_cells - 1)
        local = np.clip(scaled - cells, 0.0, 1.0)
        if x.ndim == 0:
            return int(cells), float(local)
        return cells, local


@dataclass(frozen=True)
class FineMesh:
    """Uniform subdivision of one coarse cell."""

    parent: int
    nodes: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        return (self.nodes[-1] - self.nodes[0]) / (self.nodes.shape[0] - 1)


def build_coarse(n_nodes: int) -> CoarseMesh:
    """Uniform periodic coarse mesh with ``n_nodes`` nodes (>= 3)."""
    if n_nodes < 3:
        raise ValueError(f"coarse mesh needs at least 3 nodes, got {n_nodes}")
    return CoarseMesh(np.linspace(0.0, 1.0, n_nodes))


def build_fine(mesh: CoarseMesh, cell: int, n_nodes: int) -> FineMesh:
    """Uniform fine mesh inside one coarse cell, endpoints shared bit-exactly."""
    if not 0 <= cell < mesh.n_cells:
        raise ValueError(f"cell index {cell} out of range for {mesh.n_cells} cells")
    if n_nodes < 3:
        raise ValueError(f"fine mesh needs at least 3 nodes, got {n_nodes}")
    return FineMesh(cell, np.linspace(mesh.nodes[cell], mesh.nodes[cell + 1], n_nodes))


def locate_periodic(mesh: CoarseMesh, x):
    """Alias for :meth:`CoarseMesh.locate`."""
    return mesh.locate(x)


def fine_grid(mesh: CoarseMesh, n_fine: int) -> np.ndarray:
    """Fine node positions for every cell at once, shape (n_cells, n_fine).

    Adjacent rows share their common coarse node exactly.  Unlike
    :func:`build_fine` this helper admits ``n_fine == 2`` (the degenerate
    layout whose only nodes are the cell endpoints), which is used to embed
    a plain coarse P1 method into the multiscale machinery.
    """
    if n_fine < 2:
        raise ValueError(f"need at least 2 fine nodes per cell, got {n_fine}")
    return np.linspace(mesh.nodes[:-1], mesh.nodes[1:], n_fine, axis=1)
