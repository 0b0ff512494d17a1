"""Uniform grids, path containers and the solution-space norms.

Paths are sampled on a shared uniform time grid; the two norms mirror the
continuous-time ones: a per-path squared sup distance and a left-endpoint
Riemann sum of the squared pointwise distance (the quadrature that matches
Euler-Maruyama's native order).  Expectations over ensembles are taken by
the montecarlo module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.T > self.t0:
            raise ValueError("need T > t0")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n_steps * factor)


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("need x_max > x_min")
        if self.n_cells < 2:
            raise ValueError("n_cells must be >= 2")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_cells + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def contains_with_margin(self, x: float, margin_fraction: float = 0.2) -> bool:
        margin = margin_fraction * (self.x_max - self.x_min)
        return (x >= self.x_min + margin) and (x <= self.x_max - margin)

    def interior_mask(self, margin_fraction: float = 0.2) -> np.ndarray:
        """Nodes at least margin_fraction of the width away from both ends."""
        nodes = self.nodes
        margin = margin_fraction * (self.x_max - self.x_min)
        return (nodes >= self.x_min + margin) & (nodes <= self.x_max - margin)

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.x_min, self.x_max, self.n_cells * factor)


@dataclass(frozen=True, eq=False)
class Path:
    """Values sampled on the nodes of a time grid; shape (n_nodes,) or (n_nodes, dim)."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape[0] != self.grid.n_nodes:
            raise ValueError(
                f"path has {values.shape[0]} samples for {self.grid.n_nodes} grid nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("path contains non-finite values")

    @property
    def matrix(self) -> np.ndarray:
        """Values as (n_nodes, dim), adding a singleton axis for scalar paths."""
        if self.values.ndim == 1:
            return self.values[:, None]
        return self.values.reshape(self.values.shape[0], -1)


def _check_same_grid(a: Path, b: Path):
    if a.grid != b.grid:
        raise ValueError("paths live on different time grids")
    if a.matrix.shape != b.matrix.shape:
        raise ValueError("paths have different value dimensions")


def sup_norm_sq(a: Path, b: Path) -> float:
    """max over nodes of the squared Euclidean distance."""
    _check_same_grid(a, b)
    diff = a.matrix - b.matrix
    return float(np.max(np.sum(diff * diff, axis=1)))


def l2_norm_sq(a: Path, b: Path) -> float:
    """Left-endpoint Riemann sum of the squared distance times dt."""
    _check_same_grid(a, b)
    diff = (a.matrix - b.matrix)[:-1]
    return float(np.sum(diff * diff) * a.grid.dt)
