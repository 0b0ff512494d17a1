"""Backward solver for the viscous quasilinear decoupling system (scalar case).

The field u(s, x) satisfies, backward from u(T, x) = h(x),

    du/dt + (eps/2) sigma^2 u_xx + f(t,x,u) u_x
          + g(t, x, u, sqrt(eps) u_x sigma) = 0

on a truncated interval with zero-gradient ghost nodes at both ends.  Each
backward step treats the diffusion implicitly (tridiagonal solve) and the
upwinded advection and source explicitly, with all coefficients frozen at
the known slice.  The scheme is monotone and first order in time, which is
what selects the viscosity solution as eps goes to zero.

Only d = k = 1 is supported here; everything downstream of the field
(simulation, action functionals) composes with it by bilinear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CflViolationError, NonFiniteFieldError
from .grids import SpatialGrid, TimeGrid
from .problem import ProblemSpec


@dataclass(frozen=True, eq=False)
class DecouplingField:
    epsilon: float
    tgrid: TimeGrid
    xgrid: SpatialGrid
    u: np.ndarray = field(repr=False)  # (n_time_nodes, n_space_nodes)
    du_dx: np.ndarray = field(repr=False)
    clamp_counter: list = field(default_factory=lambda: [0], repr=False)

    def __post_init__(self):
        expected = (self.tgrid.n_nodes, self.xgrid.n_nodes)
        if self.u.shape != expected or self.du_dx.shape != expected:
            raise ValueError(f"field arrays must have shape {expected}")

    @property
    def clamp_warnings(self) -> int:
        return self.clamp_counter[0]

    def sup_abs(self, interior_only: bool = False) -> float:
        if interior_only:
            mask = self.xgrid.interior_mask()
            return float(np.max(np.abs(self.u[:, mask])))
        return float(np.max(np.abs(self.u)))

    def sup_abs_gradient(self, interior_only: bool = False) -> float:
        if interior_only:
            mask = self.xgrid.interior_mask()
            return float(np.max(np.abs(self.du_dx[:, mask])))
        return float(np.max(np.abs(self.du_dx)))


def solve_viscous(spec: ProblemSpec, eps: float, tgrid: TimeGrid, xgrid: SpatialGrid) -> DecouplingField:
    """Solve the parabolic system backward in time on the given grids."""
    if spec.d != 1 or spec.k != 1:
        raise ValueError("the PDE solver supports d = 1, k = 1 only")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if abs(tgrid.t0 - spec.t0) > 1e-12 or abs(tgrid.T - spec.T) > 1e-12:
        raise ValueError("time grid does not span the problem horizon")
    progs = spec.scalar_programs()
    x_nodes = xgrid.nodes
    terminal = spec.terminal(x_nodes[:, None])[:, 0]
    u, du, status, bad, info = kernels.pde_sweep(
        tgrid.nodes, x_nodes, float(eps), terminal, progs.f, progs.g, progs.sigma
    )
    if status == 1:
        raise CflViolationError(bad, tgrid.nodes[bad], info, tgrid.dt, xgrid.dx)
    if status == 2:
        raise NonFiniteFieldError(bad, tgrid.nodes[bad])
    return DecouplingField(epsilon=float(eps), tgrid=tgrid, xgrid=xgrid, u=u, du_dx=du)


def field_at(fld: DecouplingField, s: float, x: float):
    """Bilinear interpolation of (u, du/dx) at a point; x is clamped to the box.

    Returns (value, gradient) as floats for the scalar field.
    """
    t_pos = (s - fld.tgrid.t0) / fld.tgrid.dt
    if t_pos < -1e-9 or t_pos > fld.tgrid.n_steps + 1e-9:
        raise ValueError(f"s={s} outside the field's time window")
    t_pos = min(max(t_pos, 0.0), float(fld.tgrid.n_steps))
    i = min(int(t_pos), fld.tgrid.n_steps - 1)
    wt = t_pos - i

    x_pos = (x - fld.xgrid.x_min) / fld.xgrid.dx
    if x_pos < 0.0 or x_pos > fld.xgrid.n_cells:
        fld.clamp_counter[0] += 1
        x_pos = min(max(x_pos, 0.0), float(fld.xgrid.n_cells))
    j = min(int(x_pos), fld.xgrid.n_cells - 1)
    wx = x_pos - j

    def _bilinear(grid):
        row = (1.0 - wt) * grid[i] + wt * grid[i + 1]
        return (1.0 - wx) * row[j] + wx * row[j + 1]

    return float(_bilinear(fld.u)), float(_bilinear(fld.du_dx))


def field_rows(fld: DecouplingField):
    """Yield (s, x, u, du_dx) tuples over the full grid, time-major."""
    t_nodes = fld.tgrid.nodes
    x_nodes = fld.xgrid.nodes
    for i, s in enumerate(t_nodes):
        for j, x in enumerate(x_nodes):
            yield s, x, fld.u[i, j], fld.du_dx[i, j]
