"""Pure-numpy kernel implementations, vectorised over space nodes / paths / lanes.

Shared status codes for pde_sweep: 0 = ok, 1 = CFL violation, 2 = slice
became non-finite.  All kernels assume the scalar case d = k = 1; the
variable vector consumed by coefficient programs is (t, x, y, z).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded

from ..program import eval_program

STATUS_OK = 0
STATUS_CFL = 1
STATUS_NONFINITE = 2


def _interp_row(row, x, x_min, dx):
    """Linear interpolation of one field slice, clamped at the box edges."""
    pos = np.clip((x - x_min) / dx, 0.0, len(row) - 1.0)
    idx = np.minimum(pos.astype(np.int64), len(row) - 2)
    w = pos - idx
    return (1.0 - w) * row[idx] + w * row[idx + 1]


def pde_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma):
    """Self-coupled sweep: coefficients are read off the evolving solution."""
    return _sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma, None, None)


def pde_sweep_linearized(t_nodes, x_nodes, eps, terminal, coeff_u, coeff_du, prog_f, prog_g, prog_sigma):
    """Linearized sweep: coefficients are read off a frozen field iterate."""
    return _sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma, coeff_u, coeff_du)


def _sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma, coeff_u, coeff_du):
    n_steps = len(t_nodes) - 1
    n_x = len(x_nodes)
    dt = float(t_nodes[1] - t_nodes[0])
    dx = float(x_nodes[1] - x_nodes[0])
    sqrt_eps = math.sqrt(eps)

    u = np.empty((n_steps + 1, n_x))
    du = np.empty_like(u)
    u[n_steps] = terminal
    du[n_steps] = np.gradient(terminal, dx)

    band = np.zeros((3, n_x))
    for m in range(n_steps - 1, -1, -1):
        v = u[m + 1]
        if coeff_u is None:
            y, dy = v, du[m + 1]
        else:
            y, dy = coeff_u[m + 1], coeff_du[m + 1]
        s = float(t_nodes[m + 1])
        fv = np.broadcast_to(eval_program(prog_f, [s, x_nodes, y, 0.0]), v.shape)
        sg = np.broadcast_to(eval_program(prog_sigma, [s, x_nodes, y, 0.0]), v.shape)
        z = sqrt_eps * dy * sg
        gv = np.broadcast_to(eval_program(prog_g, [s, x_nodes, y, z]), v.shape)

        max_speed = float(np.max(np.abs(fv)))
        if max_speed * dt > dx * (1.0 + 1e-12):
            return u, du, STATUS_CFL, m, max_speed

        slope = np.diff(v) / dx
        fwd = np.concatenate([slope, slope[-1:]])
        bwd = np.concatenate([slope[:1], slope])
        adv = fv * np.where(fv > 0.0, fwd, bwd)
        rhs = v + dt * (adv + gv)

        lam = 0.5 * eps * dt / (dx * dx) * (sg * sg)
        band[0, 1:] = -lam[:-1]  # superdiagonal
        band[1, :] = 1.0 + 2.0 * lam
        band[2, :-1] = -lam[1:]  # subdiagonal
        # zero-gradient ghost nodes: the boundary rows lose one neighbour
        band[1, 0] = 1.0 + lam[0]
        band[1, -1] = 1.0 + lam[-1]
        new = solve_banded((1, 1), band, rhs, overwrite_b=True, check_finite=False)

        if not np.all(np.isfinite(new)):
            return u, du, STATUS_NONFINITE, m, math.nan
        u[m] = new
        du[m] = np.gradient(new, dx)
    return u, du, STATUS_OK, -1, 0.0


def em_forward(x0, t_nodes, eps, u_field, x_min, dx, prog_f, prog_sigma, increments):
    n_paths, n_steps = increments.shape
    dt = float(t_nodes[1] - t_nodes[0])
    sqrt_eps = math.sqrt(eps)
    x_max = x_min + (u_field.shape[1] - 1) * dx

    X = np.empty((n_paths, n_steps + 1))
    X[:, 0] = x0
    exited = np.zeros(n_paths, dtype=bool)
    for m in range(n_steps):
        x = X[:, m]
        uv = _interp_row(u_field[m], x, x_min, dx)
        fv = eval_program(prog_f, [float(t_nodes[m]), x, uv, 0.0])
        sg = eval_program(prog_sigma, [float(t_nodes[m]), x, uv, 0.0])
        x_new = x + fv * dt + sqrt_eps * sg * increments[:, m]
        exited |= (x_new < x_min) | (x_new > x_max)
        X[:, m + 1] = np.clip(x_new, x_min, x_max)
    return X, exited


def fill_yz(X, t_nodes, eps, u_field, du_field, x_min, dx, prog_sigma):
    n_paths, n_nodes = X.shape
    sqrt_eps = math.sqrt(eps)
    Y = np.empty_like(X)
    Z = np.empty_like(X)
    for m in range(n_nodes):
        x = X[:, m]
        Y[:, m] = _interp_row(u_field[m], x, x_min, dx)
        dux = _interp_row(du_field[m], x, x_min, dx)
        sg = eval_program(prog_sigma, [float(t_nodes[m]), x, Y[:, m], 0.0])
        Z[:, m] = sqrt_eps * dux * sg
    return Y, Z


def _rhs(s, x, y, prog_f, prog_g):
    fx = eval_program(prog_f, [s, x, y, 0.0])
    gy = eval_program(prog_g, [s, x, y, 0.0])
    return fx, -gy


def _rk4_step(s, dt, x, y, prog_f, prog_g):
    k1x, k1y = _rhs(s, x, y, prog_f, prog_g)
    k2x, k2y = _rhs(s + 0.5 * dt, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y, prog_f, prog_g)
    k3x, k3y = _rhs(s + 0.5 * dt, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y, prog_f, prog_g)
    k4x, k4y = _rhs(s + dt, x + dt * k3x, y + dt * k3y, prog_f, prog_g)
    x_new = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    y_new = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return x_new, y_new


def rk4_terminal(start_index, t_nodes, x_start, y_start, prog_f, prog_g):
    dt = float(t_nodes[1] - t_nodes[0])
    x = np.array(x_start, dtype=np.float64, copy=True)
    y = np.array(y_start, dtype=np.float64, copy=True)
    for m in range(start_index, len(t_nodes) - 1):
        x, y = _rk4_step(float(t_nodes[m]), dt, x, y, prog_f, prog_g)
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def rk4_path(start_index, t_nodes, x_start, y_start, prog_f, prog_g):
    dt = float(t_nodes[1] - t_nodes[0])
    n_nodes = len(t_nodes)
    lanes = np.shape(np.asarray(x_start))
    X = np.empty(lanes + (n_nodes,))
    Y = np.empty(lanes + (n_nodes,))
    X[..., : start_index + 1] = np.asarray(x_start)[..., None]
    Y[..., : start_index + 1] = np.asarray(y_start)[..., None]
    for m in range(start_index, n_nodes - 1):
        x_new, y_new = _rk4_step(float(t_nodes[m]), dt, X[..., m], Y[..., m], prog_f, prog_g)
        X[..., m + 1] = x_new
        Y[..., m + 1] = y_new
    return X, Y


def ctrl_forward(x0, t_nodes, u_field, x_min, dx, prog_f, prog_sigma, phi_dot):
    n_lanes, n_steps = phi_dot.shape
    dt = float(t_nodes[1] - t_nodes[0])
    G = np.empty((n_lanes, n_steps + 1))
    G[:, 0] = x0
    for m in range(n_steps):
        x = G[:, m]
        uv = _interp_row(u_field[m], x, x_min, dx)
        b = eval_program(prog_f, [float(t_nodes[m]), x, uv, 0.0])
        sg = eval_program(prog_sigma, [float(t_nodes[m]), x, uv, 0.0])
        G[:, m + 1] = x + (b + sg * phi_dot[:, m]) * dt
    return G
