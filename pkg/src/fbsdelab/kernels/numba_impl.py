"""Numba kernel implementations: scalar loops under @njit.

Same contracts as numpy_impl, selected via FBSDELAB_BACKEND.  Coefficient
programs are interpreted by a small stack machine per grid point; the IEEE
error model matches numpy (division by zero yields inf, sqrt of a negative
yields nan) so failure detection behaves identically across backends.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ..program import (
    OP_ABS,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_EXP,
    OP_MAX,
    OP_MIN,
    OP_MUL,
    OP_NEG,
    OP_SIN,
    OP_SQRT,
    OP_SUB,
    OP_TANH,
    OP_VAR,
)

STATUS_OK = 0
STATUS_CFL = 1
STATUS_NONFINITE = 2

_STACK_SIZE = 64


def _check_stack(*programs):
    for prog in programs:
        if prog.stack_need > _STACK_SIZE:
            raise ValueError("coefficient expression too deep for the kernel stack")


@njit(cache=True, error_model="numpy", inline="always")
def _eval(ops, args, consts, t, x, y, z, stack):
    sp = 0
    for i in range(ops.shape[0]):
        op = ops[i]
        if op == OP_CONST:
            stack[sp] = consts[args[i]]
            sp += 1
        elif op == OP_VAR:
            j = args[i]
            if j == 0:
                stack[sp] = t
            elif j == 1:
                stack[sp] = x
            elif j == 2:
                stack[sp] = y
            else:
                stack[sp] = z
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_ADD:
            stack[sp - 2] = stack[sp - 2] + stack[sp - 1]
            sp -= 1
        elif op == OP_SUB:
            stack[sp - 2] = stack[sp - 2] - stack[sp - 1]
            sp -= 1
        elif op == OP_MUL:
            stack[sp - 2] = stack[sp - 2] * stack[sp - 1]
            sp -= 1
        elif op == OP_DIV:
            stack[sp - 2] = stack[sp - 2] / stack[sp - 1]
            sp -= 1
        elif op == OP_SIN:
            stack[sp - 1] = np.sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = np.cos(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = np.exp(stack[sp - 1])
        elif op == OP_TANH:
            stack[sp - 1] = np.tanh(stack[sp - 1])
        elif op == OP_ABS:
            stack[sp - 1] = abs(stack[sp - 1])
        elif op == OP_SQRT:
            stack[sp - 1] = np.sqrt(stack[sp - 1])
        elif op == OP_MIN:
            stack[sp - 2] = min(stack[sp - 2], stack[sp - 1])
            sp -= 1
        elif op == OP_MAX:
            stack[sp - 2] = max(stack[sp - 2], stack[sp - 1])
            sp -= 1
    return stack[0]


@njit(cache=True, error_model="numpy")
def _sweep_core(
    t_nodes, x_nodes, eps, u, du,
    f_ops, f_args, f_consts, g_ops, g_args, g_consts, s_ops, s_args, s_consts,
    coeff_u, coeff_du, use_coeff,
):
    n_steps = t_nodes.shape[0] - 1
    n_x = x_nodes.shape[0]
    dt = t_nodes[1] - t_nodes[0]
    dx = x_nodes[1] - x_nodes[0]
    sqrt_eps = np.sqrt(eps)
    stack = np.empty(_STACK_SIZE)
    fv = np.empty(n_x)
    sg = np.empty(n_x)
    gv = np.empty(n_x)
    rhs = np.empty(n_x)
    lam = np.empty(n_x)
    cp = np.empty(n_x)
    dp = np.empty(n_x)

    for m in range(n_steps - 1, -1, -1):
        s = t_nodes[m + 1]
        max_speed = 0.0
        for j in range(n_x):
            if use_coeff:
                y = coeff_u[m + 1, j]
                dy = coeff_du[m + 1, j]
            else:
                y = u[m + 1, j]
                dy = du[m + 1, j]
            xj = x_nodes[j]
            fj = _eval(f_ops, f_args, f_consts, s, xj, y, 0.0, stack)
            sj = _eval(s_ops, s_args, s_consts, s, xj, y, 0.0, stack)
            zj = sqrt_eps * dy * sj
            gj = _eval(g_ops, g_args, g_consts, s, xj, y, zj, stack)
            fv[j] = fj
            sg[j] = sj
            gv[j] = gj
            if abs(fj) > max_speed:
                max_speed = abs(fj)
        if max_speed * dt > dx * (1.0 + 1e-12):
            return STATUS_CFL, m, max_speed

        for j in range(n_x):
            if fv[j] > 0.0:
                if j < n_x - 1:
                    slope = (u[m + 1, j + 1] - u[m + 1, j]) / dx
                else:
                    slope = (u[m + 1, j] - u[m + 1, j - 1]) / dx
            else:
                if j > 0:
                    slope = (u[m + 1, j] - u[m + 1, j - 1]) / dx
                else:
                    slope = (u[m + 1, j + 1] - u[m + 1, j]) / dx
            rhs[j] = u[m + 1, j] + dt * (fv[j] * slope + gv[j])
            lam[j] = 0.5 * eps * dt / (dx * dx) * sg[j] * sg[j]

        # Thomas solve of (I - dt (eps/2) a D2) with zero-gradient ghosts
        diag0 = 1.0 + lam[0]
        cp[0] = -lam[0] / diag0
        dp[0] = rhs[0] / diag0
        for j in range(1, n_x):
            diag = 1.0 + lam[j] if j == n_x - 1 else 1.0 + 2.0 * lam[j]
            lower = -lam[j]
            denom = diag - lower * cp[j - 1]
            cp[j] = -lam[j] / denom
            dp[j] = (rhs[j] - lower * dp[j - 1]) / denom
        u[m, n_x - 1] = dp[n_x - 1]
        for j in range(n_x - 2, -1, -1):
            u[m, j] = dp[j] - cp[j] * u[m, j + 1]
        ok = True
        for j in range(n_x):
            if not np.isfinite(u[m, j]):
                ok = False
                break
        if not ok:
            return STATUS_NONFINITE, m, np.nan
        du[m, 0] = (u[m, 1] - u[m, 0]) / dx
        du[m, n_x - 1] = (u[m, n_x - 1] - u[m, n_x - 2]) / dx
        for j in range(1, n_x - 1):
            du[m, j] = (u[m, j + 1] - u[m, j - 1]) / (2.0 * dx)
    return STATUS_OK, -1, 0.0


def _run_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma, coeff_u, coeff_du):
    _check_stack(prog_f, prog_g, prog_sigma)
    n_x = len(x_nodes)
    n_steps = len(t_nodes) - 1
    dx = float(x_nodes[1] - x_nodes[0])
    u = np.empty((n_steps + 1, n_x))
    du = np.empty_like(u)
    u[n_steps] = terminal
    du[n_steps] = np.gradient(terminal, dx)
    use_coeff = coeff_u is not None
    if not use_coeff:
        coeff_u = u
        coeff_du = du
    status, bad, info = _sweep_core(
        np.asarray(t_nodes, dtype=np.float64), np.asarray(x_nodes, dtype=np.float64),
        float(eps), u, du,
        prog_f.ops, prog_f.args, prog_f.consts,
        prog_g.ops, prog_g.args, prog_g.consts,
        prog_sigma.ops, prog_sigma.args, prog_sigma.consts,
        np.asarray(coeff_u, dtype=np.float64), np.asarray(coeff_du, dtype=np.float64),
        use_coeff,
    )
    return u, du, int(status), int(bad), float(info)


def pde_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma):
    return _run_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma, None, None)


def pde_sweep_linearized(t_nodes, x_nodes, eps, terminal, coeff_u, coeff_du, prog_f, prog_g, prog_sigma):
    return _run_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma, coeff_u, coeff_du)


@njit(cache=True, error_model="numpy", parallel=True)
def _em_core(
    x0, t_nodes, eps, u_field, x_min, dx,
    f_ops, f_args, f_consts, s_ops, s_args, s_consts,
    increments, X, exited,
):
    n_paths, n_steps = increments.shape
    dt = t_nodes[1] - t_nodes[0]
    sqrt_eps = np.sqrt(eps)
    n_x = u_field.shape[1]
    x_max = x_min + (n_x - 1) * dx
    for i in prange(n_paths):
        stack = np.empty(_STACK_SIZE)
        x = x0
        X[i, 0] = x
        ex = False
        for m in range(n_steps):
            pos = (x - x_min) / dx
            if pos < 0.0:
                pos = 0.0
            elif pos > n_x - 1.0:
                pos = n_x - 1.0
            j = int(pos)
            if j > n_x - 2:
                j = n_x - 2
            w = pos - j
            uv = (1.0 - w) * u_field[m, j] + w * u_field[m, j + 1]
            fv = _eval(f_ops, f_args, f_consts, t_nodes[m], x, uv, 0.0, stack)
            sv = _eval(s_ops, s_args, s_consts, t_nodes[m], x, uv, 0.0, stack)
            x_new = x + fv * dt + sqrt_eps * sv * increments[i, m]
            if x_new < x_min:
                ex = True
                x_new = x_min
            elif x_new > x_max:
                ex = True
                x_new = x_max
            x = x_new
            X[i, m + 1] = x
        exited[i] = ex


def em_forward(x0, t_nodes, eps, u_field, x_min, dx, prog_f, prog_sigma, increments):
    _check_stack(prog_f, prog_sigma)
    increments = np.ascontiguousarray(increments, dtype=np.float64)
    n_paths, n_steps = increments.shape
    X = np.empty((n_paths, n_steps + 1))
    exited = np.zeros(n_paths, dtype=np.bool_)
    _em_core(
        float(x0), np.asarray(t_nodes, dtype=np.float64), float(eps),
        np.ascontiguousarray(u_field, dtype=np.float64), float(x_min), float(dx),
        prog_f.ops, prog_f.args, prog_f.consts,
        prog_sigma.ops, prog_sigma.args, prog_sigma.consts,
        increments, X, exited,
    )
    return X, exited


@njit(cache=True, error_model="numpy", parallel=True)
def _fill_yz_core(
    X, t_nodes, eps, u_field, du_field, x_min, dx,
    s_ops, s_args, s_consts, Y, Z,
):
    n_paths, n_nodes = X.shape
    sqrt_eps = np.sqrt(eps)
    n_x = u_field.shape[1]
    for i in prange(n_paths):
        stack = np.empty(_STACK_SIZE)
        for m in range(n_nodes):
            x = X[i, m]
            pos = (x - x_min) / dx
            if pos < 0.0:
                pos = 0.0
            elif pos > n_x - 1.0:
                pos = n_x - 1.0
            j = int(pos)
            if j > n_x - 2:
                j = n_x - 2
            w = pos - j
            uv = (1.0 - w) * u_field[m, j] + w * u_field[m, j + 1]
            dv = (1.0 - w) * du_field[m, j] + w * du_field[m, j + 1]
            sv = _eval(s_ops, s_args, s_consts, t_nodes[m], x, uv, 0.0, stack)
            Y[i, m] = uv
            Z[i, m] = sqrt_eps * dv * sv
    return Y, Z


def fill_yz(X, t_nodes, eps, u_field, du_field, x_min, dx, prog_sigma):
    _check_stack(prog_sigma)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.empty_like(X)
    Z = np.empty_like(X)
    _fill_yz_core(
        X, np.asarray(t_nodes, dtype=np.float64), float(eps),
        np.ascontiguousarray(u_field, dtype=np.float64),
        np.ascontiguousarray(du_field, dtype=np.float64),
        float(x_min), float(dx),
        prog_sigma.ops, prog_sigma.args, prog_sigma.consts, Y, Z,
    )
    return Y, Z


@njit(cache=True, error_model="numpy")
def _rk4_core(start_index, t_nodes, X, Y, store,
              f_ops, f_args, f_consts, g_ops, g_args, g_consts):
    n_lanes = X.shape[0]
    n_nodes = t_nodes.shape[0]
    dt = t_nodes[1] - t_nodes[0]
    stack = np.empty(_STACK_SIZE)
    for lane in range(n_lanes):
        x = X[lane, start_index]
        y = Y[lane, start_index]
        for m in range(start_index, n_nodes - 1):
            s = t_nodes[m]
            k1x = _eval(f_ops, f_args, f_consts, s, x, y, 0.0, stack)
            k1y = -_eval(g_ops, g_args, g_consts, s, x, y, 0.0, stack)
            xm = x + 0.5 * dt * k1x
            ym = y + 0.5 * dt * k1y
            k2x = _eval(f_ops, f_args, f_consts, s + 0.5 * dt, xm, ym, 0.0, stack)
            k2y = -_eval(g_ops, g_args, g_consts, s + 0.5 * dt, xm, ym, 0.0, stack)
            xm = x + 0.5 * dt * k2x
            ym = y + 0.5 * dt * k2y
            k3x = _eval(f_ops, f_args, f_consts, s + 0.5 * dt, xm, ym, 0.0, stack)
            k3y = -_eval(g_ops, g_args, g_consts, s + 0.5 * dt, xm, ym, 0.0, stack)
            xm = x + dt * k3x
            ym = y + dt * k3y
            k4x = _eval(f_ops, f_args, f_consts, s + dt, xm, ym, 0.0, stack)
            k4y = -_eval(g_ops, g_args, g_consts, s + dt, xm, ym, 0.0, stack)
            x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            if store:
                X[lane, m + 1] = x
                Y[lane, m + 1] = y
        X[lane, n_nodes - 1] = x
        Y[lane, n_nodes - 1] = y


def _rk4(start_index, t_nodes, x_start, y_start, prog_f, prog_g, store):
    _check_stack(prog_f, prog_g)
    x_start = np.asarray(x_start, dtype=np.float64)
    lanes = x_start.shape[0]
    n_nodes = len(t_nodes)
    X = np.empty((lanes, n_nodes))
    Y = np.empty((lanes, n_nodes))
    X[:, : start_index + 1] = x_start[:, None]
    Y[:, : start_index + 1] = np.asarray(y_start, dtype=np.float64)[:, None]
    _rk4_core(
        start_index, np.asarray(t_nodes, dtype=np.float64), X, Y, store,
        prog_f.ops, prog_f.args, prog_f.consts,
        prog_g.ops, prog_g.args, prog_g.consts,
    )
    return X, Y


def rk4_terminal(start_index, t_nodes, x_start, y_start, prog_f, prog_g):
    X, Y = _rk4(start_index, t_nodes, x_start, y_start, prog_f, prog_g, False)
    return X[:, -1].copy(), Y[:, -1].copy()


def rk4_path(start_index, t_nodes, x_start, y_start, prog_f, prog_g):
    return _rk4(start_index, t_nodes, x_start, y_start, prog_f, prog_g, True)


@njit(cache=True, error_model="numpy")
def _ctrl_core(x0, t_nodes, u_field, x_min, dx,
               f_ops, f_args, f_consts, s_ops, s_args, s_consts, phi_dot, G):
    n_lanes, n_steps = phi_dot.shape
    dt = t_nodes[1] - t_nodes[0]
    n_x = u_field.shape[1]
    stack = np.empty(_STACK_SIZE)
    for lane in range(n_lanes):
        x = x0
        G[lane, 0] = x
        for m in range(n_steps):
            pos = (x - x_min) / dx
            if pos < 0.0:
                pos = 0.0
            elif pos > n_x - 1.0:
                pos = n_x - 1.0
            j = int(pos)
            if j > n_x - 2:
                j = n_x - 2
            w = pos - j
            uv = (1.0 - w) * u_field[m, j] + w * u_field[m, j + 1]
            b = _eval(f_ops, f_args, f_consts, t_nodes[m], x, uv, 0.0, stack)
            sg = _eval(s_ops, s_args, s_consts, t_nodes[m], x, uv, 0.0, stack)
            x = x + (b + sg * phi_dot[lane, m]) * dt
            G[lane, m + 1] = x


def ctrl_forward(x0, t_nodes, u_field, x_min, dx, prog_f, prog_sigma, phi_dot):
    _check_stack(prog_f, prog_sigma)
    phi_dot = np.ascontiguousarray(phi_dot, dtype=np.float64)
    n_lanes, n_steps = phi_dot.shape
    G = np.empty((n_lanes, n_steps + 1))
    _ctrl_core(
        float(x0), np.asarray(t_nodes, dtype=np.float64),
        np.ascontiguousarray(u_field, dtype=np.float64), float(x_min), float(dx),
        prog_f.ops, prog_f.args, prog_f.consts,
        prog_sigma.ops, prog_sigma.args, prog_sigma.consts,
        phi_dot, G,
    )
    return G
