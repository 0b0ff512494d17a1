"""Backend dispatch for the hot numerical kernels.

Two interchangeable implementations exist: a pure-numpy one (vectorised
over grid nodes / paths / lanes) and a numba one (scalar loops under
@njit).  Selection happens once at import time via the environment variable

    FBSDELAB_BACKEND = auto | numba | numpy      (default: auto)

"auto" uses numba when it imports cleanly and falls back to numpy.  All
kernels take compiled coefficient Programs plus plain arrays and return
plain arrays, so results are interchangeable between backends up to
floating-point reassociation.
"""

from __future__ import annotations

import os

from . import numpy_impl

_requested = os.environ.get("FBSDELAB_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"FBSDELAB_BACKEND={_requested!r} not recognised (auto|numba|numpy)")

_impl = numpy_impl
_backend = "numpy"
if _requested in ("auto", "numba"):
    try:
        from . import numba_impl

        _impl = numba_impl
        _backend = "numba"
    except ImportError:
        if _requested == "numba":
            raise RuntimeError("FBSDELAB_BACKEND=numba but numba is not importable")


def active_backend() -> str:
    return _backend


def pde_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma):
    """Backward IMEX sweep of the quasilinear system; returns (u, du, status, bad, info)."""
    return _impl.pde_sweep(t_nodes, x_nodes, eps, terminal, prog_f, prog_g, prog_sigma)


def pde_sweep_linearized(t_nodes, x_nodes, eps, terminal, coeff_u, coeff_du, prog_f, prog_g, prog_sigma):
    """Backward sweep with coefficients frozen at a given field iterate."""
    return _impl.pde_sweep_linearized(
        t_nodes, x_nodes, eps, terminal, coeff_u, coeff_du, prog_f, prog_g, prog_sigma
    )


def em_forward(x0, t_nodes, eps, u_field, x_min, dx, prog_f, prog_sigma, increments):
    """Euler-Maruyama paths through the decoupling field; returns (X, exited)."""
    return _impl.em_forward(x0, t_nodes, eps, u_field, x_min, dx, prog_f, prog_sigma, increments)


def fill_yz(X, t_nodes, eps, u_field, du_field, x_min, dx, prog_sigma):
    """Backward components along simulated paths; returns (Y, Z)."""
    return _impl.fill_yz(X, t_nodes, eps, u_field, du_field, x_min, dx, prog_sigma)


def rk4_terminal(start_index, t_nodes, x_start, y_start, prog_f, prog_g):
    """Integrate the limit ODE pair from node start_index to T; returns (X_T, Y_T)."""
    return _impl.rk4_terminal(start_index, t_nodes, x_start, y_start, prog_f, prog_g)


def rk4_path(start_index, t_nodes, x_start, y_start, prog_f, prog_g):
    """As rk4_terminal but storing the whole trajectories; returns (X, Y) paths."""
    return _impl.rk4_path(start_index, t_nodes, x_start, y_start, prog_f, prog_g)


def ctrl_forward(x0, t_nodes, u_field, x_min, dx, prog_f, prog_sigma, phi_dot):
    """Controlled ODE paths g' = b(s,g) + sigma(s,g) phi_dot; returns path lattice."""
    return _impl.ctrl_forward(x0, t_nodes, u_field, x_min, dx, prog_f, prog_sigma, phi_dot)
