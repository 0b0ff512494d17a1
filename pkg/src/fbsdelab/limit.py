"""The deterministic small-noise limit: a coupled two-point boundary value problem.

As the noise vanishes the forward-backward pair degenerates to

    X' = f(s, X, Y),   Y' = -g(s, X, Y, 0),   X(t0) = x0,   Y(T) = h(X(T)),

solved here by shooting on the unknown initial value c = Y(t0): classical
RK4 integration forward from (x0, c), damped Newton with finite-difference
Jacobian on the terminal mismatch, initial guess h(x0) (the zero-horizon
value), and a homotopy in horizon length as a fallback when Newton stalls.
Evaluating the shot from every grid node builds the inviscid decoupling
field u(s, x) = Y at s started from (s, x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShootingError
from .grids import Path, SpatialGrid, TimeGrid
from .pde import DecouplingField
from .problem import ProblemSpec

_NEWTON_STEP_SCALE = 1e-7
_MAX_HALVINGS = 30


@dataclass(frozen=True, eq=False)
class LimitSolution:
    grid: TimeGrid
    X: Path
    Y: Path
    u0: np.ndarray  # Y at t0, shape (k,)
    residual: float
    iterations: int
    condition_estimate: float


# ---------------------------------------------------------------------------
# generic (d, k) integrator and Newton solver


def _integrate_terminal(spec, t_nodes, start_index, X0, Y0):
    dt = float(t_nodes[1] - t_nodes[0])
    x = np.array(X0, dtype=np.float64, copy=True)
    y = np.array(Y0, dtype=np.float64, copy=True)
    for m in range(start_index, len(t_nodes) - 1):
        s = float(t_nodes[m])
        k1x, k1y = spec.drift(s, x, y), -spec.generator(s, x, y)
        xm, ym = x + 0.5 * dt * k1x, y + 0.5 * dt * k1y
        k2x, k2y = spec.drift(s + 0.5 * dt, xm, ym), -spec.generator(s + 0.5 * dt, xm, ym)
        xm, ym = x + 0.5 * dt * k2x, y + 0.5 * dt * k2y
        k3x, k3y = spec.drift(s + 0.5 * dt, xm, ym), -spec.generator(s + 0.5 * dt, xm, ym)
        xm, ym = x + dt * k3x, y + dt * k3y
        k4x, k4y = spec.drift(s + dt, xm, ym), -spec.generator(s + dt, xm, ym)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        y = y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
    return x, y


def _residual(spec, t_nodes, start_index, x0, c):
    XT, YT = _integrate_terminal(spec, t_nodes, start_index, x0[None, :], c[None, :])
    return (YT - spec.terminal(XT))[0], XT[0]


def _newton_general(spec, t_nodes, start_index, x0, c0, tol, max_iter=60):
    k = spec.k
    c = np.array(c0, dtype=np.float64, copy=True)
    r, _ = _residual(spec, t_nodes, start_index, x0, c)
    cond = 0.0
    for it in range(max_iter):
        norm = float(np.linalg.norm(r))
        if norm <= tol:
            return c, norm, it, cond, True
        delta = _NEWTON_STEP_SCALE * np.maximum(1.0, np.abs(c))
        jac = np.empty((k, k))
        for j in range(k):
            bumped = c.copy()
            bumped[j] += delta[j]
            r_j, _ = _residual(spec, t_nodes, start_index, x0, bumped)
            jac[:, j] = (r_j - r) / delta[j]
        try:
            step = np.linalg.solve(jac, -r)
            cond = float(np.linalg.norm(np.linalg.inv(jac), 2))
        except np.linalg.LinAlgError:
            return c, norm, it, np.inf, False
        lam = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = c + lam * step
            r_trial, _ = _residual(spec, t_nodes, start_index, x0, trial)
            if np.linalg.norm(r_trial) < norm:
                c, r = trial, r_trial
                break
            lam *= 0.5
        else:
            return c, norm, it, cond, False  # stagnated
    return c, float(np.linalg.norm(r)), max_iter, cond, False


def _shoot_with_homotopy(spec, tgrid, tol):
    t_nodes = tgrid.nodes
    c0 = spec.terminal(spec.x0[None, :])[0]
    c, res, iters, cond, ok = _newton_general(spec, t_nodes, 0, spec.x0, c0, tol)
    if ok:
        return c, res, iters, cond
    # homotopy in horizon length: solve on [T - theta*tau, T], reuse c
    guess = c0
    total_iters = iters
    for theta in (0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0):
        n_sub = max(2, int(round(tgrid.n_steps * theta)))
        sub = TimeGrid(spec.T - theta * spec.horizon, spec.T, n_sub)
        guess, res, iters, cond, ok = _newton_general(spec, sub.nodes, 0, spec.x0, guess, tol)
        total_iters += iters
        if not ok:
            raise ShootingError(
                f"shooting failed to converge (residual {res:.3e} at horizon fraction {theta})"
            )
    # final polish on the requested grid
    c, res, iters, cond, ok = _newton_general(spec, t_nodes, 0, spec.x0, guess, tol)
    total_iters += iters
    if not ok:
        raise ShootingError(f"shooting failed to converge (residual {res:.3e})")
    return c, res, total_iters, cond


def shoot(spec: ProblemSpec, tgrid: TimeGrid, tol: float = 1e-10) -> LimitSolution:
    """Solve the limit boundary value problem on the grid."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if abs(tgrid.t0 - spec.t0) > 1e-12 or abs(tgrid.T - spec.T) > 1e-12:
        raise ValueError("time grid does not span the problem horizon")
    if spec.d == 1 and spec.k == 1:
        solution = _shoot_scalar(spec, tgrid, tol)
        if solution is not None:
            return solution
    c, res, iters, cond = _shoot_with_homotopy(spec, tgrid, tol)
    X, Y = _integrate_path(spec, tgrid.nodes, 0, spec.x0, c)
    return LimitSolution(
        grid=tgrid,
        X=Path(tgrid, X),
        Y=Path(tgrid, Y),
        u0=c,
        residual=res,
        iterations=iters,
        condition_estimate=cond,
    )


def _shoot_scalar(spec, tgrid, tol):
    """Kernel-backed shot for d = k = 1; the same arithmetic the inviscid
    field sweep runs per node, so the two agree exactly on shared nodes.
    Returns None when Newton stalls, deferring to the homotopy path."""
    progs = spec.scalar_programs()
    x_start = np.array([spec.x0[0]])
    c, r, iters, converged, cond, stuck = _newton_shoot_scalar_batch(
        progs, tgrid.nodes, 0, x_start, tol
    )
    if bool(stuck[0]) or not bool(converged[0]):
        return None
    X, Y = kernels.rk4_path(0, tgrid.nodes, x_start, c, progs.f, progs.g)
    return LimitSolution(
        grid=tgrid,
        X=Path(tgrid, X[0][:, None]),
        Y=Path(tgrid, Y[0][:, None]),
        u0=c.copy(),
        residual=float(abs(r[0])),
        iterations=iters,
        condition_estimate=cond,
    )


def _integrate_path(spec, t_nodes, start_index, x0, c):
    n = len(t_nodes)
    X = np.empty((n, spec.d))
    Y = np.empty((n, spec.k))
    X[: start_index + 1] = x0
    Y[: start_index + 1] = c
    x, y = x0[None, :].copy(), c[None, :].copy()
    for m in range(start_index, n - 1):
        x, y = _integrate_terminal(spec, t_nodes[m : m + 2], 0, x, y)
        X[m + 1], Y[m + 1] = x[0], y[0]
    return X, Y


# ---------------------------------------------------------------------------
# scalar fast path: the whole x-grid shot at once through the kernel backend


def _newton_shoot_scalar_batch(progs, t_nodes, start_index, x_starts, tol, max_iter=60):
    """Damped Newton on c for every start value in parallel.

    Frozen lanes keep their converged c, so each lane's iterate sequence is
    identical to a solo run with the same initial guess.
    """
    from .program import eval_program

    def h_of(x):
        return np.broadcast_to(eval_program(progs.h, [0.0, x, 0.0, 0.0]), x.shape)

    def residual(c):
        XT, YT = kernels.rk4_terminal(start_index, t_nodes, x_starts, c, progs.f, progs.g)
        return YT - h_of(XT)

    c = np.array(h_of(x_starts), dtype=np.float64, copy=True)
    r = residual(c)
    converged = np.abs(r) <= tol
    inv_jac_max = 0.0
    iterations = 0
    for _ in range(max_iter):
        if np.all(converged):
            break
        iterations += 1
        delta = _NEWTON_STEP_SCALE * np.maximum(1.0, np.abs(c))
        r_bump = residual(c + np.where(converged, 0.0, delta))
        jac = (r_bump - r) / delta
        bad = np.abs(jac) < 1e-300
        jac = np.where(bad, 1.0, jac)
        step = np.where(converged | bad, 0.0, -r / jac)
        with np.errstate(divide="ignore"):
            inv_jac_max = max(inv_jac_max, float(np.max(np.abs(1.0 / jac)[~converged], initial=0.0)))
        lam = np.ones_like(c)
        done = converged.copy()
        absr = np.abs(r)
        for _halving in range(_MAX_HALVINGS):
            trial = np.where(done, c, c + lam * step)
            r_trial = residual(trial)
            better = ~done & (np.abs(r_trial) < absr)
            c = np.where(better, trial, c)
            r = np.where(better, r_trial, r)
            done |= better
            if np.all(done):
                break
            lam = np.where(done, lam, 0.5 * lam)
        if not np.all(done):
            stuck = ~done & ~converged
            return c, r, iterations, converged, inv_jac_max, stuck
        converged = converged | (np.abs(r) <= tol)
    return c, r, iterations, converged, inv_jac_max, np.zeros_like(converged)


def inviscid_field(
    spec: ProblemSpec, tgrid: TimeGrid, xgrid: SpatialGrid, tol: float = 1e-10
) -> DecouplingField:
    """Zero-noise decoupling field: u(s, x) = Y at s for the shot started at (s, x)."""
    if spec.d != 1 or spec.k != 1:
        raise ValueError("the inviscid field requires d = 1, k = 1")
    if abs(tgrid.t0 - spec.t0) > 1e-12 or abs(tgrid.T - spec.T) > 1e-12:
        raise ValueError("time grid does not span the problem horizon")
    progs = spec.scalar_programs()
    t_nodes = tgrid.nodes
    x_nodes = xgrid.nodes
    n_t, n_x = tgrid.n_nodes, xgrid.n_nodes
    u = np.empty((n_t, n_x))
    u[-1] = spec.terminal(x_nodes[:, None])[:, 0]
    for i in range(n_t - 2, -1, -1):
        c, r, _iters, converged, _cond, stuck = _newton_shoot_scalar_batch(
            progs, t_nodes, i, x_nodes, tol
        )
        if np.any(stuck) or not np.all(converged):
            bad = np.flatnonzero(stuck | ~converged)
            c = _repair_failed_nodes(spec, t_nodes, i, x_nodes, c, bad, tol)
        u[i] = c
    du = np.gradient(u, xgrid.dx, axis=1)
    return DecouplingField(epsilon=0.0, tgrid=tgrid, xgrid=xgrid, u=u, du_dx=du)


def _repair_failed_nodes(spec, t_nodes, start_index, x_nodes, c, bad_nodes, tol):
    c = c.copy()
    for j in bad_nodes:
        sub_spec = _restarted(spec, float(t_nodes[start_index]), np.array([x_nodes[j]]))
        n_sub = len(t_nodes) - 1 - start_index
        try:
            root, res, _it, _cond = _shoot_with_homotopy(sub_spec, TimeGrid(sub_spec.t0, sub_spec.T, n_sub), tol)
        except ShootingError as exc:
            raise ShootingError(
                f"inviscid field shoot failed at node (t={t_nodes[start_index]:g}, x={x_nodes[j]:g}): {exc}"
            ) from exc
        del res
        c[j] = root[0]
    return c


def _restarted(spec, t_start, x_start):
    return ProblemSpec(
        d=spec.d, k=spec.k, t0=t_start, T=spec.T, x0=x_start,
        epsilons=spec.epsilons, f=spec.f, g=spec.g, sigma=spec.sigma, h=spec.h,
    )


# ---------------------------------------------------------------------------
# root multiplicity diagnostic


@dataclass
class UniquenessProbe:
    roots: list = field(default_factory=list)
    condition_estimate: float = 0.0

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)


def verify_uniqueness_probe(
    spec: ProblemSpec, c_grid, tgrid: TimeGrid | None = None, tol: float = 1e-8
) -> UniquenessProbe:
    """Run Newton from every candidate initial value and cluster the roots found.

    Beyond the contraction horizon several roots may exist; they are all
    reported, never silently resolved.
    """
    if tgrid is None:
        tgrid = TimeGrid(spec.t0, spec.T, 200)
    t_nodes = tgrid.nodes
    roots = []
    worst_cond = 0.0
    for c0 in c_grid:
        c0 = np.atleast_1d(np.asarray(c0, dtype=np.float64))
        c, res, _it, cond, ok = _newton_general(spec, t_nodes, 0, spec.x0, c0, tol)
        if ok:
            worst_cond = max(worst_cond, cond)
            roots.append(c)
    clustered: list = []
    for c in sorted(roots, key=lambda v: tuple(v)):
        if not clustered or np.linalg.norm(c - clustered[-1]) > 1e-5 * max(1.0, np.linalg.norm(c)):
            clustered.append(c)
    return UniquenessProbe(roots=clustered, condition_estimate=worst_cond)
