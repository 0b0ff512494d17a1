"""Simulation of the coupled pair through its decoupling field.

Once the field u is known, the forward equation closes over itself:

    dX = f(s, X, u(s,X)) ds + sqrt(eps) sigma(s, X, u(s,X)) dB,

and the backward components are read off pathwise as Y = u(s, X) and
Z = sqrt(eps) u_x(s, X) sigma(s, X, Y).  simulate() runs Euler-Maruyama on
per-path streams; bsde_residual() measures how well the sampled triple
satisfies the discrete backward equation, which is the honest error metric
(the Y identity holds by construction).

picard_field() re-derives the field without assuming it: starting from the
terminal data it repeats linearized backward solves with coefficients
frozen at the previous iterate, logging the sup-distance between sweeps.
On short horizons this contracts to the same fixed point the nonlinear
solver finds; on long horizons the log stops decreasing and the iteration
reports failure instead of a field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CflViolationError, NonFiniteFieldError, PicardDivergenceError, SimulationExitError
from .grids import SpatialGrid, TimeGrid
from .pde import DecouplingField, field_at
from .problem import ProblemSpec
from .rng import RandomSource

_CHUNK_PATHS = 16384
MAX_EXIT_FRACTION = 1e-3


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    epsilon: float
    tgrid: TimeGrid
    X: np.ndarray = field(repr=False)  # (n_paths, n_nodes)
    Y: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)  # (n_paths, n_steps)
    n_exited: int = 0
    master_seed: int = 0
    stream_start: int = 0

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class EffectiveSDE:
    """Forward coefficients with the backward component substituted in."""

    spec: ProblemSpec
    fld: DecouplingField

    def drift(self, s: float, x: float) -> float:
        u, _ = field_at(self.fld, s, x)
        return float(self.spec.drift(s, np.array([[x]]), np.array([[u]]))[0, 0])

    def dispersion(self, s: float, x: float) -> float:
        u, _ = field_at(self.fld, s, x)
        return float(self.spec.dispersion(s, np.array([[x]]), np.array([[u]]))[0, 0, 0])


def simulate(
    spec: ProblemSpec,
    fld: DecouplingField,
    eps: float,
    n_paths: int,
    src: RandomSource,
    stream_start: int = 0,
    max_exit_fraction: float = MAX_EXIT_FRACTION,
    workers: int = 1,
) -> TrajectoryEnsemble:
    """Euler-Maruyama ensemble on per-path streams; path i uses stream_start + i.

    Chunks of paths may run on several workers; every chunk writes its own
    slice and the only cross-chunk reduction is an integer count, so the
    result is bit-identical for any worker count.
    """
    if spec.d != 1 or spec.k != 1:
        raise ValueError("simulation requires d = 1, k = 1 (field-driven)")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if abs(fld.epsilon - eps) > 1e-15:
        raise ValueError(f"field was solved for eps={fld.epsilon}, asked to simulate eps={eps}")
    progs = spec.scalar_programs()
    tgrid = fld.tgrid
    n_steps = tgrid.n_steps
    x0 = float(spec.x0[0])

    X = np.empty((n_paths, n_steps + 1))
    Y = np.empty_like(X)
    Z = np.empty_like(X)
    increments = np.empty((n_paths, n_steps))

    def run_chunk(bounds):
        lo, hi = bounds
        dB = src.brownian_block(stream_start + lo, hi - lo, tgrid, d=1)[:, :, 0]
        Xc, exited = kernels.em_forward(
            x0, tgrid.nodes, eps, fld.u, fld.xgrid.x_min, fld.xgrid.dx, progs.f, progs.sigma, dB
        )
        Yc, Zc = kernels.fill_yz(
            Xc, tgrid.nodes, eps, fld.u, fld.du_dx, fld.xgrid.x_min, fld.xgrid.dx, progs.sigma
        )
        X[lo:hi] = Xc
        Y[lo:hi] = Yc
        Z[lo:hi] = Zc
        increments[lo:hi] = dB
        return int(np.count_nonzero(exited))

    chunks = [(lo, min(lo + _CHUNK_PATHS, n_paths)) for lo in range(0, n_paths, _CHUNK_PATHS)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            n_exited = sum(pool.map(run_chunk, chunks))
    else:
        n_exited = sum(run_chunk(c) for c in chunks)
    if n_exited > max_exit_fraction * n_paths:
        raise SimulationExitError(n_exited, n_paths)
    return TrajectoryEnsemble(
        epsilon=float(eps),
        tgrid=tgrid,
        X=X,
        Y=Y,
        Z=Z,
        increments=increments,
        n_exited=n_exited,
        master_seed=src.master_seed,
        stream_start=stream_start,
    )


def bsde_residual(ens: TrajectoryEnsemble, spec: ProblemSpec) -> float:
    """Mean over paths of the sup-node defect in the discrete backward equation.

    The defect at node m compares Y_m against the terminal value plus the
    remaining generator quadrature minus the remaining stochastic integral.
    """
    if ens.n_paths < 1:
        raise ValueError("ensemble is empty")
    progs = spec.scalar_programs()
    from .program import eval_program

    t_nodes = ens.tgrid.nodes
    dt = ens.tgrid.dt
    n_steps = ens.tgrid.n_steps
    gvals = np.empty((ens.n_paths, n_steps))
    for m in range(n_steps):
        gvals[:, m] = eval_program(
            progs.g, [float(t_nodes[m]), ens.X[:, m], ens.Y[:, m], ens.Z[:, m]]
        )
    zdb = ens.Z[:, :-1] * ens.increments
    # tail sums over [m, T): reverse cumulative sums, padded with zero at m = n
    tail_g = np.zeros((ens.n_paths, n_steps + 1))
    tail_g[:, :-1] = np.cumsum(gvals[:, ::-1] * dt, axis=1)[:, ::-1]
    tail_z = np.zeros((ens.n_paths, n_steps + 1))
    tail_z[:, :-1] = np.cumsum(zdb[:, ::-1], axis=1)[:, ::-1]
    h_T = spec.terminal(ens.X[:, -1][:, None])[:, 0]
    defect = ens.Y - (h_T[:, None] + tail_g - tail_z)
    return float(np.mean(np.max(np.abs(defect), axis=1)))


def picard_field(
    spec: ProblemSpec,
    eps: float,
    tgrid: TimeGrid,
    xgrid: SpatialGrid,
    max_iter: int = 40,
    tol: float = 1e-6,
):
    """Field-level Picard iteration; returns (field, iterations, contraction_log)."""
    if spec.d != 1 or spec.k != 1:
        raise ValueError("picard iteration requires d = 1, k = 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    progs = spec.scalar_programs()
    x_nodes = xgrid.nodes
    terminal = spec.terminal(x_nodes[:, None])[:, 0]
    u_prev = np.broadcast_to(terminal, (tgrid.n_nodes, xgrid.n_nodes)).copy()
    du_prev = np.broadcast_to(np.gradient(terminal, xgrid.dx), u_prev.shape).copy()
    contraction_log: list[float] = []
    for iteration in range(1, max_iter + 1):
        try:
            u_new, du_new = _linearized_sweep(
                spec, eps, tgrid, xgrid, terminal, u_prev, du_prev, progs
            )
        except (CflViolationError, NonFiniteFieldError) as exc:
            raise PicardDivergenceError(
                f"linearized solve failed at iteration {iteration} "
                f"(horizon too long for the contraction regime): {exc}",
                contraction_log,
            ) from exc
        gap = float(np.max(np.abs(u_new - u_prev)))
        contraction_log.append(gap)
        u_prev, du_prev = u_new, du_new
        if gap < tol:
            fld = DecouplingField(epsilon=float(eps), tgrid=tgrid, xgrid=xgrid, u=u_new, du_dx=du_new)
            return fld, iteration, contraction_log
        if len(contraction_log) >= 4 and all(
            contraction_log[-i] >= contraction_log[-i - 1] for i in (1, 2, 3)
        ):
            raise PicardDivergenceError(
                "contraction log stopped decreasing for 3 consecutive iterations "
                "(horizon too long for the contraction regime)",
                contraction_log,
            )
    raise PicardDivergenceError(
        f"tolerance {tol:g} not reached within {max_iter} iterations", contraction_log
    )


def _linearized_sweep(spec, eps, tgrid, xgrid, terminal, coeff_u, coeff_du, progs):
    u, du, status, bad, info = kernels.pde_sweep_linearized(
        tgrid.nodes, xgrid.nodes, float(eps), terminal, coeff_u, coeff_du,
        progs.f, progs.g, progs.sigma,
    )
    if status == 1:
        raise CflViolationError(bad, tgrid.nodes[bad], info, tgrid.dt, xgrid.dx)
    if status == 2:
        raise NonFiniteFieldError(bad, tgrid.nodes[bad])
    return u, du
