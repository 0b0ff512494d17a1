"""Ensemble experiments: convergence sweeps and rare-event tube probabilities.

The sweep measures, per noise level, the three norms that the small-noise
theory says vanish together: E sup |X^eps - X|^2, E sup |Y^eps - Y|^2 and
E int |Z^eps|^2 against the deterministic limit, fitting log-log slopes in
eps.  Common random numbers drive every noise level (path i always uses
stream i), which removes most of the sampling noise from the comparison
across eps.

Tube probabilities estimate P(sup_m |X^eps_m - g_m| < delta) by streaming
path chunks, never holding an ensemble in memory; Wilson intervals are
reported because the probabilities are tiny at small eps.  The extrapolated
exponent -eps log p as eps -> 0 is compared against the action of the
reference path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SimulationExitError
from .fbsde import MAX_EXIT_FRACTION, TrajectoryEnsemble, simulate
from .grids import Path
from .limit import LimitSolution
from .pde import DecouplingField
from .problem import ProblemSpec
from .rng import RandomSource

_Z95 = 1.959963984540054  # two-sided 95% normal quantile
_CHUNK_PATHS = 16384


@dataclass(frozen=True)
class SweepRow:
    eps: float
    e_sup_x_sq: float
    e_sup_y_sq: float
    e_int_z_sq: float
    n_paths: int
    se_sup_x_sq: float
    se_sup_y_sq: float
    se_int_z_sq: float


@dataclass(frozen=True, eq=False)
class SweepReport:
    rows: tuple
    slopes: dict  # column name -> fitted log-log slope vs eps

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])


@dataclass(frozen=True)
class RareEventRow:
    eps: float
    p_hat: float
    wilson_low: float
    wilson_high: float
    minus_eps_log_p: float
    n_paths: int
    usable: bool


@dataclass(frozen=True, eq=False)
class RareEventReport:
    rows: tuple
    predicted_exponent: float
    delta: float


@dataclass(frozen=True)
class ExponentFit:
    extrapolated: float  # -eps log p continued linearly to eps = 0
    slope: float  # linear coefficient of the fit in eps
    agreement_ratio: float  # extrapolated / predicted
    pairwise_exponent: float  # difference quotient of -log p vs 1/eps, two smallest eps
    zero_rate_exact: bool = False


def ensemble_norms(ens: TrajectoryEnsemble, limit: LimitSolution):
    """Per-path squared norms against the limit path, shape (n_paths,) each."""
    if ens.tgrid != limit.grid:
        raise ValueError("ensemble and limit solution live on different grids")
    lim_x = limit.X.values[:, 0]
    lim_y = limit.Y.values[:, 0]
    dx = ens.X - lim_x[None, :]
    dy = ens.Y - lim_y[None, :]
    sup_x = np.max(dx * dx, axis=1)
    sup_y = np.max(dy * dy, axis=1)
    int_z = np.sum(ens.Z[:, :-1] ** 2, axis=1) * ens.tgrid.dt
    return sup_x, sup_y, int_z


def convergence_sweep(
    spec: ProblemSpec,
    fields,
    limit: LimitSolution,
    n_paths: int,
    src: RandomSource,
    workers: int = 1,
) -> SweepReport:
    """Simulate every eps of the problem with common random numbers and report norms."""
    field_by_eps = {float(f.epsilon): f for f in fields}
    missing = [e for e in spec.epsilons if float(e) not in field_by_eps]
    if missing:
        raise ValueError(f"no decoupling field supplied for eps={missing}")
    rows = []
    for eps in spec.epsilons:  # descending by construction
        fld = field_by_eps[float(eps)]
        if fld.tgrid != limit.grid:
            raise ValueError("all fields must share the limit solution's time grid")
        ens = simulate(spec, fld, eps, n_paths, src, stream_start=0, workers=workers)
        sup_x, sup_y, int_z = ensemble_norms(ens, limit)
        n = float(n_paths)
        rows.append(
            SweepRow(
                eps=float(eps),
                e_sup_x_sq=float(np.mean(sup_x)),
                e_sup_y_sq=float(np.mean(sup_y)),
                e_int_z_sq=float(np.mean(int_z)),
                n_paths=n_paths,
                se_sup_x_sq=float(np.std(sup_x, ddof=1) / math.sqrt(n)),
                se_sup_y_sq=float(np.std(sup_y, ddof=1) / math.sqrt(n)),
                se_int_z_sq=float(np.std(int_z, ddof=1) / math.sqrt(n)),
            )
        )
    log_eps = np.log([row.eps for row in rows])
    slopes = {}
    for name in ("e_sup_x_sq", "e_sup_y_sq", "e_int_z_sq"):
        values = np.array([getattr(row, name) for row in rows])
        if np.all(values > 0.0) and len(values) >= 2:
            slopes[name] = float(np.polyfit(log_eps, np.log(values), 1)[0])
        else:
            slopes[name] = math.nan
    return SweepReport(rows=tuple(rows), slopes=slopes)


def wilson_interval(successes: int, n: int, z: float = _Z95):
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one trial")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return low, high


def tube_probability(
    spec: ProblemSpec,
    fld: DecouplingField,
    eps: float,
    g: Path,
    delta: float,
    n_paths: int,
    src: RandomSource,
    workers: int = 1,
):
    """Fraction of paths staying within sup-node distance delta of g.

    Streams path chunks on per-path streams; the chunk partition is fixed,
    so the count (an integer sum) is identical for any worker count.
    """
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    if g.grid != fld.tgrid:
        raise ValueError("reference path must live on the field's time grid")
    if abs(fld.epsilon - eps) > 1e-15:
        raise ValueError("field epsilon does not match the requested eps")
    progs = spec.scalar_programs()
    ref = g.values[:, 0] if g.values.ndim > 1 else g.values
    x0 = float(spec.x0[0])
    chunks = [(lo, min(lo + _CHUNK_PATHS, n_paths)) for lo in range(0, n_paths, _CHUNK_PATHS)]

    def run_chunk(bounds):
        lo, hi = bounds
        dB = src.brownian_block(lo, hi - lo, fld.tgrid, d=1)[:, :, 0]
        X, exited = kernels.em_forward(
            x0, fld.tgrid.nodes, eps, fld.u, fld.xgrid.x_min, fld.xgrid.dx,
            progs.f, progs.sigma, dB,
        )
        inside = np.max(np.abs(X - ref[None, :]), axis=1) < delta
        return int(np.count_nonzero(inside)), int(np.count_nonzero(exited))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]
    successes = sum(r[0] for r in results)
    exited = sum(r[1] for r in results)
    if exited > MAX_EXIT_FRACTION * n_paths:
        raise SimulationExitError(exited, n_paths)
    p_hat = successes / n_paths
    return p_hat, wilson_interval(successes, n_paths)


def rare_event_report(
    spec: ProblemSpec,
    fields,
    g: Path,
    delta: float,
    n_paths: int,
    src: RandomSource,
    predicted_exponent: float,
    workers: int = 1,
) -> RareEventReport:
    """Tube probabilities for every eps against one reference path.

    The same Brownian streams drive every eps (common random numbers), so
    each path chunk is generated once and reused across the whole ladder;
    the counts are identical to running tube_probability per eps.
    """
    fields = sorted(fields, key=lambda f: -f.epsilon)
    if not fields:
        return RareEventReport(rows=(), predicted_exponent=predicted_exponent, delta=delta)
    tgrid = fields[0].tgrid
    for fld in fields:
        if fld.tgrid != tgrid:
            raise ValueError("all fields must share one time grid")
    if g.grid != tgrid:
        raise ValueError("reference path must live on the fields' time grid")
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    progs = spec.scalar_programs()
    ref = g.values[:, 0] if g.values.ndim > 1 else g.values
    x0 = float(spec.x0[0])
    chunks = [(lo, min(lo + _CHUNK_PATHS, n_paths)) for lo in range(0, n_paths, _CHUNK_PATHS)]

    def run_chunk(bounds):
        lo, hi = bounds
        dB = src.brownian_block(lo, hi - lo, tgrid, d=1)[:, :, 0]
        out = []
        for fld in fields:
            X, exited = kernels.em_forward(
                x0, tgrid.nodes, fld.epsilon, fld.u, fld.xgrid.x_min, fld.xgrid.dx,
                progs.f, progs.sigma, dB,
            )
            inside = np.max(np.abs(X - ref[None, :]), axis=1) < delta
            out.append((int(np.count_nonzero(inside)), int(np.count_nonzero(exited))))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_chunk = list(pool.map(run_chunk, chunks))
    else:
        per_chunk = [run_chunk(c) for c in chunks]

    rows = []
    for index, fld in enumerate(fields):
        eps = float(fld.epsilon)
        successes = sum(chunk[index][0] for chunk in per_chunk)
        exited = sum(chunk[index][1] for chunk in per_chunk)
        if exited > MAX_EXIT_FRACTION * n_paths:
            raise SimulationExitError(exited, n_paths)
        p_hat = successes / n_paths
        low, high = wilson_interval(successes, n_paths)
        usable = p_hat > 0.0
        rows.append(
            RareEventRow(
                eps=eps,
                p_hat=p_hat,
                wilson_low=low,
                wilson_high=high,
                minus_eps_log_p=(-eps * math.log(p_hat) if usable else math.inf),
                n_paths=n_paths,
                usable=usable,
            )
        )
    return RareEventReport(rows=tuple(rows), predicted_exponent=predicted_exponent, delta=delta)


def exponent_fit(report: RareEventReport) -> ExponentFit:
    """Extrapolate -eps log p linearly in eps to eps -> 0 and compare.

    The pairwise exponent (the difference quotient of -log p against 1/eps
    over the two smallest usable eps) is reported alongside: it cancels any
    eps-independent prefactor of the probability exactly, which makes it the
    sharper estimate whenever the eps ladder is short.
    """
    usable = [row for row in report.rows if row.usable]
    if len(usable) < 3:
        raise ValueError(f"need at least 3 usable rows, have {len(usable)}")
    eps = np.array([row.eps for row in usable])
    y = np.array([row.minus_eps_log_p for row in usable])
    slope, intercept = np.polyfit(eps, y, 1)
    order = np.argsort(eps)
    e0, e1 = float(eps[order[0]]), float(eps[order[1]])  # two smallest
    p0, p1 = usable[order[0]].p_hat, usable[order[1]].p_hat
    pairwise = (math.log(p1) - math.log(p0)) / (1.0 / e0 - 1.0 / e1)
    predicted = report.predicted_exponent
    zero_rate = abs(predicted) < 1e-12 and abs(intercept) < 1e-9
    if zero_rate:
        ratio = 0.0  # flagged exact agreement for zero-rate events
    elif abs(predicted) < 1e-12:
        ratio = math.inf
    else:
        ratio = float(intercept) / predicted
    return ExponentFit(
        extrapolated=float(intercept),
        slope=float(slope),
        agreement_ratio=float(ratio),
        pairwise_exponent=float(pairwise),
        zero_rate_exact=zero_rate,
    )
