import math
from functools import lru_cache

import numpy as np
import pytest

from fbsdelab.grids import Path, SpatialGrid, TimeGrid
from fbsdelab.limit import shoot
from fbsdelab.montecarlo import (
    ExponentFit,
    RareEventReport,
    RareEventRow,
    convergence_sweep,
    exponent_fit,
    rare_event_report,
    tube_probability,
    wilson_interval,
)
from fbsdelab.pde import solve_viscous
from fbsdelab.problem import ProblemSpec
from fbsdelab.rng import RandomSource


@lru_cache(maxsize=None)
def schilder_setup(n_steps=100):
    spec = ProblemSpec.from_text(
        d=1, k=1, t0=0.0, T=1.0, x0=[0.0], epsilons=[0.2, 0.1, 0.05],
        f="0", g="0", sigma="1", h="x1",
    )
    tg = TimeGrid(0.0, 1.0, n_steps)
    xg = SpatialGrid(-6.0, 6.0, 600)
    fields = tuple(solve_viscous(spec, e, tg, xg) for e in spec.epsilons)
    limit = shoot(spec, tg, tol=1e-12)
    return spec, fields, limit


def test_schilder_sweep_scales_exactly_linearly():
    # with common random numbers X^eps - X = sqrt(eps) * B path by path, so
    # the three norms are exactly proportional to eps and the slope is 1
    spec, fields, limit = schilder_setup()
    report = convergence_sweep(spec, fields, limit, n_paths=512, src=RandomSource(42))
    sup_x = report.column("e_sup_x_sq")
    ratios = sup_x[:-1] / sup_x[1:]
    np.testing.assert_allclose(ratios, 2.0, rtol=1e-9)
    assert report.slopes["e_sup_x_sq"] == pytest.approx(1.0, abs=1e-9)
    assert report.slopes["e_sup_y_sq"] == pytest.approx(1.0, abs=1e-3)
    assert report.slopes["e_int_z_sq"] == pytest.approx(1.0, abs=1e-6)
    # int |Z|^2 is exactly eps * tau for the affine field
    np.testing.assert_allclose(report.column("e_int_z_sq"), [0.2, 0.1, 0.05], rtol=1e-9)


def test_sup_brownian_norm_against_direct_oracle():
    # independent oracle: E sup |B|^2 on [0,1] by direct simulation with
    # numpy's own generator, compared to the sweep's norm at eps divided by eps
    spec, fields, limit = schilder_setup()
    report = convergence_sweep(spec, fields, limit, n_paths=4096, src=RandomSource(7))
    rng = np.random.default_rng(12345)
    n, m = 4096, 100
    incs = rng.normal(0.0, math.sqrt(1.0 / m), size=(n, m))
    paths = np.concatenate([np.zeros((n, 1)), np.cumsum(incs, axis=1)], axis=1)
    oracle = float(np.mean(np.max(paths**2, axis=1)))
    se = float(np.std(np.max(paths**2, axis=1)) / math.sqrt(n))
    measured = report.rows[0].e_sup_x_sq / report.rows[0].eps
    assert abs(measured - oracle) < 6.0 * se


def test_sweep_monotone_and_vanishing():
    spec, fields, limit = schilder_setup()
    report = convergence_sweep(spec, fields, limit, n_paths=256, src=RandomSource(3))
    for name in ("e_sup_x_sq", "e_sup_y_sq", "e_int_z_sq"):
        col = report.column(name)
        assert np.all(np.diff(col) < 0)  # descending eps order, decreasing norms
        assert col[-1] <= 0.3 * col[0]


def test_standard_error_scaling():
    spec, fields, limit = schilder_setup()
    small = convergence_sweep(spec, fields, limit, n_paths=1024, src=RandomSource(9))
    large = convergence_sweep(spec, fields, limit, n_paths=4096, src=RandomSource(9))
    ratio = small.rows[0].se_sup_x_sq / large.rows[0].se_sup_x_sq
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_sweep_determinism_across_workers():
    spec, fields, limit = schilder_setup()
    a = convergence_sweep(spec, fields, limit, n_paths=512, src=RandomSource(5), workers=1)
    b = convergence_sweep(spec, fields, limit, n_paths=512, src=RandomSource(5), workers=3)
    assert a.rows == b.rows
    assert a.slopes == b.slopes


def test_sweep_requires_matching_fields():
    spec, fields, limit = schilder_setup()
    with pytest.raises(ValueError):
        convergence_sweep(spec, fields[:2], limit, n_paths=8, src=RandomSource(0))


def test_tube_probability_trivial_cases():
    spec, fields, limit = schilder_setup()
    fld = fields[0]
    g = limit.X
    flat = Path(fld.tgrid, np.zeros(fld.tgrid.n_nodes))
    del g
    p_wide, (lo, hi) = tube_probability(spec, fld, 0.2, flat, 10.0, 2000, RandomSource(1))
    assert p_wide == 1.0
    assert lo <= p_wide <= hi
    p_zero, (lo0, hi0) = tube_probability(spec, fld, 0.2, flat, 0.0, 2000, RandomSource(1))
    assert p_zero == 0.0
    assert lo0 == 0.0 and hi0 > 0.0  # one-sided interval


def test_tube_probability_worker_determinism():
    spec, fields, _ = schilder_setup()
    fld = fields[1]
    flat = Path(fld.tgrid, np.zeros(fld.tgrid.n_nodes))
    p1, i1 = tube_probability(spec, fld, 0.1, flat, 0.5, 40000, RandomSource(77), workers=1)
    p3, i3 = tube_probability(spec, fld, 0.1, flat, 0.5, 40000, RandomSource(77), workers=3)
    assert p1 == p3 and i1 == i3
    assert 0.0 < p1 < 1.0


def test_wilson_interval_contains_estimate():
    for successes, n in ((0, 100), (1, 100), (50, 100), (100, 100)):
        lo, hi = wilson_interval(successes, n)
        assert 0.0 <= lo <= successes / n <= hi <= 1.0
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_exponent_fit_linear_extrapolation():
    rows = tuple(
        RareEventRow(
            eps=e, p_hat=math.exp(-(0.5 / e + 0.3)), wilson_low=0, wilson_high=1,
            minus_eps_log_p=0.5 + 0.3 * e, n_paths=1000, usable=True,
        )
        for e in (0.2, 0.1, 0.05)
    )
    report = RareEventReport(rows=rows, predicted_exponent=0.5, delta=0.25)
    fit = exponent_fit(report)
    assert isinstance(fit, ExponentFit)
    assert fit.extrapolated == pytest.approx(0.5, abs=1e-12)
    assert fit.slope == pytest.approx(0.3, abs=1e-12)
    assert fit.agreement_ratio == pytest.approx(1.0, abs=1e-12)
    # -log p = 0.5/eps + 0.3: the pairwise quotient recovers 0.5 exactly
    assert fit.pairwise_exponent == pytest.approx(0.5, abs=1e-12)
    assert not fit.zero_rate_exact


def test_exponent_fit_zero_rate_flagged_exact():
    rows = tuple(
        RareEventRow(eps=e, p_hat=1.0, wilson_low=0, wilson_high=1,
                     minus_eps_log_p=0.0, n_paths=10, usable=True)
        for e in (0.2, 0.1, 0.05)
    )
    report = RareEventReport(rows=rows, predicted_exponent=0.0, delta=1.0)
    fit = exponent_fit(report)
    assert fit.extrapolated == pytest.approx(0.0, abs=1e-12)
    assert fit.agreement_ratio == 0.0
    assert fit.zero_rate_exact


def test_exponent_fit_rejects_unusable_rows():
    rows = tuple(
        RareEventRow(eps=e, p_hat=0.0, wilson_low=0, wilson_high=0.01,
                     minus_eps_log_p=math.inf, n_paths=10, usable=False)
        for e in (0.2, 0.1, 0.05)
    )
    report = RareEventReport(rows=rows, predicted_exponent=0.5, delta=0.1)
    with pytest.raises(ValueError):
        exponent_fit(report)


def test_rare_event_report_small_run():
    # wide tube around the unit-offset line: the decay exponent is the
    # infimum of the action over the tube, attained near the line to the
    # offset 1 - delta, i.e. (1 - delta)^2 / 2 = 0.125 for delta = 0.5
    spec, fields, limit = schilder_setup()
    line = Path(fields[0].tgrid, np.linspace(0.0, 1.0, fields[0].tgrid.n_nodes))
    tube_infimum = (1.0 - 0.5) ** 2 / 2.0
    report = rare_event_report(
        spec, fields, line, delta=0.5, n_paths=20000,
        src=RandomSource(2024), predicted_exponent=tube_infimum,
    )
    assert [row.eps for row in report.rows] == [0.2, 0.1, 0.05]
    assert all(row.usable for row in report.rows)
    # -eps log p decreases towards the tube infimum from above as eps does
    vals = [row.minus_eps_log_p for row in report.rows]
    assert vals[0] > vals[1] > vals[2] > tube_infimum
    fit = exponent_fit(report)
    assert 0.8 < fit.agreement_ratio < 1.7  # finite-eps bias at small n
