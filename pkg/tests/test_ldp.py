import math

import numpy as np
import pytest

from fbsdelab.errors import SingularDispersionError
from fbsdelab.grids import Path, SpatialGrid, TimeGrid
from fbsdelab.ldp import ControlledODE, action_of_path, minimize_action, predict_tube_exponent, rate_for_Y
from fbsdelab.limit import inviscid_field, shoot
from fbsdelab.problem import ProblemSpec


from functools import lru_cache


@lru_cache(maxsize=None)
def schilder_ode(n_steps=200):
    spec = ProblemSpec.from_text(
        d=1, k=1, t0=0.0, T=1.0, x0=[0.0], epsilons=[0.2, 0.1, 0.05],
        f="0", g="0", sigma="1", h="x1",
    )
    tg = TimeGrid(0.0, 1.0, n_steps)
    xg = SpatialGrid(-4.0, 4.0, 200)
    return ControlledODE(spec, inviscid_field(spec, tg, xg, tol=1e-12))


@lru_cache(maxsize=None)
def burgers_ode(n_steps=250):
    spec = ProblemSpec.from_text(
        d=1, k=1, t0=0.0, T=0.5, x0=[1.0], epsilons=[0.2, 0.1, 0.05, 0.025],
        f="y1", g="0", sigma="1", h="0.5*x1",
    )
    tg = TimeGrid(0.0, 0.5, n_steps)
    xg = SpatialGrid(-2.0, 4.0, 300)
    return ControlledODE(spec, inviscid_field(spec, tg, xg, tol=1e-12))


def test_straight_line_energy():
    ode = schilder_ode()
    line = Path(ode.tgrid, np.linspace(0.0, 1.0, ode.tgrid.n_nodes))
    assert action_of_path(line, ode) == pytest.approx(0.5, rel=1e-12)
    assert predict_tube_exponent(line, ode) == pytest.approx(0.5, rel=1e-12)


def test_two_segment_path_energy():
    # speed 2 for the first half, then rest: 1/2 * int_0^0.5 4 = 1.0
    ode = schilder_ode()
    s = ode.tgrid.nodes
    values = np.where(s <= 0.5, 2.0 * s, 1.0)
    assert action_of_path(Path(ode.tgrid, values), ode) == pytest.approx(1.0, rel=1e-12)


def test_limit_path_has_zero_action():
    ode = burgers_ode()
    sol = shoot(ode.spec, ode.tgrid, tol=1e-12)
    assert action_of_path(sol.X, ode) <= 1e-6
    ode0 = schilder_ode()
    flat = Path(ode0.tgrid, np.zeros(ode0.tgrid.n_nodes))
    assert action_of_path(flat, ode0) == 0.0


def test_deviating_path_has_positive_action():
    ode = schilder_ode()
    dt = ode.tgrid.dt
    bump = np.zeros(ode.tgrid.n_nodes)
    bump[ode.tgrid.n_nodes // 2 :] = 20.0 * dt  # jump of 10 grid scales
    assert action_of_path(Path(ode.tgrid, bump), ode) > 0.0


def test_path_must_start_at_origin():
    ode = schilder_ode()
    with pytest.raises(ValueError):
        action_of_path(Path(ode.tgrid, np.ones(ode.tgrid.n_nodes)), ode)


def test_singular_dispersion_rejected():
    spec = ProblemSpec.from_text(
        d=1, k=1, t0=0.0, T=1.0, x0=[0.0], epsilons=[0.1],
        f="0", g="0", sigma="t", h="x1",  # vanishes at t = 0
    )
    fld = inviscid_field(spec, TimeGrid(0.0, 1.0, 50), SpatialGrid(-2, 2, 50), tol=1e-10)
    ode = ControlledODE(spec, fld)
    line = Path(ode.tgrid, np.linspace(0.0, 1.0, 51))
    with pytest.raises(SingularDispersionError):
        action_of_path(line, ode)


@pytest.mark.parametrize("offset", [0.5, 1.0, 2.0])
def test_schilder_minimum_action_quadratic(offset):
    ode = schilder_ode()
    result = minimize_action(ode, offset, tol=1e-3)
    assert result.converged
    assert result.value == pytest.approx(offset**2 / 2.0, rel=0.02)
    line = np.linspace(0.0, offset, ode.tgrid.n_nodes)
    assert np.max(np.abs(result.path.values - line)) <= 1e-2
    assert result.constraint_violation <= 1e-3


def test_zero_rate_at_limit_endpoint():
    ode = burgers_ode()
    sol = shoot(ode.spec, ode.tgrid, tol=1e-12)
    endpoint = float(sol.X.values[-1, 0])
    result = minimize_action(ode, endpoint, tol=1e-3)
    assert result.converged
    assert result.value <= 1e-5
    assert float(np.max(np.abs(result.control.values))) <= 2e-2


def test_reparametrised_path_costs_more():
    ode = schilder_ode()
    s = ode.tgrid.nodes
    straight = Path(ode.tgrid, s.copy())
    bent = Path(ode.tgrid, np.where(s <= 0.5, 2.0 * s, 1.0))
    assert action_of_path(bent, ode) > action_of_path(straight, ode)


def test_contraction_inequality():
    ode = burgers_ode()
    fld = ode.fld
    rng = np.random.default_rng(0)
    s = ode.tgrid.nodes
    for _ in range(3):
        wiggle = rng.uniform(-0.3, 0.3)
        g = Path(ode.tgrid, 1.0 + (0.5 + wiggle) * (s - s[0]))
        i_val = action_of_path(g, ode)
        psi = float(np.interp(g.values[-1], fld.xgrid.nodes, fld.u[-1]))
        j_val = rate_for_Y(psi, ode, fld, tol=1e-3).value
        assert j_val <= i_val + 1e-2


def test_rate_for_y_unique_preimage():
    # u(T, x) = 0.5 x is strictly monotone: J(psi) = I at x = 2 psi
    ode = burgers_ode()
    for x_target in (1.8, 2.3):
        psi = 0.5 * x_target
        j_res = rate_for_Y(psi, ode, ode.fld, tol=5e-4)
        i_res = minimize_action(ode, x_target, tol=1e-3)
        assert j_res.converged and i_res.converged
        assert j_res.value == pytest.approx(i_res.value, rel=0.05, abs=1e-6)


def test_rate_for_y_zero_at_image_of_limit():
    ode = burgers_ode()
    sol = shoot(ode.spec, ode.tgrid, tol=1e-12)
    psi = 0.5 * float(sol.X.values[-1, 0])
    result = rate_for_Y(psi, ode, ode.fld, tol=1e-3)
    assert result.converged
    assert result.value <= 1e-5


def test_rate_for_y_infeasible_sentinel():
    ode = burgers_ode()
    result = rate_for_Y(99.0, ode, ode.fld, tol=1e-3)
    assert math.isinf(result.value)
    assert not result.converged


def test_minimizer_control_is_recoverable():
    # action_of_path applied to the minimiser reproduces its reported value
    ode = schilder_ode()
    result = minimize_action(ode, 1.0, tol=1e-3)
    assert action_of_path(result.path, ode) == pytest.approx(result.value, rel=1e-6, abs=1e-12)
