import numpy as np
import pytest

from fbsdelab.grids import Path, SpatialGrid, TimeGrid, l2_norm_sq, sup_norm_sq


def test_time_grid_basics():
    grid = TimeGrid(0.0, 1.0, 4)
    assert grid.dt == 0.25
    np.testing.assert_allclose(grid.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert np.all(np.diff(grid.nodes) > 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)


def test_spatial_grid_basics():
    grid = SpatialGrid(-2.0, 4.0, 6)
    assert grid.dx == 1.0
    assert grid.n_nodes == 7
    assert grid.contains_with_margin(1.0)
    assert not grid.contains_with_margin(-1.5)
    mask = grid.interior_mask(0.2)
    np.testing.assert_array_equal(mask, [False, False, True, True, True, False, False])
    with pytest.raises(ValueError):
        SpatialGrid(1.0, 1.0, 4)


def test_path_validation():
    grid = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        Path(grid, np.zeros(2))
    with pytest.raises(ValueError):
        Path(grid, np.array([0.0, np.inf, 1.0]))


def test_sup_norm_identical_paths():
    grid = TimeGrid(0.0, 1.0, 8)
    a = Path(grid, np.linspace(0, 1, 9))
    assert sup_norm_sq(a, a) == 0.0


def test_sup_norm_constant_offset():
    grid = TimeGrid(0.0, 1.0, 5)
    a = Path(grid, np.zeros(6))
    b = Path(grid, np.full(6, 3.0))
    assert sup_norm_sq(a, b) == 9.0


def test_sup_norm_single_node_difference():
    grid = TimeGrid(0.0, 1.0, 5)
    vals = np.zeros(6)
    vals[3] = 2.0
    assert sup_norm_sq(Path(grid, np.zeros(6)), Path(grid, vals)) == 4.0


def test_l2_norm_identical():
    grid = TimeGrid(0.0, 1.0, 7)
    a = Path(grid, np.arange(8.0))
    assert l2_norm_sq(a, a) == 0.0


def test_l2_norm_constant_difference_exact():
    # constant difference 1 on [0,1]: left-endpoint sum is exact for any n
    for n in (1, 2, 5, 64):
        grid = TimeGrid(0.0, 1.0, n)
        a = Path(grid, np.zeros(n + 1))
        b = Path(grid, np.ones(n + 1))
        assert l2_norm_sq(a, b) == pytest.approx(1.0, rel=1e-15)


def _left_endpoint_riemann(diff, dt):
    # independent quadrature oracle: plain loop over the left endpoints
    total = 0.0
    for m in range(len(diff) - 1):
        total += float(diff[m]) ** 2 * dt
    return total


def test_l2_norm_parity_difference():
    # difference = node index parity: oracle value first, then the closed form
    grid = TimeGrid(0.0, 2.0, 1000)
    parity = (np.arange(grid.n_nodes) % 2).astype(float)
    oracle = _left_endpoint_riemann(parity, grid.dt)
    got = l2_norm_sq(Path(grid, parity), Path(grid, np.zeros(grid.n_nodes)))
    assert got == pytest.approx(oracle, rel=1e-14)
    assert got == pytest.approx(0.5 * (grid.T - grid.t0), rel=1e-12)


def test_norm_properties_random_paths():
    rng = np.random.default_rng(0)
    grid = TimeGrid(0.0, 1.5, 20)
    for _ in range(25):
        a = Path(grid, rng.normal(size=(21, 2)))
        b = Path(grid, rng.normal(size=(21, 2)))
        s_ab, s_ba = sup_norm_sq(a, b), sup_norm_sq(b, a)
        l_ab, l_ba = l2_norm_sq(a, b), l2_norm_sq(b, a)
        assert s_ab == s_ba and l_ab == l_ba
        assert s_ab >= 0 and l_ab >= 0
        assert l_ab <= (grid.T - grid.t0) * s_ab + 1e-15


def test_norm_zero_iff_equal():
    grid = TimeGrid(0.0, 1.0, 3)
    a = Path(grid, np.array([0.0, 1.0, 2.0, 3.0]))
    b = Path(grid, np.array([0.0, 1.0, 2.0, 3.0]))
    assert sup_norm_sq(a, b) == 0.0
    c = Path(grid, np.array([0.0, 1.0, 2.0, 3.0 + 1e-12]))
    assert sup_norm_sq(a, c) > 0.0


def test_grid_mismatch_rejected():
    a = Path(TimeGrid(0.0, 1.0, 4), np.zeros(5))
    b = Path(TimeGrid(0.0, 2.0, 4), np.zeros(5))
    with pytest.raises(ValueError):
        sup_norm_sq(a, b)
    c = Path(TimeGrid(0.0, 1.0, 4), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        l2_norm_sq(a, c)
