import time

import numpy as np
import pytest

from mbsa.demo import REFERENCE_GD_STALL, demo_models, df, f, gradient_descent, read_gd_csv, run_demo, write_gd_csv
from mbsa.solver import CONVERGED, DIVERGED, fd_jacobian


def bisect(fun, a, b, tol=1e-14):
    fa = fun(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        if np.sign(fun(m)) == np.sign(fa):
            a, fa = m, fun(m)
        else:
            b = m
    return 0.5 * (a + b)


ROOT = bisect(f, -1.0, 0.0)


def test_root_oracle_unique():
    # f' = 15 cos + 8 changes sign, so check there is exactly one sign change on a fine grid
    x = np.linspace(-2, 2, 400001)
    assert np.count_nonzero(np.diff(np.sign(f(x)))) == 1
    assert ROOT == pytest.approx(-0.40352852, abs=1e-8)


def test_mbsa_reaches_root():
    t0 = time.perf_counter()
    tr = run_demo(0.5, 200)
    assert time.perf_counter() - t0 < 1.0
    assert tr.status == CONVERGED
    x = tr.final_g[0]
    assert abs(f(x)) < 1e-8
    assert abs(x - ROOT) < 1e-3
    assert len(tr) == 146


def test_mbsa_first_iterate_is_simplified_inverse():
    tr = run_demo(0.5, 1)
    assert tr.g[0][0] == 0.0 / 6.0


def test_gradient_descent_stalls_at_local_minimum():
    gd = gradient_descent(0.0, 1e-3)
    x = gd.x[-1]
    assert gd.converged
    assert abs(f(x)) > 0.5
    assert abs(2 * f(x) * df(x)) < 1e-8  # stationary point of f^2 that is not a root
    # grid scan oracle: nearest stationary point of f^2 with f != 0
    grid = np.linspace(-0.6, 0.6, 1200001)
    d = f(grid) * df(grid)
    idx = np.flatnonzero(np.diff(np.sign(d)))
    stat = grid[idx]
    stat = stat[np.abs(f(stat)) > 0.5]
    assert np.min(np.abs(stat - x)) < 1e-5
    assert x == pytest.approx(-0.14222, abs=1e-5)
    assert f(x) == pytest.approx(1.01632, abs=1e-5)


def test_reference_stall_point_is_not_consistent():
    # the listed pair does not satisfy f(x) = y; kept only for the record
    x, y = REFERENCE_GD_STALL
    assert abs(f(x) - y) > 1.0


def test_beta_above_bound_diverges():
    tr = run_demo(2.5, 200)
    assert tr.status == DIVERGED
    assert len(tr) == 18


def test_fd_jacobian_matches_analytic():
    m = demo_models()
    for x0 in (-0.7, -0.4035, 0.0, 0.33):
        J = fd_jacobian(m.full_forward, np.array([x0]), None)
        assert J[0, 0] == pytest.approx(df(x0), rel=1e-6)
        Js = fd_jacobian(m.simplified_forward, np.array([x0]), None)
        assert Js[0, 0] == pytest.approx(6.0, rel=1e-6)


def test_gd_csv_round_trip(tmp_path):
    gd = gradient_descent()
    p = tmp_path / "gd.csv"
    write_gd_csv(gd, p)
    back = read_gd_csv(p)
    np.testing.assert_array_equal(back.x, gd.x)
    np.testing.assert_array_equal(back.fx, gd.fx)
