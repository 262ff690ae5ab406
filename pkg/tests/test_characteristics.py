import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from nonlocal_euler.characteristics import (consistency_check, integrate_characteristic,
                                            integrate_characteristics, riccati_blowup_time,
                                            riccati_closed_form, write_traces_csv)
from nonlocal_euler.convolution import discretize_kernel
from nonlocal_euler.grid import Grid1D, State, sample_initial_data
from nonlocal_euler.solver import SchemeConfig, Trajectory, run


@pytest.mark.parametrize("d0, rho, expected", [
    (-2.0, 0.0, 0.5),
    (-0.3, 0.0, 10 / 3),
    (-1.0, 1.0, math.log(2.0)),
    (0.0, 1.0, math.inf),
    (0.5, 0.0, math.inf),
])
def test_blowup_time(d0, rho, expected):
    assert riccati_blowup_time(d0, rho) == pytest.approx(expected)


def test_negative_density_rejected():
    with pytest.raises(ValueError):
        riccati_blowup_time(-1.0, -0.1)
    with pytest.raises(ValueError):
        riccati_closed_form(-1.0, -0.1, 0.5)


@pytest.mark.parametrize("rho", [0.0, 0.5, 3.0])
def test_closed_form_below_constant_rho_bound(rho):
    # d <= d0 / (1 + d0 t) whenever the bound is finite
    d0 = -0.8
    t = np.linspace(0, 0.9 * riccati_blowup_time(d0, rho), 50)
    d = riccati_closed_form(d0, rho, t)
    ok = 1 + d0 * t > 0
    assert np.all(d[ok] <= d0 / (1 + d0 * t[ok]) + 1e-12)


@pytest.mark.parametrize("rho", [1e-300, 5e-269, 1e-12])
def test_closed_form_tiny_density_matches_pressureless_law(rho):
    assert riccati_closed_form(1.0, rho, 1.0) == pytest.approx(0.5, rel=1e-9)
    assert riccati_closed_form(-0.5, rho, 1.0) == pytest.approx(-1.0, rel=1e-9)


def test_closed_form_past_blowup():
    assert riccati_closed_form(-1.0, 0.0, 2.0) == -math.inf
    assert riccati_closed_form(0.0, 1.0, 5.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(d0=st.floats(-5, 5), rho=st.floats(0, 3))
def test_closed_form_solves_ode(d0, rho):
    tc = riccati_blowup_time(d0, rho)
    horizon = min(3.0, 0.5 * tc)
    sol = solve_ivp(lambda t, d: -d * (d - rho), (0, horizon), [d0], rtol=1e-11, atol=1e-12,
                    dense_output=True)
    t = np.linspace(0, horizon, 7)
    np.testing.assert_allclose(riccati_closed_form(d0, rho, t), sol.sol(t)[0],
                               rtol=1e-8, atol=1e-9)


def _frozen_trajectory(grid, rho, u, times):
    traj = Trajectory(grid=grid, config=SchemeConfig(t_end=times[-1]))
    traj.snapshots = [State(rho, u, t) for t in times]
    return traj


def test_constant_state_traces_are_straight_lines():
    g = Grid1D(0.0, 10.0, 64)
    traj = _frozen_trajectory(g, np.full(64, 0.7), np.full(64, 0.4), np.linspace(0, 1, 11))
    tr = integrate_characteristic(traj, 9.0, 0.05)
    np.testing.assert_allclose(tr.X[-1], (9.0 + 0.4) % 10.0, atol=1e-12)
    np.testing.assert_allclose(tr.d, 0.7, atol=1e-12)
    np.testing.assert_allclose(tr.rho_along, 0.7, atol=1e-12)
    assert tr.terminated == "reached_t_end" and tr.t[-1] == 1.0


def test_trace_hits_riccati_blowup():
    # u_x = -a at a stagnation point x = pi; d follows the constant-rho Riccati law
    g = Grid1D(0.0, 2 * np.pi, 512)
    a, rho = 1.0, 0.4
    u = a * np.sin(g.x)
    traj = _frozen_trajectory(g, np.full(g.n, rho), u, np.linspace(0, 3, 301))
    tr = integrate_characteristic(traj, math.pi, 1e-3)
    d0 = tr.d[0]
    assert d0 == pytest.approx(rho - a, abs=1e-4)
    assert tr.terminated == "d_blowup"
    assert tr.t_c_est == pytest.approx(riccati_blowup_time(d0, rho), abs=2e-3)


def test_launch_point_outside_domain():
    g = Grid1D(0.0, 1.0, 16)
    traj = _frozen_trajectory(g, np.ones(16), np.zeros(16), [0.0, 0.1])
    with pytest.raises(ValueError):
        integrate_characteristics(traj, [1.5], 0.01)


def test_coarse_snapshots_rejected():
    g = Grid1D(0.0, 1.0, 16)
    traj = _frozen_trajectory(g, np.ones(16), np.zeros(16), [0.0, 1.0])
    with pytest.raises(ValueError, match="spacing"):
        integrate_characteristics(traj, [0.5], 0.01)


def test_consistency_on_smooth_run(gauss):
    g = Grid1D(-3 * np.pi, 3 * np.pi, 512)
    k = discretize_kernel(gauss, g)
    s = sample_initial_data(g, lambda x: np.exp(-x ** 2 / 2) + 0.2, lambda x: 0.1 * np.sin(x))
    times = tuple(0.04 * np.arange(1, 26))
    traj = run(s, SchemeConfig(t_end=1.0, output_times=times), k, g, diagnostics=False)
    traces = integrate_characteristics(traj, g.x[::32], 0.01)
    rep = consistency_check(traj, traces, tol=0.02 * 1.3)
    assert rep.passed and rep.compared == 16 * 26
    assert rep.relative < 0.01


def test_traces_csv(tmp_path):
    g = Grid1D(0.0, 10.0, 64)
    traj = _frozen_trajectory(g, np.full(64, 0.7), np.full(64, 0.4), np.linspace(0, 1, 3))
    traces = integrate_characteristics(traj, [1.0, 2.0], 0.25)
    path = tmp_path / "traces.csv"
    write_traces_csv(path, traces)
    lines = path.read_text().splitlines()
    assert lines[0] == "alpha,t,X,d,rho_along"
    assert len(lines) == 1 + 2 * 5
