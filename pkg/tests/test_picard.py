import numpy as np
import pytest

from nonlocal_euler.convolution import discretize_kernel
from nonlocal_euler.grid import Grid1D, State, sample_initial_data
from nonlocal_euler.picard import (NonContraction, PicardCFLError, PicardConfig, build_mesh,
                                   frozen_guess, picard_solve, picard_step, sup_difference)
from nonlocal_euler.solver import SchemeConfig, run


@pytest.fixture
def setup(gauss):
    g = Grid1D(-10.0, 10.0, 256)
    k = discretize_kernel(gauss, g)
    s = sample_initial_data(g, lambda x: np.exp(-x ** 2 / 2),
                            lambda x: 0.3 * np.sin(np.pi * x / 10))
    return g, k, s


@pytest.mark.parametrize("kwargs", [{"T_iter": 0.0}, {"T_iter": 1.0, "max_iters": 1},
                                    {"T_iter": 1.0, "tol_fixed_point": 0.0}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        PicardConfig(**kwargs)


def test_constant_data_is_immediate_fixed_point(gauss):
    g = Grid1D(0.0, 10.0, 128)
    k = discretize_kernel(gauss, g)
    s = State(np.full(g.n, 0.8), np.full(g.n, 0.3))
    res = picard_solve(s, k, g, PicardConfig(T_iter=1.0))
    assert res.iters == 1 and res.final_delta < 1e-14 and res.ratios == []


def test_first_iterate_error_is_quadratic_in_horizon(setup):
    g, k, s = setup
    errs = []
    for T in (0.2, 0.1):
        cfg = PicardConfig(T_iter=T)
        mesh = build_mesh(s, g, k.beta, cfg)
        r1, u1 = picard_step(*frozen_guess(s, mesh), s, k, g, mesh)
        direct = run(s, SchemeConfig(t_end=T), k, g, diagnostics=False).final()
        errs.append(max(np.max(np.abs(r1[-1] - direct.rho)), np.max(np.abs(u1[-1] - direct.u))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_contraction_and_fixed_point(setup):
    g, k, s = setup
    cfg = PicardConfig(T_iter=1.0)
    res = picard_solve(s, k, g, cfg)
    assert res.converged and res.halvings == 0
    assert all(r <= 0.6 for r in res.ratios)
    assert all(b < a for a, b in zip(res.deltas, res.deltas[1:]))
    assert res.density_bound_ok and res.max_principle_ok
    # feeding the fixed point back changes it by less than the tolerance
    mesh = build_mesh(s, g, k.beta, cfg)
    r2, u2 = picard_step(res.rho, res.u, s, k, g, mesh)
    assert sup_difference(r2, u2, res.rho, res.u) < cfg.tol_fixed_point


def test_agrees_with_direct_solver(setup):
    g, k, s = setup
    res = picard_solve(s, k, g, PicardConfig(T_iter=1.0))
    direct = run(s, SchemeConfig(t_end=1.0), k, g, diagnostics=False).final()
    diff = max(np.max(np.abs(res.rho[-1] - direct.rho)), np.max(np.abs(res.u[-1] - direct.u)))
    assert diff < 5 * g.dx ** 2


def test_ratios_shrink_with_horizon(setup):
    g, k, s = setup
    worst = [max(picard_solve(s, k, g, PicardConfig(T_iter=T)).ratios) for T in (1.0, 0.5)]
    assert worst[1] <= worst[0]


def test_non_contraction_reported(setup):
    g, k, s = setup
    cfg = PicardConfig(T_iter=1.0, max_iters=2, tol_fixed_point=1e-300)
    with pytest.raises(NonContraction) as info:
        picard_solve(s, k, g, cfg, auto_halve=False)
    assert info.value.T_iter == 1.0


def test_auto_halving_gives_up_after_six(setup):
    g, k, s = setup
    cfg = PicardConfig(T_iter=1.0, max_iters=2, tol_fixed_point=1e-300)
    with pytest.raises(NonContraction) as info:
        picard_solve(s, k, g, cfg)
    assert info.value.T_iter == pytest.approx(1.0 / 2 ** 6)


def test_auto_halving_recovers(setup):
    g, k, s = setup
    # four iterations cannot reach 1e-8 at T=2 but can at a shorter horizon
    res = picard_solve(s, k, g, PicardConfig(T_iter=2.0, max_iters=4))
    assert res.halvings >= 1 and res.T_iter_used == pytest.approx(2.0 / 2 ** res.halvings)


def test_cfl_violation_on_frozen_fields(setup):
    g, k, s = setup
    mesh = build_mesh(s, g, k.beta, PicardConfig(T_iter=0.5))
    rho, u = frozen_guess(s, mesh)
    with pytest.raises(PicardCFLError):
        picard_step(rho, 3.0 * u, s, k, g, mesh)
    with pytest.raises(ValueError):
        picard_step(rho[:-1], u[:-1], s, k, g, mesh)


def test_report_fields(setup):
    g, k, s = setup
    rep = picard_solve(s, k, g, PicardConfig(T_iter=0.5)).report(1e-7)
    assert {"iters", "ratios", "final_delta", "T_iter_used", "agreement_with_direct"} <= set(rep)
