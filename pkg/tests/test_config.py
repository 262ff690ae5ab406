import json

import numpy as np
import pytest

from nonlocal_euler.config import (ConfigError, Expression, ExpressionError, TableFunction,
                                   parse_config)

BASE = {
    "grid": {"a": -10, "b": 10, "n": 256},
    "kernel": {"family": "gaussian", "width": 0.5},
    "initial_data": {"rho0": "0.2 + gaussian(0, 1)", "u0": "-0.5*tanh(x)"},
}


def _cfg(experiment="simulate", **over):
    d = json.loads(json.dumps(BASE))
    d["experiment"] = experiment
    for k, v in over.items():
        if v is None:
            d.pop(k, None)
        else:
            d[k] = v
    return json.dumps(d)


def _path_of(text, experiment=None):
    with pytest.raises(ConfigError) as info:
        parse_config(text, experiment)
    return info.value.path


def test_minimal_config_gets_defaults():
    cfg = parse_config(_cfg("picard"))
    assert cfg.params == {"T_iter": 1.0, "max_iters": 20, "tol_fixed_point": 1e-8}
    assert cfg.scheme.cfl == 0.4 and cfg.seed == 0 and cfg.output_dir is None
    s = cfg.initial_state()
    assert s.rho.shape == (256,)


def test_experiment_from_command():
    cfg = parse_config(_cfg(), "simulate")
    assert cfg.experiment == "simulate"
    d = json.loads(_cfg())
    del d["experiment"]
    assert parse_config(json.dumps(d), "simulate").experiment == "simulate"
    with pytest.raises(ConfigError):
        parse_config(json.dumps(d))


def test_command_mismatch():
    assert _path_of(_cfg("simulate"), "picard") == "experiment"


def test_snapshot_interval_generates_output_times():
    cfg = parse_config(_cfg({"simulate": {"snapshot_interval": 0.25}}, scheme={"t_end": 1.0}))
    np.testing.assert_allclose(cfg.scheme.output_times, [0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize("experiment, path", [
    ({"epsilon_sweep": {"eps_list": [0.4, 0.4]}}, "experiment.epsilon_sweep.eps_list"),
    ({"epsilon_sweep": {"eps_list": [0.4, -0.1]}}, "experiment.epsilon_sweep.eps_list[1]"),
    ({"epsilon_sweep": {}}, "experiment.epsilon_sweep.eps_list"),
    ({"convergence": {"grid_list": [64, 128]}}, "experiment.convergence.grid_list"),
    ({"convergence": {"grid_list": [64, 96, 192]}}, "experiment.convergence.grid_list"),
    ({"picard": {"max_iters": 2.5}}, "experiment.picard.max_iters"),
    ({"picard": {"speed": 1}}, "experiment.picard.speed"),
    ("ghost", "experiment"),
])
def test_experiment_errors(experiment, path):
    assert _path_of(_cfg(experiment)) == path


@pytest.mark.parametrize("key, value, path", [
    ("grid", {"a": 0, "b": 1, "n": 64, "m": 3}, "grid.m"),
    ("grid", {"a": 1, "b": 0, "n": 64}, "grid"),
    ("kernel", {"family": "gaussian", "width": -1}, "kernel.width"),
    ("kernel", {"family": "gaussian", "width": 1, "shape": 2}, "kernel.shape"),
    ("kernel", {"family": "cauchy", "width": 1}, "kernel"),
    ("scheme", {"cfl": 0.4, "dt": 0.1}, "scheme.dt"),
    ("scheme", {"system": "viscous"}, "scheme.system"),
    ("scheme", {"cfl": 2.0}, "scheme"),
    ("initial_data", {"rho0": 1, "u0": "x**2"}, "initial_data.u0"),
    ("initial_data", {"rho0": 1}, "initial_data.u0"),
    ("initial_data", {"random": {"modes": 3, "phase": 1}}, "initial_data.random.phase"),
    ("seed", 1.5, "seed"),
    ("colour", "red", "colour"),
])
def test_field_errors(key, value, path):
    assert _path_of(_cfg(**{key: value})) == path


def test_kernel_required_except_classify():
    assert _path_of(_cfg(kernel=None)) == "kernel"
    assert parse_config(_cfg("classify", kernel=None)).kernel is None


def test_invalid_json():
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config("{\"grid\": ")


def test_bump_sugar_builds_asymmetric_table():
    cfg = parse_config(_cfg(kernel={"family": "table", "allow_asymmetric": True,
                                    "bump": {"left": 0.5, "right": 1.5, "samples": 401}}))
    assert cfg.kernel.family == "table"
    assert _path_of(_cfg(kernel={"family": "gaussian", "width": 1,
                                 "bump": {"left": 0.5, "right": 1.5}})) == "kernel.bump"


def test_table_and_constant_fields():
    cfg = parse_config(_cfg(initial_data={"rho0": 1, "u0": {"table": [[-10, 0], [0, 1], [10, 0]]}}))
    s = cfg.initial_state()
    assert np.all(s.rho == 1.0)
    np.testing.assert_allclose(s.u, 1 - np.abs(cfg.grid.x) / 10)


def test_random_data_uses_seed():
    a = parse_config(_cfg(initial_data={"random": {"modes": 3}}, seed=5)).initial_state()
    b = parse_config(_cfg(initial_data={"random": {"modes": 3}}, seed=5)).initial_state()
    c = parse_config(_cfg(initial_data={"random": {"modes": 3}}, seed=6)).initial_state()
    np.testing.assert_array_equal(a.u, b.u)
    assert not np.array_equal(a.u, c.u)


def test_with_grid():
    cfg = parse_config(_cfg()).with_grid(512)
    assert cfg.grid.n == 512 and cfg.initial_state().u.shape == (512,)


@pytest.mark.parametrize("source, x, expected", [
    ("1 + 2*x", 3.0, 7.0),
    ("-x/2", 4.0, -2.0),
    ("sin(pi*x)", 0.5, 1.0),
    ("exp(0)*cos(0) + tanh(0)", 1.0, 1.0),
    ("gaussian(1, 2)", 1.0, 1.0),
    ("gaussian(0, 1)", 1.0, np.exp(-0.5)),
])
def test_expression_values(source, x, expected):
    assert Expression(source)(np.array([x]))[0] == pytest.approx(expected)


def test_expression_constant_broadcasts():
    assert Expression("0.25")(np.zeros(5)).shape == (5,)


@pytest.mark.parametrize("source, position", [
    ("x + y", 5),
    ("x ** 2", 1),
    ("sin(x, 1)", 1),
    ("1 + __import__('os')", 5),
    ("gaussian(0, w=1)", 1),
])
def test_expression_rejects_with_position(source, position):
    with pytest.raises(ExpressionError) as info:
        Expression(source)
    assert info.value.position == position


def test_expression_syntax_error():
    with pytest.raises(ExpressionError, match="syntax"):
        Expression("1 +")


def test_table_function_requires_increasing():
    with pytest.raises(ValueError):
        TableFunction([(0, 1), (0, 2)])
    f = TableFunction([(0, 0), (1, 1)], period=(0, 2))
    assert f(2.5) == pytest.approx(0.5)
