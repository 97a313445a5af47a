import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vkplate.prestrain import (Domain, PrestrainError, eval_prestrain, growth_h_max, growth_tensor,
                               load_prestrain_config, parse_expr, parse_matrix, preset)

I3 = np.eye(3)


def test_eval_presets():
    e, k = eval_prestrain(preset("zero"), (0.3, 0.7))
    assert not e.any() and not k.any()
    e, k = eval_prestrain(preset("uniform-bend", c=1.0), (0.2, 0.9))
    np.testing.assert_array_equal(k, I3)
    assert not e.any()
    e, k = eval_prestrain(preset("swell(0.1)"), (0.5, 0.5))
    np.testing.assert_allclose(e, 0.1 * I3)
    e, _ = eval_prestrain(preset("incompatible-stretch"), (0.1, 0.5))
    assert e[0, 0] == pytest.approx(0.25)
    _, k = eval_prestrain(preset("saddle-bend(2)"), (0.1, 0.5))
    np.testing.assert_allclose(k, np.diag([2, -2, 0]))
    with pytest.raises(PrestrainError):
        eval_prestrain(preset("zero"), (1.5, 0.5))


def test_growth_tensor_examples():
    g = growth_tensor(preset("zero"), 0.3, (0.5, 0.5), 0.1)
    for M in (g.a_h, g.a_h_inv, g.g_h):
        np.testing.assert_array_equal(M, I3)
    g = growth_tensor(preset("swell(1)"), 0.1, (0.5, 0.5), 0.02)
    np.testing.assert_allclose(g.a_h, 1.01 * I3, rtol=1e-15)
    g = growth_tensor(preset("uniform-bend(1)"), 0.1, (0.5, 0.5), 0.05)
    np.testing.assert_allclose(g.a_h, 1.005 * I3, rtol=1e-15)
    with pytest.raises(PrestrainError):
        growth_tensor(preset("zero"), 0.0, (0.5, 0.5), 0.0)


@given(st.floats(1e-3, 0.25), st.floats(0, 1), st.floats(0, 1), st.floats(-0.5, 0.5),
       st.sampled_from(["swell(0.7)", "uniform-bend(1)", "saddle-bend(1)", "incompatible-stretch"]))
def test_growth_tensor_properties(h, x1, x2, t, name):
    spec = preset(name)
    g = growth_tensor(spec, h, (x1, x2), h * t)
    np.testing.assert_allclose(g.a_h @ g.a_h_inv, I3, atol=1e-12)
    np.testing.assert_allclose(g.g_h, g.g_h.T, atol=1e-15)
    assert np.linalg.eigvalsh(g.g_h).min() > 0
    e, k = eval_prestrain(spec, (x1, x2))
    bound = h**2 * np.linalg.norm(e, 2) + h**2 / 2 * np.linalg.norm(k, 2)
    assert np.linalg.norm(g.a_h - I3, 2) <= bound + 1e-15


def test_config_examples():
    assert load_prestrain_config('{"preset": "zero"}').name == "zero"
    spec = load_prestrain_config('{"eps_g": "0", "kappa_g": "diag(sin(pi*x1), 0, 0)"}')
    _, k = eval_prestrain(spec, (0.5, 0.3))
    assert k[0, 0] == pytest.approx(1.0)
    with pytest.raises(PrestrainError, match="kappa_g"):
        load_prestrain_config('{"kappa_g": "diag(sin(pi*x1, 0, 0)"}')


def test_config_errors():
    with pytest.raises(PrestrainError, match="line"):
        load_prestrain_config('{"preset": "zero",\n "oops"}')
    with pytest.raises(PrestrainError, match="unknown"):
        load_prestrain_config('{"preset": "zero", "colour": 1}')
    with pytest.raises(PrestrainError):
        load_prestrain_config('{"preset": "swell", "params": {"beta": 1}}')
    with pytest.raises(PrestrainError):
        load_prestrain_config(json.dumps({"eps_g": "diag(1/x1, 0, 0)"}))  # infinite at a corner


def test_custom_domain_and_full_matrix():
    spec = load_prestrain_config(json.dumps({
        "eps_g": [["x1", "0", "0"], ["0", "x2^2", "0"], ["0", "0", "1"]],
        "domain": {"x_min": -1, "x_max": 1, "y_min": 0, "y_max": 2}}))
    assert spec.domain == Domain(-1, 1, 0, 2)
    e, _ = eval_prestrain(spec, (-0.5, 1.5))
    np.testing.assert_allclose(np.diag(e), [-0.5, 2.25, 1.0])


@pytest.mark.parametrize("bad", ["__import__('os')", "x1.real", "open(1)", "x3", "lambda: 1", "sin"])
def test_expression_whitelist(bad):
    with pytest.raises(PrestrainError):
        parse_expr(bad)


def test_parse_matrix_forms():
    assert parse_matrix("0").is_zero_matrix
    assert parse_matrix("diag(1, 2, 3)")[2, 2] == 3
    with pytest.raises(PrestrainError):
        parse_matrix([["1", "2"]])


def test_growth_h_max_positive():
    assert growth_h_max(preset("uniform-bend(1)")) > 0.25
