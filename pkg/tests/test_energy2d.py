import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vkplate.energy2d import (COMPRESSIBLE, INCOMPRESSIBLE, Mode, PlateState, bending_strain, energy,
                              energy_gradient, stretching_strain)
from vkplate.minimize import gradient_check
from vkplate.prestrain import Domain, preset
from vkplate.quadform import Material
from vkplate.tensorfield import GridSpec, ScalarField, VectorField2, integrate

G9 = GridSpec.unit(9)
M10 = Material(1.0, 0.0)


def state(grid, w=None, v=None):
    w = VectorField2.zeros(grid) if w is None else VectorField2.from_function(grid, w)
    v = ScalarField.zeros(grid) if v is None else ScalarField.from_function(grid, v)
    return PlateState(w, v)


def test_mode_parsing():
    assert Mode.parse("penalized:1000") == Mode("penalized", 1000.0)
    assert Mode.parse("compressible") == COMPRESSIBLE
    assert str(Mode("penalized", 10)) == "penalized(10)"
    with pytest.raises(ValueError):
        Mode.parse("elastic")
    with pytest.raises(ValueError):
        Mode("penalized", -1)


def test_stretching_examples():
    assert not stretching_strain(state(G9), preset("zero")).values.any()
    s = state(G9, w=lambda x, y: (x, y))
    np.testing.assert_allclose(stretching_strain(s, preset("swell(1)")).values, 0, atol=1e-13)
    S = stretching_strain(state(G9, v=lambda x, y: x), preset("zero")).values
    np.testing.assert_allclose(S[0, 0], 0.5, atol=1e-13)
    np.testing.assert_allclose(S[1, 1], 0, atol=1e-13)
    np.testing.assert_allclose(S[0, 1], 0, atol=1e-13)


def test_bending_examples():
    assert not bending_strain(state(G9), preset("zero")).values.any()
    B = bending_strain(state(G9, v=lambda x, y: -0.5 * x**2), preset("uniform-bend(1)")).values
    np.testing.assert_allclose(B[0, 0], 0, atol=1e-11)
    np.testing.assert_allclose(B[1, 1], 1, atol=1e-11)
    B = bending_strain(state(G9, v=lambda x, y: 0.5 * (x**2 + y**2)), preset("zero")).values
    np.testing.assert_allclose(B[0, 0], 1, atol=1e-11)
    np.testing.assert_allclose(B[0, 1], 0, atol=1e-11)


def test_energy_examples():
    e = energy(state(G9), preset("zero"), M10)
    assert (e.stretching, e.bending, e.total) == (0, 0, 0)
    e = energy(state(G9), preset("uniform-bend(1)"), M10, INCOMPRESSIBLE)
    assert e.stretching == 0 and e.bending == pytest.approx(0.5, rel=1e-14)
    e = energy(state(G9), preset("uniform-bend(1)"), M10, COMPRESSIBLE)
    assert e.bending == pytest.approx(1 / 6, rel=1e-14)
    assert e.total == e.stretching + e.bending


def test_domain_mismatch():
    other = GridSpec(0, 2, 0, 1, 9, 9)
    with pytest.raises(ValueError):
        energy(state(other), preset("zero"), M10)


def test_zero_gradient_at_zero():
    gw, gv = energy_gradient(state(G9), preset("zero"), M10)
    assert not gw.values.any() and not gv.values.any()


@pytest.mark.parametrize("mode", [INCOMPRESSIBLE, COMPRESSIBLE, Mode("penalized", 1e3)])
@pytest.mark.parametrize("name", ["incompatible-stretch", "saddle-bend(0.7)"])
def test_gradient_matches_finite_differences(mode, name):
    s = PlateState.random(G9, 0.3, seed=11)
    assert gradient_check(preset(name), Material(1.3, 2.0), mode, s) <= 1e-6


@given(st.integers(0, 10**6), st.floats(0.2, 5), st.floats(0, 20))
def test_energy_nonnegative_and_ordered(seed, mu, lam):
    s = PlateState.random(GridSpec.unit(7), 0.5, seed)
    p = preset("incompatible-stretch")
    m = Material(mu, lam)
    inc = energy(s, p, m, INCOMPRESSIBLE).total
    comp = energy(s, p, m, COMPRESSIBLE).total
    pen = [energy(s, p, m, Mode("penalized", k)).total for k in (0.0, 1.0, 10.0, 1e3)]
    tol = 1e-12 * max(1.0, inc)
    assert comp >= 0
    assert pen[0] == pytest.approx(comp, rel=1e-12, abs=1e-14)
    assert all(a <= b + tol for a, b in zip(pen, pen[1:]))
    assert pen[-1] <= inc + tol
    assert energy(s, p, Material(mu, lam + 7), INCOMPRESSIBLE).total == pytest.approx(inc, rel=1e-13)


@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_translation_invariance(seed, a, b, c):
    g = GridSpec.unit(7)
    s = PlateState.random(g, 0.4, seed)
    shifted = PlateState(VectorField2(g, s.w.values + np.array([a, b])[:, None, None]),
                         ScalarField(g, s.v.values + c))
    p = preset("swell(0.2)")
    assert energy(shifted, p, M10).total == pytest.approx(energy(s, p, M10).total, rel=1e-10, abs=1e-13)


def test_compressible_gap_formula():
    # closed-form gap integrated: E_inc - E_comp = 1/2 int g(S) + 1/24 int g(B)
    g = GridSpec.unit(9)
    s = PlateState.random(g, 0.3, seed=5)
    p = preset("incompatible-stretch")
    m = Material(0.8, 50.0)
    S = stretching_strain(s, p).trace().values
    B = bending_strain(s, p).trace().values
    coef = 4 * m.mu**2 / (2 * m.mu + m.lam)
    gap = 0.5 * integrate(ScalarField(g, coef * S**2)) + integrate(ScalarField(g, coef * B**2)) / 24
    diff = energy(s, p, m, INCOMPRESSIBLE).total - energy(s, p, m, COMPRESSIBLE).total
    assert diff == pytest.approx(gap, rel=1e-10)


def test_non_unit_domain():
    d = Domain(-1.0, 1.0, 0.0, 0.5)
    from vkplate.prestrain import prestrain_from_dict

    p = prestrain_from_dict({"preset": "uniform-bend", "params": {"c": 1.0},
                             "domain": {"x_min": -1, "x_max": 1, "y_min": 0, "y_max": 0.5}})
    e = energy(PlateState.zeros(d.grid(9)), p, M10)
    assert e.bending == pytest.approx(0.5 * 1.0, rel=1e-14)  # 12/24 times area 1
