import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpmin.errors import ConstraintViolation, InvalidArgument
from vpmin.radial import (
    RadialDensity, RadialGrid, in_constraint_set, load_profile, lp_norm, make_grid,
    mass, psi, psi_exponent, require_constraint_set, rescale, save_profile, split_at,
    tail_mass, uniform_ball,
)
from vpmin.reduced import ModelParams


def test_uniform_grid_layout():
    g = make_grid(1.0, 101, "uniform")
    np.testing.assert_allclose(g.nodes[1:], np.arange(1, 101) / 100, rtol=0, atol=1e-15)
    assert g.nodes[0] == pytest.approx(0.005)
    assert np.all(np.diff(g.nodes) > 0)


def test_log_grid_layout():
    g = make_grid(20.0, 2000, "log")
    assert g.nodes[-1] == 20.0
    assert g.nodes[0] < 1e-4
    ratios = g.nodes[1:] / g.nodes[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)


@pytest.mark.parametrize("kind", ["uniform", "log"])
def test_quadrature_integrates_r2_exactly(kind):
    g = make_grid(1.0, 101, kind)
    assert g.integrate(g.nodes**2) == pytest.approx(1 / 3, rel=1e-10)


def test_bad_grids():
    with pytest.raises(InvalidArgument):
        make_grid(-1.0, 100)
    with pytest.raises(InvalidArgument):
        make_grid(1.0, 5)
    with pytest.raises(InvalidArgument):
        make_grid(1.0, 100, "cubic")
    with pytest.raises(InvalidArgument):
        RadialGrid.from_nodes([0.1, 0.3, 0.2])
    with pytest.raises(InvalidArgument):
        RadialGrid.from_nodes([0.0, 0.3, 0.4])


def test_density_validation(log_grid):
    with pytest.raises(InvalidArgument):
        RadialDensity(log_grid, -np.ones(log_grid.n))
    with pytest.raises(InvalidArgument):
        RadialDensity(log_grid, np.full(log_grid.n, np.nan))
    with pytest.raises(InvalidArgument):
        RadialDensity(log_grid, np.ones(3))


def test_mass_examples():
    g = make_grid(2.0, 2001, "uniform")
    assert mass(uniform_ball(g, 1.0, 1.0)) == pytest.approx(1.0, rel=1e-12)
    assert mass(RadialDensity(g, np.zeros(g.n))) == 0.0
    g = make_grid(60.0, 4000, "log")
    rho = RadialDensity.from_function(g, lambda r: np.exp(-r))
    assert mass(rho) == pytest.approx(8 * math.pi, rel=1e-4)


def test_exponents():
    assert psi_exponent(1.0) == pytest.approx(7 / 5)
    assert psi_exponent(1.5) == pytest.approx(4 / 3)
    for bad in (0.0, 3.5, -1.0):
        with pytest.raises(InvalidArgument):
            psi_exponent(bad)


def test_lp_norm_of_unit_ball():
    g = make_grid(2.0, 2001, "uniform")
    ball = RadialDensity(g, (g.nodes <= 1.0).astype(float))
    assert lp_norm(ball, 2) == pytest.approx(math.sqrt(4 * math.pi / 3), rel=2e-3)
    with pytest.raises(InvalidArgument):
        lp_norm(ball, 0.5)


def test_psi_examples():
    g = make_grid(2.0, 2001, "uniform")
    ball = RadialDensity(g, (g.nodes <= 1.0).astype(float))
    assert psi(ball, 1.5) == pytest.approx(4 * math.pi / 3, rel=3e-3)
    assert psi(ball * 2.0, 1.5) / psi(ball, 1.5) == pytest.approx(2 ** (4 / 3), rel=1e-14)
    g = make_grid(60.0, 4000, "log")
    rho = RadialDensity.from_function(g, lambda r: np.exp(-r))
    assert psi(rho, 0.5) == pytest.approx(8 * math.pi * 8 / 27, rel=1e-4)


def test_constraint_set(log_grid):
    rho = uniform_ball(log_grid, 2.0, 1.0)
    assert in_constraint_set(rho, 1.5, 2.0)
    assert not in_constraint_set(rho, 1.5, 1.0)
    with pytest.raises(ConstraintViolation):
        require_constraint_set(rho, 1.5, 1.0)


def test_rescale_examples(log_grid):
    from vpmin.gravity import epot
    rho = uniform_ball(log_grid, 1.0, 1.0)
    scaled = rescale(rho, 8.0, 2.0)
    assert mass(scaled) == pytest.approx(mass(rho), rel=1e-13)
    assert epot(scaled) == pytest.approx(2 * epot(rho), rel=1e-13)
    same = rescale(rho, 1.0, 1.0)
    np.testing.assert_array_equal(same.values, rho.values)
    np.testing.assert_allclose(same.r, rho.r, rtol=1e-15)
    with pytest.raises(InvalidArgument):
        rescale(rho, 0.0, 1.0)


@given(a=st.floats(0.05, 20), b=st.floats(0.05, 20), mu=st.floats(0.1, 3.4))
def test_rescale_scaling_laws(a, b, mu):
    g = make_grid(5.0, 64, "log")
    rho = RadialDensity.from_function(g, lambda r: np.exp(-r * r))
    s = rescale(rho, a, b)
    assert mass(s) == pytest.approx(a * b**-3 * mass(rho), rel=1e-12)
    p = psi_exponent(mu)
    assert psi(s, mu) == pytest.approx(a**p * b**-3 * psi(rho, mu), rel=1e-12)


def test_split_examples():
    g = make_grid(2.0, 2001, "uniform")
    ball = uniform_ball(g, 1.0, 1.0)
    inner, outer = split_at(ball, 1.0 + 1e-9)
    assert not outer.values.any()
    assert tail_mass(ball, 2.0) == 0.0
    half = 2 ** (-1 / 3)
    assert tail_mass(ball, half) == pytest.approx(0.5, abs=2e-3)
    assert tail_mass(ball, 1e-12) == pytest.approx(mass(ball), rel=1e-15)
    zero = RadialDensity(g, np.zeros(g.n))
    a, b = split_at(zero, 0.5)
    assert not a.values.any() and not b.values.any()
    with pytest.raises(InvalidArgument):
        split_at(ball, 0.0)


@given(r_split=st.floats(1e-3, 12.0))
def test_split_is_additive(r_split):
    g = make_grid(10.0, 200, "log")
    rho = RadialDensity.from_function(g, lambda r: np.exp(-r) * (1 + np.sin(r) ** 2))
    inner, outer = split_at(rho, r_split)
    np.testing.assert_array_equal(inner.values + outer.values, rho.values)
    assert mass(inner) + mass(outer) == pytest.approx(mass(rho), rel=1e-14)
    assert mass(outer) == pytest.approx(tail_mass(rho, r_split), rel=1e-14, abs=1e-300)


def test_profile_round_trip(tmp_path, log_grid):
    rho = RadialDensity.from_function(log_grid, lambda r: np.exp(-r) / 3)
    path = tmp_path / "p.csv"
    save_profile(rho, path)
    assert path.read_text().startswith("# schema_version: 1")
    back = load_profile(path)
    np.testing.assert_array_equal(back.values, rho.values)
    np.testing.assert_array_equal(back.r, rho.r)


def test_params_validation():
    p = ModelParams(1.5, 1.0, 2.0, 3.0)
    assert p.k_coeff == pytest.approx(3.0 * 2.0 ** (-5 / 3), rel=1e-15)
    for bad in [dict(mu=3.5, mass=1.0), dict(mu=1.0, mass=-1.0),
                dict(mu=1.0, mass=1.0, j_norm=0.0), dict(mu=1.0, mass=1.0, k11=np.inf)]:
        with pytest.raises(InvalidArgument):
            ModelParams(**bad)


@pytest.mark.parametrize("kind", ["uniform", "log"])
def test_quadrature_order(kind):
    errs = []
    for n in (100, 200, 400, 800):
        g = make_grid(40.0, n, kind)
        rho = RadialDensity.from_function(g, lambda r: np.exp(-r))
        errs.append(abs(mass(rho) - 8 * math.pi))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios >= 3)


def test_rescale_composition(log_grid):
    rho = RadialDensity.from_function(log_grid, lambda r: np.exp(-r))
    twice = rescale(rescale(rho, 2.0, 3.0), 0.5, 1.5)
    once = rescale(rho, 1.0, 4.5)
    np.testing.assert_array_equal(twice.values, once.values)
    np.testing.assert_allclose(twice.r, once.r, rtol=1e-15)


@given(a=st.floats(1e-3, 1e3), mu=st.floats(0.1, 3.4))
def test_homogeneity(a, mu):
    g = make_grid(5.0, 64, "log")
    rho = RadialDensity.from_function(g, lambda r: np.exp(-r))
    assert mass(rho * a) == pytest.approx(a * mass(rho), rel=1e-12)
    assert psi(rho * a, mu) == pytest.approx(a ** psi_exponent(mu) * psi(rho, mu), rel=1e-12)
