import json
import math

import numpy as np
import pytest

from vpmin import minimizer as mn
from vpmin.errors import GridTooSmall, InvalidArgument, NumericFailure
from vpmin.radial import RadialDensity, make_grid, mass, uniform_ball
from vpmin.reduced import ModelParams, energy


@pytest.fixture(scope="module")
def result():
    return mn.minimize(ModelParams(1.5, 1.0, 1.0, 1.0), r_max=20.0, n=2000)


def test_scf_beats_uniform_ball(result):
    assert result.energy.total < 0
    g = result.rho0.grid
    ball = uniform_ball(g, 1.0, result.r_support)
    assert result.energy.total < energy(ball, result.params).total


def test_minimizer_properties(result):
    rho = result.rho0
    assert mass(rho) == pytest.approx(1.0, rel=1e-6)
    assert np.all(np.diff(rho.values) <= 1e-14 * rho.values.max())
    assert result.r_support < rho.grid.r_max
    assert not rho.values[rho.r > result.r_support].any()
    assert mn.euler_lagrange_residual(rho, result.params) <= 1e-5


def test_multistart_agrees(result):
    p = result.params
    grid = result.rho0.grid
    energies = [result.energy.total]
    for init in ("gaussian", result.rho0):
        opts = mn.SCFOptions(initial=init, initial_radius=2.0)
        energies.append(mn.scf_minimize(p, grid, opts).energy.total)
    np.testing.assert_allclose(energies, energies[0], rtol=1e-8)


def test_xi1_matches_oracle(result):
    pred = mn.predicted_polytrope(result.params)
    assert result.r_support / pred.length_scale == pytest.approx(6.89685, rel=1e-3)
    assert result.e0 == pytest.approx(pred.e0, rel=1e-3)


def test_grid_too_small_retries():
    p = ModelParams(1.5, 1.0)
    with pytest.raises(GridTooSmall):
        mn.scf_minimize(p, make_grid(1.0, 500, "log"))
    res = mn.minimize(p, r_max=1.0, n=1000)
    assert res.rho0.grid.r_max > res.r_support


def test_nonconvergence_is_reported():
    with pytest.raises(NumericFailure) as info:
        mn.minimize(ModelParams(1.5, 1.0), opts=mn.SCFOptions(max_iter=3))
    assert "residual" in info.value.diagnostics


def test_bad_initial_guess():
    with pytest.raises(InvalidArgument):
        mn.minimize(ModelParams(1.5, 1.0), opts=mn.SCFOptions(initial="cube"))


def test_result_files(tmp_path, result):
    result.save(tmp_path / "profile.csv", tmp_path / "result.json")
    data = json.loads((tmp_path / "result.json").read_text())
    assert data["schema_version"] == 1
    assert data["energy"]["total"] == result.energy.total
    header = (tmp_path / "profile.csv").read_text().splitlines()[1]
    assert header == "r,rho,U,m_enc"


def test_lane_emden_closed_forms():
    s0 = mn.lane_emden(0)
    assert s0.xi1 == pytest.approx(math.sqrt(6), abs=1e-6)
    np.testing.assert_allclose(s0.theta[:-1], 1 - s0.xi[:-1] ** 2 / 6, atol=1e-12)
    s1 = mn.lane_emden(1)
    assert s1.xi1 == pytest.approx(math.pi, abs=1e-6)
    x = s1.xi[1:-1]
    np.testing.assert_allclose(s1.theta[1:-1], np.sin(x) / x, atol=1e-10)
    assert s1.mtheta1 == pytest.approx(math.pi, rel=1e-9)


def test_lane_emden_n3():
    sol = mn.lane_emden(3)
    assert sol.xi1 == pytest.approx(6.89685, abs=1e-4)
    assert sol.mtheta1 == pytest.approx(2.01824, abs=1e-4)
    coarse = mn.lane_emden(3, step=2e-4)
    assert abs(coarse.xi1 - sol.xi1) < 1e-9


def test_lane_emden_unbounded():
    sol = mn.lane_emden(5, xi_max=20.0)
    assert not sol.bounded and math.isinf(sol.xi1)
    with pytest.raises(InvalidArgument):
        mn.lane_emden(-1)


def test_polytrope_n1_profile():
    a = 0.7
    rho = mn.polytrope_from_lane_emden(1, 1.0, a)
    assert mass(rho) == pytest.approx(1.0, rel=1e-8)
    x = rho.r / a
    inside = x < math.pi * 0.999
    shape = np.sin(x[inside]) / x[inside]
    ratio = rho.values[inside] / shape
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-6)
    assert not rho.values[x > math.pi].any()


@pytest.mark.parametrize("n", [0.5, 2.0, 3.0, 4.2])
def test_polytrope_mass(n):
    rho = mn.polytrope_from_lane_emden(n, 2.5, 0.3)
    assert mass(rho) == pytest.approx(2.5, rel=1e-8)


def test_polytrope_residual_second_order():
    p = ModelParams(1.5, 1.0)
    pred = mn.predicted_polytrope(p)
    res = []
    for n in (500, 1000, 2000, 4000):
        g = make_grid(1.05 * pred.radius, n, "log")
        rho = mn.polytrope_from_lane_emden(3, 1.0, pred.length_scale, g, pred.solution)
        res.append(mn.euler_lagrange_residual(rho, p))
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all(ratios > 3.5)


def test_residual_of_wrong_profile():
    g = make_grid(20.0, 2000, "log")
    p = ModelParams(1.5, 1.0)
    assert mn.euler_lagrange_residual(uniform_ball(g, 1.0, 1.0), p) >= 1e-2
    with pytest.raises(InvalidArgument):
        mn.euler_lagrange_residual(RadialDensity(g, np.zeros(g.n)), p)


def test_support_radius():
    g = make_grid(2.0, 2001, "uniform")
    ball = uniform_ball(g, 1.0, 1.0)
    assert abs(mn.support_radius(ball) - 1.0) <= g.nodes[2] - g.nodes[1]
    g = make_grid(20.0, 2000, "log")
    gauss = RadialDensity.from_function(g, lambda r: np.exp(-r * r))
    radii = [mn.support_radius(gauss, t) for t in (1e-2, 1e-4, 1e-8)]
    assert np.all(np.diff(radii) > 0)
    with pytest.raises(InvalidArgument):
        mn.support_radius(gauss, 1.5)


def test_keep_iterates_and_trace():
    res = mn.minimize(ModelParams(0.5, 2.0), opts=mn.SCFOptions(keep_iterates=True))
    assert len(res.iterates) == res.iterations + 1
    energies = [t["energy"] for t in res.trace]
    burn = mn.SCFOptions().burn_in
    assert np.all(np.diff(energies[burn:]) <= 1e-12 * abs(energies[-1]))


def test_concentration_self_consistency(result):
    from vpmin.radial import tail_mass
    from vpmin.reduced import concentration_bound
    rho = result.rho0
    assert tail_mass(rho, result.r_support * 1.0001) == 0.0
    est = result.infimum_estimate()
    lhs, rhs = concentration_bound(rho, max(result.r_support * 1.01, 2 * est.r0), result.params, est)
    assert lhs == rhs
