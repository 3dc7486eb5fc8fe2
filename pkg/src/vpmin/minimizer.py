"""
Constrained minimizers of the reduced functional.

On the support of a minimizer the first variation

    K (2mu+5)/3 Psi^(2mu/3) rho^(2/(2mu+3)) + U_rho

is constant (= E0), so rho = ((E0 - U)_+ / A)^n with n = mu + 3/2 and
A = K (2mu+5)/3 Psi^(2mu/3).  ``scf_minimize`` iterates that relation,
fixing E0 by bisection on the mass.  ``lane_emden`` and
``predicted_polytrope`` give the same profile independently from the
Lane-Emden equation of index n.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericFailure, GridTooSmall
from .gravity import (
    PotentialProfile, potential_values, radial_energy_values, solve_potential,
)
from .radial import (
    SCHEMA_VERSION, RadialDensity, make_grid, mass, psi_exponent,
    uniform_ball,
)
from .reduced import EnergyBreakdown, InfimumEstimate, ModelParams, energy

log = logging.getLogger(__name__)


def polytropic_index(mu):
    return mu + 1.5


def amplitude(params, psi_value):
    """A = K (2mu+5)/3 Psi^(2mu/3)."""
    mu = params.mu
    return params.k_coeff * (2 * mu + 5) / 3 * psi_value ** (2 * mu / 3)


# ---------------------------------------------------------------------------
# self-consistent field iteration

@dataclass
class SCFOptions:
    tol: float = 1e-9
    max_iter: int = 2000
    damping: float = 0.5
    min_damping: float = 1e-4
    initial: object = "uniform"       # "uniform", "gaussian" or a RadialDensity
    initial_radius: float = 1.0
    burn_in: int = 5
    energy_tol: float = 1e-12
    keep_iterates: bool = False


@dataclass
class MinimizerResult:
    rho0: RadialDensity
    potential: PotentialProfile
    e0: float
    r_support: float
    energy: EnergyBreakdown
    iterations: int
    residual: float
    params: ModelParams
    trace: list = field(default_factory=list, repr=False)
    iterates: list = field(default_factory=list, repr=False)

    def infimum_estimate(self):
        return InfimumEstimate.from_value(
            self.energy.total, self.params,
            source=f"SCF minimizer, n={self.rho0.grid.n}, residual={self.residual:.3g}")

    def summary(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "mu": self.params.mu,
            "mass": self.params.mass,
            "j_norm": self.params.j_norm,
            "k11": self.params.k11,
            "e0": self.e0,
            "r_support": self.r_support,
            "energy": self.energy.to_dict(),
            "iterations": self.iterations,
            "residual": self.residual,
            "grid_n": self.rho0.grid.n,
            "r_max": self.rho0.grid.r_max,
        }

    def save(self, profile_path, json_path):
        self.potential.save(profile_path, self.rho0)
        with open(json_path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _initial_guess(opts, grid, params):
    init = opts.initial
    if isinstance(init, RadialDensity):
        if not init.grid.same_as(grid):
            raise InvalidArgument("initial guess lives on a different grid")
        return init.values * (params.mass / mass(init))
    if init == "uniform":
        return uniform_ball(grid, params.mass, opts.initial_radius).values.copy()
    if init == "gaussian":
        g = np.exp(-0.5 * (grid.nodes / opts.initial_radius) ** 2)
        return g * params.mass / float(np.dot(grid.volumes, g))
    raise InvalidArgument(f"unknown initial guess {init!r}")


def _mass_matching_cutoff(u, volumes, a_coef, n, target):
    """Bisection for E0 in [min U, 0] with mass(((E0-U)_+/A)^n) = target."""
    def m_of(e0):
        return float(np.dot(volumes, (np.maximum(e0 - u, 0.0) / a_coef) ** n))

    lo, hi = float(u.min()), 0.0
    m_lo, m_hi = m_of(lo), m_of(hi)
    if not (m_lo <= target):
        raise NumericFailure("mass bracket broken at E0 = min U",
                             {"m_lo": m_lo, "target": target})
    if m_hi < target:
        raise GridTooSmall("density would fill the whole grid",
                           {"m_at_zero": m_hi, "target": target})
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        m_mid = m_of(mid)
        if not (m_lo <= m_mid <= m_hi):
            raise NumericFailure("mass is not monotone in E0",
                                 {"lo": lo, "hi": hi, "mid": mid,
                                  "m_lo": m_lo, "m_mid": m_mid, "m_hi": m_hi})
        if m_mid < target:
            lo, m_lo = mid, m_mid
        else:
            hi, m_hi = mid, m_mid
        if hi - lo <= 1e-15 * abs(mid):
            break
    e0 = 0.5 * (lo + hi)
    new = (np.maximum(e0 - u, 0.0) / a_coef) ** n
    # fix the remaining bisection slack exactly
    new *= target / float(np.dot(volumes, new))
    return e0, new


def _energy_values(grid, values, params, p):
    ps = float(np.dot(grid.volumes, values**p))
    kin = params.k_coeff * ps ** params.kinetic_power
    return kin, float(radial_energy_values(grid, values))


def scf_minimize(params, grid, opts=None):
    """Minimize the reduced functional over densities of mass ``params.mass``.

    Raises
    ------
    GridTooSmall
        The support reaches the last grid node.
    NumericFailure
        No convergence within ``opts.max_iter`` or a broken E0 bracket.
    """
    opts = opts or SCFOptions()
    mu, M = params.mu, params.mass
    n = polytropic_index(mu)
    p = psi_exponent(mu)
    vol = grid.volumes
    rho = _initial_guess(opts, grid, params)
    damping = opts.damping
    kin, pot = _energy_values(grid, rho, params, p)
    kin0 = kin
    e_prev = kin + pot
    pot_bound = abs(pot)
    trace, iterates = [], []
    if opts.keep_iterates:
        iterates.append(rho.copy())
    residual = np.inf
    e0 = 0.0
    for it in range(1, opts.max_iter + 1):
        u = potential_values(grid, rho)
        a_coef = amplitude(params, float(np.dot(vol, rho**p)))
        e0, target = _mass_matching_cutoff(u, vol, a_coef, n, M)
        if target[-1] > 0:
            raise GridTooSmall("support touches r_max", {"iteration": it, "r_max": grid.r_max})
        residual = float(np.max(np.abs(target - rho)) / np.max(rho))
        while True:
            cand = (1 - damping) * rho + damping * target
            kin, pot = _energy_values(grid, cand, params, p)
            e_new = kin + pot
            if it <= opts.burn_in or e_new <= e_prev + opts.energy_tol * abs(e_prev):
                break
            damping *= 0.5
            log.debug("energy rose at iteration %d, damping -> %g", it, damping)
            if damping < opts.min_damping:
                raise NumericFailure("damping underflow while enforcing energy decrease",
                                     {"iteration": it, "trace": trace})
        rho = cand
        pot_bound = max(pot_bound, abs(pot))
        if kin > 2 * (kin0 + pot_bound):
            raise NumericFailure("kinetic term left its a-priori bound",
                                 {"iteration": it, "kinetic": kin})
        trace.append({"iteration": it, "residual": residual, "energy": e_new,
                      "kinetic": kin, "potential": pot, "damping": damping, "e0": e0})
        e_prev = e_new
        if opts.keep_iterates:
            iterates.append(rho.copy())
        if residual <= opts.tol:
            # the undamped image has exact mass and an exact cutoff at E0
            rho = target
            break
    else:
        raise NumericFailure(f"SCF did not converge in {opts.max_iter} iterations",
                             {"residual": residual, "trace": trace})

    rho0 = RadialDensity(grid, rho)
    prof = solve_potential(rho0)
    return MinimizerResult(
        rho0=rho0, potential=prof, e0=e0,
        r_support=_cutoff_radius(prof, e0, rho),
        energy=energy(rho0, params), iterations=it, residual=residual,
        params=params, trace=trace, iterates=iterates)


def _cutoff_radius(prof, e0, values):
    """Radius where U reaches E0, i.e. the edge of (E0 - U)_+."""
    r, u = prof.grid.nodes, prof.u
    k = int(np.nonzero(values > 0)[0].max())
    if k + 1 >= r.size:
        return float(r[-1])
    exterior = -prof.total_mass / e0
    if r[k] <= exterior <= r[k + 1]:
        return float(exterior)
    t = (e0 - u[k]) / (u[k + 1] - u[k])
    return float(r[k] + t * (r[k + 1] - r[k]))


def minimize(params, r_max=20.0, n=2000, spacing="log", opts=None, retries=5):
    """:func:`scf_minimize` on a fresh grid, doubling r_max when too small."""
    for attempt in range(retries + 1):
        grid = make_grid(r_max, n, spacing)
        try:
            return scf_minimize(params, grid, opts)
        except GridTooSmall:
            if attempt == retries:
                raise
            log.info("support reached r_max=%g, retrying with %g", r_max, 2 * r_max)
            r_max *= 2


def euler_lagrange_residual(rho, params):
    """Relative spread of the first variation over the support of ``rho``."""
    v = rho.values
    if not np.any(v > 0):
        raise InvalidArgument("empty support")
    support = v > 1e-8 * v.max()
    p = psi_exponent(params.mu)
    a_coef = amplitude(params, float(np.dot(rho.grid.volumes, v**p)))
    u = potential_values(rho.grid, v)
    expr = (a_coef * v[support] ** (2 / (2 * params.mu + 3)) + u[support])
    mean = expr.mean()
    return float(np.max(np.abs(expr - mean)) / abs(mean))


def support_radius(rho, threshold=1e-8):
    """Largest node radius with rho > threshold * max rho."""
    if not 0 < threshold < 1:
        raise InvalidArgument("threshold must lie in (0, 1)")
    v = rho.values
    if not np.any(v > 0):
        raise InvalidArgument("zero density has no support")
    return float(rho.grid.nodes[v > threshold * v.max()].max())


# ---------------------------------------------------------------------------
# Lane-Emden oracle

@dataclass
class LaneEmdenSolution:
    xi: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    xi1: float
    mtheta1: float
    index_n: float
    psi_integral: float = math.nan   # int_0^xi1 theta^(n+1) xi^2 dxi
    bounded: bool = True

    def theta_at(self, x):
        """theta(x), zero beyond the first zero."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xi, self.theta, right=0.0)
        return np.where(x >= self.xi1, 0.0, np.maximum(out, 0.0))


def _le_rhs(x, y, n):
    th, dth = y[0], y[1]
    thp = th if th > 0 else 0.0
    tn = thp**n
    return (dth, -tn - 2.0 * dth / x, tn * thp * x * x, tn * x * x)


def _rk4(x, y, h, n):
    k1 = _le_rhs(x, y, n)
    y2 = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
    k2 = _le_rhs(x + 0.5 * h, y2, n)
    y3 = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
    k3 = _le_rhs(x + 0.5 * h, y3, n)
    y4 = tuple(a + h * b for a, b in zip(y, k3))
    k4 = _le_rhs(x + h, y4, n)
    return tuple(a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def lane_emden(n, step=1e-4, xi_max=50.0):
    """Integrate theta'' + (2/xi) theta' + theta^n = 0, theta(0)=1, theta'(0)=0.

    The series 1 - xi^2/6 + n xi^4/120 starts the solution one step off
    the origin; classical RK4 carries it outward and the first zero is
    refined by bisection on the length of the final partial step.  For
    n >= 5 the solution has no finite zero and ``bounded`` is False.
    """
    if n < 0:
        raise InvalidArgument("Lane-Emden index must be nonnegative")
    x = step
    th = 1 - x**2 / 6 + n * x**4 / 120
    dth = -x / 3 + n * x**3 / 30
    # theta^(n+1) xi^2 and theta^n xi^2 integrals, series-started
    y = (th, dth, x**3 / 3, x**3 / 3)
    xs, ths, dths = [0.0, x], [1.0, th], [0.0, dth]
    while True:
        if x >= xi_max:
            return LaneEmdenSolution(np.array(xs), np.array(ths), np.array(dths),
                                     math.inf, math.nan, n, bounded=False)
        y_new = _rk4(x, y, step, n)
        if y_new[0] <= 0:
            break
        x += step
        y = y_new
        xs.append(x)
        ths.append(y[0])
        dths.append(y[1])
    lo, hi = 0.0, step
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _rk4(x, y, mid, n)[0] > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * x:
            break
    y1 = _rk4(x, y, hi, n)
    xi1 = x + hi
    xs.append(xi1)
    ths.append(0.0)
    dths.append(y1[1])
    return LaneEmdenSolution(np.array(xs), np.array(ths), np.array(dths),
                             xi1, -xi1**2 * y1[1], n, psi_integral=y1[2])


@dataclass
class PolytropeScales:
    """Physical scales of a Lane-Emden polytrope.

    rho = rho_c theta(r/a)^n, radius = xi1 a, E0 = -M/radius.
    """

    length_scale: float
    rho_c: float
    radius: float
    e0: float
    solution: LaneEmdenSolution


def predicted_polytrope(params, solution=None):
    """Polytrope scales that solve the reduced Euler-Lagrange equation.

    Independent of the SCF path: with rho_c = M/(4 pi a^3 m_theta) and
    Psi = 4 pi rho_c^p a^3 int theta^(n+1) xi^2, the matching condition
    4 pi rho_c^(1-1/n) a^2 = A(Psi) is linear in a.
    """
    mu, M = params.mu, params.mass
    n = polytropic_index(mu)
    sol = solution or lane_emden(n)
    if not sol.bounded:
        raise InvalidArgument("index has no finite radius")
    p = psi_exponent(mu)
    rho_c1 = M / (4 * math.pi * sol.mtheta1)
    psi1 = 4 * math.pi * rho_c1**p * sol.psi_integral
    a = amplitude(params, psi1) / (4 * math.pi * rho_c1 ** (1 - 1 / n))
    rho_c = rho_c1 / a**3
    radius = sol.xi1 * a
    return PolytropeScales(a, rho_c, radius, -M / radius, sol)


def polytrope_from_lane_emden(n, M, length_scale, grid=None, solution=None):
    """Density M-normalized to rho_c theta(r/a)^n on ``grid``.

    The default grid is logarithmic out to 1.05 xi1 a with 2000 nodes.
    The central density is fixed by the nodal mass, so mass(result) = M
    to rounding.
    """
    sol = solution or lane_emden(n)
    if not sol.bounded:
        raise InvalidArgument("index has no finite radius")
    if grid is None:
        grid = make_grid(1.05 * sol.xi1 * length_scale, 2000, "log")
    shape = sol.theta_at(grid.nodes / length_scale) ** n
    total = float(np.dot(grid.volumes, shape))
    return RadialDensity(grid, shape * (M / total))
