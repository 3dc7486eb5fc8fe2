"""
Phase-space side of the reduction.

For a spatial density rho the least kinetic energy over isotropic
f(x, v) with int f dv = rho(x) and ||f||_{1+1/mu} = J is attained by

    f(x, v) = lam^(-mu) (c(x) - |v|^2/2)_+^mu,

with c(x) fixed pointwise by the density constraint and the single
multiplier lam fixed by the J constraint.  The minimal kinetic energy
is K11 J^(-2(mu+1)/3) Psi(rho)^((2mu+3)/3); ``global_reduce`` recovers
K11 from that optimum.

Velocity integrals at a point with cutoff c use 4096 speeds
w = sqrt(2c) sin(phi), phi uniform on [0, pi/2], with the trapezoid rule
in phi.  The substitution absorbs the (c - w^2/2)^mu edge, so the rule
stays high order for every mu.  In the scaled speed s = w / sqrt(c) the
grid is the same at every point; each per-point integral is an exact
power of c times a unit-grid constant, which is what makes the fitted
K11 independent of rho.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidArgument, NumericFailure
from .radial import SCHEMA_VERSION, RadialDensity, check_mu, make_grid, psi

N_SPEEDS = 4096
BISECT_TOL = 1e-12
BISECT_MAXITER = 200


def _unit_grid(n=N_SPEEDS):
    phi = np.linspace(0.0, 0.5 * np.pi, n)
    wphi = np.full(n, phi[1])
    wphi[[0, -1]] *= 0.5
    return np.sqrt(2.0) * np.sin(phi), wphi * np.sqrt(2.0) * np.cos(phi)


def unit_speeds(n=N_SPEEDS):
    """Scaled speeds s in [0, sqrt(2)]."""
    return _unit_grid(n)[0]


def unit_weights(n=N_SPEEDS):
    """Weights for int_0^sqrt(2) h(s) ds on :func:`unit_speeds`."""
    return _unit_grid(n)[1]


def speed_grid(c, n=N_SPEEDS):
    """Speeds on [0, sqrt(2c)] and weights for int . dw."""
    s, q = _unit_grid(n)
    return s * np.sqrt(c), q * np.sqrt(c)


def ansatz_density(c, mu, n=N_SPEEDS):
    """int (c - |v|^2/2)_+^mu dv for a scalar cutoff c."""
    check_mu(mu)
    if c <= 0:
        return 0.0
    w, q = speed_grid(c, n)
    g = np.maximum(c - 0.5 * w * w, 0.0) ** mu
    return float(np.dot(q, g * 4 * np.pi * w * w))


@dataclass(frozen=True)
class UnitMoments:
    """Velocity moments of (1 - s^2/2)_+^mu on the unit speed grid."""

    density: float      # int g dv
    norm: float         # int g^(1+1/mu) dv
    kinetic: float      # int |v|^2/2 g dv

    @classmethod
    def for_mu(cls, mu, n=N_SPEEDS):
        s, ws = _unit_grid(n)
        q = ws * 4 * np.pi * s * s
        base = np.maximum(1.0 - 0.5 * s * s, 0.0)
        g = base**mu
        return cls(float(q @ g), float(q @ (base * g)), float(q @ (0.5 * s * s * g)))


@dataclass
class ReductionResult:
    ekin_min: float
    k11_fit: float
    lagrange_lambda: float
    per_point_c: np.ndarray
    mu: float
    j_norm: float
    psi: float
    density_rel_err: float = np.nan
    norm_rel_err: float = np.nan
    outer_iterations: int = 0

    def to_dict(self):
        d = asdict(self)
        d["per_point_c"] = [float(format(x, ".17g")) for x in self.per_point_c]
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self):
        return json.dumps(self.to_dict())


def _bisect(f, lo, hi, tol=BISECT_TOL, maxiter=BISECT_MAXITER, what="root"):
    """Vectorized bisection for increasing f with f(lo) <= 0 <= f(hi)."""
    flo, fhi = f(lo), f(hi)
    if np.any(flo > 0) or np.any(fhi < 0):
        raise NumericFailure(f"{what}: bisection bracket does not enclose a root",
                             {"f_lo": np.max(flo), "f_hi": np.min(fhi)})
    for it in range(maxiter):
        mid = 0.5 * (lo + hi)
        below = f(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi), it + 1


def _cutoffs(rho_vals, lam, mu, mom):
    """Inner problem: c_i with lam^-mu D(c_i) = rho_i, D(c) = D1 c^(mu+3/2)."""
    n = mu + 1.5
    target = rho_vals * lam**mu / mom.density
    pos = target > 0
    c = np.zeros_like(rho_vals)
    if not np.any(pos):
        return c
    t = target[pos]
    # bisection in log c for relative accuracy at every point
    lo = np.log(t) / n - 1.0
    hi = np.log(t) / n + 1.0
    logc, _ = _bisect(lambda x: np.exp(n * x) / t - 1.0, lo, hi, what="cutoff c(x)")
    c[pos] = np.exp(logc)
    return c


def global_reduce(rho, J, mu, n_speeds=N_SPEEDS):
    """Minimal kinetic energy for ``rho`` under ||f||_{1+1/mu} = J."""
    check_mu(mu)
    if not J > 0:
        raise InvalidArgument("J must be positive")
    vals = rho.values
    if not np.any(vals > 0):
        raise InvalidArgument("reduction needs a nonzero density")
    mom = UnitMoments.for_mu(mu, n_speeds)
    vol = rho.grid.volumes
    n = mu + 1.5
    target = J ** (1 + 1 / mu)

    def norm_power(log_lam):
        lam = np.exp(log_lam)
        c = _cutoffs(vals, lam, mu, mom)
        return float(np.dot(vol, c ** (n + 1))) * mom.norm * lam ** (-mu - 1)

    # the norm decreases in lam; bracket in log lam
    lo, hi = -1.0, 1.0
    for _ in range(400):
        if norm_power(lo) < target:
            lo -= 2.0
        elif norm_power(hi) > target:
            hi += 2.0
        else:
            break
    else:
        raise NumericFailure("could not bracket the J multiplier")
    log_lam, outer_its = _bisect(lambda x: target / norm_power(x) - 1.0, np.array(lo),
                                 np.array(hi), what="J multiplier")
    lam = float(np.exp(log_lam))
    c = _cutoffs(vals, lam, mu, mom)
    ekin = float(np.dot(vol, c ** (n + 1))) * mom.kinetic * lam**-mu
    ps = psi(rho, mu)
    k11 = ekin * J ** (2 * (mu + 1) / 3) / ps ** ((2 * mu + 3) / 3)
    res = ReductionResult(ekin, k11, lam, c, mu, J, ps, outer_iterations=outer_its)
    res.density_rel_err, res.norm_rel_err = reconstruction_errors(rho, res, n_speeds)
    return res


def _per_point_moments(c, lam, mu, n_speeds, chunk=256):
    """Direct quadrature of int f dv and int f^(1+1/mu) dv at every point."""
    dens = np.zeros_like(c)
    normp = np.zeros_like(c)
    s, ws = _unit_grid(n_speeds)
    for start in range(0, c.size, chunk):
        cc = c[start:start + chunk, None]
        w = s[None, :] * np.sqrt(cc)
        q = ws[None, :] * np.sqrt(cc) * 4 * np.pi * w * w
        g = lam**-mu * np.maximum(cc - 0.5 * w * w, 0.0) ** mu
        dens[start:start + chunk] = np.sum(q * g, axis=1)
        normp[start:start + chunk] = np.sum(q * g ** (1 + 1 / mu), axis=1)
    return dens, normp


def reconstruction_errors(rho, res, n_speeds=N_SPEEDS):
    """Relative errors of int f dv against rho (support max) and of ||f|| against J."""
    dens, normp = _per_point_moments(res.per_point_c, res.lagrange_lambda, res.mu, n_speeds)
    vals = rho.values
    pos = vals > 0
    d_err = float(np.max(np.abs(dens[pos] / vals[pos] - 1.0)))
    j = float(np.dot(rho.grid.volumes, normp)) ** (res.mu / (res.mu + 1))
    return d_err, abs(j / res.j_norm - 1.0)


def competitor_energies(rho, res, rng, count=100, eps=0.3, n_shapes=4, n_speeds=N_SPEEDS):
    """Kinetic energies of random feasible competitors to the optimal f.

    Each competitor multiplies the optimal profile at every point by one
    of ``n_shapes`` random positive speed-dependent factors, renormalizes
    pointwise so int f dv = rho, then dilates all velocities by a common
    factor so that ||f||_{1+1/mu} = J again.  The dilation keeps the
    density constraint and multiplies the kinetic energy by s^-2.
    """
    mu = res.mu
    s, ws = _unit_grid(n_speeds)
    q = ws * 4 * np.pi * s * s
    base = np.maximum(1.0 - 0.5 * s * s, 0.0) ** mu
    vol = rho.grid.volumes
    c = res.per_point_c
    lam = res.lagrange_lambda
    n = mu + 1.5
    pos = c > 0
    out = []
    for _ in range(count):
        modes = np.arange(1, 6)
        shapes = []
        for _k in range(n_shapes):
            amp = rng.uniform(-1, 1, modes.size) / modes
            phi = np.cos(np.outer(s / s[-1], np.pi * modes)) @ amp
            shapes.append(base * (1.0 + eps * phi / np.max(np.abs(phi))))
        assign = rng.integers(0, n_shapes, size=c.size)
        ekin = 0.0
        normp = 0.0
        for k, g in enumerate(shapes):
            sel = pos & (assign == k)
            if not np.any(sel):
                continue
            d1, p1, t1 = q @ g, q @ g ** (1 + 1 / mu), q @ (0.5 * s * s * g)
            # profile at point i: rho_i / (D_k c_i^{3/2}) * g(w/sqrt(c_i))
            amp_i = rho.values[sel] / (d1 * c[sel] ** 1.5)
            ekin += float(np.dot(vol[sel], amp_i * c[sel] ** 2.5 * t1))
            normp += float(np.dot(vol[sel], amp_i ** (1 + 1 / mu) * c[sel] ** 1.5 * p1))
        dil = (res.j_norm ** (1 + 1 / mu) / normp) ** (mu / 3)
        out.append(ekin / dil**2)
    return np.array(out)


@dataclass
class LiftDiagnostics:
    kappa: float
    density_rel_err: float
    mass: float
    norm: float
    ekin: float
    empty: bool = False


def lift_minimizer(rho0, potential, e0, mu, n_speeds=N_SPEEDS):
    """Build f0 = kappa (E0 - |v|^2/2 - U)_+^mu and compare it with rho0.

    kappa is fixed by the central density; the rest of the support is a
    genuine check.  Velocity integrals are taken by direct quadrature at
    every point.
    """
    check_mu(mu)
    c = np.maximum(e0 - potential.u, 0.0)
    vol = rho0.grid.volumes
    if not np.any(c > 0):
        return LiftDiagnostics(0.0, 0.0, 0.0, 0.0, 0.0, empty=True)
    dens1, normp1 = _per_point_moments(c, 1.0, mu, n_speeds)
    s, ws = _unit_grid(n_speeds)
    q = ws * 4 * np.pi * s * s
    t1 = q @ (0.5 * s * s * np.maximum(1.0 - 0.5 * s * s, 0.0) ** mu)
    k0 = int(np.argmax(c))
    kappa = rho0.values[k0] / dens1[k0]
    dens = kappa * dens1
    pos = rho0.values > 0
    err = float(np.max(np.abs(dens[pos] / rho0.values[pos] - 1.0)))
    if np.any(dens[~pos] > 0):
        err = max(err, float(np.max(dens[~pos])) / float(rho0.values.max()))
    m = float(np.dot(vol, dens))
    norm = float(np.dot(vol, kappa ** (1 + 1 / mu) * normp1)) ** (mu / (mu + 1))
    ekin = kappa * t1 * float(np.dot(vol, c ** (mu + 2.5)))
    return LiftDiagnostics(float(kappa), err, m, norm, ekin)


_K11_CACHE = {}


def k11_oracle(mu, rng=None, n_samples=3):
    """K11 for ``mu`` from reductions of a few random densities (cached)."""
    if mu in _K11_CACHE:
        return _K11_CACHE[mu]
    rng = rng or np.random.default_rng(0)
    grid = make_grid(5.0, 400, "log")
    fits = []
    for _ in range(n_samples):
        rho = random_density(grid, rng)
        fits.append(global_reduce(rho, 1.0, mu).k11_fit)
    _K11_CACHE[mu] = float(np.mean(fits))
    return _K11_CACHE[mu]


def random_density(grid, rng, n_bumps=3):
    """Positive smooth radial density built from a few random Gaussian shells."""
    r = grid.nodes
    vals = np.zeros_like(r)
    scale = grid.r_max
    for _ in range(n_bumps):
        centre = rng.uniform(0, 0.4) * scale
        width = rng.uniform(0.05, 0.2) * scale
        vals += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((r - centre) / width) ** 2)
    return RadialDensity(grid, vals)
