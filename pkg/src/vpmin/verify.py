"""
Verification suites run by ``vpmin verify``.

Each suite returns a dict with one entry per property:

    {"passed": bool, "count": checks made, "violations": failed checks,
     "max_violation": largest amount by which the check failed (0 if none)}

plus free-form ``info``.  All randomness comes from the ``seed`` argument.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import diagnostics as dg
from . import kinetic as kn
from . import minimizer as mn
from . import rearrange3d as r3
from . import reduced as rd
from .gravity import epot, epot_field, epot_pair, epot_potential, solve_potential
from .radial import RadialDensity, make_grid, mass, psi, split_at, tail_mass

SUITES = ("scaling", "concentration", "riesz", "reduction", "lane-emden", "sequences")
DEFAULT_MUS = (0.5, 1.5, 2.5)
RIESZ_CUTOFFS = (1.0, 3.0, 10.0)


class _Property:
    """Accumulates checks of the form ``margin >= 0``."""

    def __init__(self):
        self.count = 0
        self.violations = 0
        self.max_violation = 0.0

    def add(self, margin):
        margin = np.atleast_1d(np.asarray(margin, dtype=float))
        self.count += margin.size
        bad = ~(margin >= 0)
        self.violations += int(bad.sum())
        if bad.any():
            worst = np.nan_to_num(-margin[bad], nan=np.inf).max()
            self.max_violation = max(self.max_violation, float(worst))

    def to_dict(self):
        return {"passed": self.violations == 0 and self.count > 0,
                "count": self.count, "violations": self.violations,
                "max_violation": self.max_violation}


class _Suite:
    def __init__(self, name):
        self.name = name
        self.props = {}
        self.info = {}
        self._t0 = time.perf_counter()

    def __getitem__(self, key):
        return self.props.setdefault(key, _Property())

    def result(self):
        props = {k: v.to_dict() for k, v in self.props.items()}
        return {"suite": self.name,
                "passed": all(p["passed"] for p in props.values()),
                "properties": props,
                "info": self.info,
                "runtime_s": time.perf_counter() - self._t0}


def random_radial_density(grid, rng, total_mass=1.0, n_bumps=3):
    """Sum of random Gaussian shells, scaled to ``total_mass``."""
    rho = kn.random_density(grid, rng, n_bumps)
    return rho * (total_mass / mass(rho))


def _mus(mu):
    return DEFAULT_MUS if mu is None else (mu,)


def suite_scaling(mu=None, seed=0, count=50):
    s = _Suite("scaling")
    rng = np.random.default_rng(seed)
    grid = make_grid(10.0, 400, "log")
    for m in _mus(mu):
        params = rd.ModelParams(m, 1.0, 1.0, 1.0)
        rho = random_radial_density(grid, rng)
        base = rd.energy(rho, params)
        for _ in range(count):
            M2, J2 = np.exp(rng.uniform(-2, 2, size=2))
            rho2, p2 = rd.apply_scaling(rho, params, M2, J2)
            new = rd.energy(rho2, p2, check_mass=False)
            f = rd.scaling_factor(m, 1.0, 1.0, M2, J2)
            s["mass_maps_to_target"].add(1e-10 - abs(mass(rho2) / M2 - 1))
            s["kinetic_ratio"].add(1e-8 - abs(new.kinetic_term / (f * base.kinetic_term) - 1))
            s["potential_ratio"].add(1e-8 - abs(new.potential_term / (f * base.potential_term) - 1))
    return s.result()


def suite_concentration(mu=None, seed=0, n_densities=100, n_samples=100_000):
    s = _Suite("concentration")
    rng = np.random.default_rng(seed)
    grid = make_grid(10.0, 400, "log")
    for m in _mus(mu):
        params = rd.ModelParams(m, 1.0)
        for _ in range(n_densities):
            rho = random_radial_density(grid, rng)
            for r_split in rng.uniform(0.2, 4.0, size=5):
                res, _a1, _a2 = rd.splitting_identity_check(rho, r_split, params)
                s["splitting_identity"].add(1e-10 - res)
                rho1, rho2 = split_at(rho, r_split)
                mt = tail_mass(rho, r_split)
                s["newton_bound"].add(mt * (1 - mt) / r_split + 1e-10 - epot_pair(rho1, rho2))
        a1 = rng.uniform(0, 1, 10_000)
        x = rng.uniform(0, 1, 10_000)
        links = rd.chain_links(a1, x, m)
        for k in range(links.shape[-1] - 1):
            s[f"chain_link_{k}_{k + 1}"].add(links[:, k] - links[:, k + 1] + 1e-12)
    x = rng.uniform(0, 1, n_samples)
    s["elementary_inequality"].add(rd.elementary_gap(x) + 1e-12)
    a, b = rng.uniform(1e-3, 10, (2, n_samples))
    alpha = rng.uniform(0, 1, n_samples)
    s["concavity_inequality"].add(rd.concavity_gap(a, b, alpha) + 1e-12)
    return s.result()


def suite_riesz(seed=0, count=200, dims=(12, 12, 12), cutoffs=RIESZ_CUTOFFS):
    s = _Suite("riesz")
    rng = np.random.default_rng(seed)
    for _ in range(count):
        rho = r3.random_density(dims, rng)
        star = r3.rearrange(rho)
        same = np.array_equal(np.sort(rho.values.ravel()), np.sort(star.values.ravel()))
        s["equimeasurable"].add(0.0 if same else -1.0)
        for k in ("coulomb",) + tuple(cutoffs):
            gap = r3.interaction(star, star, k) - r3.interaction(rho, rho, k)
            s[f"riesz_{k}"].add(gap + 1e-12)
        lhs, rhs = r3.confinement_check(rho, 0.15, 0.45)
        s["confinement"].add(lhs - rhs + 1e-10)
    s.info["cutoffs"] = list(cutoffs)
    s.info["dims"] = list(dims)
    return s.result()


def _psi_power_fit(rho, mu):
    scales = np.array([0.25, 0.5, 1.0, 2.0, 4.0])
    ek, ps = [], []
    for a in scales:
        r = rho * a
        ek.append(kn.global_reduce(r, 1.0, mu).ekin_min)
        ps.append(psi(r, mu))
    return dg.loglog_slope(ps, ek)


def suite_reduction(mu=None, seed=0, n_densities=10):
    s = _Suite("reduction")
    rng = np.random.default_rng(seed)
    grid = make_grid(5.0, 300, "log")
    for m in _mus(mu):
        fits = []
        for _ in range(n_densities):
            rho = random_radial_density(grid, rng, total_mass=rng.uniform(0.5, 2.0))
            res = kn.global_reduce(rho, rng.uniform(0.5, 2.0), m)
            fits.append(res.k11_fit)
            d_err, j_err = kn.reconstruction_errors(rho, res)
            s["reduce_reconstructs_density"].add(1e-6 - d_err)
            s["reduce_reconstructs_norm"].add(1e-6 - j_err)
        fits = np.array(fits)
        spread = float(np.max(np.abs(fits / fits.mean() - 1)))
        s["k11_stable"].add(1e-3 - spread)
        slope = _psi_power_fit(rho, m)
        expected = (2 * m + 3) / 3
        s["psi_power"].add(1e-2 - abs(slope - expected))
        comp = kn.competitor_energies(rho, res, rng, count=20)
        s["optimal_beats_competitors"].add(comp - res.ekin_min)

        params = rd.ModelParams(m, 1.0, 1.0, float(fits.mean()))
        out = mn.minimize(params, n=2000)
        lift = kn.lift_minimizer(out.rho0, out.potential, out.e0, m)
        s["lift_density"].add(1e-6 - lift.density_rel_err)
        s["lift_mass"].add(1e-6 - abs(lift.mass / params.mass - 1))
        s["lift_norm"].add(1e-6 - abs(lift.norm / params.j_norm - 1))
        s.info[f"k11_mu_{m}"] = float(fits.mean())
        s.info[f"psi_power_mu_{m}"] = slope
    return s.result()


def suite_lane_emden(mu=None, seed=0):
    s = _Suite("lane-emden")
    s["xi1_n0"].add(1e-6 - abs(mn.lane_emden(0).xi1 - math.sqrt(6)))
    s["xi1_n1"].add(1e-6 - abs(mn.lane_emden(1).xi1 - math.pi))
    s["xi1_n3"].add(1e-3 - abs(mn.lane_emden(3).xi1 - 6.89685))
    for m in _mus(mu):
        params = rd.ModelParams(m, 1.0)
        out = mn.minimize(params, n=4000)
        pred = mn.predicted_polytrope(params)
        xi_scf = out.r_support / pred.length_scale
        s["xi1_scf_vs_oracle"].add(1e-3 - abs(xi_scf / pred.solution.xi1 - 1))
        s["energy_negative"].add(-out.energy.total)
        s["euler_lagrange"].add(1e-5 - mn.euler_lagrange_residual(out.rho0, params))
        s.info[f"xi1_mu_{m}"] = {"scf": xi_scf, "oracle": pred.solution.xi1}
        s.info[f"energy_mu_{m}"] = out.energy.total
    return s.result()


def suite_sequences(mu=None, seed=0):
    s = _Suite("sequences")
    rng = np.random.default_rng(seed)
    grid = make_grid(20.0, 2000, "log")
    ns = [4, 8, 16, 32, 64]
    for m in _mus(mu):
        rho0 = random_radial_density(make_grid(20.0, 2000, "log"), rng)
        rho0 = RadialDensity(grid, rho0.values * (grid.nodes <= 8.0))
        bump = dg.sequence_report(dg.bump_sequence(rho0, ns, 8.0), rho0, 8.0, m)
        slope = dg.loglog_slope(ns, [r.epot_diff for r in bump])
        s["bump_rate"].add(0.1 - abs(slope / -2.0 - 1))
        esc = dg.sequence_report(dg.escaping_sequence(rho0, ns, 14.0), rho0, 10.0, m)
        slope = dg.loglog_slope(ns, [r.epot_diff for r in esc])
        s["escape_rate"].add(0.1 - abs(slope / -1.0 - 1))
        tails = np.array([r.tail_mass_n for r in esc])
        s["escape_tail_decreases"].add(tails[:-1] - tails[1:])
        for r in bump + esc:
            s["epot_diff_nonpositive"].add(-r.epot_diff)
            sigma = r.field_dist**2
            s["field_identity"].add(1e-8 * max(sigma, 1e-300) - abs(sigma + 8 * np.pi * r.epot_diff))

        params = rd.ModelParams(m, 1.0)
        out = mn.minimize(params, opts=mn.SCFOptions(keep_iterates=True))
        rep = dg.sequence_report(out.iterates, out.rho0, 5.0, m)
        fd = np.array([r.field_dist for r in rep])
        lp = np.array([r.lp_dist for r in rep])
        burn = mn.SCFOptions().burn_in
        s["scf_field_dist_monotone"].add(fd[burn:-1] * (1 + 1e-6) + 1e-14 - fd[burn + 1:])
        s["scf_lp_dist_monotone"].add(lp[burn:-1] * (1 + 1e-6) + 1e-14 - lp[burn + 1:])
        s["scf_field_dist_small"].add(1e-6 - fd[-1])
        s["scf_lp_dist_small"].add(1e-6 - lp[-1])
    return s.result()


def potential_forms_agree(rho):
    """Largest relative disagreement between the three E_pot formulas."""
    prof = solve_potential(rho)
    vals = np.array([epot(rho), epot_potential(rho, prof), epot_field(prof)])
    return float(np.max(np.abs(vals - vals[0])) / abs(vals[0]))


RUNNERS = {
    "scaling": lambda mu, seed: suite_scaling(mu, seed),
    "concentration": lambda mu, seed: suite_concentration(mu, seed),
    "riesz": lambda mu, seed: suite_riesz(seed),
    "reduction": lambda mu, seed: suite_reduction(mu, seed),
    "lane-emden": lambda mu, seed: suite_lane_emden(mu, seed),
    "sequences": lambda mu, seed: suite_sequences(mu, seed),
}


def run_suite(name, mu=None, seed=0):
    if name not in RUNNERS:
        raise KeyError(name)
    return RUNNERS[name](mu, seed)
