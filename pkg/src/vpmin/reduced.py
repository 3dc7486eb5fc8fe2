"""
The reduced functional

    E_J(rho) = K * Psi(rho)^((2mu+3)/3) + E_pot(rho),   K = K11 / J^(2(mu+1)/3),

its scaling behaviour, the exact splitting identity and the concentration
lower bound for spherically symmetric densities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace

import numpy as np

from .errors import InvalidArgument, ConstraintViolation
from .gravity import epot, epot_pair
from .radial import (
    SCHEMA_VERSION, check_mu, mass, psi, rescale, split_at, tail_mass,
    MASS_RTOL,
)


@dataclass(frozen=True)
class ModelParams:
    mu: float
    mass: float
    j_norm: float = 1.0
    k11: float = 1.0

    def __post_init__(self):
        check_mu(self.mu)
        for name in ("mass", "j_norm", "k11"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be positive, got {v}")

    @property
    def k_coeff(self):
        return self.k11 / self.j_norm ** (2 * (self.mu + 1) / 3)

    @property
    def kinetic_power(self):
        return (2 * self.mu + 3) / 3

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_term: float
    potential_term: float
    total: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        d = {"schema_version": SCHEMA_VERSION}
        d.update({k: float(format(v, ".17g")) for k, v in asdict(self).items()})
        return json.dumps(d)


@dataclass(frozen=True)
class InfimumEstimate:
    """Upper estimate of the infimum R_{M,J} together with R_0 = M^2/(-k R)."""

    value: float
    r0: float
    source: str = ""

    @classmethod
    def from_value(cls, value, params, source=""):
        if not value < 0:
            raise InvalidArgument("an infimum estimate must be negative")
        return cls(float(value), params.mass**2 / (-concentration_k(params.mu) * value), source)


def concentration_k(mu):
    return 7.0 / 3.0 - 2.0 * mu / 3.0


def kinetic_term(psi_value, params):
    return params.k_coeff * psi_value ** params.kinetic_power


def energy(rho, params, check_mass=True):
    """Kinetic, potential and total reduced energy of ``rho``.

    With ``check_mass`` the density must carry mass ``params.mass`` to
    relative 1e-6; the zero density is always accepted.
    """
    ps = psi(rho, params.mu)
    if not np.isfinite(ps):
        raise ConstraintViolation("Psi(rho) is not finite")
    if check_mass and np.any(rho.values):
        m = mass(rho)
        if abs(m - params.mass) > MASS_RTOL * params.mass:
            raise ConstraintViolation(
                f"density has mass {m:.12g}, expected {params.mass:.12g}")
    kin = kinetic_term(ps, params)
    pot = epot(rho)
    return EnergyBreakdown(kin, pot, kin + pot)


def _check_positive(*values):
    for v in values:
        if not (np.isfinite(v) and v > 0):
            raise InvalidArgument(f"expected a positive argument, got {v}")


def scaling_factor(mu, M, J, M_new, J_new):
    """Ratio R_{M_new,J_new} / R_{M,J} = (M_new/M)^((7-2mu)/3) (J_new/J)^(2(mu+1)/3)."""
    check_mu(mu)
    _check_positive(M, J, M_new, J_new)
    return (M_new / M) ** ((7 - 2 * mu) / 3) * (J_new / J) ** (2 * (mu + 1) / 3)


def scaling_map(mu, M, J, M_new, J_new):
    """Amplitude ``a`` and inverse length ``b`` with rescale(rho, a, b) mapping
    F_M onto F_{M_new} so that both energy terms scale by ``scaling_factor``.

    Mass fixes a b^-3; equal scaling of the kinetic and potential terms
    fixes a^((2mu-1)/3) b^(2-2mu).  The log-linear system has determinant 1.
    """
    check_mu(mu)
    _check_positive(M, J, M_new, J_new)
    gamma = 2 * (mu + 1) / 3
    mat = np.array([[1.0, -3.0], [(2 * mu - 1) / 3, 2 - 2 * mu]])
    rhs = np.array([np.log(M_new / M), gamma * np.log(J_new / J)])
    log_a, log_b = np.linalg.solve(mat, rhs)
    return float(np.exp(log_a)), float(np.exp(log_b))


def apply_scaling(rho, params, M_new, J_new):
    """Rescaled density and parameters for the (M_new, J_new) problem."""
    a, b = scaling_map(params.mu, params.mass, params.j_norm, M_new, J_new)
    return rescale(rho, a, b), params.with_(mass=M_new, j_norm=J_new)


def split_fractions(rho, r_split, mu):
    """alpha_i = Psi(rho_i)/Psi(rho) for the split at ``r_split``."""
    rho1, rho2 = split_at(rho, r_split)
    total = psi(rho, mu)
    if total == 0:
        raise InvalidArgument("Psi(rho) vanishes; fractions undefined")
    return psi(rho1, mu) / total, psi(rho2, mu) / total


def _energy_with_fraction(rho_part, alpha, params):
    if alpha == 0:
        return epot(rho_part)
    scaled = params.with_(j_norm=alpha ** (params.mu / (params.mu + 1)) * params.j_norm)
    return energy(rho_part, scaled, check_mass=False).total


def splitting_identity_check(rho, r_split, params):
    """Relative residual of

        E_J(rho) = E_{a1^(mu/(mu+1)) J}(rho1) + E_{a2^(mu/(mu+1)) J}(rho2)
                   - int int rho1 rho2 / |x - y|.

    Returns ``(residual, alpha1, alpha2)``.
    """
    if psi(rho, params.mu) == 0:
        raise InvalidArgument("splitting needs a nonzero density")
    rho1, rho2 = split_at(rho, r_split)
    a1, a2 = split_fractions(rho, r_split, params.mu)
    lhs = energy(rho, params, check_mass=False).total
    rhs = (_energy_with_fraction(rho1, a1, params)
           + _energy_with_fraction(rho2, a2, params)
           - epot_pair(rho1, rho2))
    return abs(lhs - rhs) / abs(lhs), a1, a2


def concentration_bound(rho, r_split, params, inf_est):
    """Both sides of E_J(rho) >= R + m(M - m)(1/R_0 - 1/R').

    ``m`` is the mass outside ``r_split``.  Nothing is asserted because
    ``inf_est`` only approximates the infimum.
    """
    lhs = energy(rho, params, check_mass=False).total
    m = tail_mass(rho, r_split)
    M = params.mass
    rhs = inf_est.value + m * (M - m) * (1.0 / inf_est.r0 - 1.0 / r_split)
    return lhs, rhs


# Scalar inequalities used along the concentration argument.  Each helper
# returns "larger side minus smaller side", nonnegative when it holds.

def elementary_gap(x):
    """1 - (7/3) x (1-x) - x^(7/3) - (1-x)^(7/3) for x in [0, 1]."""
    x = np.asarray(x, dtype=float)
    return 1 - 7 / 3 * x * (1 - x) - x ** (7 / 3) - (1 - x) ** (7 / 3)


def concavity_gap(a, b, alpha):
    """b^alpha - a^alpha - alpha b^(alpha-1) (b - a) for a, b > 0, alpha in (0,1)."""
    a, b, alpha = (np.asarray(v, dtype=float) for v in (a, b, alpha))
    return b**alpha - a**alpha - alpha * b ** (alpha - 1) * (b - a)


def chain_links(alpha1, m_frac, mu, infimum=-1.0):
    """Successive lower bounds in the concentration estimate.

    For alpha1 in [0,1] and mass fraction x = m/M in [0,1] returns the
    array of terms L0 >= L1 >= ... >= L5 (last axis), where

        L0 = R [a1^(2mu/3) x^((7-2mu)/3) + a2^(2mu/3) (1-x)^((7-2mu)/3)]
        L1 = R [a1^(7/3) + a2^(7/3)]^(2mu/7) [x^(7/3) + (1-x)^(7/3)]^((7-2mu)/7)
        L2 = R [a1 + a2]^(2mu/7) [x^(7/3) + (1-x)^(7/3)]^((7-2mu)/7)
        L3 = R [x^(7/3) + (1-x)^(7/3)]^((7-2mu)/7)
        L4 = R [1 - (7/3) x (1-x)]^((7-2mu)/7)
        L5 = R + (-(7-2mu)/3) x (1-x) R

    with a2 = 1 - a1 and R < 0.  L4 >= L5 is the concavity step applied
    with b = 1, a = 1 - (7/3) x (1-x); L2 = L3 since a1 + a2 = 1.
    """
    a1 = np.asarray(alpha1, dtype=float)
    x = np.asarray(m_frac, dtype=float)
    a2 = 1.0 - a1
    R = infimum
    th = 2 * mu / 7
    e = (7 - 2 * mu) / 3
    mix = x ** (7 / 3) + (1 - x) ** (7 / 3)
    l0 = R * (a1 ** (2 * mu / 3) * x**e + a2 ** (2 * mu / 3) * (1 - x) ** e)
    l1 = R * (a1 ** (7 / 3) + a2 ** (7 / 3)) ** th * mix ** (1 - th)
    l2 = R * (a1 + a2) ** th * mix ** (1 - th)
    l3 = R * mix ** (1 - th)
    l4 = R * (1 - 7 / 3 * x * (1 - x)) ** (1 - th)
    l5 = R - e * x * (1 - x) * R
    return np.stack([l0, l1, l2, l3, l4, l5], axis=-1)
