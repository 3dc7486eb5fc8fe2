"""
Newtonian gravity of radial densities.

All interaction integrals share one discrete bilinear form

    B(rho, sigma) = sum_ij V_i V_j rho_i sigma_j / max(r_i, r_j),

with V_i the nodal volumes of the grid.  This is the node-weighted
version of int int rho(x) sigma(y) / |x - y| after the angular average
(Newton's theorem).  The potential, enclosed mass, field and energy are
the matching discrete objects, so

    E_pot(rho) = -B(rho, rho)/2 = 1/2 sum_i V_i rho_i U_i
               = -1/2 [ sum_i m_i^2 (1/r_i - 1/r_{i+1}) + M^2 / r_max ]

hold to rounding, and B is exactly bilinear and symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .radial import RadialGrid, RadialDensity, write_csv, _readonly


@dataclass(frozen=True)
class PotentialProfile:
    grid: RadialGrid
    u: np.ndarray
    m_enc: np.ndarray
    field: np.ndarray

    @property
    def total_mass(self):
        return float(self.m_enc[-1])

    def potential_at(self, r):
        """U at arbitrary radii; -M/r outside the grid."""
        r = np.asarray(r, dtype=float)
        inside = np.interp(r, self.grid.nodes, self.u)
        outside = -self.total_mass / np.maximum(r, self.grid.r_max)
        out = np.where(r <= self.grid.r_max, inside, outside)
        return out if out.ndim else float(out)

    def save(self, path, rho):
        write_csv(path, [self.grid.nodes, rho.values, self.u, self.m_enc],
                  ["r", "rho", "U", "m_enc"])


def _check_same_grid(a, b):
    if not a.grid.same_as(b.grid):
        raise InvalidArgument("densities live on different grids")


def enclosed_mass_values(grid, values):
    """Cumulative nodal mass; works for signed values too."""
    return np.cumsum(grid.volumes * values)


def potential_values(grid, values):
    """U_i = -m_i/r_i - sum_{j>i} V_j rho_j / r_j."""
    r = grid.nodes
    m = enclosed_mass_values(grid, values)
    outer = grid.volumes * values / r
    # reverse cumulative sum over j > i
    beyond = np.concatenate([np.cumsum(outer[::-1])[::-1][1:], [0.0]])
    return -m / r - beyond


def radial_energy_values(grid, values):
    """-1/2 int_0^inf m(r)^2 / r^2 dr with m held at m_i on [r_i, r_{i+1})."""
    r = grid.nodes
    m = enclosed_mass_values(grid, values)
    dinv = 1.0 / r[:-1] - 1.0 / r[1:]
    return -0.5 * (np.dot(m[:-1] ** 2, dinv) + m[-1] ** 2 / r[-1])


def solve_potential(rho):
    """Potential, enclosed mass and field magnitude of ``rho``."""
    grid = rho.grid
    m = enclosed_mass_values(grid, rho.values)
    u = potential_values(grid, rho.values)
    return PotentialProfile(grid, _readonly(u), _readonly(m),
                            _readonly(m / grid.nodes**2))


def epot(rho):
    """Potential energy -1/2 int int rho rho / |x-y|, via the m^2/r^2 form."""
    return float(radial_energy_values(rho.grid, rho.values))


def epot_field(profile):
    """-(1/8pi) int |grad U|^2 dx, reconstructed from the potential alone.

    On each cell the field is m/r^2 with m recovered from the jump of U
    across the cell; beyond the grid it is the point-mass field.
    """
    r = profile.grid.nodes
    du = np.diff(profile.u)
    dinv = 1.0 / r[:-1] - 1.0 / r[1:]
    m_cell = du / dinv
    m_out = -profile.u[-1] * r[-1]
    return float(-0.5 * (np.dot(m_cell**2, dinv) + m_out**2 / r[-1]))


def epot_potential(rho, profile=None):
    """1/2 int rho U dx."""
    profile = profile or solve_potential(rho)
    return float(0.5 * np.dot(rho.grid.volumes * rho.values, profile.u))


def epot_pair(rho1, rho2):
    """int int rho1(x) rho2(y) / |x-y| dx dy; nonnegative and symmetric."""
    _check_same_grid(rho1, rho2)
    u2 = potential_values(rho2.grid, rho2.values)
    return float(-np.dot(rho1.grid.volumes * rho1.values, u2))


def cutoff_kernel(r, s, cutoff):
    """Angular average of min(1/|x-y|, c) for |x| = r, |y| = s.

    Closed form of (1/(2rs)) int_{|r-s|}^{r+s} min(1, c d) dd; equals c
    when r + s <= 1/c and 1/max(r, s) when |r - s| >= 1/c.
    """
    r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
    lo, hi = np.abs(r - s), r + s
    if np.isinf(cutoff):
        return 1.0 / np.maximum(r, s)
    dstar = 1.0 / cutoff
    below = 0.5 * cutoff * (hi**2 - lo**2)
    above = hi - lo
    mixed = 0.5 * cutoff * (dstar**2 - lo**2) + (hi - dstar)
    integral = np.where(hi <= dstar, below, np.where(lo >= dstar, above, mixed))
    return integral / (2.0 * r * s)


def epot_cutoff(rho, cutoff):
    """int int rho(x) rho(y) min(1/|x-y|, c) dx dy.

    Bounded above by both c*M^2 and :func:`epot_pair` (rho, rho), and
    nondecreasing in c.
    """
    if not cutoff > 0:
        raise InvalidArgument(f"cutoff must be positive, got {cutoff}")
    q = rho.grid.volumes * rho.values
    nz = np.nonzero(q)[0]
    if nz.size == 0:
        return 0.0
    r = rho.grid.nodes[nz]
    k = cutoff_kernel(r[:, None], r[None, :], cutoff)
    return float(q[nz] @ k @ q[nz])
