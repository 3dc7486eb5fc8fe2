"""
Convergence diagnostics for sequences of radial densities.

Every quantity is computed on the signed difference sigma = rho_n - rho_0,
which is the only place in the package where signed densities appear.
The field distance uses the same piecewise-constant enclosed mass as
``gravity.radial_energy_values``, so that

    -8 pi E_pot(sigma) = || grad U_sigma ||_2^2

holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidArgument
from .gravity import radial_energy_values
from .radial import RadialDensity, psi_exponent, write_csv, uniform_ball


@dataclass(frozen=True)
class SequenceReport:
    index: int
    epot_diff: float
    tail_mass_n: float
    lp_dist: float
    field_dist: float

    def to_dict(self):
        return asdict(self)


def _grid_values(rho, grid=None):
    if grid is not None and not rho.grid.same_as(grid):
        raise InvalidArgument("densities live on different grids")
    return rho.values


def _field_dist_sq(grid, sigma):
    return -8.0 * np.pi * radial_energy_values(grid, sigma)


def field_distance(rho_a, rho_b):
    """L^2 distance of the gravitational fields of two radial densities.

    (4 pi int (m_a - m_b)^2 / r^2 dr)^(1/2) with the enclosed masses held
    constant between nodes and continued as point masses beyond r_max.
    """
    grid = rho_a.grid
    sigma = rho_a.values - _grid_values(rho_b, grid)
    return float(np.sqrt(max(_field_dist_sq(grid, sigma), 0.0)))


def signed_epot(grid, sigma):
    """E_pot of a signed nodal density (always <= 0)."""
    return float(radial_energy_values(grid, np.asarray(sigma, dtype=float)))


def sequence_report(rho_seq, rho_limit, R, mu, indices=None):
    """Per-element distances of ``rho_seq`` from ``rho_limit``.

    Parameters
    ----------
    rho_seq : sequence of RadialDensity or ndarray
        Plain arrays are read as nodal values on the limit's grid.
    rho_limit : RadialDensity
    R : float
        Radius beyond which the tail mass is measured.
    mu : float
        Sets the L^p exponent p = (2mu+5)/(2mu+3).
    indices : sequence of int, optional
        Labels for the reports; defaults to 1, 2, ...
    """
    if len(rho_seq) == 0:
        raise InvalidArgument("empty sequence")
    if not R > 0:
        raise InvalidArgument("R must be positive")
    grid = rho_limit.grid
    p = psi_exponent(mu)
    vol = grid.volumes
    outside = grid.nodes >= R
    if indices is None:
        indices = range(1, len(rho_seq) + 1)
    out = []
    for k, rho_n in zip(indices, rho_seq):
        v = rho_n if isinstance(rho_n, np.ndarray) else _grid_values(rho_n, grid)
        sigma = v - rho_limit.values
        e = signed_epot(grid, sigma)
        out.append(SequenceReport(
            index=int(k),
            epot_diff=e,
            tail_mass_n=float(np.dot(vol[outside], v[outside])),
            lp_dist=float(np.dot(vol, np.abs(sigma) ** p)) ** (1 / p),
            field_dist=float(np.sqrt(max(-8.0 * np.pi * e, 0.0))),
        ))
    return out


def save_reports(reports, path):
    cols = [[getattr(r, f) for r in reports]
            for f in ("index", "epot_diff", "tail_mass_n", "lp_dist", "field_dist")]
    write_csv(path, cols, ["n", "epot_diff", "tail_mass", "lp_dist", "field_dist"])


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log x."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# constructed sequences -------------------------------------------------------

def _shell(grid, centre, width):
    return np.exp(-0.5 * ((grid.nodes - centre) / width) ** 2)


def bump_sequence(rho0, ns, R, bump_radius=None, width=None, bump_fraction=0.1):
    """rho_n = (rho0 + bump/n) renormalized to the mass of rho0.

    The bump is a Gaussian shell inside B_R carrying ``bump_fraction`` of
    the mass of rho0.  Then rho_n - rho0 = (bump - f rho0)/(n + f), so
    E_pot(rho_n - rho0) = O(1/n^2); a small f keeps the pre-asymptotic
    shift of the measured rate small.
    """
    grid = rho0.grid
    vol = grid.volumes
    M = float(np.dot(vol, rho0.values))
    bump_radius = 0.5 * R if bump_radius is None else bump_radius
    width = 0.1 * R if width is None else width
    bump = _shell(grid, bump_radius, width) * (grid.nodes <= R)
    bump *= bump_fraction * M / float(np.dot(vol, bump))
    seq = []
    for n in ns:
        v = rho0.values + bump / n
        seq.append(RadialDensity(grid, v * (M / float(np.dot(vol, v)))))
    return seq


def escaping_sequence(rho0, ns, far_radius, width=None):
    """rho_n = (1 - t_n) rho0 + t_n * shell(far_radius) with t_n = n^-1/2.

    Mass t_n sits outside any R below the shell, and E_pot(rho_n - rho0)
    is exactly t_n^2 E_pot(shell - rho0), i.e. O(1/n).
    """
    grid = rho0.grid
    vol = grid.volumes
    M = float(np.dot(vol, rho0.values))
    width = 0.05 * far_radius if width is None else width
    shell = _shell(grid, far_radius, width)
    shell *= M / float(np.dot(vol, shell))
    seq = []
    for n in ns:
        t = 1.0 / np.sqrt(n)
        seq.append(RadialDensity(grid, (1 - t) * rho0.values + t * shell))
    return seq


def reference_ball(grid, mass=1.0, radius=1.0):
    return uniform_ball(grid, mass, radius)
