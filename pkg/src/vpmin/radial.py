"""
Radial grids and spherically symmetric densities.

A density is stored by its values at the grid nodes.  Integrals of the
form 4*pi * int g(r) r^2 dr are evaluated with fixed per-node volume
weights obtained by integrating the piecewise-linear interpolant of g
against r^2 exactly on every cell; on the core [0, r_0] g is held at
its first nodal value.  The rule is second order and exact for g = 1.
Because every volume integral is a weighted sum over nodes, quantities
such as mass and Psi are exactly additive over densities with disjoint
nodal support.

Densities are zero beyond the last node.  Units use G = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ConstraintViolation

SCHEMA_VERSION = 1
MIN_NODES = 16
LOG_RMIN_FRACTION = 1e-6
MASS_RTOL = 1e-6


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _shell_weights(nodes):
    """Per-node values of int hat_i(r) r^2 dr (hat functions on the nodes)."""
    r = nodes
    w = np.zeros_like(r)
    w[0] = r[0] ** 3 / 3.0
    a, b = r[:-1], r[1:]
    h = b - a
    left = h * (6 * a * a + 4 * a * h + h * h) / 12.0
    right = h * (6 * a * a + 8 * a * h + 3 * h * h) / 12.0
    w[:-1] += left
    w[1:] += right
    return w


@dataclass(frozen=True)
class RadialGrid:
    """Ordered radii with volume quadrature.

    Attributes
    ----------
    nodes : ndarray
        Strictly increasing positive radii.
    quad_weights : ndarray
        Weights for int_0^{r_max} f(r) dr, exact for f(r) = r^2.
    spacing_kind : str
        ``"uniform"``, ``"log"`` or ``"custom"``.
    """

    nodes: np.ndarray
    quad_weights: np.ndarray = field(repr=False)
    spacing_kind: str = "custom"

    @classmethod
    def from_nodes(cls, nodes, spacing_kind="custom"):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgument("grid needs at least two nodes")
        if not np.all(np.isfinite(nodes)) or nodes[0] <= 0:
            raise InvalidArgument("grid nodes must be finite and positive")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgument("grid nodes must be strictly increasing")
        weights = _shell_weights(nodes) / nodes**2
        return cls(_readonly(nodes), _readonly(weights), spacing_kind)

    @property
    def n(self):
        return self.nodes.size

    @property
    def r_max(self):
        return float(self.nodes[-1])

    @property
    def volumes(self):
        """Volume 4*pi*w_i*r_i^2 carried by each node."""
        return 4.0 * np.pi * self.quad_weights * self.nodes**2

    def integrate(self, f):
        """int_0^{r_max} f(r) dr for nodal samples ``f``."""
        return float(np.dot(self.quad_weights, f))

    def scaled(self, factor):
        """Grid with every radius multiplied by ``factor``."""
        return RadialGrid.from_nodes(self.nodes * factor, self.spacing_kind)

    def same_as(self, other):
        return self is other or (
            self.n == other.n and np.array_equal(self.nodes, other.nodes))


def make_grid(r_max, n, spacing_kind="log"):
    """Build a radial grid on (0, r_max].

    ``uniform`` places nodes at r_max * i/(n-1) for i = 1..n-1 and moves
    the would-be node at zero out to half a spacing.  ``log`` spaces n
    nodes geometrically between r_max*1e-6 and r_max.
    """
    if not np.isfinite(r_max) or r_max <= 0:
        raise InvalidArgument(f"r_max must be positive, got {r_max}")
    if int(n) != n or n < MIN_NODES:
        raise InvalidArgument(f"need at least {MIN_NODES} nodes, got {n}")
    n = int(n)
    if spacing_kind == "uniform":
        nodes = np.linspace(0.0, r_max, n)
        nodes[0] = 0.5 * nodes[1]
    elif spacing_kind == "log":
        nodes = np.geomspace(r_max * LOG_RMIN_FRACTION, r_max, n)
        nodes[-1] = r_max
    else:
        raise InvalidArgument(f"unknown spacing kind {spacing_kind!r}")
    return RadialGrid.from_nodes(nodes, spacing_kind)


@dataclass(frozen=True)
class RadialDensity:
    """Nonnegative nodal density on a radial grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.shape != self.grid.nodes.shape:
            raise InvalidArgument("values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("density values must be finite")
        if np.any(v < 0):
            raise InvalidArgument("density values must be nonnegative")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    @property
    def r(self):
        return self.grid.nodes

    def with_values(self, values):
        return RadialDensity(self.grid, values)

    def __mul__(self, a):
        return RadialDensity(self.grid, a * self.values)

    __rmul__ = __mul__


def uniform_ball(grid, mass=1.0, radius=1.0):
    """Constant density 3M/(4 pi R^3) on r < R with an exact total mass.

    The interpolant of a sampled indicator loses or gains O(h) mass at
    the edge, so the node at the edge carries the value that makes the
    nodal mass equal ``mass``.
    """
    rho_c = 3.0 * mass / (4.0 * np.pi * radius**3)
    r = grid.nodes
    vol = grid.volumes
    inside = r < radius * (1 - 1e-12)
    values = np.where(inside, rho_c, 0.0)
    if not inside.any() or inside.all():
        return RadialDensity(grid, values)
    j = int(np.argmin(inside))
    deficit = mass - float(np.dot(vol, values))
    if deficit >= 0:
        values[j] = deficit / vol[j]
    else:
        values[j - 1] = max(rho_c + deficit / vol[j - 1], 0.0)
    return RadialDensity(grid, values)


def mass(rho):
    return float(np.dot(rho.grid.volumes, rho.values))


def lp_norm(rho, p):
    if p < 1:
        raise InvalidArgument(f"L^p norm needs p >= 1, got {p}")
    return float(np.dot(rho.grid.volumes, rho.values**p)) ** (1.0 / p)


def psi_exponent(mu):
    """(2mu+5)/(2mu+3), the power of rho inside Psi."""
    check_mu(mu)
    return (2 * mu + 5) / (2 * mu + 3)


def check_mu(mu):
    if not (0 < mu < 3.5):
        raise InvalidArgument(f"mu must lie in (0, 7/2), got {mu}")


def psi(rho, mu):
    """int rho^((2mu+5)/(2mu+3)) dx."""
    p = psi_exponent(mu)
    return float(np.dot(rho.grid.volumes, rho.values**p))


def in_constraint_set(rho, mu, target_mass, rtol=MASS_RTOL):
    """Whether ``rho`` belongs to F_M: mass ``target_mass`` and finite Psi."""
    m = mass(rho)
    return bool(abs(m - target_mass) <= rtol * abs(target_mass)
                and np.isfinite(psi(rho, mu)))


def require_constraint_set(rho, mu, target_mass, rtol=MASS_RTOL):
    if not in_constraint_set(rho, mu, target_mass, rtol):
        raise ConstraintViolation(
            f"density has mass {mass(rho):.12g}, expected {target_mass:.12g}")


def rescale(rho, a, b):
    """Return r -> a * rho(b r), realized by shrinking the grid by ``b``.

    No resampling happens, so mass picks up a*b^-3 and Psi picks up
    a^p b^-3 to rounding.
    """
    if not (a > 0 and b > 0):
        raise InvalidArgument(f"rescale needs a, b > 0, got {a}, {b}")
    return RadialDensity(rho.grid.scaled(1.0 / b), a * rho.values)


def split_at(rho, r_split):
    """Split into the part on nodes r <= r_split and the remainder."""
    if r_split <= 0:
        raise InvalidArgument("split radius must be positive")
    inner = rho.grid.nodes <= r_split
    v = rho.values
    return (RadialDensity(rho.grid, np.where(inner, v, 0.0)),
            RadialDensity(rho.grid, np.where(inner, 0.0, v)))


def tail_mass(rho, r_split):
    """Mass carried by nodes with r > r_split."""
    if r_split <= 0:
        raise InvalidArgument("split radius must be positive")
    outer = rho.grid.nodes > r_split
    return float(np.dot(rho.grid.volumes[outer], rho.values[outer]))


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, columns, header, comment=None):
    """Write equal-length numeric columns with a schema comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(x) for x in row])


def read_csv(path):
    """Read a CSV written by :func:`write_csv` into a dict of arrays."""
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    data = np.array([[float(x) for x in row] for row in reader if row])
    data = data.reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def save_profile(rho, path):
    write_csv(path, [rho.r, rho.values], ["r", "rho"])


def load_profile(path, spacing_kind="custom"):
    cols = read_csv(path)
    grid = RadialGrid.from_nodes(cols["r"], spacing_kind)
    return RadialDensity(grid, cols["rho"])
