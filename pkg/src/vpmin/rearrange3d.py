"""
Symmetric decreasing rearrangement and pair interactions on small
Cartesian grids.

Cell (i, j, k) of a grid with ``dims`` cells of edge ``h`` has its centre
at ``origin + h * (idx - (dims - 1)/2)``, so ``origin`` is the geometric
centre of the grid.  Distances to the centre are ordered with the exact
integer key sum (2 idx - (dims - 1))^2, ties broken by lexicographic
cell index.

Interactions are direct double sums over cell pairs weighted by h^6.  A
cell paired with itself is assigned the kernel value at distance h/2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument
from .radial import SCHEMA_VERSION, RadialDensity, make_grid

MAX_CELLS_PER_AXIS = 32
DENSE_LIMIT = 4096


@dataclass(frozen=True)
class CartesianDensity:
    values: np.ndarray
    cell: float = 1.0
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3:
            raise InvalidArgument("Cartesian density must be three dimensional")
        if max(v.shape) > MAX_CELLS_PER_AXIS:
            raise InvalidArgument(f"grids are capped at {MAX_CELLS_PER_AXIS} cells per axis")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidArgument("density values must be finite and nonnegative")
        if not self.cell > 0:
            raise InvalidArgument("cell size must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))

    @property
    def dims(self):
        return self.values.shape

    @property
    def mass(self):
        return float(self.values.sum() * self.cell**3)

    def lp_norm(self, p):
        return float((self.values**p).sum() * self.cell**3) ** (1.0 / p)

    def same_geometry(self, other):
        return (self.dims == other.dims and self.cell == other.cell
                and self.origin == other.origin)

    def with_values(self, values):
        return CartesianDensity(values, self.cell, self.origin)

    def centres(self):
        """Cell centre coordinates, shape dims + (3,)."""
        return self.origin + self.cell * _offsets(self.dims)

    def radii(self):
        return np.sqrt(_dist2_key(self.dims)) * (0.5 * self.cell)

    def save(self, csv_path, json_path):
        idx = np.indices(self.dims).reshape(3, -1).T
        with open(csv_path, "w", newline="") as fh:
            fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ix", "iy", "iz", "value"])
            for (i, j, k), v in zip(idx, self.values.ravel()):
                w.writerow([i, j, k, format(float(v), ".17g")])
        with open(json_path, "w") as fh:
            json.dump({"schema_version": SCHEMA_VERSION, "dims": list(self.dims),
                       "cell": self.cell, "origin": list(self.origin)}, fh, indent=2)

    @classmethod
    def load(cls, csv_path, json_path):
        with open(json_path) as fh:
            head = json.load(fh)
        values = np.zeros(head["dims"])
        with open(csv_path, newline="") as fh:
            rows = csv.reader(line for line in fh if not line.startswith("#"))
            next(rows)
            for i, j, k, v in rows:
                values[int(i), int(j), int(k)] = float(v)
        return cls(values, head["cell"], tuple(head["origin"]))


def _offsets(dims):
    idx = np.indices(dims, dtype=float)
    half = (np.array(dims, dtype=float) - 1) / 2
    return np.moveaxis(idx - half[:, None, None, None], 0, -1)


def _dist2_key(dims):
    """Integer (2 idx - (n-1))^2 summed over axes: 4 |x - centre|^2 / h^2."""
    idx = np.indices(dims)
    n = np.array(dims)[:, None, None, None]
    return np.sum((2 * idx - (n - 1)) ** 2, axis=0)


@lru_cache(maxsize=16)
def _distance_order(dims):
    key = _dist2_key(dims).ravel()
    flat = np.arange(key.size)
    # lexsort: last key is primary; flat index order equals lexicographic (i, j, k)
    return np.lexsort((flat, key))


def rearrange(rho):
    """Discrete symmetric decreasing rearrangement.

    Values sorted in decreasing order go to cells sorted by increasing
    distance from the grid centre; the multiset of values is unchanged.
    """
    order = _distance_order(rho.dims)
    vals = np.sort(rho.values.ravel())[::-1]
    out = np.empty(vals.size)
    out[order] = vals
    return rho.with_values(out.reshape(rho.dims))


def translate(rho, shift):
    """Move the values by an integer cell vector; never drops mass."""
    shift = tuple(int(s) for s in shift)
    if len(shift) != 3:
        raise InvalidArgument("shift must have three components")
    v = rho.values
    out = np.zeros_like(v)
    src, dst = [], []
    for s, n in zip(shift, rho.dims):
        if abs(s) >= n:
            src.append(slice(0, 0))
            dst.append(slice(0, 0))
        elif s >= 0:
            src.append(slice(0, n - s))
            dst.append(slice(s, n))
        else:
            src.append(slice(-s, n))
            dst.append(slice(0, n + s))
    out[tuple(dst)] = v[tuple(src)]
    if np.count_nonzero(out) != np.count_nonzero(v):
        raise InvalidArgument("translation would push mass off the grid")
    return rho.with_values(out)


def _kernel_of_distance(d, cutoff):
    inv = 1.0 / d
    if cutoff is None:
        return inv
    return np.minimum(inv, cutoff)


@lru_cache(maxsize=8)
def _pair_distances(dims, cell):
    x = (_offsets(dims) * cell).reshape(-1, 3)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, 0.5 * cell)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=16)
def _kernel_matrix(dims, cell, cutoff):
    k = _kernel_of_distance(_pair_distances(dims, cell), cutoff)
    k.setflags(write=False)
    return k


def _parse_kernel(kernel):
    if kernel is None or kernel == "coulomb":
        return None
    c = float(kernel)
    if not c > 0:
        raise InvalidArgument("cutoff must be positive")
    return c


def interaction(a, b, kernel="coulomb"):
    """h^6 sum_ij a_i b_j k(|x_i - x_j|) with k = 1/d or min(1/d, c).

    ``kernel`` is ``"coulomb"`` or a positive cutoff value c.
    """
    if not a.same_geometry(b):
        raise InvalidArgument("densities have different grid geometry")
    c = _parse_kernel(kernel)
    av, bv = a.values.ravel(), b.values.ravel()
    w = a.cell**6
    if av.size <= DENSE_LIMIT:
        return float(av @ _kernel_matrix(a.dims, a.cell, c) @ bv) * w
    x = (_offsets(a.dims) * a.cell).reshape(-1, 3)
    total = 0.0
    for start in range(0, av.size, 512):
        xs = x[start:start + 512]
        d = np.sqrt(((xs[:, None, :] - x[None, :, :]) ** 2).sum(-1))
        rows = np.arange(xs.shape[0])
        d[rows, start + rows] = 0.5 * a.cell
        total += float(av[start:start + 512] @ _kernel_of_distance(d, c) @ bv)
    return total * w


def epot(rho):
    """-1/2 of the Coulomb self-interaction."""
    return -0.5 * interaction(rho, rho)


def _masked_sums(rho, mask):
    """sum over masked pairs of rho_i rho_j and of rho_i rho_j / d_ij (h^6 weighted)."""
    v = rho.values.ravel()
    d = _pair_distances(rho.dims, rho.cell)
    w = rho.cell**6
    outer = np.where(mask, np.outer(v, v), 0.0)
    return float(outer.sum()) * w, float((outer / d).sum()) * w


def confinement_decomposition(rho, r0, r_big):
    """Terms A, B, C bounding the cutoff-kernel gain of the rearrangement.

    With c = 1/(2 r0) and rho* = rearrange(rho):

        A = (c - 1/r_big) sum over |x-y| >= r_big of rho rho
        B = sum over (|x| >= r0 or |y| >= r0) and |x-y| >= 2 r0 of rho* rho* / |x-y|
        C = c * sum over the same region of rho* rho*

    Distances |x| are measured from the grid centre; self pairs never
    enter the regions.
    """
    if not r_big > 2 * r0:
        raise InvalidArgument("need r_big > 2 r0")
    if rho.values.size > DENSE_LIMIT:
        raise InvalidArgument("confinement decomposition supports at most 16^3 cells")
    c = 1.0 / (2.0 * r0)
    d = _pair_distances(rho.dims, rho.cell)
    n = d.shape[0]
    offdiag = ~np.eye(n, dtype=bool)
    far = (d >= r_big) & offdiag
    s_far, _ = _masked_sums(rho, far)
    a_term = (c - 1.0 / r_big) * s_far
    star = rearrange(rho)
    radius = star.radii().ravel()
    outside = radius >= r0
    region = (outside[:, None] | outside[None, :]) & (d >= 2 * r0) & offdiag
    s_reg, s_reg_inv = _masked_sums(star, region)
    return a_term, s_reg_inv, c * s_reg


def confinement_check(rho, r0, r_big):
    """(lhs, rhs) of 2 E_pot(rho) - 2 E_pot(rho*) >= A + B - C."""
    a_term, b_term, c_term = confinement_decomposition(rho, r0, r_big)
    star = rearrange(rho)
    lhs = interaction(star, star) - interaction(rho, rho)
    return lhs, a_term + b_term - c_term


def radial_project(rho, n_nodes=None):
    """Radial profile carrying the cell masses in order of centre distance.

    Cells are laid out along the volume coordinate V = 4 pi r^3 / 3 in
    order of distance from the centre, each occupying h^3.  A uniform
    radial grid reaching the radius of the total grid volume assigns
    every node the mass in its own volume share, and the nodal value is
    that mass over the node volume.  Total mass is preserved, and an
    input that decreases with distance gives a nonincreasing profile.
    """
    n_cells = rho.values.size
    h3 = rho.cell**3
    if n_nodes is None:
        n_nodes = max(16, 4 * max(rho.dims))
    r_max = (3.0 * n_cells * h3 / (4.0 * np.pi)) ** (1.0 / 3.0)
    grid = make_grid(r_max, n_nodes, "uniform")
    order = _distance_order(rho.dims)
    v = rho.values.ravel()[order]
    cum_mass = np.concatenate([[0.0], np.cumsum(v * h3)])
    cum_vol = np.arange(n_cells + 1) * h3
    node_cum = np.cumsum(grid.volumes)
    node_cum *= cum_vol[-1] / node_cum[-1]
    node_cum[-1] = cum_vol[-1]
    f = np.interp(node_cum, cum_vol, cum_mass)
    node_mass = np.diff(np.concatenate([[0.0], f]))
    node_mass[-1] += cum_mass[-1] - f[-1]
    return RadialDensity(grid, np.maximum(node_mass, 0.0) / grid.volumes)


def random_density(dims, rng, cell=None, total_mass=1.0, sparsity=None):
    """iid uniform cell values, a random fraction zeroed, scaled to ``total_mass``.

    The default cell size makes the longest axis span unit length.
    """
    if cell is None:
        cell = 1.0 / max(dims)
    v = rng.uniform(0.0, 1.0, size=dims)
    keep = rng.uniform(0.1, 1.0) if sparsity is None else 1.0 - sparsity
    v *= rng.uniform(size=dims) < keep
    if not v.any():
        v.flat[rng.integers(v.size)] = 1.0
    v *= total_mass / (v.sum() * cell**3)
    return CartesianDensity(v, cell)


def ball(dims, radius, cell=1.0, centre_shift=(0, 0, 0), value=1.0):
    """Cells whose centre lies within ``radius`` of the (shifted) grid centre."""
    x = _offsets(dims) * cell - np.asarray(centre_shift, dtype=float) * cell
    inside = (x**2).sum(-1) <= radius**2 * (1 + 1e-12)
    return CartesianDensity(np.where(inside, value, 0.0), cell)
