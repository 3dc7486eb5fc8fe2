"""Numerical minimizers of the reduced gravitational energy and checks of
the identities and inequalities around them."""

from .errors import InvalidArgument, ConstraintViolation, NumericFailure, GridTooSmall
from .radial import RadialGrid, RadialDensity, make_grid, mass, psi
from .reduced import ModelParams, energy, scaling_factor, scaling_map
from .minimizer import minimize, lane_emden, predicted_polytrope

__version__ = "0.1.0"
