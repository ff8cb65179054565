"""Desk-scale numerics for the mean-field limit of 2D focusing bosons."""
from .hermite import (GridSpec, HermiteBasis, Mode2D, dim_leq, enumerate_modes,
                      grid_to_spectral, mode_eigenvalue, spectral_to_grid)
from .interaction import InteractionSpec

__version__ = "0.1.0"
