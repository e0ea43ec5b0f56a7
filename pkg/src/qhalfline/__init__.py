"""Momentum measurement on the half line: operators, Naimark extension, covariant POVMs and a kick model."""

from .errors import *  # noqa: F401,F403
from .grid import (
    HALF_LINE,
    WHOLE_LINE,
    Grid,
    MomentumGrid,
    WaveFunction,
    fourier_synthesis,
    inner_product,
    make_grid,
    momentum_grid,
    normalize,
    nyquist_momentum_grid,
)

__version__ = "0.1.0"
