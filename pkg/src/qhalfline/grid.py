"""Uniform 1D lattices, wave functions on them, and the plane-wave functional.

Units are hbar = 1. Integrals use the rectangle rule with weight ``dx`` so
that operator matrices, POVM elements and the discrete Fourier transform stay
exactly consistent with each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AliasingError,
    DegenerateStateError,
    InvalidParameterError,
    InvalidStateError,
    ShapeError,
)

HALF_LINE = "half-line"
WHOLE_LINE = "whole-line"
DOMAIN_KINDS = (HALF_LINE, WHOLE_LINE)

MIN_POINTS = 16
NORMALIZED_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform lattice on ``[0, L)`` (half line) or ``[-L, L)`` (whole line).

    The left endpoint is included and the right endpoint excluded, so a
    whole-line grid is DFT compatible and a half-line grid starts at x = 0.
    """

    domain_kind: str
    L: float
    n: int

    @property
    def extent(self) -> float:
        return self.L if self.domain_kind == HALF_LINE else 2.0 * self.L

    @property
    def dx(self) -> float:
        return self.extent / self.n

    @property
    def x_min(self) -> float:
        return 0.0 if self.domain_kind == HALF_LINE else -self.L

    @property
    def points(self) -> np.ndarray:
        return self.x_min + np.arange(self.n) * self.dx

    @property
    def nyquist(self) -> float:
        return np.pi / self.dx

    @property
    def origin_index(self) -> int | None:
        """Index of the x = 0 sample, or None if the grid does not contain it."""
        k = -self.x_min / self.dx
        i = int(round(k))
        if abs(k - i) < 1e-9 and 0 <= i < self.n:
            return i
        return None

    def check_momentum(self, p) -> None:
        p = np.asarray(p, dtype=float)
        if p.size and np.max(np.abs(p)) > self.nyquist * (1 + 1e-12):
            raise AliasingError(
                f"momentum {np.max(np.abs(p)):.6g} exceeds the Nyquist bound {self.nyquist:.6g}"
            )


def make_grid(domain_kind: str, L: float, n: int) -> Grid:
    """Build a :class:`Grid`; ``dx = L/n`` on the half line and ``2L/n`` on the whole line."""
    if domain_kind not in DOMAIN_KINDS:
        raise InvalidParameterError(f"unknown domain kind {domain_kind!r}")
    if not np.isfinite(L) or L <= 0:
        raise InvalidParameterError(f"L must be positive, got {L}")
    if int(n) != n or n < MIN_POINTS:
        raise InvalidParameterError(f"n must be an integer >= {MIN_POINTS}, got {n}")
    return Grid(domain_kind, float(L), int(n))


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitudes of shape ``(n, d)`` on a grid; ``d`` is the fiber dimension."""

    grid: Grid
    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] != self.grid.n or a.shape[1] < 1:
            raise ShapeError(
                f"amplitudes of shape {np.shape(self.amplitudes)} do not fit a grid of {self.grid.n} points"
            )
        if not np.all(np.isfinite(a)):
            raise InvalidStateError("amplitudes must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        if self.normalized and abs(self.norm_squared() - 1.0) > NORMALIZED_TOL:
            raise InvalidStateError(
                f"state tagged normalized has squared norm {self.norm_squared():.15g}"
            )

    @property
    def fiber_dim(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def values(self) -> np.ndarray:
        """Amplitudes as a flat array (only for d = 1)."""
        if self.fiber_dim != 1:
            raise ShapeError("values is only defined for scalar wave functions")
        return self.amplitudes[:, 0]

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))

    def fiber_norms(self) -> np.ndarray:
        """Euclidean norm of each fiber, rescaled so tiny tail amplitudes do not underflow."""
        a = self.amplitudes
        scale = np.max(np.abs(a), axis=1)
        if a.shape[1] == 1:
            return scale
        safe = np.where(scale > 0, scale, 1.0)
        return scale * np.linalg.norm(a / safe[:, None], axis=1)

    def replace(self, amplitudes, normalized: bool = False) -> "WaveFunction":
        return WaveFunction(self.grid, amplitudes, normalized=normalized)


def inner_product(phi: WaveFunction, psi: WaveFunction) -> complex:
    """Rectangle-rule quadrature of the L2 inner product, conjugate-linear in ``phi``."""
    if phi.grid != psi.grid or phi.fiber_dim != psi.fiber_dim:
        raise ShapeError("inner product needs states on the same grid and fiber")
    return complex(np.vdot(phi.amplitudes, psi.amplitudes) * phi.grid.dx)


def normalize(psi: WaveFunction) -> WaveFunction:
    nrm = psi.norm()
    if nrm == 0.0:
        raise DegenerateStateError("cannot normalize the zero vector")
    out = WaveFunction(psi.grid, psi.amplitudes / nrm)
    if abs(out.norm_squared() - 1.0) > NORMALIZED_TOL:
        raise DegenerateStateError("normalization lost precision")
    return WaveFunction(psi.grid, out.amplitudes, normalized=True)


def fourier_synthesis(grid: Grid, p: float) -> WaveFunction:
    """Sampled plane wave ``exp(ipx)/sqrt(2 pi)``, used as an analysis functional."""
    grid.check_momentum(p)
    return WaveFunction(grid, np.exp(1j * p * grid.points) / np.sqrt(2 * np.pi))


@dataclass(frozen=True)
class MomentumGrid:
    """Outcome bin centres ``(j - (count-1)/2) * dp`` for ``j = 0 .. count-1``."""

    dp: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.dp) or self.dp <= 0:
            raise InvalidParameterError(f"dp must be positive, got {self.dp}")
        if int(self.count) != self.count or self.count < 1:
            raise InvalidParameterError(f"count must be a positive integer, got {self.count}")

    @property
    def points(self) -> np.ndarray:
        return (np.arange(self.count) - (self.count - 1) / 2.0) * self.dp

    @property
    def p_max(self) -> float:
        return (self.count - 1) / 2.0 * self.dp

    def index_of(self, p: float) -> int:
        k = p / self.dp + (self.count - 1) / 2.0
        j = int(round(k))
        if abs(k - j) > 1e-9 or not 0 <= j < self.count:
            raise InvalidParameterError(f"momentum {p} is not a bin centre")
        return j

    def interior(self, margin: float = 0.05) -> np.ndarray:
        """Boolean mask of bins farther than ``margin * p_max`` from either edge."""
        return np.abs(self.points) < (1.0 - margin) * self.p_max + 1e-12 * self.dp

    def is_complete_for(self, grid: Grid) -> bool:
        """True when the bins tile one full Brillouin zone of ``grid`` exactly."""
        return abs(self.count * self.dp * grid.dx - 2 * np.pi) < 1e-9 and self.count >= grid.n


def nyquist_momentum_grid(grid: Grid) -> MomentumGrid:
    """``n`` bins of width ``2 pi / (n dx)``: the discrete completeness relation is exact."""
    return MomentumGrid(2 * np.pi / (grid.n * grid.dx), grid.n)


def momentum_grid(dp: float, p_max: float) -> MomentumGrid:
    """Odd number of bins of width ``dp`` covering at least ``[-p_max, p_max]``, centred on 0."""
    half = int(np.ceil(p_max / dp - 1e-9))
    return MomentumGrid(dp, 2 * half + 1)
