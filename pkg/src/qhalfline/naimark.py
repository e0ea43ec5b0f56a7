"""Two-sector extension of the half line: H+ (x) C^2, equivalently H+ (+) H-.

An :class:`ExtendedObject` keeps the two sectors as separate half-line blocks.
In the ``tensor`` picture both blocks are indexed by the half-line points
y_i >= 0. ``pi1_transform`` reflects the |1> sector, after which its block is
stored in increasing-coordinate order for the points ``-y_{n-1}, ..., -y_0``.
The shared x = 0 sample appears once per sector, so the map is an array
reversal and exactly unitary in the discrete inner product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, PictureError, ShapeError, StructureError
from .grid import HALF_LINE, Grid, MomentumGrid, WaveFunction, make_grid
from .operators import DIRICHLET, EXTENDED_MOMENTUM, DenseOperator, OperatorSpec
from .povm import build_povm, optimal_kernel

TENSOR = "tensor"
DIRECT_SUM = "direct-sum"


@dataclass(frozen=True, eq=False)
class ExtendedObject:
    """A state (1-D blocks) or block-diagonal operator (2-D blocks) on the extension."""

    plus: np.ndarray
    minus: np.ndarray
    grid: Grid
    picture: str = TENSOR

    def __post_init__(self):
        if self.grid.domain_kind != HALF_LINE:
            raise ShapeError("extended objects are built on a half-line grid")
        if self.picture not in (TENSOR, DIRECT_SUM):
            raise PictureError(f"unknown picture {self.picture!r}")
        plus, minus = np.array(self.plus, dtype=complex), np.array(self.minus, dtype=complex)
        n = self.grid.n
        if plus.shape != minus.shape or plus.shape not in ((n,), (n, n)):
            raise ShapeError(f"blocks of shapes {plus.shape} and {minus.shape} do not fit n = {n}")
        plus.setflags(write=False)
        minus.setflags(write=False)
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @property
    def is_operator(self) -> bool:
        return self.plus.ndim == 2

    def minus_points(self) -> np.ndarray:
        """Coordinates of the |1> block entries in the current picture."""
        y = self.grid.points
        return y if self.picture == TENSOR else -y[::-1]

    def inner(self, other: "ExtendedObject") -> complex:
        if self.is_operator or other.is_operator or other.picture != self.picture:
            raise PictureError("inner product needs two states in the same picture")
        return complex((np.vdot(self.plus, other.plus) + np.vdot(self.minus, other.minus)) * self.grid.dx)

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self).real))

    def apply(self, state: "ExtendedObject") -> "ExtendedObject":
        if not self.is_operator or state.is_operator:
            raise PictureError("apply needs an operator acting on a state")
        if state.picture != self.picture:
            raise PictureError("operator and state are in different pictures")
        return ExtendedObject(self.plus @ state.plus, self.minus @ state.minus, self.grid, self.picture)

    def dense(self) -> np.ndarray:
        """The 2n x 2n block-diagonal matrix (plus block first)."""
        if not self.is_operator:
            raise PictureError("dense() is for operators")
        n = self.grid.n
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        out[:n, :n] = self.plus
        out[n:, n:] = self.minus
        return out

    def to_whole_line(self, tol: float = 1e-12) -> WaveFunction:
        """Flatten a direct-sum state onto the whole-line grid ``[-L, L)``.

        Both sectors must vanish at x = 0 (the Dirichlet domain); the sample at
        x = -L, which has no half-line partner, is set to zero.
        """
        if self.picture != DIRECT_SUM or self.is_operator:
            raise PictureError("to_whole_line needs a state in the direct-sum picture")
        if abs(self.plus[0]) > tol or abs(self.minus[-1]) > tol:
            raise StructureError("both sectors must vanish at x = 0 to share that sample")
        n = self.grid.n
        whole = make_grid("whole-line", self.grid.L, 2 * n)
        amp = np.zeros(2 * n, dtype=complex)
        amp[n:] = self.plus
        amp[1:n] = self.minus[:-1]
        return WaveFunction(whole, amp)


def from_whole_line(psi: WaveFunction, half_grid: Grid) -> ExtendedObject:
    """Inverse of :meth:`ExtendedObject.to_whole_line` (direct-sum picture)."""
    n = half_grid.n
    if psi.grid.n != 2 * n or psi.grid.domain_kind != "whole-line" or abs(psi.grid.dx - half_grid.dx) > 1e-12:
        raise ShapeError("whole-line grid must be the two-sector union of the half-line grid")
    v = psi.values
    minus = np.zeros(n, dtype=complex)
    minus[:-1] = v[1:n]
    return ExtendedObject(v[n:], minus, half_grid, DIRECT_SUM)


def extend_momentum(p_plus: DenseOperator) -> ExtendedObject:
    """``p+ (x) |0><0| - p+ (x) |1><1|`` in the tensor picture."""
    if p_plus.boundary != DIRICHLET or p_plus.grid.domain_kind != HALF_LINE:
        raise ConfigurationError("extension needs the half-line momentum with psi(0) = 0")
    return ExtendedObject(p_plus.matrix, -p_plus.matrix, p_plus.grid, TENSOR)


def momentum_descriptor(ext: ExtendedObject, tol: float = 1e-12) -> OperatorSpec:
    """Symbolic descriptor of an extended momentum, read off from its block signs."""
    if not ext.is_operator:
        raise PictureError("descriptor needs an operator")
    t = ext if ext.picture == TENSOR else pi1_transform(ext, inverse=True)
    if np.max(np.abs(t.plus)) == 0:
        raise StructureError("plus block is empty")
    if np.max(np.abs(t.minus + t.plus)) <= tol:
        return EXTENDED_MOMENTUM
    raise StructureError("minus block is not the negated plus block")


def pi1_transform(obj: ExtendedObject, inverse: bool = False) -> ExtendedObject:
    """Reflect the |1> sector about x = 0 (tensor <-> direct-sum picture)."""
    want, target = (DIRECT_SUM, TENSOR) if inverse else (TENSOR, DIRECT_SUM)
    if obj.picture != want:
        raise PictureError(f"pi1_transform{' inverse' if inverse else ''} needs the {want} picture")
    minus = obj.minus[::-1, ::-1] if obj.is_operator else obj.minus[::-1]
    return ExtendedObject(obj.plus, minus, obj.grid, target)


def embed_halfline_state(psi_plus: WaveFunction, spin: int) -> ExtendedObject:
    if spin not in (0, 1):
        raise ShapeError("spin must be 0 or 1")
    if psi_plus.grid.domain_kind != HALF_LINE:
        raise ShapeError("embed needs a half-line state")
    v = psi_plus.values
    zero = np.zeros_like(v)
    plus, minus = (v, zero) if spin == 0 else (zero, v)
    return ExtendedObject(plus, minus, psi_plus.grid, TENSOR)


def odd_extension(psi_plus: WaveFunction) -> WaveFunction:
    """Odd-parity state ``(psi+ (x) |0> - psi+ (x) |1>)/sqrt 2`` flattened onto the whole line."""
    v = psi_plus.values / np.sqrt(2.0)
    ext = pi1_transform(ExtendedObject(v, -v, psi_plus.grid, TENSOR))
    return ext.to_whole_line()


def _as_tensor_blocks(m, n: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(m, ExtendedObject):
        if not m.is_operator:
            raise StructureError("partial trace needs operators")
        t = m if m.picture == TENSOR else pi1_transform(m, inverse=True)
        return t.plus, t.minus
    a = np.asarray(m)
    if a.shape != (2 * n, 2 * n):
        raise StructureError(f"expected a {2 * n}x{2 * n} matrix, got {a.shape}")
    scale = max(np.max(np.abs(a)), 1e-300)
    if max(np.max(np.abs(a[:n, n:])), np.max(np.abs(a[n:, :n]))) > 1e-12 * scale:
        raise StructureError("operator is not block diagonal in the sector basis")
    return a[:n, :n], a[n:, n:]


def partial_trace_spin(elements: Sequence, grid: Grid) -> list[np.ndarray]:
    """Average the two sectors of each outcome's element, on the half-line grid.

    Direct-sum inputs have their |1> block reflected back first; raw 2n x 2n
    matrices are read in tensor order. The factor 1/2 keeps a unit kernel
    diagonal at unit.
    """
    out = []
    for m in elements:
        plus, minus = _as_tensor_blocks(m, grid.n)
        out.append(0.5 * (plus + minus))
    return out


def _normalized_kernel(amplitudes: np.ndarray) -> np.ndarray:
    mags = np.abs(amplitudes)
    u = np.zeros_like(amplitudes, dtype=complex)
    ok = mags > 0
    u[ok] = amplitudes[ok] / mags[ok]
    k = np.outer(u, u.conj())
    k[~ok, ~ok] = 1.0
    return k


def extended_optimal_elements(psi_plus: WaveFunction, mgrid: MomentumGrid, bins: Sequence[int] | None = None) -> list[ExtendedObject]:
    """Optimal elements for the odd state ``(psi+, -psi+)`` in the direct-sum picture.

    Each sector gets the normalized kernel of its own component. The |1>
    sector lives on x <= 0, where a reading ``p`` of the extended momentum
    corresponds to the label ``-p`` of that sector's phase; with this choice
    the reflected blocks coincide with the |0> blocks.
    """
    grid = psi_plus.grid
    if grid.domain_kind != HALF_LINE:
        raise ShapeError("extended elements need a half-line state")
    plus = build_povm(optimal_kernel(psi_plus), mgrid, grid)
    xm = -grid.points[::-1]
    km = _normalized_kernel(-psi_plus.values[::-1])
    w = grid.dx * mgrid.dp / (2 * np.pi)
    out = []
    for j in range(mgrid.count) if bins is None else bins:
        e = np.exp(-1j * xm * mgrid.points[j])
        minus = e[:, None] * km * e.conj()[None, :] * w
        out.append(ExtendedObject(plus.element(j), minus, grid, DIRECT_SUM))
    return out
