"""Covariant POVMs generated by positive-definite kernels.

Conventions
-----------
A kernel ``K(x, x')`` maps the fiber at ``x'`` to the fiber at ``x`` and is
stored in Gram form: ``K(a, b) = G_a^H G_b + delta_ab D_a`` with ``G`` of shape
``(r, n, d)`` and an optional block-diagonal part ``D`` of shape ``(n, d, d)``.
Every such kernel is positive semidefinite by construction.

Outcome ``j`` of a :class:`CovariantPovm` is the operator matrix

    E_j[a, b] = K(a, b) exp(i (x_a - x_b) p_j) dx dp / (2 pi),

i.e. the kernel times ``dx`` so that matrices compose like operators and the
identity operator is the identity matrix. With these phases,
``V_p^H E_j V_p = E(p_j + p)`` for ``V_p = exp(-i p x)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import (
    BoundaryEffectWarning,
    InvalidDeviationError,
    InvalidKernelError,
    InvalidParameterError,
    InvalidStateError,
    NumericalFailure,
    ShapeError,
    SingularKernelWarning,
)
from .grid import Grid, MomentumGrid, WaveFunction, normalize

KERNEL_DIAG_TOL = 1e-10
KERNEL_PSD_TOL = 1e-6
ELEMENT_TOL = 1e-10
# Residual of sum_j E_j - I. Exact (round-off only) when the bins tile one
# Brillouin zone of the lattice; this is the acceptance target.
COMPLETENESS_TOL = 1e-3
STATE_NORM_TOL = 1e-8
RISK_AGREEMENT_TOL = 1e-8
BOUNDARY_MARGIN = 0.05

_CHUNK = 256


@dataclass(frozen=True, eq=False)
class Kernel:
    factor: np.ndarray
    diagonal: np.ndarray | None = None
    singular: tuple = ()

    def __post_init__(self):
        g = np.array(self.factor, dtype=complex)
        if g.ndim != 3:
            raise ShapeError("kernel factor must have shape (rank, n, d)")
        object.__setattr__(self, "factor", g)
        if self.diagonal is not None:
            dgl = np.array(self.diagonal, dtype=complex)
            if dgl.shape != (g.shape[1], g.shape[2], g.shape[2]):
                raise ShapeError("kernel diagonal must have shape (n, d, d)")
            object.__setattr__(self, "diagonal", dgl)

    @property
    def n(self) -> int:
        return self.factor.shape[1]

    @property
    def d(self) -> int:
        return self.factor.shape[2]

    @property
    def rank(self) -> int:
        return self.factor.shape[0]

    def dense(self) -> np.ndarray:
        r, n, d = self.factor.shape
        gm = self.factor.reshape(r, n * d)
        k = gm.conj().T @ gm
        if self.diagonal is not None:
            for a in range(n):
                k[a * d : (a + 1) * d, a * d : (a + 1) * d] += self.diagonal[a]
        return k

    def diagonal_blocks(self) -> np.ndarray:
        blocks = np.einsum("rak,ral->akl", self.factor.conj(), self.factor)
        if self.diagonal is not None:
            blocks = blocks + self.diagonal
        return blocks

    def unit_diagonal_defect(self) -> float:
        return float(np.max(np.abs(self.diagonal_blocks() - np.eye(self.d)[None])))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.dense())[0])

    @classmethod
    def from_dense(cls, k: np.ndarray, d: int = 1) -> "Kernel":
        """Factor an explicit ``(n d) x (n d)`` kernel matrix."""
        k = np.asarray(k, dtype=complex)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % d:
            raise ShapeError(f"kernel matrix of shape {k.shape} is not square in fibers of {d}")
        if np.max(np.abs(k - k.conj().T)) > KERNEL_DIAG_TOL:
            raise InvalidKernelError("kernel is not Hermitian")
        w, q = np.linalg.eigh(k)
        if w[0] < -KERNEL_PSD_TOL:
            raise InvalidKernelError(f"kernel is indefinite (min eigenvalue {w[0]:.3g})")
        keep = w > 1e-13 * max(w[-1], 1.0)
        g = np.sqrt(w[keep])[:, None] * q[:, keep].conj().T
        return cls(g.reshape(int(keep.sum()), k.shape[0] // d, d))


def identity_kernel(n: int, d: int = 1) -> Kernel:
    """``K(x, x') = delta_{xx'} I``: position-diagonal elements."""
    return Kernel(np.zeros((0, n, d)), np.broadcast_to(np.eye(d), (n, d, d)).copy())


def ones_kernel(n: int) -> Kernel:
    """``K = 1`` everywhere; on the whole line this is the projective momentum measurement."""
    return Kernel(np.ones((1, n, 1)))


def optimal_kernel(psi: WaveFunction) -> Kernel:
    """Normalized kernel ``psi_x psi_x'^H / (|psi_x| |psi_x'|)`` of a state.

    For fiber dimension d > 1 the diagonal blocks of that outer product are
    rank-one projectors, so the complement ``I - P_x`` is added on the block
    diagonal; it is orthogonal to ``psi_x`` and leaves every probability and
    characteristic function of ``psi`` unchanged. Where ``psi_x = 0`` the
    formula is undefined and the fiber falls back to the identity (a
    :class:`SingularKernelWarning` is issued).
    """
    a = psi.amplitudes
    norms = psi.fiber_norms()
    singular = np.flatnonzero(norms == 0.0)
    unit = np.zeros_like(a)
    ok = norms > 0
    unit[ok] = a[ok] / norms[ok, None]
    d = psi.fiber_dim
    diagonal = None
    if d > 1 or singular.size:
        diagonal = np.broadcast_to(np.eye(d, dtype=complex), (psi.grid.n, d, d)).copy()
        diagonal[ok] -= np.einsum("ak,al->akl", unit[ok], unit[ok].conj())
    if singular.size:
        warnings.warn(
            f"state vanishes at {singular.size} grid point(s); identity fallback used there",
            SingularKernelWarning,
            stacklevel=2,
        )
    return Kernel(unit.conj()[None], diagonal, tuple(int(i) for i in singular))


def _as_ensemble(rho, grid: Grid, d: int) -> list[tuple[float, np.ndarray]]:
    """Decompose a state into ``(weight, amplitudes)`` with unit-norm amplitudes.

    ``rho`` is a :class:`WaveFunction` or an operator matrix (pure state
    ``psi psi^H dx``) of size ``n d``.
    """
    if isinstance(rho, WaveFunction):
        if rho.grid != grid or rho.fiber_dim != d:
            raise ShapeError("state does not live on the POVM grid/fiber")
        if abs(rho.norm_squared() - 1.0) > STATE_NORM_TOL:
            raise InvalidStateError(f"state has squared norm {rho.norm_squared():.12g}, expected 1")
        return [(1.0, rho.amplitudes)]
    m = np.asarray(rho, dtype=complex)
    if m.shape != (grid.n * d, grid.n * d):
        raise ShapeError(f"density matrix of shape {m.shape} does not fit the POVM")
    if abs(np.trace(m).real - 1.0) > STATE_NORM_TOL or np.max(np.abs(m - m.conj().T)) > 1e-10:
        raise InvalidStateError("density matrix must be Hermitian with unit trace")
    w, q = np.linalg.eigh(m)
    if w[0] < -1e-10:
        raise InvalidStateError("density matrix is not positive")
    keep = w > 1e-14
    return [(float(wk), (q[:, k] / np.sqrt(grid.dx)).reshape(grid.n, d)) for k, wk in zip(np.flatnonzero(keep), w[keep])]


@dataclass(frozen=True, eq=False)
class CovariantPovm:
    kernel: Kernel
    grid: Grid
    momentum_grid: MomentumGrid

    @property
    def weight(self) -> float:
        return self.grid.dx * self.momentum_grid.dp / (2 * np.pi)

    @cached_property
    def dense_kernel(self) -> np.ndarray:
        return self.kernel.dense()

    def _fiber_phases(self, p: float) -> np.ndarray:
        return np.repeat(np.exp(1j * self.grid.points * p), self.kernel.d)

    def element_at(self, p: float) -> np.ndarray:
        e = self._fiber_phases(p)
        return (e[:, None] * self.dense_kernel * e.conj()[None, :]) * self.weight

    def element(self, j: int) -> np.ndarray:
        return self.element_at(self.momentum_grid.points[j])

    def density_at(self, rho, p: np.ndarray) -> np.ndarray:
        """Outcome density ``Tr(rho E(p)) / dp`` at arbitrary momenta."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        g, dgl = self.kernel.factor, self.kernel.diagonal
        x, dx = self.grid.points, self.grid.dx
        out = np.zeros(p.size)
        for wk, amp in _as_ensemble(rho, self.grid, self.kernel.d):
            v = np.einsum("rak,ak->ra", g, amp)
            base = 0.0
            if dgl is not None:
                base = float(np.einsum("ak,akl,al->", amp.conj(), dgl, amp).real)
            for s in range(0, p.size, _CHUNK):
                ph = np.exp(-1j * np.outer(x, p[s : s + _CHUNK]))
                f = v @ ph
                out[s : s + _CHUNK] += wk * (np.sum(np.abs(f) ** 2, axis=0) + base)
        return out * dx**2 / (2 * np.pi)

    def probabilities(self, rho) -> np.ndarray:
        mg, n = self.momentum_grid, self.grid.n
        if not (mg.count == n and mg.is_complete_for(self.grid)):
            return self.density_at(rho, mg.points)
        # bins tile the Brillouin zone: the phase sums are one DFT per factor row
        g, dgl = self.kernel.factor, self.kernel.diagonal
        a = np.arange(n)
        centre = (n - 1) / 2.0
        pre = np.exp(2j * np.pi * a * centre / n)
        post = np.exp(-1j * self.grid.x_min * mg.points)
        out = np.zeros(n)
        for wk, amp in _as_ensemble(rho, self.grid, self.kernel.d):
            v = np.einsum("rak,ak->ra", g, amp)
            f = np.fft.fft(v * pre, axis=1) * post
            base = 0.0
            if dgl is not None:
                base = float(np.einsum("ak,akl,al->", amp.conj(), dgl, amp).real)
            out += wk * (np.sum(np.abs(f) ** 2, axis=0) + base)
        return out * self.grid.dx**2 / (2 * np.pi)

    def completeness_matrix(self) -> np.ndarray:
        """``sum_j E_j`` via the Toeplitz sum of the outcome phases."""
        n, d = self.grid.n, self.kernel.d
        k = np.arange(-(n - 1), n)
        s = np.exp(1j * np.outer(k * self.grid.dx, self.momentum_grid.points)).sum(axis=1) * self.weight
        idx = np.arange(n)
        toeplitz = s[(idx[:, None] - idx[None, :]) + n - 1]
        return self.dense_kernel * np.kron(toeplitz, np.ones((d, d)))

    def completeness_residual(self, margin: float = 0.0) -> float:
        """``max |sum_j E_j - I|`` over rows/columns at grid points away from the edges."""
        r = np.abs(self.completeness_matrix() - np.eye(self.grid.n * self.kernel.d))
        x = self.grid.points
        lo, hi = x[0] + margin * self.grid.extent, x[-1] - margin * self.grid.extent
        keep = np.repeat((x >= lo) & (x <= hi), self.kernel.d)
        return float(r[np.ix_(keep, keep)].max())


def build_povm(kernel: Kernel, momentum_grid: MomentumGrid, grid: Grid) -> CovariantPovm:
    """Validate a kernel (unit diagonal, positive) and attach outcome bins."""
    if kernel.n != grid.n:
        raise ShapeError(f"kernel has {kernel.n} points, grid has {grid.n}")
    grid.check_momentum(momentum_grid.p_max)
    defect = kernel.unit_diagonal_defect()
    if defect > KERNEL_DIAG_TOL:
        raise InvalidKernelError(f"kernel diagonal differs from the identity by {defect:.3g}")
    if kernel.diagonal is not None:
        dmin = min(np.linalg.eigvalsh(kernel.diagonal).min(), 0.0)
        if dmin < -KERNEL_PSD_TOL:
            raise InvalidKernelError(f"block-diagonal part is indefinite ({dmin:.3g})")
    return CovariantPovm(kernel, grid, momentum_grid)


def check_invariants(povm: CovariantPovm, bins: Iterable[int]) -> dict:
    """Worst Hermiticity defect and smallest eigenvalue over the given elements."""
    herm, lam = 0.0, np.inf
    for j in bins:
        e = povm.element(j)
        herm = max(herm, float(np.max(np.abs(e - e.conj().T))))
        lam = min(lam, float(np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0]))
    return {"hermiticity": herm, "min_eigenvalue": lam}


def _shift_steps(povm: CovariantPovm, p: float) -> int:
    k = p / povm.momentum_grid.dp
    m = int(round(k))
    if abs(k - m) > 1e-9:
        raise InvalidParameterError(f"shift {p} is not a multiple of dp = {povm.momentum_grid.dp}")
    return m


def covariance_defect(povm, p: float, bins: Iterable[int] | None = None) -> float:
    """``max_j |V_p^H E_j V_p - E_{j+m}|`` with ``p = m dp``, over interior bins.

    Bins within 5% of either edge of the outcome range are skipped, as are
    those whose partner ``j + m`` falls there.
    """
    m = _shift_steps(povm, p)
    mg = povm.momentum_grid
    interior = mg.interior(BOUNDARY_MARGIN)
    if bins is None:
        bins = range(mg.count)
    v = np.repeat(np.exp(-1j * p * povm.grid.points), povm.kernel.d)
    worst = 0.0
    for j in bins:
        if not (interior[j] and 0 <= j + m < mg.count and interior[j + m]):
            continue
        shifted = v.conj()[:, None] * povm.element(j) * v[None, :]
        worst = max(worst, float(np.max(np.abs(shifted - povm.element(j + m)))))
    return worst


def probability_distribution(rho, povm: CovariantPovm) -> np.ndarray:
    """Density over the outcome bins; ``sum(density) * dp`` is the total probability."""
    return povm.probabilities(rho)


def _lattice_steps(grid: Grid, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = x / grid.dx
    steps = np.round(k).astype(int)
    if np.any(np.abs(k - steps) > 1e-9):
        raise InvalidParameterError("displacements must be multiples of dx")
    return steps


def characteristic_function(rho, povm: CovariantPovm, x) -> np.ndarray:
    """``Phi(x) = sum_j exp(i x p_j) density_j dp`` for lattice displacements ``x``."""
    steps = _lattice_steps(povm.grid, x)
    return _char_from_density(povm, povm.probabilities(rho), steps)


def _char_from_density(povm: CovariantPovm, dens: np.ndarray, steps: np.ndarray) -> np.ndarray:
    mg, dx = povm.momentum_grid, povm.grid.dx
    p = mg.points
    if mg.is_complete_for(povm.grid):
        # exp(i k dx p_j) = exp(i k dx p_0) exp(2 pi i k j / count)
        spectrum = np.fft.ifft(dens) * mg.count
        return np.exp(1j * steps * dx * p[0]) * spectrum[steps % mg.count] * mg.dp
    return np.exp(1j * np.outer(steps * dx, p)) @ dens * mg.dp


def phi_star(psi: WaveFunction, x) -> np.ndarray:
    """Upper bound ``sum_mu |psi_mu| |psi_{mu+x}| dx`` on ``Re Phi(x)``."""
    steps = _lattice_steps(psi.grid, x)
    norms = psi.fiber_norms()
    n = norms.size
    out = np.empty(steps.size)
    for i, k in enumerate(steps):
        k = abs(int(k))
        out[i] = float(np.dot(norms[: n - k], norms[k:])) * psi.grid.dx if k < n else 0.0
    return out


@dataclass(frozen=True)
class DeviationSpec:
    """Gaussian even measure ``W~(dx) = weight N(center, sigma^2)(x) dx``; sigma = 0 is a point mass.

    The induced deviation function is ``W(p) = -weight exp(-sigma^2 p^2 / 2)``.
    """

    sigma: float
    weight: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0 or not self.weight > 0:
            raise InvalidDeviationError("need sigma >= 0 and weight > 0")

    def deviation(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return -self.weight * np.exp(-0.5 * self.sigma**2 * p**2) * np.exp(1j * self.center * p).real

    def nodes(self, dx: float, reach: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
        """Lattice nodes and quadrature weights of ``W~``, checked for evenness."""
        if self.sigma == 0:
            x = np.array([self.center])
            w = np.array([self.weight])
        else:
            kmax = int(np.ceil((reach * self.sigma + abs(self.center)) / dx))
            x = np.arange(-kmax, kmax + 1) * dx
            w = self.weight * np.exp(-0.5 * ((x - self.center) / self.sigma) ** 2) / (self.sigma * np.sqrt(2 * np.pi)) * dx
        if x.size == 1 and abs(x[0]) > 0 or np.max(np.abs(w - w[::-1])) > 1e-12:
            raise InvalidDeviationError("W~ must be an even measure")
        return x, w


def risk_forms(povm: CovariantPovm, rho, dev: DeviationSpec) -> tuple[float, float]:
    """The risk evaluated over outcomes and over the characteristic function."""
    xs, ws = dev.nodes(povm.grid.dx)
    dens = povm.probabilities(rho)
    p, dp = povm.momentum_grid.points, povm.momentum_grid.dp
    over_outcomes = float(np.sum(dev.deviation(p) * dens) * dp)
    phi = _char_from_density(povm, dens, _lattice_steps(povm.grid, xs))
    over_char = float(-np.sum(phi.real * ws))
    return over_outcomes, over_char


def risk(povm: CovariantPovm, rho, dev: DeviationSpec) -> float:
    r_out, r_char = risk_forms(povm, rho, dev)
    if abs(r_out - r_char) > RISK_AGREEMENT_TOL:
        raise NumericalFailure(
            f"risk forms disagree ({r_out:.12g} vs {r_char:.12g}); sigma too small for the grid?"
        )
    return r_out


@dataclass(frozen=True)
class Lemma1Result:
    measure: float
    ratio: float
    bin_measure: float


def lemma1_check(povm: CovariantPovm, rho, bins: Iterable[int]) -> Lemma1Result:
    """Shift-averaged probability of a bin set.

    ``measure = sum_m Tr(V_p rho V_p^H E(Delta)) dp / 2 pi`` over the shifts
    ``p = m dp``, ``m = 0 .. count-1``; ``ratio`` compares it with
    ``mes(Delta) / 2 pi``.
    """
    mg = povm.momentum_grid
    bins = np.unique(np.asarray(list(bins), dtype=int))
    if bins.size == 0:
        return Lemma1Result(0.0, 0.0, 0.0)
    if not np.all(mg.interior(BOUNDARY_MARGIN)[bins]):
        warnings.warn("bin set touches the edge of the outcome range", BoundaryEffectWarning, stacklevel=2)
    x = povm.grid.points
    centres = mg.points[bins]
    total = 0.0
    for wk, amp in _as_ensemble(rho, povm.grid, povm.kernel.d):
        for m in range(mg.count):
            shifted = WaveFunction(povm.grid, amp * np.exp(-1j * m * mg.dp * x)[:, None])
            total += wk * float(np.sum(povm.density_at(shifted, centres)) * mg.dp)
    measure = total * mg.dp / (2 * np.pi)
    mes = bins.size * mg.dp
    return Lemma1Result(measure, measure / (mes / (2 * np.pi)), mes)


def smooth_random_field(n: int, shape: tuple, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Complex field of shape ``(n, *shape)`` built from the lowest ``modes`` Fourier modes."""
    t = np.arange(n) / n
    k = np.arange(-modes, modes + 1)
    coef = rng.standard_normal((k.size, *shape)) + 1j * rng.standard_normal((k.size, *shape))
    coef /= (1.0 + np.abs(k)).reshape(-1, *([1] * len(shape)))
    return np.tensordot(np.exp(2j * np.pi * np.outer(t, k)), coef, axes=1)


def random_gram_kernel(n: int, d: int, rng: np.random.Generator, rank: int | None = None, modes: int = 6) -> Kernel:
    """Gram kernel ``U_x^H U_x'`` of a smooth field of ``rank x d`` isometries.

    ``U_x^H U_x = I`` on every fiber, so the kernel is positive with unit
    diagonal blocks.
    """
    rank = max(2 * d, 2) if rank is None else rank
    if rank < d:
        raise InvalidParameterError("rank must be at least the fiber dimension")
    field = smooth_random_field(n, (rank, d), rng, modes)
    q, r = np.linalg.qr(field)
    # fix the QR phase freedom so the isometry field stays smooth
    q = q * (np.diagonal(r, axis1=1, axis2=2) / np.abs(np.diagonal(r, axis1=1, axis2=2)))[:, None, :]
    return Kernel(np.transpose(q, (1, 0, 2)))


def random_state(grid: Grid, d: int, rng: np.random.Generator, width: float | None = None, modes: int = 6) -> WaveFunction:
    """Normalized smooth random state with a Gaussian envelope of the given width."""
    width = grid.extent / 8 if width is None else width
    x = grid.points
    centre = grid.x_min + grid.extent / 2
    env = np.exp(-((x - centre) ** 2) / (2 * width**2))
    return normalize(WaveFunction(grid, env[:, None] * smooth_random_field(grid.n, (d,), rng, modes)))
