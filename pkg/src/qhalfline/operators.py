"""Position, momentum and Schroedinger operators on a grid, and deficiency indices.

The symmetric / self-adjoint distinction lives in the continuum domains and
is invisible to finite Hermitian matrices, so :func:`deficiency_indices`
works on a symbolic descriptor by integrating the deficiency ODE instead of
diagonalizing anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ConfigurationError,
    InconclusiveClassification,
    InvalidParameterError,
    NumericalFailure,
)
from .grid import HALF_LINE, WHOLE_LINE, Grid, WaveFunction, inner_product

DIRICHLET = "dirichlet-at-0"
FREE = "free"
PERIODIC = "periodic"
BOUNDARIES = (DIRICHLET, FREE, PERIODIC)

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Matrix acting on grid amplitudes, with its boundary condition.

    ``pinned`` lists the grid indices forced to zero by a Dirichlet condition;
    the matrix has zero rows and columns there.
    """

    matrix: np.ndarray
    grid: Grid
    boundary: str
    label: str
    pinned: tuple = ()
    hermitian: bool = False

    def __post_init__(self):
        a = np.array(self.matrix)
        if a.shape != (self.grid.n, self.grid.n):
            raise InvalidParameterError(f"matrix shape {a.shape} does not match grid of {self.grid.n}")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        if self.hermitian and hermiticity_defect(a) > HERMITIAN_TOL:
            raise InvalidParameterError(f"{self.label} flagged Hermitian but is not")

    def apply(self, psi: WaveFunction) -> WaveFunction:
        return psi.replace(self.matrix @ psi.amplitudes)

    def expectation(self, psi: WaveFunction) -> complex:
        return inner_product(psi, self.apply(psi))

    def free_indices(self) -> np.ndarray:
        mask = np.ones(self.grid.n, dtype=bool)
        mask[list(self.pinned)] = False
        return np.flatnonzero(mask)


def hermiticity_defect(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def _origin_or_fail(grid: Grid) -> int:
    i0 = grid.origin_index
    if i0 is None:
        raise ConfigurationError("a Dirichlet condition at 0 needs x = 0 on the grid")
    return i0


def _check_boundary(grid: Grid, boundary: str) -> None:
    if boundary not in BOUNDARIES:
        raise ConfigurationError(f"unknown boundary {boundary!r}")
    if boundary == PERIODIC and grid.domain_kind != WHOLE_LINE:
        raise ConfigurationError("periodic boundary needs a whole-line grid")


def _pin(a: np.ndarray, indices) -> np.ndarray:
    for i in indices:
        a[i, :] = 0
        a[:, i] = 0
    return a


def momentum_operator(grid: Grid, boundary: str = DIRICHLET) -> DenseOperator:
    """Central-difference ``(1/i) d/dx``.

    ``free`` uses one-sided differences in the two end rows, i.e. the formal
    adjoint without boundary conditions; its matrix is not Hermitian and the
    defect is exactly the integration-by-parts boundary term. ``dirichlet-at-0``
    treats samples beyond the lattice as zero and pins x = 0.
    """
    _check_boundary(grid, boundary)
    n, dx = grid.n, grid.dx
    d = np.zeros((n, n))
    i = np.arange(n - 1)
    d[i, i + 1] = 0.5 / dx
    d[i + 1, i] = -0.5 / dx
    pinned: tuple = ()
    if boundary == FREE:
        d[0, :2] = [-1.0 / dx, 1.0 / dx]
        d[-1, -2:] = [-1.0 / dx, 1.0 / dx]
    elif boundary == PERIODIC:
        d[0, -1] = -0.5 / dx
        d[-1, 0] = 0.5 / dx
    else:
        pinned = (_origin_or_fail(grid),)
        _pin(d, pinned)
    label = {DIRICHLET: "p+", FREE: "p+dagger", PERIODIC: "p"}[boundary]
    if grid.domain_kind == WHOLE_LINE and boundary == DIRICHLET:
        label = "p+ (+) p-"
    return DenseOperator(-1j * d, grid, boundary, label, pinned, hermitian=boundary != FREE)


def position_operator(grid: Grid) -> DenseOperator:
    return DenseOperator(np.diag(grid.points).astype(complex), grid, FREE, "x", hermitian=True)


def schroedinger_hamiltonian(
    grid: Grid,
    m: float,
    potential: np.ndarray | Callable[[np.ndarray], np.ndarray],
    boundary: str | None = None,
    label: str = "H0",
) -> DenseOperator:
    """``p^2/2m + V(x)`` with the 3-point Laplacian.

    Samples outside the lattice count as zero (hard walls at the ends). The
    default boundary is ``dirichlet-at-0`` on the half line and ``free`` on
    the whole line.
    """
    if not m > 0:
        raise InvalidParameterError(f"mass must be positive, got {m}")
    if boundary is None:
        boundary = DIRICHLET if grid.domain_kind == HALF_LINE else FREE
    _check_boundary(grid, boundary)
    x = grid.points
    v = np.asarray(potential(x) if callable(potential) else potential, dtype=float)
    if v.shape != x.shape or not np.all(np.isfinite(v)):
        raise InvalidParameterError("potential must give one finite value per grid point")
    n, c = grid.n, 1.0 / (2.0 * m * grid.dx**2)
    h = np.diag(2.0 * c + v)
    i = np.arange(n - 1)
    h[i, i + 1] = -c
    h[i + 1, i] = -c
    pinned: tuple = ()
    if boundary == PERIODIC:
        h[0, -1] = h[-1, 0] = -c
    elif boundary == DIRICHLET:
        pinned = (_origin_or_fail(grid),)
        _pin(h, pinned)
    return DenseOperator(h, grid, boundary, label, pinned, hermitian=True)


def harmonic_hamiltonian(grid: Grid, m: float, omega: float, boundary: str | None = None) -> DenseOperator:
    if not omega >= 0:
        raise InvalidParameterError(f"omega must be non-negative, got {omega}")
    return schroedinger_hamiltonian(
        grid, m, 0.5 * m * omega**2 * grid.points**2, boundary, label="H0"
    )


def symmetry_defect(op: DenseOperator, trial_pairs: Sequence[tuple[WaveFunction, WaveFunction]]) -> float:
    """``max |<phi, A psi> - <A phi, psi>|`` over the given pairs."""
    if not trial_pairs:
        raise InvalidParameterError("symmetry_defect needs at least one trial pair")
    worst = 0.0
    for phi, psi in trial_pairs:
        lhs = inner_product(phi, op.apply(psi))
        rhs = inner_product(op.apply(phi), psi)
        worst = max(worst, abs(lhs - rhs))
    return worst


def _phase_fix(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    first = np.flatnonzero(mags > 1e-8 * mags.max())[0]
    return v * (np.conj(v[first]) / mags[first])


def _stieltjes_ground(diag: np.ndarray, off: np.ndarray) -> tuple[float, np.ndarray]:
    # Real symmetric tridiagonal with off-diagonals <= 0: the ground state is
    # entrywise positive, and a shifted Cholesky solve keeps every term of the
    # substitutions positive, so tiny tail amplitudes keep their relative accuracy.
    e0 = scipy.linalg.eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0]
    scale = max(np.max(np.abs(diag)) + 2 * np.max(np.abs(off), initial=0.0), 1.0)
    sigma = e0 - 1e-9 * scale
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1] = diag - sigma
    chol = scipy.linalg.cholesky_banded(ab)
    v = np.ones(diag.size)
    for _ in range(6):
        v = scipy.linalg.cho_solve_banded((chol, False), v)
        v /= np.linalg.norm(v)
    return float(e0), v


def ground_state(op: DenseOperator) -> tuple[float, WaveFunction]:
    """Lowest eigenpair on the unpinned subspace.

    The state is normalized and its first non-negligible amplitude is made
    real positive.
    """
    if hermiticity_defect(op.matrix) > HERMITIAN_TOL:
        raise InvalidParameterError(f"{op.label} is not Hermitian")
    free = op.free_indices()
    a = op.matrix[np.ix_(free, free)]
    diag = np.real(np.diag(a))
    off = np.real(np.diag(a, 1))
    banded = np.count_nonzero(np.triu(a, 2)) == 0 and np.all(np.imag(a) == 0)
    try:
        if banded and np.all(off <= 0) and free.size > 1:
            energy, v = _stieltjes_ground(diag, off)
        else:
            w, vecs = np.linalg.eigh(a)
            energy, v = float(w[0]), vecs[:, 0]
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalFailure(f"eigensolver failed for {op.label} ({free.size} unknowns): {exc}") from exc
    full = np.zeros(op.grid.n, dtype=complex)
    full[free] = _phase_fix(v.astype(complex))
    full /= np.sqrt(np.sum(np.abs(full) ** 2) * op.grid.dx)
    return energy, WaveFunction(op.grid, full, normalized=True)


# --- deficiency indices ---------------------------------------------------

SELF_ADJOINT = "self-adjoint"
EXTENDABLE = "self-adjoint-extendable"
NO_EXTENSION = "no-self-adjoint-extension"


@dataclass(frozen=True)
class OperatorSpec:
    """Symbolic first-order operator: a direct sum of ``sign * (1/i) d/dx`` pieces.

    Each component is ``(sign, domain_kind)``; the half-line pieces carry the
    condition psi(0) = 0, whose adjoint has no boundary condition at all.
    """

    label: str
    components: tuple

    def __post_init__(self):
        for sign, kind in self.components:
            if sign not in (1, -1) or kind not in (HALF_LINE, WHOLE_LINE):
                raise InvalidParameterError(f"bad component {(sign, kind)!r}")


HALF_LINE_MOMENTUM = OperatorSpec("p+", ((1, HALF_LINE),))
NEGATED_HALF_LINE_MOMENTUM = OperatorSpec("-p+", ((-1, HALF_LINE),))
EXTENDED_MOMENTUM = OperatorSpec("p+ x |0><0| - p+ x |1><1|", ((1, HALF_LINE), (-1, HALF_LINE)))
WHOLE_LINE_MOMENTUM = OperatorSpec("p (whole line)", ((1, WHOLE_LINE),))
STANDARD_SPECS = (HALF_LINE_MOMENTUM, NEGATED_HALF_LINE_MOMENTUM, EXTENDED_MOMENTUM, WHOLE_LINE_MOMENTUM)


@dataclass(frozen=True)
class DeficiencyReport:
    label: str
    n_plus: int
    n_minus: int
    gamma: float
    classification: str
    tail_ratios: dict = field(default_factory=dict)
    extension_family: str | None = None
    boundary_family: str | None = None


def classify(n_plus: int, n_minus: int) -> str:
    if n_plus == n_minus == 0:
        return SELF_ADJOINT
    if n_plus == n_minus:
        return EXTENDABLE
    return NO_EXTENSION


def _euler(rate: float, h: float, steps: int) -> np.ndarray:
    psi = np.empty(steps + 1)
    psi[0] = 1.0
    for k in range(steps):
        psi[k + 1] = psi[k] + h * rate * psi[k]
    return psi


def _tail_ratio(psi: np.ndarray) -> float:
    half = psi.size // 2
    inner = np.sqrt(np.sum(psi[:half] ** 2))
    outer = np.sqrt(np.sum(psi[half:] ** 2))
    return float(outer / inner)


def deficiency_tail_ratio(sign: int, kind: str, which: int, gamma: float, length: float, steps: int = 4096) -> float:
    """Tail ratio of the solution of ``A^dagger psi = which * i gamma psi``.

    With ``A^dagger = sign (1/i) d/dx`` the ODE is ``psi' = -which * gamma/sign * psi``.
    It is integrated outward from x = 0 with forward (one-sided) differences;
    on the whole line both directions are integrated and the worse end counts.
    """
    rate = -which * gamma / sign
    h = length / steps
    ratio = _tail_ratio(_euler(rate, h, steps))
    if kind == WHOLE_LINE:
        ratio = max(ratio, _tail_ratio(_euler(-rate, h, steps)))
    return ratio


def deficiency_indices(
    op: OperatorSpec,
    gamma: float = 1.0,
    length: float = 20.0,
    threshold: float = 1e-3,
    steps: int = 4096,
) -> DeficiencyReport:
    """Count square-integrable solutions of ``A^dagger psi = +-i gamma psi``.

    A solution counts as normalizable when the norm on the outer half of the
    truncated domain is below ``threshold`` times the inner norm. Ratios within
    a factor 10 of the threshold raise :class:`InconclusiveClassification`.
    """
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    if not length > 0:
        raise InvalidParameterError(f"length must be positive, got {length}")
    counts = {1: 0, -1: 0}
    ratios: dict = {"+": [], "-": []}
    for sign, kind in op.components:
        for which, key in ((1, "+"), (-1, "-")):
            r = deficiency_tail_ratio(sign, kind, which, gamma, length, steps)
            ratios[key].append(r)
            if threshold / 10 <= r <= threshold * 10:
                raise InconclusiveClassification(
                    f"{op.label}: tail ratio {r:.3g} is within 10x of {threshold:g}; increase length"
                )
            counts[which] += int(r < threshold)
    n_plus, n_minus = counts[1], counts[-1]
    cls = classify(n_plus, n_minus)
    family = boundary = None
    if cls == EXTENDABLE:
        family = f"U({n_plus})"
        if n_plus == 1:
            boundary = "psi(0+) = exp(i theta) psi(0-), theta in R"
    return DeficiencyReport(op.label, n_plus, n_minus, float(gamma), cls, ratios, family, boundary)
