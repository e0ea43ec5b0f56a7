"""Model measurement of the half-line momentum by an instantaneous kick.

The probe starts in a momentum eigenstate ``|P~>`` and couples through
``g P x delta(t)``; afterwards the system relaxes to its ground state. The
outcome of one run is the probe reading ``P~`` and is reported as
``p = OUTCOME_SIGN * g * P~``. Probe kinetic energy only adds a global phase,
so no probe grid is allocated.

A system state on the half line with a Dirichlet wall at x = 0 is handled in
its two-sector extension flattened onto the whole line: the odd extension of
the half-line ground state is the relaxed state, and the plane wave being
measured lives on the same whole-line grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidGroundError,
    InvalidParameterError,
    ShapeError,
    SystematicErrorWarning,
)
from .grid import (
    HALF_LINE,
    WHOLE_LINE,
    Grid,
    MomentumGrid,
    WaveFunction,
    make_grid,
    momentum_grid,
    normalize,
)
from .naimark import odd_extension
from .operators import DenseOperator, FREE, ground_state, schroedinger_hamiltonian

# Elementwise A^H A reproduces the optimal covariant element at p = +g P~.
OUTCOME_SIGN = 1

GROUND_RESIDUAL_TOL = 1e-6
CONVEXITY_TOL = 1e-10
GAUSSIAN = "gaussian"
HARD = "hard"
POTENTIALS = ("harmonic", "quartic", "flat")

_CHUNK = 256


@dataclass(frozen=True)
class Window:
    """Envelope of the measured plane wave.

    ``gaussian``: amplitude ``exp(-(x - center)^2 / (4 width^2))``, so ``width``
    is the position standard deviation. ``hard``: flat on
    ``|x - center| < width / 2``; ``width=None`` covers the whole grid.
    """

    kind: str = GAUSSIAN
    width: float | None = None
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, HARD):
            raise ConfigurationError(f"unknown window kind {self.kind!r}")
        if self.width is not None and not self.width > 0:
            raise ConfigurationError("window width must be positive")


@dataclass(frozen=True)
class ModelParams:
    m: float = 1.0
    omega: float = 1.0
    g: float = 1.0
    p_true: float = 2.0
    M_probe: float = 1.0
    potential: str | Callable[[np.ndarray], np.ndarray] = "harmonic"
    window: Window = field(default_factory=Window)
    quartic_strength: float = 1.0

    def __post_init__(self):
        if not self.m > 0 or not self.M_probe > 0:
            raise InvalidParameterError("masses must be positive")
        if not self.omega >= 0:
            raise InvalidParameterError("omega must be non-negative")
        if self.g == 0 or not np.isfinite(self.g):
            raise InvalidParameterError("coupling g must be finite and non-zero")
        if isinstance(self.potential, str) and self.potential not in POTENTIALS:
            raise InvalidParameterError(f"unknown potential {self.potential!r}")

    @property
    def oscillator_scale(self) -> float:
        """``sqrt(m omega)``: momentum width of the harmonic ground state."""
        return float(np.sqrt(self.m * self.omega))

    def potential_values(self, x: np.ndarray) -> np.ndarray:
        r = np.abs(x)
        if callable(self.potential):
            return np.asarray(self.potential(r), dtype=float)
        if self.potential == "harmonic":
            return 0.5 * self.m * self.omega**2 * r**2
        if self.potential == "quartic":
            return 0.25 * self.quartic_strength * r**4
        return np.zeros_like(r)

    def window_width(self) -> float | None:
        if self.window.width is not None:
            return self.window.width
        if self.window.kind == GAUSSIAN:
            if self.omega == 0:
                raise ConfigurationError("a Gaussian window needs an explicit width when omega = 0")
            return 8.0 / self.oscillator_scale
        return None


def check_convex(params: ModelParams, grid: Grid) -> None:
    v = params.potential_values(grid.points)
    if v.size > 2 and np.min(np.diff(v, 2)) < -CONVEXITY_TOL * max(1.0, np.max(np.abs(v))):
        raise InvalidParameterError("potential is not convex on the grid")


def system_hamiltonian(params: ModelParams, grid: Grid) -> DenseOperator:
    """Half-line Hamiltonian with ``psi(0) = 0``; the potential is read at ``|x|``."""
    if grid.domain_kind != HALF_LINE:
        raise ShapeError("the system Hamiltonian lives on the half line")
    check_convex(params, grid)
    return schroedinger_hamiltonian(grid, params.m, params.potential_values, label="H_sys")


def extended_hamiltonian(params: ModelParams, grid: Grid) -> DenseOperator:
    """The half-line Hamiltonian on both sectors, flattened onto the whole line.

    Walls sit at x = 0 and at the unpaired left-end sample.
    """
    if grid.domain_kind != WHOLE_LINE:
        raise ShapeError("the extended Hamiltonian lives on the whole line")
    h = np.array(schroedinger_hamiltonian(grid, params.m, params.potential_values, FREE).matrix)
    pinned = (0, grid.origin_index)
    h[list(pinned), :] = 0.0
    h[:, list(pinned)] = 0.0
    return DenseOperator(h, grid, FREE, "H_ext", pinned, hermitian=True)


def odd_ground_state(params: ModelParams, half_grid: Grid) -> tuple[float, WaveFunction]:
    """Half-line ground energy and the odd extension of its state on ``[-L, L)``."""
    energy, psi_plus = ground_state(system_hamiltonian(params, half_grid))
    return energy, normalize(odd_extension(psi_plus))


def ground_residual(h: DenseOperator, psi: WaveFunction) -> float:
    hpsi = h.matrix @ psi.amplitudes
    e = np.vdot(psi.amplitudes, hpsi).real / np.vdot(psi.amplitudes, psi.amplitudes).real
    return float(np.sqrt(np.sum(np.abs(hpsi - e * psi.amplitudes) ** 2) * psi.grid.dx))


def kick_unitary(g: float, p_probe: float, grid: Grid) -> DenseOperator:
    """Diagonal ``exp(-i g P~ x)``."""
    grid.check_momentum(g * p_probe)
    u = np.diag(np.exp(-1j * g * p_probe * grid.points))
    return DenseOperator(u, grid, FREE, f"kick({g * p_probe:g})")


def _readout_amplitudes(ground: WaveFunction, fiber_normalized: bool) -> tuple[np.ndarray, np.ndarray]:
    psi = ground.values
    if not fiber_normalized:
        return psi, np.zeros(0, dtype=int)
    mags = np.abs(psi)
    out = np.zeros_like(psi)
    ok = mags > 0
    out[ok] = psi[ok] / mags[ok]
    return out, np.flatnonzero(~ok)


def _check_ground(params: ModelParams, ground: WaveFunction, hamiltonian: DenseOperator | None) -> None:
    if abs(ground.norm_squared() - 1.0) > 1e-10:
        raise InvalidGroundError("ground state must be normalized")
    if hamiltonian is None:
        if ground.grid.domain_kind == HALF_LINE:
            hamiltonian = system_hamiltonian(params, ground.grid)
        else:
            hamiltonian = extended_hamiltonian(params, ground.grid)
    res = ground_residual(hamiltonian, ground)
    if res > GROUND_RESIDUAL_TOL:
        raise InvalidGroundError(f"state is not an eigenstate (residual {res:.3g})")


def kraus_operator(
    params: ModelParams,
    ground: WaveFunction,
    p_probe: float,
    hamiltonian: DenseOperator | None = None,
    fiber_normalized: bool = False,
) -> np.ndarray:
    """Kernel ``A(x, x') = psi_x conj(w_x') exp(-i g P~ x')`` of one reading.

    ``w = psi`` gives the relaxation ``|ground><ground|`` after the kick; with
    ``fiber_normalized`` the readout factor is ``psi / |psi|``. The operator
    matrix is this kernel times ``dx``.
    """
    _check_ground(params, ground, hamiltonian)
    ground.grid.check_momentum(params.g * p_probe)
    w, _ = _readout_amplitudes(ground, fiber_normalized)
    return np.outer(ground.values, (w * np.exp(1j * params.g * p_probe * ground.grid.points)).conj())


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Kraus operators for every probe reading ``P~_j = p_j / (OUTCOME_SIGN g)``."""

    grid: Grid
    ground: np.ndarray
    readout: np.ndarray
    singular: np.ndarray
    g: float
    momentum_grid: MomentumGrid

    @property
    def probe_readings(self) -> np.ndarray:
        return self.momentum_grid.points / (OUTCOME_SIGN * self.g)

    def outcome(self, p_probe):
        return OUTCOME_SIGN * self.g * np.asarray(p_probe)

    def factors(self, j: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Pairs ``(a, b)`` with kernel ``outer(a, conj(b))``: the main term, then any fallback terms."""
        phase = np.exp(-1j * self.g * self.probe_readings[j] * self.grid.points)
        pairs = [(self.ground, self.readout * phase.conj())]
        for s in self.singular:
            b = np.zeros(self.grid.n, dtype=complex)
            b[s] = phase[s].conj()
            pairs.append((self.ground, b))
        return pairs

    def operators(self, j: int) -> list[np.ndarray]:
        """Kernels of reading ``j``: the rank-one main term, then any fallback terms."""
        return [np.outer(a, b.conj()) for a, b in self.factors(j)]


def kraus_family(
    params: ModelParams,
    ground: WaveFunction,
    mgrid: MomentumGrid,
    hamiltonian: DenseOperator | None = None,
    fiber_normalized: bool = True,
) -> KrausFamily:
    """Readings on the outcome grid ``mgrid``.

    With ``fiber_normalized`` the family reproduces the optimal covariant POVM
    of ``ground``; where ``ground`` vanishes a kernel column ``psi_x [x' = s]``
    restores completeness at that point.
    """
    _check_ground(params, ground, hamiltonian)
    ground.grid.check_momentum(mgrid.p_max)
    w, singular = _readout_amplitudes(ground, fiber_normalized)
    return KrausFamily(ground.grid, ground.values.copy(), w, singular, params.g, mgrid)


@dataclass(frozen=True, eq=False)
class KrausPovm:
    family: KrausFamily

    @property
    def grid(self) -> Grid:
        return self.family.grid

    @property
    def momentum_grid(self) -> MomentumGrid:
        return self.family.momentum_grid

    def element(self, j: int) -> np.ndarray:
        """``sum_k Ahat_k^H Ahat_k dp / (2 pi)`` with ``Ahat = A dx``; each ``A = a b^H`` is rank one."""
        dx = self.grid.dx
        w = dx**2 * self.momentum_grid.dp / (2 * np.pi)
        (a, b), *rest = self.family.factors(j)
        out = np.outer(b * (np.vdot(a, a).real * w), b.conj())
        for a, b in rest:
            # fallback columns are single-entry vectors
            s = np.flatnonzero(b)
            out[np.ix_(s, s)] += np.vdot(a, a).real * w * np.outer(b[s], b[s].conj())
        return out

    def density_at(self, phi: WaveFunction, p: np.ndarray) -> np.ndarray:
        """Outcome density ``<phi, E(p) phi> / dp`` using the rank-one structure."""
        if phi.grid != self.grid:
            raise ShapeError("state does not live on the Kraus grid")
        f = self.family
        p = np.atleast_1d(np.asarray(p, dtype=float))
        x, dx = self.grid.points, self.grid.dx
        v = f.readout.conj() * phi.values
        gnorm = float(np.sum(np.abs(f.ground) ** 2) * dx)
        base = float(np.sum(np.abs(phi.values[f.singular]) ** 2)) * dx**2
        out = np.empty(p.size)
        for s in range(0, p.size, _CHUNK):
            c = (np.exp(-1j * np.outer(p[s : s + _CHUNK], x)) @ v) * dx
            out[s : s + _CHUNK] = gnorm * (np.abs(c) ** 2 + base) / (2 * np.pi)
        return out

    def probabilities(self, phi: WaveFunction) -> np.ndarray:
        return self.density_at(phi, self.momentum_grid.points)

    def completeness_residual(self) -> float:
        total = sum(self.element(j) for j in range(self.momentum_grid.count))
        return float(np.max(np.abs(total - np.eye(self.grid.n))))


def povm_from_kraus(family: KrausFamily) -> KrausPovm:
    return KrausPovm(family)


def plane_wave_state(params: ModelParams, grid: Grid) -> WaveFunction:
    """Normalized windowed plane wave ``exp(i p_true x)``."""
    grid.check_momentum(params.p_true)
    x = grid.points
    width = params.window_width()
    c = params.window.center
    if params.window.kind == GAUSSIAN:
        if 2 * width > grid.extent:
            raise ConfigurationError(f"window width {width:g} does not fit a domain of {grid.extent:g}")
        if params.omega > 0 and width < 4.0 / params.oscillator_scale:
            warnings.warn("window is not wide compared with 1/sqrt(m omega)", SystematicErrorWarning, stacklevel=2)
        env = np.exp(-((x - c) ** 2) / (4 * width**2))
    else:
        if width is None:
            env = np.ones_like(x)
        else:
            if width > grid.extent:
                raise ConfigurationError(f"window width {width:g} exceeds the domain {grid.extent:g}")
            env = (np.abs(x - c) < width / 2).astype(float)
    return normalize(WaveFunction(grid, env * np.exp(1j * params.p_true * x)))


def measured_distribution(state: WaveFunction, povm: KrausPovm, p: np.ndarray | None = None) -> np.ndarray:
    """Outcome density of ``state``, rescaled to unit integral over the evaluated bins."""
    if p is None:
        p = povm.momentum_grid.points
    dens = povm.density_at(state, p)
    total = float(np.sum(dens) * povm.momentum_grid.dp)
    if not total > 0:
        raise InvalidParameterError("distribution has no weight on the requested bins")
    return dens / total


def analytic_distribution(p, params: ModelParams) -> np.ndarray:
    """Unit-integral harmonic density ``2 q^2 exp(-q^2/a) / (sqrt(pi) a^1.5)``, ``q = p - p_true``, ``a = m omega``."""
    if not params.omega > 0:
        raise InvalidParameterError("the closed form needs omega > 0")
    a = params.m * params.omega
    q = np.asarray(p, dtype=float) - params.p_true
    return 2.0 / (np.sqrt(np.pi) * a**1.5) * q**2 * np.exp(-(q**2) / a)


def unnormalized_distribution(p, params: ModelParams, amplitude_sq: float) -> np.ndarray:
    """``|A|^2 |int psi(x) exp(-i (p - p_true) x) dx|^2`` for ``psi = 2 (a^3/pi)^(1/4) x exp(-a x^2/2)`` on the whole line."""
    if not params.omega > 0:
        raise InvalidParameterError("the closed form needs omega > 0")
    a = params.m * params.omega
    q = np.asarray(p, dtype=float) - params.p_true
    return 8.0 * np.sqrt(np.pi / a**3) * amplitude_sq * q**2 * np.exp(-(q**2) / a)


def moments(p: np.ndarray, density: np.ndarray, dp: float) -> tuple[float, float]:
    w = density * dp
    mean = float(np.sum(p * w))
    return mean, float(np.sum((p - mean) ** 2 * w))


def _peaks(p: np.ndarray, density: np.ndarray, centre: float) -> tuple[float, float]:
    lo, hi = p < centre, p > centre
    return float(p[lo][np.argmax(density[lo])]), float(p[hi][np.argmax(density[hi])])


@dataclass(frozen=True)
class DistributionResult:
    params: ModelParams
    p: np.ndarray
    measured: np.ndarray
    analytic: np.ndarray | None
    dp: float
    mean: float
    variance: float
    peak_low: float
    peak_high: float

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.measured - self.analytic)

    @property
    def max_error(self) -> float:
        return float(np.max(self.abs_error))


def _outcome_setup(params: ModelParams, L: float, n: int, dp: float | None, span: float):
    half = make_grid(HALF_LINE, L, n)
    _, psi_odd = odd_ground_state(params, half)
    grid = psi_odd.grid
    mgrid = momentum_grid(dp, abs(params.p_true) + span)
    fam = kraus_family(params, psi_odd, mgrid, fiber_normalized=False)
    pts = mgrid.points
    keep = np.abs(pts - params.p_true) <= span + 1e-9 * dp
    return grid, psi_odd, KrausPovm(fam), pts[keep]


def run_distribution(
    params: ModelParams,
    L: float = 20.0,
    n: int = 1024,
    dp: float | None = None,
    span: float = 8.0,
    scale_length: bool = True,
) -> DistributionResult:
    """Measured outcome density of the windowed plane wave for a harmonic well.

    Outcomes cover ``p_true +- span sqrt(m omega)`` in bins of ``dp``
    (default ``sqrt(m omega)/40``). With ``scale_length`` the half-line length
    is ``L / sqrt(m omega)`` so the grid resolves the ground state equally
    well for every omega.
    """
    if params.potential != "harmonic" or not params.omega > 0:
        raise InvalidParameterError("run_distribution needs a harmonic well with omega > 0")
    s = params.oscillator_scale
    dp = s / 40.0 if dp is None else dp
    length = L / s if scale_length else L
    grid, _, povm, p = _outcome_setup(params, length, n, dp, span * s)
    phi = plane_wave_state(params, grid)
    dens = measured_distribution(phi, povm, p)
    mean, var = moments(p, dens, dp)
    lo, hi = _peaks(p, dens, params.p_true)
    return DistributionResult(params, p, dens, analytic_distribution(p, params), dp, mean, var, lo, hi)


def convex_potential_distribution(
    params: ModelParams,
    L: float = 20.0,
    n: int = 1024,
    dp: float = 0.02,
    span: float = 8.0,
) -> tuple[np.ndarray, np.ndarray, WaveFunction]:
    """Measured density for any convex well, with the odd ground state used.

    Returns ``(p, density, psi_odd)``; the density has unit integral over the
    returned bins.
    """
    grid, psi_odd, povm, p = _outcome_setup(params, L, n, dp, span)
    phi = plane_wave_state(params, grid)
    return p, measured_distribution(phi, povm, p), psi_odd


@dataclass(frozen=True)
class ConservationReport:
    omegas: tuple
    means: tuple
    variances: tuple
    dps: tuple
    slope: float
    intercept: float

    @property
    def limit_width(self) -> float:
        """Standard deviation extrapolated to omega = 0."""
        return float(np.sqrt(max(self.intercept, 0.0)))

    def mean_within_dp(self, p_true: float) -> bool:
        return all(abs(mu - p_true) < dp for mu, dp in zip(self.means, self.dps))


def conservation_and_limit_check(
    params: ModelParams,
    omegas: Sequence[float] = (1.0, 0.25, 0.0625),
    L: float = 20.0,
    n: int = 1024,
) -> ConservationReport:
    """Mean and variance per omega and a linear fit ``variance = slope omega + intercept``."""
    if any(not w > 0 for w in omegas) or list(omegas) != sorted(omegas, reverse=True):
        raise InvalidParameterError("omegas must be positive and decreasing")
    results = [run_distribution(_with_omega(params, w), L, n) for w in omegas]
    var = np.array([r.variance for r in results])
    slope, intercept = np.polyfit(np.asarray(omegas, dtype=float), var, 1)
    return ConservationReport(
        tuple(float(w) for w in omegas),
        tuple(r.mean for r in results),
        tuple(float(v) for v in var),
        tuple(r.dp for r in results),
        float(slope),
        float(intercept),
    )


def _with_omega(params: ModelParams, omega: float) -> ModelParams:
    return replace(params, omega=omega)
