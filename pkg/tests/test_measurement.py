import warnings
from dataclasses import replace

import numpy as np
import pytest

from qhalfline.errors import (
    AliasingError,
    ConfigurationError,
    InvalidGroundError,
    InvalidParameterError,
    SingularKernelWarning,
    SystematicErrorWarning,
)
from qhalfline.grid import WaveFunction, make_grid, normalize, nyquist_momentum_grid
from qhalfline.measurement import (
    HARD,
    OUTCOME_SIGN,
    KrausPovm,
    ModelParams,
    Window,
    analytic_distribution,
    conservation_and_limit_check,
    convex_potential_distribution,
    extended_hamiltonian,
    ground_residual,
    kick_unitary,
    kraus_family,
    kraus_operator,
    measured_distribution,
    moments,
    odd_ground_state,
    plane_wave_state,
    povm_from_kraus,
    run_distribution,
    system_hamiltonian,
    unnormalized_distribution,
)
from qhalfline.povm import build_povm, ones_kernel, optimal_kernel


@pytest.fixture(scope="module")
def params():
    return ModelParams()


@pytest.fixture(scope="module")
def odd(params):
    return odd_ground_state(params, make_grid("half-line", 20.0, 128))[1]


@pytest.fixture(scope="module")
def harmonic_run(params):
    return run_distribution(params, 20.0, 1024)


def test_kick_unitary(odd):
    g = odd.grid
    np.testing.assert_allclose(kick_unitary(1.0, 0.0, g).matrix, np.eye(g.n))
    u = kick_unitary(0.7, 1.3, g).matrix
    assert np.max(np.abs(u.conj().T @ u - np.eye(g.n))) < 1e-12
    with pytest.raises(AliasingError):
        kick_unitary(1.0, 1.01 * g.nyquist, g)


def test_kick_shifts_mean_momentum():
    g = make_grid("whole-line", 20.0, 512)
    mg = nyquist_momentum_grid(g)
    x = g.points
    k, gP = 1.5, 0.6
    psi = normalize(WaveFunction(g, np.exp(-(x**2) / 16 + 1j * k * x)))
    kicked = kick_unitary(1.0, gP, g).apply(psi)
    meas = build_povm(ones_kernel(g.n), mg, g)
    mean, _ = moments(mg.points, meas.probabilities(kicked), mg.dp)
    assert abs(mean - (k - gP)) <= mg.dp


def test_odd_ground_state_is_exact_eigenvector(params, odd):
    assert ground_residual(extended_hamiltonian(params, odd.grid), odd) < 1e-9
    assert abs(odd.norm() - 1.0) < 1e-12


def test_kraus_operator_rank_one_and_form(params, odd):
    a = kraus_operator(params, odd, 0.8)
    s = np.linalg.svd(a, compute_uv=False)
    assert s[1] < 1e-10 * s[0]
    v, x = odd.values, odd.grid.points
    np.testing.assert_allclose(a, np.outer(v, (v * np.exp(1j * params.g * 0.8 * x)).conj()), atol=1e-12)
    np.testing.assert_allclose(kraus_operator(params, odd, 0.0), np.outer(v, v.conj()), atol=1e-12)


def test_kraus_operator_rejects_non_eigenstate(params, odd):
    bad = normalize(WaveFunction(odd.grid, odd.values + 0.1 * np.exp(-odd.grid.points**2)))
    with pytest.raises(InvalidGroundError):
        kraus_operator(params, bad, 0.1)
    with pytest.raises(InvalidGroundError):
        kraus_operator(params, WaveFunction(odd.grid, 2 * odd.values), 0.1)


def test_half_line_ground_passes_check(params):
    half = make_grid("half-line", 20.0, 128)
    from qhalfline.operators import ground_state

    _, psi = ground_state(system_hamiltonian(params, half))
    assert kraus_operator(params, psi, 0.3).shape == (128, 128)


@pytest.fixture(scope="module")
def equivalence(params, odd):
    mg = nyquist_momentum_grid(odd.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularKernelWarning)
        kraus = povm_from_kraus(kraus_family(params, odd, mg))
        opt = build_povm(optimal_kernel(odd), mg, odd.grid)
    return kraus, opt, mg


def test_kraus_povm_equals_optimal_povm(equivalence):
    kraus, opt, mg = equivalence
    assert OUTCOME_SIGN == 1
    for j in range(0, mg.count, 5):
        assert np.max(np.abs(kraus.element(j) - opt.element(j))) < 1e-10


def test_kraus_elements_positive_and_complete(equivalence):
    kraus, _, mg = equivalence
    for j in (0, 40, 128, 255):
        e = kraus.element(j)
        assert np.max(np.abs(e - e.conj().T)) < 1e-12
        assert np.linalg.eigvalsh(e)[0] >= -1e-10
    assert kraus.completeness_residual() < 1e-3


def test_kraus_fast_density_matches_elements(params, odd, equivalence):
    kraus, _, mg = equivalence
    phi = plane_wave_state(replace(params, window=Window(HARD)), odd.grid)
    v = phi.values
    direct = [np.vdot(v, kraus.element(j) @ v).real * odd.grid.dx / mg.dp for j in range(0, mg.count, 17)]
    np.testing.assert_allclose(kraus.probabilities(phi)[::17], direct, atol=1e-12)


def test_g_invariance(params, odd):
    mg = nyquist_momentum_grid(odd.grid)
    phi = plane_wave_state(params, odd.grid)
    dens = [KrausPovm(kraus_family(replace(params, g=g), odd, mg, fiber_normalized=False)).probabilities(phi) for g in (0.5, 1.0, 3.0)]
    np.testing.assert_allclose(dens[0], dens[1], atol=1e-8)
    np.testing.assert_allclose(dens[2], dens[1], atol=1e-8)
    fam = kraus_family(replace(params, g=3.0), odd, mg)
    np.testing.assert_allclose(fam.outcome(fam.probe_readings), mg.points, atol=1e-12)


def test_plane_wave_state(params):
    g = make_grid("whole-line", 20.0, 1024)
    phi = plane_wave_state(params, g)
    assert abs(phi.norm() - 1) < 1e-12
    mg = nyquist_momentum_grid(g)
    mean, _ = moments(mg.points, build_povm(ones_kernel(g.n), mg, g).probabilities(phi), mg.dp)
    assert abs(mean - params.p_true) <= max(mg.dp, 1 / params.window_width())


def test_hard_window_normalization():
    p = ModelParams(window=Window(HARD))
    a1 = abs(plane_wave_state(p, make_grid("whole-line", 10.0, 256)).values[0]) ** 2
    a2 = abs(plane_wave_state(p, make_grid("whole-line", 20.0, 512)).values[0]) ** 2
    assert abs(a2 / a1 - 0.5) < 1e-12


def test_window_validation(params):
    g = make_grid("whole-line", 5.0, 256)
    with pytest.raises(ConfigurationError):
        plane_wave_state(params, g)
    with pytest.raises(ConfigurationError):
        plane_wave_state(replace(params, window=Window(HARD, 100.0)), g)
    with pytest.warns(SystematicErrorWarning):
        plane_wave_state(replace(params, window=Window(width=1.0)), g)
    with pytest.raises(ConfigurationError):
        Window("triangle")


def test_model_params_validation():
    for bad in (dict(m=0), dict(omega=-1), dict(g=0), dict(potential="cubic")):
        with pytest.raises(InvalidParameterError):
            ModelParams(**bad)


def test_analytic_distribution_values(params):
    assert analytic_distribution(params.p_true, params) == 0.0
    assert abs(analytic_distribution(params.p_true + 1, params) - 2 / np.sqrt(np.pi) * np.exp(-1)) < 1e-15
    q = np.linspace(-12, 12, 24001)
    dq = q[1] - q[0]
    shape = q**2 * np.exp(-(q**2))
    # numerical quadrature of the unnormalized shape fixes the constant
    np.testing.assert_allclose(analytic_distribution(params.p_true + 1, params), np.exp(-1) / (shape.sum() * dq), rtol=1e-10)
    for w in (1.0, 0.25):
        p2 = replace(params, omega=w)
        dens = analytic_distribution(q + params.p_true, p2)
        mean, var = moments(q + params.p_true, dens, dq)
        assert abs(mean - params.p_true) < 1e-10 and abs(var - 1.5 * w) < 1e-8
    with pytest.raises(InvalidParameterError):
        analytic_distribution(0.0, replace(params, omega=0.0))


def test_unnormalized_prefactor_against_direct_integral(params):
    half = make_grid("half-line", 20.0, 1024)
    _, odd = odd_ground_state(params, half)
    hard = replace(params, window=Window(HARD))
    phi = plane_wave_state(hard, odd.grid)
    mg = nyquist_momentum_grid(odd.grid)
    fam = kraus_family(params, odd, mg, fiber_normalized=False)
    p = params.p_true + np.linspace(-3, 3, 13)
    dens = KrausPovm(fam).density_at(phi, p)
    # the printed half-line state is sqrt(2) times the unit odd state, and the
    # element weight carries 1/(2 pi)
    direct = 2 * 2 * np.pi * dens
    np.testing.assert_allclose(direct, unnormalized_distribution(p, params, 1 / odd.grid.extent), rtol=2e-3, atol=1e-12)


def test_measured_distribution_shape(harmonic_run, params):
    r = harmonic_run
    peak = r.measured.max()
    i0 = np.argmin(np.abs(r.p - params.p_true))
    assert r.measured[i0] < 0.01 * peak
    assert abs(r.peak_low - (params.p_true - 1)) <= r.dp and abs(r.peak_high - (params.p_true + 1)) <= r.dp
    assert abs(r.measured.sum() * r.dp - 1) < 1e-12
    assert r.max_error < 1e-2
    assert abs(r.mean - params.p_true) < r.dp
    assert abs(r.variance - 1.5) < 0.1
    np.testing.assert_allclose(np.diff(r.p), r.dp, rtol=1e-9)


def test_measured_distribution_rejects_empty(odd):
    fam = kraus_family(ModelParams(), odd, nyquist_momentum_grid(odd.grid), fiber_normalized=False)
    phi = WaveFunction(odd.grid, np.zeros(odd.grid.n))
    with pytest.raises(InvalidParameterError):
        measured_distribution(phi, KrausPovm(fam))


def test_conservation_and_limit(params):
    rep = conservation_and_limit_check(params, (1.0, 0.25, 0.0625), 20.0, 512)
    assert rep.mean_within_dp(params.p_true)
    assert abs(rep.slope / params.m - 1.5) < 0.15
    assert abs(rep.variances[1] - 0.375) < 0.05
    assert rep.limit_width < 0.05
    with pytest.raises(InvalidParameterError):
        conservation_and_limit_check(params, (0.25, 1.0))


def test_convex_harmonic_reduces_to_closed_form(params):
    p, dens, _ = convex_potential_distribution(params, 20.0, 1024, dp=0.025)
    assert np.max(np.abs(dens - analytic_distribution(p, params))) < 1e-2


def _fft_reference(psi_odd, p, p_true, dp):
    g = psi_odd.grid
    pad = int(round(2 * np.pi / (dp * g.dx)))
    buf = np.zeros(pad, dtype=complex)
    buf[: g.n] = psi_odd.values
    q = np.fft.fftfreq(pad, d=g.dx) * 2 * np.pi
    ft = np.fft.fft(buf) * g.dx * np.exp(-1j * q * g.x_min)
    idx = np.round((p - p_true) / dp).astype(int) % pad
    ref = np.abs(ft[idx]) ** 2
    return ref / (ref.sum() * dp)


def test_quartic_matches_fourier_transform():
    L, n = 20.0, 512
    dx = L / n
    dp = 2 * np.pi / (8 * 2 * n * dx)
    pr = ModelParams(potential="quartic", window=Window(HARD), p_true=round(2.0 / dp) * dp)
    p, dens, psi_odd = convex_potential_distribution(pr, L, n, dp=dp)
    assert np.max(np.abs(dens - _fft_reference(psi_odd, p, pr.p_true, dp))) < 1e-3


def test_flat_well_concentrates(harmonic_run):
    pr = ModelParams(potential="flat", omega=0.0, window=Window(HARD))
    p, dens, _ = convex_potential_distribution(pr, 20.0, 512, dp=0.005)
    _, var = moments(p, dens, 0.005)
    assert var < 1.5 * 0.0625


def test_non_convex_potential_rejected():
    pr = ModelParams(potential=lambda x: -(x**2))
    with pytest.raises(InvalidParameterError):
        system_hamiltonian(pr, make_grid("half-line", 5.0, 64))


def test_run_distribution_requires_harmonic():
    with pytest.raises(InvalidParameterError):
        run_distribution(ModelParams(potential="quartic"), 20.0, 128)
