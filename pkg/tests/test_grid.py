import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhalfline.errors import (
    AliasingError,
    DegenerateStateError,
    InvalidParameterError,
    InvalidStateError,
    ShapeError,
)
from qhalfline.grid import (
    MomentumGrid,
    WaveFunction,
    fourier_synthesis,
    inner_product,
    make_grid,
    momentum_grid,
    normalize,
    nyquist_momentum_grid,
)


def test_half_line_points_follow_left_closed_rule():
    g = make_grid("half-line", 32.0, 16)
    assert g.dx == 2.0
    np.testing.assert_array_equal(g.points, 2.0 * np.arange(16))
    assert g.points[0] == 0.0 and g.origin_index == 0


def test_whole_line_points_follow_left_closed_rule():
    g = make_grid("whole-line", 16.0, 16)
    assert g.dx == 2.0
    np.testing.assert_array_equal(g.points, -16.0 + 2.0 * np.arange(16))
    assert g.origin_index == 8


@pytest.mark.parametrize("kind,L,n", [("half-line", 10, 5), ("whole-line", 10, 10), ("half-line", 0, 100), ("half-line", -1, 64), ("half-line", 10, 15.5), ("annulus", 10, 64)])
def test_make_grid_rejects_bad_parameters(kind, L, n):
    with pytest.raises(InvalidParameterError):
        make_grid(kind, L, n)


def test_points_strictly_increasing():
    g = make_grid("whole-line", 7.3, 101)
    assert np.all(np.diff(g.points) > 0)


def _random_state(rng, grid, d=1):
    return WaveFunction(grid, rng.standard_normal((grid.n, d)) + 1j * rng.standard_normal((grid.n, d)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3))
def test_inner_product_is_hermitian_and_positive(seed, d):
    rng = np.random.default_rng(seed)
    g = make_grid("whole-line", 5.0, 32)
    phi, psi = _random_state(rng, g, d), _random_state(rng, g, d)
    assert abs(inner_product(phi, psi) - np.conj(inner_product(psi, phi))) < 1e-12
    nn = inner_product(psi, psi)
    assert abs(nn.imag) < 1e-12 and nn.real >= 0


def test_inner_product_of_normalized_state_is_one(rng):
    g = make_grid("half-line", 10.0, 64)
    psi = normalize(_random_state(rng, g))
    assert abs(inner_product(psi, psi) - 1.0) < 1e-10


def test_sine_modes_are_orthogonal():
    L = 20.0
    g = make_grid("half-line", L, 1024)
    s1 = WaveFunction(g, np.sin(np.pi * g.points / L))
    s2 = WaveFunction(g, np.sin(2 * np.pi * g.points / L))
    assert abs(inner_product(s1, s2)) < 1e-8


def test_inner_product_grid_mismatch(rng):
    a = _random_state(rng, make_grid("half-line", 10.0, 64))
    b = _random_state(rng, make_grid("half-line", 10.0, 32))
    with pytest.raises(ShapeError):
        inner_product(a, b)
    with pytest.raises(ShapeError):
        inner_product(a, _random_state(rng, a.grid, 2))


def test_quadrature_converges_for_gaussian_pair():
    # <g1, g2> for Gaussians centred at 0 and 1 with unit width: sqrt(pi) exp(-1/4)
    exact = np.sqrt(np.pi) * np.exp(-0.25)
    errs = []
    for n in (32, 64, 128, 256):
        g = make_grid("whole-line", 10.0, n)
        a = WaveFunction(g, np.exp(-g.points**2 / 2))
        b = WaveFunction(g, np.exp(-((g.points - 1) ** 2) / 2))
        errs.append(abs(inner_product(a, b) - exact))
    assert all(e2 <= e1 + 1e-15 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-12


def test_normalize_divides_by_norm():
    g = make_grid("half-line", 4.0, 16)
    base = np.zeros(g.n)
    base[3] = 1 / np.sqrt(g.dx)
    psi = WaveFunction(g, 2 * base)
    out = normalize(psi)
    np.testing.assert_allclose(out.values, base, atol=1e-15)
    assert out.normalized


def test_normalize_is_idempotent(rng):
    psi = normalize(_random_state(rng, make_grid("whole-line", 3.0, 64)))
    np.testing.assert_allclose(normalize(psi).amplitudes, psi.amplitudes, atol=1e-12)


def test_normalize_zero_vector():
    with pytest.raises(DegenerateStateError):
        normalize(WaveFunction(make_grid("half-line", 1.0, 16), np.zeros(16)))


def test_normalized_tag_is_verified():
    g = make_grid("half-line", 1.0, 16)
    with pytest.raises(InvalidStateError):
        WaveFunction(g, np.ones(16) * 3, normalized=True)


def test_wavefunction_shape_and_finiteness():
    g = make_grid("half-line", 1.0, 16)
    with pytest.raises(ShapeError):
        WaveFunction(g, np.ones(17))
    with pytest.raises(InvalidStateError):
        WaveFunction(g, np.full(16, np.nan))
    psi = WaveFunction(g, np.ones(16))
    assert psi.amplitudes.shape == (16, 1) and not psi.amplitudes.flags.writeable


def test_fourier_synthesis_constant_at_zero():
    g = make_grid("whole-line", 10.0, 64)
    np.testing.assert_allclose(fourier_synthesis(g, 0.0).values, 1 / np.sqrt(2 * np.pi))


def test_fourier_synthesis_orthogonality_on_conjugate_grid():
    g = make_grid("whole-line", 10.0, 64)
    mg = nyquist_momentum_grid(g)
    waves = [fourier_synthesis(g, p) for p in mg.points[::5]]
    gram = np.array([[inner_product(a, b) for b in waves] for a in waves]) * mg.dp
    np.testing.assert_allclose(gram, np.eye(len(waves)), atol=1e-12)


def test_fourier_synthesis_aliasing_guard():
    g = make_grid("whole-line", 10.0, 64)
    with pytest.raises(AliasingError):
        fourier_synthesis(g, 2 * np.pi / g.dx)


def test_momentum_grids():
    g = make_grid("whole-line", 10.0, 64)
    mg = nyquist_momentum_grid(g)
    assert mg.count == 64 and mg.is_complete_for(g)
    assert mg.p_max <= g.nyquist
    np.testing.assert_allclose(mg.points, -mg.points[::-1])
    sym = momentum_grid(0.1, 1.0)
    assert sym.count == 21 and abs(sym.points[0] + 1.0) < 1e-12
    assert sym.index_of(0.3) == 13
    with pytest.raises(InvalidParameterError):
        sym.index_of(0.35)
    with pytest.raises(InvalidParameterError):
        MomentumGrid(0.0, 3)
    inner = sym.interior(0.05)
    assert not inner[0] and not inner[-1] and inner[10]
