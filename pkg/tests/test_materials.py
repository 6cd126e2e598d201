import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from emchern.errors import InvalidProfileError, InvalidWeightsError, ResolutionError
from emchern.lattice import Lattice, reciprocal_shell
from emchern.materials import (
    MaterialProfile,
    MaterialWeights,
    dump_tabulated,
    fourier_coefficients,
    gyrotropic_tensor,
    grid_points,
    inverse_weights,
    load_tabulated,
    sample_weights,
    validate_weights,
)

TWO_PI = 2.0 * np.pi
I3 = np.eye(3)


def harmonic_eps(grid=(8, 8, 8)):
    """eps(x) = (2 + cos(e1* . x)) I on the unit cube."""
    x = grid_points(Lattice.cubic(), grid)
    f = 2.0 + np.cos(TWO_PI * x[..., 0])
    return f[..., None, None] * I3


def test_homogeneous_identity_samples():
    w = MaterialWeights.homogeneous(1.0, 1.0, (8, 8, 8))
    assert_allclose(w.eps_samples, np.broadcast_to(I3, (8, 8, 8, 3, 3)))
    assert w.report("eps").as_tuple() == (0.0, 1.0, 1.0)


def test_homogeneous_bounds():
    w = MaterialWeights.homogeneous(4.0, 1.0, (4, 4, 4))
    assert_allclose(w.eps_samples[1, 2, 3], 4.0 * I3)
    assert w.bounds == (1.0, 4.0)


def test_gyrotropic_rod_bounds():
    prof = MaterialProfile(kind="gyrotropic-rod-array", rod_tensor=(14.0, 12.4, 15.0), radius=0.11)
    w = sample_weights(prof, Lattice.cubic(), (32, 32, 4))
    rep = w.report("eps")
    assert rep.ok
    assert rep.c == pytest.approx(1.0)
    assert rep.C == pytest.approx(26.4)
    # the rod centre carries the full tensor
    ev = np.linalg.eigvalsh(w.eps_samples[0, 0, 0])
    assert_allclose(ev, [1.6, 15.0, 26.4], atol=1e-12)


def test_invalid_gyrotropic_tensor():
    with pytest.raises(InvalidProfileError):
        MaterialProfile(kind="gyrotropic-rod-array", rod_tensor=(1.0, 2.0, 1.0))


def test_fourier_of_identity():
    w = MaterialWeights.homogeneous(1.0, 1.0, (8, 8, 8))
    c = w.coefficients("eps", [[0, 0, 0], [1, 0, 0], [0, 2, -1]])
    assert_allclose(c[0], I3, atol=1e-15)
    assert_allclose(c[1:], 0.0, atol=1e-15)


def test_fourier_single_harmonic():
    eps = harmonic_eps()
    c = fourier_coefficients(eps, [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [2, 0, 0], [0, 1, 0]])
    assert_allclose(c[0], 2.0 * I3, atol=1e-14)
    assert_allclose(c[1], 0.5 * I3, atol=1e-14)
    assert_allclose(c[2], 0.5 * I3, atol=1e-14)
    assert_allclose(c[3:], 0.0, atol=1e-14)


def test_fourier_matches_direct_quadrature(cubic, gyro_weights):
    miller = np.array([[1, 0, 0], [1, 2, 0], [-3, 1, 0]])
    x = grid_points(cubic, gyro_weights.grid)
    fast = gyro_weights.coefficients("mu", miller)
    for m, c in zip(miller, fast):
        g = m @ cubic.dual_basis
        phase = np.exp(-1j * (x @ g))
        direct = np.einsum("abc,abcij->ij", phase, gyro_weights.mu_samples) / phase.size
        assert_allclose(c, direct, atol=1e-8)


def test_fourier_hermitian_symmetry(gyro_weights, shell49):
    m = shell49.miller
    plus = gyro_weights.coefficients("mu", m)
    minus = gyro_weights.coefficients("mu", -m)
    assert_allclose(minus, np.conj(np.swapaxes(plus, -1, -2)), atol=1e-12)


def test_aliasing_is_rejected():
    w = MaterialWeights.homogeneous(1.0, 1.0, (4, 4, 4))
    with pytest.raises(ResolutionError):
        w.coefficients("eps", [[2, 0, 0]])


def test_validate_identity():
    rep = validate_weights(np.broadcast_to(I3, (2, 2, 2, 3, 3)))
    assert rep.as_tuple() == (0.0, 1.0, 1.0)
    assert rep.ok


def test_validate_flags_negative_point():
    s = np.broadcast_to(I3, (2, 2, 2, 3, 3)).astype(complex).copy()
    s[1, 0, 1] = np.diag([1.0, -0.1, 1.0])
    rep = validate_weights(s)
    assert not rep.ok
    assert [tuple(int(i) for i in p) for p, _ in rep.violations] == [(1, 0, 1)]
    with pytest.raises(InvalidWeightsError):
        MaterialWeights.from_samples(s, s)


def test_validate_flags_non_hermitian():
    s = np.broadcast_to(I3, (2, 2, 2, 3, 3)).astype(complex).copy()
    s[0, 0, 0, 0, 1] = 1e-6
    assert not validate_weights(s).ok


def test_inverse_of_constant():
    eps = np.broadcast_to(4.0 * I3, (4, 4, 4, 3, 3))
    basis = reciprocal_shell(TWO_PI * I3, TWO_PI)
    c = inverse_weights(eps, basis)
    zero = basis.index[(0, 0, 0)]
    assert_allclose(c[zero], 0.25 * I3, atol=1e-15)
    assert_allclose(np.delete(c, zero, axis=0), 0.0, atol=1e-15)


def test_inverse_of_single_harmonic():
    grid = (64, 1, 1)
    x = grid_points(Lattice.cubic(), grid)
    eps = np.broadcast_to(I3, grid + (3, 3)).astype(complex).copy()
    eps[..., 0, 0] = 2.0 + np.cos(TWO_PI * x[..., 0])
    c = fourier_coefficients(np.linalg.inv(eps), [[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    # 1/(2 + cos t) = (1/sqrt 3) sum_n (sqrt 3 - 2)^|n| e^{int}
    r = np.sqrt(3.0) - 2.0
    assert_allclose(c[:, 0, 0].real, np.array([1.0, r, r * r]) / np.sqrt(3.0), atol=1e-12)
    assert_allclose(c[:, 1, 1], [1.0, 0.0, 0.0], atol=1e-15)


def test_pointwise_inverse_identity(gyro_weights):
    inv = np.linalg.inv(gyro_weights.mu_samples)
    prod = gyro_weights.mu_samples @ inv
    assert_allclose(prod, np.broadcast_to(I3, prod.shape), atol=1e-12)


def test_time_reversal_flag(cubic):
    gyro = MaterialProfile(kind="gyrotropic-rod-array", rod_tensor=(14.0, 12.4, 15.0))
    real = MaterialProfile(kind="gyrotropic-rod-array", rod_tensor=(14.0, 0.0, 15.0))
    assert sample_weights(gyro, cubic, (16, 16, 1)).breaks_time_reversal()
    assert not sample_weights(real, cubic, (16, 16, 1)).breaks_time_reversal()


def test_inverse_dft_reproduces_samples(gyro_weights):
    table = gyro_weights.table("mu")
    back = np.fft.ifftn(table * np.prod(gyro_weights.grid), axes=(0, 1, 2))
    assert_allclose(back, gyro_weights.mu_samples, atol=1e-10)


def test_tabulated_round_trip(tmp_path, cubic, gyro_weights):
    path = tmp_path / "w.json"
    dump_tabulated(path, cubic, gyro_weights)
    back = load_tabulated(path)
    assert back.grid == gyro_weights.grid
    assert np.array_equal(back.mu_samples, gyro_weights.mu_samples)
    prof = MaterialProfile(kind="user-tabulated", path=str(path))
    again = sample_weights(prof, cubic, gyro_weights.grid)
    assert np.array_equal(again.eps_samples, gyro_weights.eps_samples)


def test_sharp_rod_is_binary(cubic):
    prof = MaterialProfile(kind="gyrotropic-rod-array", rod_tensor=(3.0, 1.0, 2.0), smoothing=0.0,
                           radius=0.3)
    w = sample_weights(prof, cubic, (16, 16, 1))
    zz = w.eps_samples[..., 2, 2].real
    assert set(np.unique(zz)) == {1.0, 2.0}


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 20.0), st.floats(0.0, 0.99), st.floats(0.1, 20.0))
def test_gyrotropic_tensor_spectrum(e1, ratio, e3):
    kappa = ratio * e1
    t = gyrotropic_tensor(e1, kappa, e3)
    assert_allclose(t, t.conj().T)
    assert_allclose(np.linalg.eigvalsh(t), sorted([e1 - kappa, e1 + kappa, e3]), rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-0.45, 0.45), min_size=4, max_size=4))
def test_coefficients_are_hermitian_field(amps):
    grid = (8, 8, 1)
    x = grid_points(Lattice.cubic(), grid)
    f = 2.0 + amps[0] * np.cos(TWO_PI * x[..., 0]) + amps[1] * np.sin(TWO_PI * x[..., 1])
    g = amps[2] * np.cos(TWO_PI * (x[..., 0] + x[..., 1])) + amps[3]
    s = np.zeros(grid + (3, 3), dtype=complex)
    s[..., 0, 0] = s[..., 1, 1] = s[..., 2, 2] = f
    s[..., 0, 1] = 1j * g
    s[..., 1, 0] = -1j * g
    m = np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0], [2, -1, 0]])
    plus, minus = fourier_coefficients(s, m), fourier_coefficients(s, -m)
    assert_allclose(minus, np.conj(np.swapaxes(plus, -1, -2)), atol=1e-13)
