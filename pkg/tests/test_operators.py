import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from emchern.errors import PolarizationError, ShiftTooLargeError
from emchern.lattice import Lattice, PlaneWaveBasis
from emchern.lattice import reciprocal_shell
from emchern.materials import MaterialWeights, grid_points
from emchern.operators import (
    ELECTRIC,
    FIRST_ORDER,
    MAGNETIC,
    assemble,
    assemble_gram,
    assemble_rot,
    assemble_wave_operator,
    cross_matrix,
    equivariance_shift,
)
from emchern.spectrum import solve_fiber

TWO_PI = 2.0 * np.pi
CUBIC_DUAL = TWO_PI * np.eye(3)
K = np.array([0.3, 0.0, 0.0])


def single():
    return reciprocal_shell(CUBIC_DUAL, 0.0)


def test_cross_matrix_acts_as_cross_product():
    v, w = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.1])
    assert_allclose(cross_matrix(v) @ w, np.cross(v, w))


def test_rot_single_plane_wave():
    rot = assemble_rot(K, single())
    kx = np.array([[0, 0, 0], [0, 0, -0.3], [0, 0.3, 0]])
    assert_allclose(rot[:3, 3:], -kx)
    assert_allclose(rot[3:, :3], kx)
    assert_allclose(rot[:3, :3], 0.0)
    assert_allclose(rot[3:, 3:], 0.0)
    assert_allclose(rot, rot.conj().T)


def test_rot_k_to_minus_k_is_conjugate():
    basis = reciprocal_shell(CUBIC_DUAL, TWO_PI)
    k = np.array([0.4, -0.2, 1.1])
    a, b = assemble_rot(k, basis), assemble_rot(-k, basis)
    n = len(basis)
    perm_g = basis.slots(-basis.miller)
    perm = np.concatenate([(perm_g[:, None] * 3 + np.arange(3)).ravel(),
                           3 * n + (perm_g[:, None] * 3 + np.arange(3)).ravel()])
    # -(k+G) x = conj of (k+G)x up to the overall sign of the curl symbol
    assert_allclose(b[np.ix_(perm, perm)], -np.conj(a))


def test_rot_is_block_diagonal_in_g():
    basis = reciprocal_shell(CUBIC_DUAL, TWO_PI)
    rot = assemble_rot(np.array([0.1, 0.2, 0.3]), basis)
    d = rot[21:, :21]
    for i in range(7):
        for j in range(7):
            block = d[3 * i:3 * i + 3, 3 * j:3 * j + 3]
            if i != j:
                assert not np.any(block)
    assert not np.any(rot[:21, :21]) and not np.any(rot[21:, 21:])


def test_gram_identity_and_scaled():
    basis = reciprocal_shell(CUBIC_DUAL, TWO_PI)
    w1 = MaterialWeights.homogeneous(1.0, 1.0, (8, 8, 8))
    w4 = MaterialWeights.homogeneous(4.0, 1.0, (8, 8, 8))
    assert_allclose(assemble_gram(w1, basis, "W"), np.eye(42), atol=1e-15)
    assert_allclose(assemble_gram(w4, basis, "eps"), 4.0 * np.eye(21), atol=1e-14)


def test_gram_single_harmonic():
    grid = (8, 8, 8)
    x = grid_points(Lattice.cubic(), grid)
    eps = (2.0 + np.cos(TWO_PI * x[..., 0]))[..., None, None] * np.eye(3)
    w = MaterialWeights.from_samples(eps, np.broadcast_to(np.eye(3), eps.shape))
    basis = PlaneWaveBasis.from_miller([[-1, 0, 0], [0, 0, 0], [1, 0, 0], [0, 1, 0]], CUBIC_DUAL)
    s = assemble_gram(w, basis, "eps")
    idx = basis.index

    def blk(a, b):
        i, j = idx[a], idx[b]
        return s[3 * i:3 * i + 3, 3 * j:3 * j + 3]

    for g in basis.miller:
        assert_allclose(blk(tuple(g), tuple(g)), 2.0 * np.eye(3), atol=1e-14)
    assert_allclose(blk((0, 0, 0), (1, 0, 0)), 0.5 * np.eye(3), atol=1e-14)
    assert_allclose(blk((-1, 0, 0), (0, 0, 0)), 0.5 * np.eye(3), atol=1e-14)
    assert_allclose(blk((-1, 0, 0), (1, 0, 0)), 0.0, atol=1e-14)
    assert_allclose(blk((0, 0, 0), (0, 1, 0)), 0.0, atol=1e-14)


def test_free_space_electric_eigenvalues():
    w = MaterialWeights.homogeneous(1.0, 1.0, (8, 8, 8))
    sp = solve_fiber(assemble_wave_operator(K, single(), "EE", "consistent", w))
    assert_allclose(sp.eigenvalues, [0.0, 0.09, 0.09], atol=1e-14)


def test_homogeneous_eps4_electric_eigenvalues():
    w = MaterialWeights.homogeneous(4.0, 1.0, (8, 8, 8))
    for mode in ("consistent", "independent"):
        sp = solve_fiber(assemble_wave_operator(K, single(), "EE", mode, w))
        assert_allclose(sp.eigenvalues, [0.0, 0.0225, 0.0225], atol=1e-14)


def test_consistent_squares_match_first_order(gyro_weights, shell49):
    k = np.array([0.7, 1.9, 0.0])
    first = solve_fiber(assemble(k, shell49, gyro_weights, FIRST_ORDER, polarization="TM"))
    om2 = np.sort(first.positive_omegas) ** 2
    for kind in (ELECTRIC, MAGNETIC):
        wave = solve_fiber(assemble(k, shell49, gyro_weights, kind, polarization="TM"))
        assert_allclose(np.sort(wave.positive_omegas) ** 2, om2, rtol=1e-10)


def test_full_sector_union_of_squares(gyro_weights, shell49):
    """The spectra of A_E and A_H together give omega^2 over both frequency signs."""
    k = np.array([0.7, 1.9, 0.0])
    first = solve_fiber(assemble(k, shell49, gyro_weights, FIRST_ORDER))
    e = solve_fiber(assemble(k, shell49, gyro_weights, ELECTRIC)).eigenvalues
    h = solve_fiber(assemble(k, shell49, gyro_weights, MAGNETIC)).eigenvalues
    scale = np.max(first.eigenvalues ** 2)
    assert_allclose(np.sort(np.concatenate([e, h])), np.sort(first.eigenvalues ** 2),
                    atol=1e-10 * scale)


def test_operators_are_hermitian(gyro_weights, shell49):
    k = np.array([1.0, -0.5, 0.0])
    for kind in (FIRST_ORDER, ELECTRIC, MAGNETIC):
        for mode in ("consistent", "independent"):
            p = assemble(k, shell49, gyro_weights, kind, mode, "TM")
            assert p.hermiticity_residual() <= 1e-12
            p.cholesky()


def test_tm_sector_needs_planar_momentum(gyro_weights, shell49):
    with pytest.raises(PolarizationError):
        assemble(np.array([0.1, 0.1, 0.2]), shell49, gyro_weights, FIRST_ORDER, polarization="TM")


def test_equivariance_homogeneous_full_spectrum():
    basis = reciprocal_shell(CUBIC_DUAL, 2.0 * TWO_PI)
    w = MaterialWeights.homogeneous(2.0, 1.0, (9, 9, 9))
    k = np.array([0.3, 0.2, 0.1]) * TWO_PI
    p = assemble(k, basis, w)
    q = equivariance_shift(p, (1, 0, 0))
    direct = assemble(q.k, q.basis, w)
    assert_allclose(q.k, k - CUBIC_DUAL[0])
    assert_allclose(solve_fiber(q).eigenvalues, solve_fiber(direct).eigenvalues, atol=1e-12)


def test_equivariance_zero_shift_is_identity(gyro_weights, shell49):
    p = assemble(np.array([0.5, 0.5, 0.0]), shell49, gyro_weights, polarization="TM")
    q = equivariance_shift(p, (0, 0, 0))
    assert np.array_equal(q.stiffness, p.stiffness) and np.array_equal(q.gram, p.gram)


def test_equivariance_gyrotropic_lowest(gyro_weights, shell49):
    k = np.array([0.6, 0.9, 0.0])
    p = assemble(k, shell49, gyro_weights, polarization="TM")
    q = equivariance_shift(p, (1, 0, 0))
    direct = assemble(q.k, q.basis, gyro_weights, polarization="TM")
    a = solve_fiber(q).positive_omegas[:4]
    b = solve_fiber(direct).positive_omegas[:4]
    assert_allclose(a, b, rtol=1e-8)


def test_equivariance_empty_overlap():
    p = assemble(K, single(), MaterialWeights.homogeneous(1.0, 1.0, (8, 8, 8)))
    with pytest.raises(ShiftTooLargeError):
        equivariance_shift(p, (1, 0, 0))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
def test_rot_hermitian_and_off_diagonal(k):
    basis = reciprocal_shell(CUBIC_DUAL, TWO_PI)
    rot = assemble_rot(np.array(k), basis)
    assert_allclose(rot, rot.conj().T, atol=1e-15)
    assert not np.any(rot[:21, :21]) and not np.any(rot[21:, 21:])
