import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from emchern.errors import BasisSizeError, DegenerateLatticeError
from emchern.lattice import Lattice, PlaneWaveBasis, bz_mesh, dual_lattice, reciprocal_shell

TWO_PI = 2.0 * np.pi


def test_dual_of_cubic():
    assert_allclose(dual_lattice(np.eye(3)), TWO_PI * np.eye(3), atol=1e-12)


def test_dual_of_fcc():
    fcc = 0.5 * np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
    dual = dual_lattice(fcc)
    # bcc with side 4 pi
    expected = TWO_PI * np.array([[-1, 1, 1], [1, -1, 1], [1, 1, -1]], dtype=float)
    assert_allclose(dual, expected, atol=1e-12)
    assert_allclose(fcc @ dual.T, TWO_PI * np.eye(3), atol=1e-12)


def test_dual_round_trip_is_identity():
    b = np.array([[1.0, 0.2, 0.0], [0.0, 1.3, 0.1], [0.3, 0.0, 0.9]])
    assert_allclose(dual_lattice(dual_lattice(b)), b, atol=1e-12)


def test_degenerate_lattice_rejected():
    with pytest.raises(DegenerateLatticeError):
        dual_lattice([[1, 0, 0], [2, 0, 0], [0, 0, 1]])


@pytest.mark.parametrize("cutoff, size", [(0.0, 1), (TWO_PI, 7), (np.sqrt(2) * TWO_PI, 19)])
def test_cubic_shell_sizes(cutoff, size):
    basis = reciprocal_shell(TWO_PI * np.eye(3), cutoff)
    assert len(basis) == size


@pytest.mark.parametrize("radius, size", [(2.5, 21), (4.0, 49), (5.0, 81)])
def test_planar_shell_sizes(radius, size):
    basis = reciprocal_shell(TWO_PI * np.eye(3), radius * TWO_PI, axes=(0, 1))
    assert len(basis) == size
    assert np.all(basis.miller[:, 2] == 0)


def test_shell_too_large():
    with pytest.raises(BasisSizeError):
        reciprocal_shell(TWO_PI * np.eye(3), 12 * TWO_PI, max_size=500)


def test_shell_slots_and_shift():
    basis = reciprocal_shell(TWO_PI * np.eye(3), TWO_PI)
    slots = basis.slots([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    assert slots[0] >= 0 and slots[1] >= 0 and slots[2] == -1
    moved = basis.shift_slots([1, 0, 0])
    # only G = (-1,0,0) and G = 0 have G + e1 inside the 7-vector shell
    assert np.sum(moved >= 0) == 2


def test_from_miller_is_sorted():
    b = PlaneWaveBasis.from_miller([[1, 0, 0], [-1, 0, 0], [0, 0, 0]], TWO_PI * np.eye(3))
    assert b.miller.tolist() == [[-1, 0, 0], [0, 0, 0], [1, 0, 0]]
    assert b.index[(0, 0, 0)] == 1


def test_mesh_points():
    mesh = bz_mesh(TWO_PI * np.eye(3), (2, 2, 1), (0.5, 0.5, 0.0))
    assert len(mesh) == 4
    assert_allclose(mesh.fractional[0], [0.25, 0.25, 0.0])
    assert_allclose(mesh.points[3], TWO_PI * np.array([0.75, 0.75, 0.0]))
    assert mesh.flat_index(1, 0, 0) == 2


def test_mesh_rejects_bad_shift():
    with pytest.raises(ValueError):
        bz_mesh(TWO_PI * np.eye(3), (2, 2, 2), (1.0, 0.0, 0.0))


def test_lattice_volume():
    assert Lattice.cubic(2.0).cell_volume == pytest.approx(8.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=9, max_size=9))
def test_dual_pairing_property(entries):
    b = np.eye(3) + np.array(entries).reshape(3, 3)
    if abs(np.linalg.det(b)) < 0.05:
        return
    d = dual_lattice(b)
    assert_allclose(b @ d.T, TWO_PI * np.eye(3), atol=1e-9)
    assert_allclose(dual_lattice(d), b, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0))
def test_shell_is_inversion_symmetric(radius):
    basis = reciprocal_shell(TWO_PI * np.eye(3), radius * TWO_PI)
    assert np.all(basis.slots(-basis.miller) >= 0)
    assert np.all(np.linalg.norm(basis.g_vectors, axis=1) <= radius * TWO_PI + 1e-9)
