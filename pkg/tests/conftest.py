import numpy as np
import pytest

from emchern.lattice import Lattice, bz_mesh, reciprocal_shell
from emchern.materials import MaterialProfile, MaterialWeights, sample_weights
from emchern.spectrum import band_structure

TWO_PI = 2.0 * np.pi

# Gyromagnetic rod array: TM band 2 is gapped with Chern number +1.
GYRO = MaterialProfile(
    kind="gyrotropic-rod-array",
    gyrotropic="mu",
    rod_tensor=(14.0, 12.4, 1.0),
    rod_scalar=15.0,
    radius=0.11,
    smoothing=1.0,
)
GRID2D = (32, 32, 1)
PLANAR_SHIFT = (0.5, 0.5, 0.0)


@pytest.fixture(scope="session")
def cubic():
    return Lattice.cubic()


@pytest.fixture(scope="session")
def gyro_weights(cubic):
    return sample_weights(GYRO, cubic, GRID2D)


@pytest.fixture(scope="session")
def shell49(cubic):
    return reciprocal_shell(cubic.dual_basis, 4 * TWO_PI, axes=(0, 1))


@pytest.fixture(scope="session")
def vacuum():
    return MaterialWeights.homogeneous(1.0, 1.0, (8, 8, 8))


@pytest.fixture(scope="session")
def gyro_tm_bands(cubic, gyro_weights, shell49):
    mesh = bz_mesh(cubic.dual_basis, (8, 8, 1), PLANAR_SHIFT)
    return band_structure(mesh, gyro_weights, shell49, polarization="TM", keep=8,
                          keep_problems=True)


@pytest.fixture(scope="session")
def gyro_tm_bands16(cubic, gyro_weights, shell49):
    mesh = bz_mesh(cubic.dual_basis, (16, 16, 1), PLANAR_SHIFT)
    return band_structure(mesh, gyro_weights, shell49, polarization="TM", keep=3)


@pytest.fixture(scope="session")
def gyro_tm_bands24(cubic, gyro_weights, shell49):
    mesh = bz_mesh(cubic.dual_basis, (24, 24, 1), PLANAR_SHIFT)
    return band_structure(mesh, gyro_weights, shell49, polarization="TM", keep=3)


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# Time-reversal-symmetric media with a well-gapped family: (profile, polarization, bands).
REAL_CASES = {
    "anisotropic-rods": (
        MaterialProfile(kind="gyrotropic-rod-array", gyrotropic="eps", rod_tensor=(14.0, 0.0, 15.0),
                        rod_scalar=1.0, radius=0.11, smoothing=1.0),
        "TM", [2]),
    "unbiased-ferrite-rods": (
        MaterialProfile(kind="gyrotropic-rod-array", gyrotropic="mu", rod_tensor=(14.0, 0.0, 1.0),
                        rod_scalar=15.0, radius=0.11, smoothing=1.0),
        "TE", [2, 3]),
    "dielectric-rods": (
        MaterialProfile(kind="gyrotropic-rod-array", gyrotropic="eps", rod_tensor=(8.9, 0.0, 8.9),
                        rod_scalar=1.0, radius=0.2, smoothing=1.0),
        "TE", [2, 3]),
}


def real_case_bands(name, cubic, shell49, divisions=(8, 8, 1)):
    profile, pol, family = REAL_CASES[name]
    weights = sample_weights(profile, cubic, GRID2D)
    mesh = bz_mesh(cubic.dual_basis, divisions, PLANAR_SHIFT)
    return band_structure(mesh, weights, shell49, polarization=pol, keep=max(family) + 1), family


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
