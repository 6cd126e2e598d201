"""Real/reciprocal lattice geometry, plane-wave shells and Brillouin-zone meshes.

Conventions
-----------
Lattice vectors are stored as the *rows* of a 3x3 array. The dual basis
satisfies ``basis @ dual.T == 2*pi*I``. Reciprocal vectors are labelled by
integer (Miller) coordinates ``G = m @ dual``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisSizeError, DegenerateLatticeError

TWO_PI = 2.0 * np.pi
DEFAULT_MAX_BASIS = 4096


def dual_lattice(basis) -> np.ndarray:
    """Return the dual basis ``e*`` with ``e_j . e*_n = 2 pi delta_jn``.

    Parameters
    ----------
    basis : array_like, shape (3, 3)
        Lattice vectors as rows.

    Raises
    ------
    DegenerateLatticeError
        If ``|det| <= 1e-12 * max|e_j|**3``.
    """
    b = np.asarray(basis, dtype=float)
    if b.shape != (3, 3):
        raise DegenerateLatticeError(
            f"basis must be 3x3, got {b.shape}", operation="dual_lattice"
        )
    scale = np.max(np.linalg.norm(b, axis=1)) ** 3
    det = np.linalg.det(b)
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale or scale == 0.0:
        raise DegenerateLatticeError(
            f"lattice basis is singular (det={det:.3e})", operation="dual_lattice"
        )
    # rows of dual satisfy basis @ dual.T = 2 pi I
    return TWO_PI * np.linalg.inv(b).T


@dataclass(frozen=True)
class Lattice:
    basis: np.ndarray
    dual_basis: np.ndarray

    @classmethod
    def from_basis(cls, basis) -> "Lattice":
        b = np.array(basis, dtype=float)
        return cls(basis=b, dual_basis=dual_lattice(b))

    @classmethod
    def cubic(cls, a: float = 1.0) -> "Lattice":
        return cls.from_basis(a * np.eye(3))

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """Truncated set of reciprocal vectors ``|G| <= cutoff``.

    ``miller`` holds the integer coordinates in lexicographic order;
    ``index`` maps a Miller tuple to its slot.
    """

    cutoff: float
    dual_basis: np.ndarray
    miller: np.ndarray
    index: dict = field(repr=False)

    @classmethod
    def from_miller(cls, miller, dual_basis, cutoff=np.inf) -> "PlaneWaveBasis":
        m = np.asarray(miller, dtype=int).reshape(-1, 3)
        order = np.lexsort(m.T[::-1])
        m = m[order]
        index = {tuple(int(x) for x in row): i for i, row in enumerate(m)}
        return cls(float(cutoff), np.asarray(dual_basis, dtype=float), m, index)

    @property
    def size(self) -> int:
        return len(self.miller)

    def __len__(self) -> int:
        return len(self.miller)

    @property
    def g_vectors(self) -> np.ndarray:
        return self.miller @ self.dual_basis

    @property
    def max_miller(self) -> np.ndarray:
        return np.max(np.abs(self.miller), axis=0)

    def slots(self, miller) -> np.ndarray:
        """Slot of each Miller row, ``-1`` where it is not in the basis."""
        m = np.asarray(miller, dtype=int).reshape(-1, 3)
        return np.array([self.index.get(tuple(int(x) for x in row), -1) for row in m])

    def shift_slots(self, gamma) -> np.ndarray:
        """For each slot ``G`` the slot of ``G + gamma`` (``-1`` if absent)."""
        return self.slots(self.miller + np.asarray(gamma, dtype=int))

    def shifted(self, gamma) -> "PlaneWaveBasis":
        """The basis translated by the Miller vector ``gamma``."""
        return PlaneWaveBasis.from_miller(
            self.miller + np.asarray(gamma, dtype=int), self.dual_basis, self.cutoff
        )


def reciprocal_shell(
    dual_basis,
    cutoff: float,
    *,
    axes=(0, 1, 2),
    max_size: int = DEFAULT_MAX_BASIS,
) -> PlaneWaveBasis:
    """All ``G = sum n_i e*_i`` with ``|G| <= cutoff``.

    ``axes`` lists the reciprocal directions along which ``n_i`` may be
    nonzero; z-invariant media use ``axes=(0, 1)``.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    dual = np.asarray(dual_basis, dtype=float)
    # n_i = a_i . G / 2pi, so |n_i| <= |a_i| cutoff / 2pi
    real = dual_lattice(dual)
    bounds = np.floor(np.linalg.norm(real, axis=1) * cutoff / TWO_PI + 1e-9).astype(int)
    for i in range(3):
        if i not in axes:
            bounds[i] = 0
    box = np.prod(2 * bounds + 1)
    if box > 50 * max_size:
        raise BasisSizeError(
            f"cutoff {cutoff} spans {box} candidate vectors", operation="reciprocal_shell"
        )
    ranges = [np.arange(-b, b + 1) for b in bounds]
    m = np.array(list(itertools.product(*ranges)), dtype=int).reshape(-1, 3)
    g = m @ dual
    tol = 1e-9 * max(cutoff, 1.0)
    m = m[np.linalg.norm(g, axis=1) <= cutoff + tol]
    if len(m) > max_size:
        raise BasisSizeError(
            f"basis size {len(m)} exceeds maximum {max_size}",
            operation="reciprocal_shell",
        )
    return PlaneWaveBasis.from_miller(m, dual, cutoff)


@dataclass(frozen=True, eq=False)
class KMesh:
    """Shifted Monkhorst-Pack mesh over one reciprocal cell.

    Points are stored flat in C order over ``(n1, n2, n3)``.
    """

    divisions: tuple
    shift: tuple
    dual_basis: np.ndarray
    fractional: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.fractional @ self.dual_basis

    def __len__(self) -> int:
        return len(self.fractional)

    def flat_index(self, n1, n2, n3) -> int:
        return int(np.ravel_multi_index((n1, n2, n3), self.divisions))

    def grid_indices(self) -> np.ndarray:
        return np.array(np.unravel_index(np.arange(len(self)), self.divisions)).T


def bz_mesh(dual_basis, divisions, shift=(0.5, 0.5, 0.5)) -> KMesh:
    """Points ``k = sum_i (n_i + shift_i)/N_i e*_i`` for ``n_i = 0..N_i-1``."""
    div = tuple(int(d) for d in divisions)
    if len(div) != 3 or min(div) < 1:
        raise ValueError(f"divisions must be three positive integers, got {divisions}")
    s = tuple(float(x) for x in shift)
    if len(s) != 3 or any(not 0.0 <= x < 1.0 for x in s):
        raise ValueError(f"shift components must lie in [0, 1), got {shift}")
    grids = np.meshgrid(*[np.arange(n) for n in div], indexing="ij")
    n = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    frac = (n + np.array(s)) / np.array(div, dtype=float)
    return KMesh(div, s, np.asarray(dual_basis, dtype=float), frac)
