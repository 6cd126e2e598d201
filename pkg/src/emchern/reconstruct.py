"""Reconstruction of full fields from one component at a fixed momentum.

Sign convention: with ``Rot = [[0, -D_eh], [D_he, 0]]`` the positive-frequency
eigenvector with electric part ``e`` has magnetic part ``S_mu^-1 D_he e / omega``.
Hence

    iota_E(phi) = (phi, C_mu D_he A_E^{-1/2} phi)
    iota_H(phi) = (-C_eps D_eh A_H^{-1/2} phi, phi)

where ``C`` is ``S^-1`` in consistent mode and the Toeplitz matrix of the
pointwise inverse weight in independent mode, and ``A^{-1/2}`` is the inverse
square root of the wave operator in its own metric, restricted to positive
modes. Bloch vectors are plain coefficient arrays; electric parts come first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedError, TransversalityError
from .lattice import PlaneWaveBasis
from .materials import MaterialWeights
from .operators import (
    FIRST_ORDER,
    MODES,
    FiberProblem,
    _check_sector,
    assemble_gram,
    assemble_rot,
    assemble_wave_operator,
    components,
    curl_matrix,
    toeplitz,
)
from .spectrum import ZERO_TOL, FiberSpectrum, solve_fiber

TRANSVERSAL_TOL = 1e-8
COND_TOL = 1e-7


def pr_component(psi, which: str, n_electric: int | None = None) -> np.ndarray:
    """Electric (``"E"``) or magnetic (``"H"``) slice of a 6N vector.

    ``n_electric`` defaults to half the length, which is right for the full
    sector; planar sectors have unequal blocks.
    """
    psi = np.asarray(psi)
    ne = psi.shape[0] // 2 if n_electric is None else int(n_electric)
    if which == "E":
        return psi[:ne]
    if which == "H":
        return psi[ne:]
    raise ValueError(f"which must be 'E' or 'H', got {which!r}")


def inner(a, b, gram) -> complex:
    """``<a, b>_S = a^H S b``."""
    return complex(np.vdot(a, gram @ b))


def norm(a, gram) -> float:
    return float(np.sqrt(max(inner(a, a, gram).real, 0.0)))


def align_phase(a, b, gram) -> np.ndarray:
    """Return ``a`` times the unit phase that best matches ``b``."""
    z = inner(a, b, gram)
    if abs(z) == 0.0:
        return np.asarray(a)
    return np.asarray(a) * (z / abs(z))


@dataclass(eq=False)
class _WaveDecomposition:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # S-orthonormal columns
    positive: np.ndarray
    zero: np.ndarray


@dataclass(eq=False)
class FiberContext:
    """Cached fiber data at one momentum ``k``.

    Build with :meth:`build`; the eigendecompositions are computed on first use.
    """

    k: np.ndarray
    basis: PlaneWaveBasis
    weights: MaterialWeights
    mode: str = "consistent"
    polarization: str = "full"
    zero_tol: float = ZERO_TOL
    cond_tol: float = COND_TOL

    @classmethod
    def build(cls, k, basis, weights, mode="consistent", polarization="full", **kw):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        k = np.asarray(k, dtype=float)
        _check_sector(k, basis, weights, polarization)
        return cls(k, basis, weights, mode, polarization, **kw)

    # --- static pieces -------------------------------------------------
    @cached_property
    def _comps(self):
        return components(self.polarization)

    @property
    def n_electric(self) -> int:
        return len(self.basis) * len(self._comps[0])

    @property
    def n_magnetic(self) -> int:
        return len(self.basis) * len(self._comps[1])

    @cached_property
    def d_he(self) -> np.ndarray:
        """``(k+G)x`` from electric to magnetic components."""
        e, h = self._comps
        return curl_matrix(self.k, self.basis, h, e)

    @cached_property
    def d_eh(self) -> np.ndarray:
        e, h = self._comps
        return curl_matrix(self.k, self.basis, e, h)

    @cached_property
    def s_eps(self) -> np.ndarray:
        return assemble_gram(self.weights, self.basis, "eps", self.polarization)

    @cached_property
    def s_mu(self) -> np.ndarray:
        return assemble_gram(self.weights, self.basis, "mu", self.polarization)

    @cached_property
    def s_w(self) -> np.ndarray:
        return sla.block_diag(self.s_eps, self.s_mu)

    def gram(self, metric: str) -> np.ndarray:
        return {"eps": self.s_eps, "mu": self.s_mu, "W": self.s_w}[metric]

    def _inverse_weight(self, which):
        s = self.s_mu if which == "mu" else self.s_eps
        if self.mode == "consistent":
            return sla.cho_solve(sla.cho_factor(s, lower=True), np.eye(s.shape[0]))
        comps = self._comps[1] if which == "mu" else self._comps[0]
        t = toeplitz(lambda m: self.weights.coefficients(which + "_inv", m), self.basis, comps)
        return 0.5 * (t + t.conj().T)

    @cached_property
    def c_mu(self) -> np.ndarray:
        return self._inverse_weight("mu")

    @cached_property
    def c_eps(self) -> np.ndarray:
        return self._inverse_weight("eps")

    # --- spectral pieces -----------------------------------------------
    def _wave(self, which) -> _WaveDecomposition:
        problem = assemble_wave_operator(self.k, self.basis, which, self.mode,
                                         self.weights, self.polarization)
        sp = solve_fiber(problem, zero_tol=self.zero_tol, keep_problem=False)
        lam = sp.eigenvalues
        pos = np.flatnonzero(sp.labels == 1)
        zero = np.flatnonzero(sp.labels == 0)
        if len(pos) and lam[pos].min() < self.cond_tol * np.max(np.abs(lam)):
            raise IllConditionedError(
                f"smallest transversal eigenvalue {lam[pos].min():.3e} is too close to zero",
                operation="iota", k=self.k,
            )
        return _WaveDecomposition(lam, sp.frames, pos, zero)

    @cached_property
    def electric(self) -> _WaveDecomposition:
        return self._wave("EE")

    @cached_property
    def magnetic(self) -> _WaveDecomposition:
        return self._wave("HH")

    @cached_property
    def first_order(self) -> FiberSpectrum:
        problem = FiberProblem(self.k, FIRST_ORDER, assemble_rot(self.k, self.basis, self.polarization),
                               self.s_w, "consistent", self.basis, self.polarization)
        return solve_fiber(problem, zero_tol=self.zero_tol, keep_problem=False)

    def wave_operator(self, which: str) -> np.ndarray:
        """``S^-1 A`` on the positive transversal subspace, as a matrix."""
        dec = self.electric if which == "E" else self.magnetic
        v = dec.vectors[:, dec.positive]
        return v @ np.diag(dec.eigenvalues[dec.positive]) @ v.conj().T @ self.gram(
            "eps" if which == "E" else "mu")

    def inverse_sqrt(self, which: str) -> np.ndarray:
        dec = self.electric if which == "E" else self.magnetic
        v = dec.vectors[:, dec.positive]
        lam = dec.eigenvalues[dec.positive]
        return v @ np.diag(lam ** -0.5) @ v.conj().T @ self.gram("eps" if which == "E" else "mu")

    def transversal_projector(self, which: str) -> np.ndarray:
        dec = self.electric if which == "E" else self.magnetic
        v = dec.vectors[:, dec.positive]
        return v @ v.conj().T @ self.gram("eps" if which == "E" else "mu")

    def project_transversal(self, phi, which: str, tol: float = TRANSVERSAL_TOL) -> np.ndarray:
        """Remove a longitudinal residue no larger than ``tol`` (relative)."""
        dec = self.electric if which == "E" else self.magnetic
        s = self.gram("eps" if which == "E" else "mu")
        phi = np.asarray(phi, dtype=complex)
        z = dec.vectors[:, dec.zero]
        coeff = z.conj().T @ (s @ phi)
        total = norm(phi, s)
        if total == 0.0:
            return phi
        leak = float(np.linalg.norm(coeff)) / total
        if leak > tol:
            raise TransversalityError(
                f"input has longitudinal fraction {leak:.2e} > {tol:.0e}",
                operation="iota", k=self.k, details={"leakage": leak},
            )
        return phi - z @ coeff

    @cached_property
    def _iota_e(self) -> np.ndarray:
        return np.vstack([np.eye(self.n_electric),
                          self.c_mu @ self.d_he @ self.inverse_sqrt("E")])

    @cached_property
    def _iota_h(self) -> np.ndarray:
        return np.vstack([-self.c_eps @ self.d_eh @ self.inverse_sqrt("H"),
                          np.eye(self.n_magnetic)])

    def iota_matrix(self, which: str) -> np.ndarray:
        """Matrix of ``iota`` on transversal inputs (6N x 3N)."""
        if which == "E":
            return self._iota_e
        if which == "H":
            return self._iota_h
        raise ValueError(f"which must be 'E' or 'H', got {which!r}")


def iota(fiber: FiberContext, phi, which: str, *, tol: float = TRANSVERSAL_TOL) -> np.ndarray:
    """Full positive-frequency field from its electric or magnetic part."""
    phi = fiber.project_transversal(phi, which, tol)
    return fiber.iota_matrix(which) @ phi


def u_eh(fiber: FiberContext, phi_h, *, tol: float = TRANSVERSAL_TOL) -> np.ndarray:
    """Electric partner of a magnetic field, ``pr_E . iota_H``."""
    return pr_component(iota(fiber, phi_h, "H", tol=tol), "E", fiber.n_electric)


def u_he(fiber: FiberContext, phi_e, *, tol: float = TRANSVERSAL_TOL) -> np.ndarray:
    """Magnetic partner of an electric field, ``pr_H . iota_E``."""
    return pr_component(iota(fiber, phi_e, "E", tol=tol), "H", fiber.n_electric)


def u_eh_matrix(fiber: FiberContext) -> np.ndarray:
    return fiber.iota_matrix("H")[: fiber.n_electric] @ fiber.transversal_projector("H")


def intertwining_residual(fiber: FiberContext) -> float:
    """``||L_E U - U L_H|| / (||L_E|| ||U||)`` on the positive subspaces."""
    u = u_eh_matrix(fiber)
    le, lh = fiber.wave_operator("E"), fiber.wave_operator("H")
    r = le @ u - u @ lh
    return float(np.linalg.norm(r, 2) / (np.linalg.norm(le, 2) * np.linalg.norm(u, 2)))


def sgn_eigenvalue(fiber: FiberContext, psi, *, tol: float = TRANSVERSAL_TOL) -> float:
    """Rayleigh quotient of ``sgn`` of the first-order fiber operator."""
    sp = fiber.first_order
    psi = np.asarray(psi, dtype=complex)
    c = sp.frames.conj().T @ (fiber.s_w @ psi)
    w2 = np.abs(c) ** 2
    total = float(np.sum(w2))
    if total == 0.0:
        raise TransversalityError("zero vector has no sign", operation="sgn_eigenvalue", k=fiber.k)
    zero = sp.labels == 0
    leak = float(np.sqrt(np.sum(w2[zero]) / total))
    if leak > tol:
        raise TransversalityError(
            f"input has longitudinal fraction {leak:.2e} > {tol:.0e}",
            operation="sgn_eigenvalue", k=fiber.k, details={"leakage": leak},
        )
    return float(np.sum(np.sign(sp.eigenvalues[~zero]) * w2[~zero]) / total)


def chiral_flip(psi, n_electric: int) -> np.ndarray:
    """``J = diag(+1, -1)``: negate the magnetic block."""
    out = np.array(psi, dtype=complex)
    out[n_electric:] *= -1.0
    return out
