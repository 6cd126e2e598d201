"""Fiber operators in the plane-wave basis.

Coefficient vectors are laid out G-major, component-minor. A 6N vector
stacks the electric block on top of the magnetic block.

The curl symbol is ``D = (k + G)x``, the plane-wave image of
``(-i grad + k)x``. The first-order problem is the Hermitian-definite pencil

    Rot(k) = [[0, -D], [D, 0]],   S_W = diag(S_eps, S_mu),

so ``Rot(k) psi = omega S_W psi`` carries the same spectrum as
``W^-1 Rot(k)`` without forming the inverse.

For z-invariant media at ``k_z = 0`` the polarization sectors ``TM``
(E_z, H_x, H_y) and ``TE`` (E_x, E_y, H_z) decouple exactly and can be
assembled on their own.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .errors import IndefiniteMetricError, PolarizationError, ShiftTooLargeError
from .lattice import PlaneWaveBasis
from .materials import MaterialWeights

FIRST_ORDER = "first-order-6N"
ELECTRIC = "electric-3N"
MAGNETIC = "magnetic-3N"
KINDS = (FIRST_ORDER, ELECTRIC, MAGNETIC)
MODES = ("consistent", "independent")

SECTORS = {
    "full": ((0, 1, 2), (0, 1, 2)),
    "TM": ((2,), (0, 1)),
    "TE": ((0, 1), (2,)),
}


def components(polarization: str) -> tuple:
    """Electric and magnetic Cartesian components kept by a sector."""
    try:
        return SECTORS[polarization]
    except KeyError:
        raise PolarizationError(f"unknown polarization {polarization!r}") from None


def cross_matrix(v) -> np.ndarray:
    """Matrices ``[v]x`` with ``[v]x w = v x w``; ``v`` has shape (..., 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _block_diag(blocks) -> np.ndarray:
    n, r, c = blocks.shape
    out = np.zeros((n * r, n * c), dtype=complex)
    for i in range(n):
        out[i * r:(i + 1) * r, i * c:(i + 1) * c] = blocks[i]
    return out


def curl_matrix(k, basis: PlaneWaveBasis, rows=(0, 1, 2), cols=(0, 1, 2)) -> np.ndarray:
    """Block-diagonal ``(k+G)x`` restricted to the given output/input components."""
    kg = np.asarray(k, dtype=float)[None, :] + basis.g_vectors
    blocks = cross_matrix(kg)[:, list(rows)][:, :, list(cols)]
    return _block_diag(blocks)


def _check_sector(k, basis, weights, polarization):
    if polarization == "full":
        return
    kg = np.asarray(k, dtype=float)[None, :] + basis.g_vectors
    scale = max(1.0, float(np.max(np.abs(kg))))
    if np.max(np.abs(kg[:, 2])) > 1e-12 * scale:
        raise PolarizationError(
            f"{polarization} sector needs (k+G)_z = 0 for every plane wave",
            operation="assemble", k=k,
        )
    if weights is not None and not weights.block_diagonal_xy_z():
        raise PolarizationError(
            f"{polarization} sector needs weights without xy-z coupling", operation="assemble"
        )


def toeplitz(table_lookup, basis: PlaneWaveBasis, comps=(0, 1, 2)) -> np.ndarray:
    """``S[(G,i),(G',j)] = W_hat(G - G')_ij`` for the selected components."""
    m = basis.miller
    diff = (m[:, None, :] - m[None, :, :]).reshape(-1, 3)
    n, c = len(m), len(comps)
    coeff = table_lookup(diff).reshape(n, n, 3, 3)[:, :, list(comps)][:, :, :, list(comps)]
    return coeff.transpose(0, 2, 1, 3).reshape(n * c, n * c)


def _hermitize(a):
    return 0.5 * (a + a.conj().T)


def _cholesky(s, what, k=None):
    try:
        return sla.cho_factor(s, lower=True)
    except np.linalg.LinAlgError:
        raise IndefiniteMetricError(
            f"{what} metric is not positive definite (invalid weights or aliasing)",
            operation="assemble", k=k,
        ) from None


def assemble_gram(weights: MaterialWeights, basis: PlaneWaveBasis, metric: str = "W",
                  polarization: str = "full") -> np.ndarray:
    """Weighted Gram matrix for ``metric`` in {"W", "eps", "mu"}."""
    e_comp, h_comp = components(polarization)
    if metric == "eps":
        s = toeplitz(lambda m: weights.coefficients("eps", m), basis, e_comp)
    elif metric == "mu":
        s = toeplitz(lambda m: weights.coefficients("mu", m), basis, h_comp)
    elif metric == "W":
        s = sla.block_diag(
            assemble_gram(weights, basis, "eps", polarization),
            assemble_gram(weights, basis, "mu", polarization),
        )
    else:
        raise ValueError(f"unknown metric {metric!r}")
    s = _hermitize(s)
    _cholesky(s, metric)
    return s


@dataclass(frozen=True, eq=False)
class FiberProblem:
    """Generalized Hermitian eigenproblem ``A v = lambda S v`` at momentum ``k``.

    For wave problems ``lambda = omega**2``.
    """

    k: np.ndarray
    kind: str
    stiffness: np.ndarray
    gram: np.ndarray
    mode: str
    basis: PlaneWaveBasis
    polarization: str = "full"

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]

    @property
    def e_components(self):
        return components(self.polarization)[0]

    @property
    def h_components(self):
        return components(self.polarization)[1]

    @property
    def n_electric(self) -> int:
        return len(self.basis) * len(self.e_components)

    def hermiticity_residual(self) -> float:
        a, s = self.stiffness, self.gram
        ra = np.linalg.norm(a - a.conj().T) / max(np.linalg.norm(a), 1e-300)
        rs = np.linalg.norm(s - s.conj().T) / np.linalg.norm(s)
        return float(max(ra, rs))

    def cholesky(self):
        return _cholesky(self.gram, self.kind, self.k)


def assemble_rot(k, basis: PlaneWaveBasis, polarization: str = "full") -> np.ndarray:
    """``Rot(k) = [[0, -D], [D, 0]]`` with ``D = (k+G)x`` (no weights)."""
    e_comp, h_comp = components(polarization)
    d_eh = curl_matrix(k, basis, e_comp, h_comp)
    d_he = curl_matrix(k, basis, h_comp, e_comp)
    ne, nh = d_he.shape[1], d_he.shape[0]
    rot = np.zeros((ne + nh, ne + nh), dtype=complex)
    rot[:ne, ne:] = -d_eh
    rot[ne:, :ne] = d_he
    return rot


def assemble_first_order(k, basis: PlaneWaveBasis, weights: MaterialWeights,
                         polarization: str = "full") -> FiberProblem:
    _check_sector(k, basis, weights, polarization)
    return FiberProblem(
        k=np.asarray(k, dtype=float),
        kind=FIRST_ORDER,
        stiffness=assemble_rot(k, basis, polarization),
        gram=assemble_gram(weights, basis, "W", polarization),
        mode="consistent",
        basis=basis,
        polarization=polarization,
    )


def assemble_wave_operator(k, basis: PlaneWaveBasis, which: str, mode: str,
                           weights: MaterialWeights, polarization: str = "full") -> FiberProblem:
    """Electric (``which="EE"``) or magnetic (``"HH"``) wave operator.

    ``consistent`` takes the diagonal blocks of the exact square of the
    discretized first-order pencil, ``A_E = D^H S_mu^-1 D`` with metric
    ``S_eps``. ``independent`` uses the Toeplitz matrix of the pointwise
    inverse weight instead, ``A_E = D^H T(mu^-1) D``.
    """
    if which not in ("EE", "HH"):
        raise ValueError(f"which must be 'EE' or 'HH', got {which!r}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    _check_sector(k, basis, weights, polarization)
    e_comp, h_comp = components(polarization)
    if which == "EE":
        d = curl_matrix(k, basis, h_comp, e_comp)
        metric, inner, inv_name, inner_comp = "eps", "mu", "mu_inv", h_comp
    else:
        d = curl_matrix(k, basis, e_comp, h_comp)
        metric, inner, inv_name, inner_comp = "mu", "eps", "eps_inv", e_comp
    s = assemble_gram(weights, basis, metric, polarization)
    if mode == "consistent":
        s_inner = assemble_gram(weights, basis, inner, polarization)
        c = _cholesky(s_inner, inner, k)
        a = d.conj().T @ sla.cho_solve(c, d)
    else:
        t = toeplitz(lambda m: weights.coefficients(inv_name, m), basis, inner_comp)
        a = d.conj().T @ _hermitize(t) @ d
    return FiberProblem(
        k=np.asarray(k, dtype=float),
        kind=ELECTRIC if which == "EE" else MAGNETIC,
        stiffness=_hermitize(a),
        gram=s,
        mode=mode,
        basis=basis,
        polarization=polarization,
    )


def assemble(k, basis, weights, kind=FIRST_ORDER, mode="consistent", polarization="full"):
    if kind == FIRST_ORDER:
        return assemble_first_order(k, basis, weights, polarization)
    which = "EE" if kind == ELECTRIC else "HH"
    return assemble_wave_operator(k, basis, which, mode, weights, polarization)


def equivariance_shift(problem: FiberProblem, gamma) -> FiberProblem:
    """Re-index a problem at ``k`` into the problem at ``k - gamma*``.

    Uses ``A(k - g)[G, G'] = A(k)[G - g, G' - g]`` on the overlap
    ``{G : G in B and G - g in B}``; ``gamma`` is a Miller vector.
    """
    gamma = np.asarray(gamma, dtype=int)
    basis = problem.basis
    src = basis.slots(basis.miller - gamma)
    keep = src >= 0
    if not np.any(keep):
        raise ShiftTooLargeError(
            f"shift {tuple(gamma)} leaves no overlap with the basis",
            operation="equivariance_shift", k=problem.k,
        )
    overlap = PlaneWaveBasis.from_miller(basis.miller[keep], basis.dual_basis, basis.cutoff)
    # from_miller re-sorts; the kept rows are already in lexicographic order
    src = src[keep]
    ne, nh = len(problem.e_components), len(problem.h_components)
    nb = len(basis)
    if problem.kind == FIRST_ORDER:
        idx = np.concatenate([
            (src[:, None] * ne + np.arange(ne)).ravel(),
            nb * ne + (src[:, None] * nh + np.arange(nh)).ravel(),
        ])
    else:
        nc = ne if problem.kind == ELECTRIC else nh
        idx = (src[:, None] * nc + np.arange(nc)).ravel()
    sub = np.ix_(idx, idx)
    k_new = problem.k - gamma @ basis.dual_basis
    return replace(
        problem,
        k=k_new,
        stiffness=problem.stiffness[sub],
        gram=problem.gram[sub],
        basis=overlap,
    )
