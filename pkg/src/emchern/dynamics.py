"""Spectral time evolution on a single fiber.

States are 6N coefficient vectors evolved by ``exp(-i t W^-1 Rot)``, applied
exactly through the first-order eigendecomposition held by a
:class:`~emchern.reconstruct.FiberContext`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError, UnphysicalStateError
from .reconstruct import FiberContext, norm, pr_component

FREQUENCY_TOL = 1e-8
LEAKAGE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class FieldState:
    k: np.ndarray
    psi: np.ndarray
    t: float = 0.0


def modal_coefficients(fiber: FiberContext, psi) -> np.ndarray:
    """``c_j = <v_j, psi>_W`` for every first-order eigenvector ``v_j``."""
    sp = fiber.first_order
    return sp.frames.conj().T @ (fiber.s_w @ np.asarray(psi, dtype=complex))


def q_representative(fiber: FiberContext, phi) -> FieldState:
    """``(P_+ + P_0 / 2) phi`` at time zero."""
    sp = fiber.first_order
    c = modal_coefficients(fiber, phi)
    scale = np.where(sp.labels == 1, 1.0, np.where(sp.labels == 0, 0.5, 0.0))
    return FieldState(fiber.k, sp.frames @ (scale * c), 0.0)


def _checked_coefficients(fiber, psi, tol):
    sp = fiber.first_order
    c = modal_coefficients(fiber, psi)
    total = float(np.linalg.norm(c))
    if total > 0.0:
        neg = float(np.linalg.norm(c[sp.labels == -1])) / total
        if neg > tol:
            raise UnphysicalStateError(
                f"state has negative-frequency fraction {neg:.2e} > {tol:.0e}",
                operation="propagate", k=fiber.k, details={"negative_fraction": neg},
            )
    return np.where(sp.labels == -1, 0.0, c)


def propagate(fiber: FiberContext, state: FieldState, dt: float,
              *, tol: float = FREQUENCY_TOL) -> FieldState:
    """Advance by ``dt``; zero modes are static, negative frequencies rejected."""
    sp = fiber.first_order
    c = _checked_coefficients(fiber, state.psi, tol)
    psi = sp.frames @ (np.exp(-1j * sp.omegas * dt) * c)
    return FieldState(state.k, psi, state.t + dt)


def trajectory(fiber: FiberContext, state: FieldState, times, *,
               tol: float = FREQUENCY_TOL) -> np.ndarray:
    """States at absolute ``times``, shape ``(len(times), dim)``.

    Each sample is computed directly from the initial state, so no error
    accumulates along the grid.
    """
    sp = fiber.first_order
    c = _checked_coefficients(fiber, state.psi, tol)
    dt = np.asarray(times, dtype=float) - state.t
    phases = np.exp(-1j * np.outer(dt, sp.omegas))
    return (phases * c[None, :]) @ sp.frames.T


def energy_norms(fiber: FiberContext, traj) -> np.ndarray:
    s = fiber.s_w
    return np.sqrt(np.einsum("ti,ij,tj->t", traj.conj(), s, traj).real)


def second_order_residual(fiber: FiberContext, e_trace, h: float) -> float:
    """Largest ``||(e[i+1] - 2 e[i] + e[i-1]) / h^2 + L_E e[i]||_eps`` over interior samples.

    ``L_E`` is the electric wave operator in the eps metric.
    """
    e = np.asarray(e_trace, dtype=complex)
    if e.shape[0] < 5:
        raise ValueError("need at least 5 time samples")
    if not h > 0:
        raise ValueError("time step must be positive")
    le = fiber.wave_operator("E")
    acc = (e[2:] - 2.0 * e[1:-1] + e[:-2]) / h**2
    r = acc + e[1:-1] @ le.T
    s = fiber.s_eps
    return float(np.sqrt(np.max(np.einsum("ti,ij,tj->t", r.conj(), s, r).real)))


def reconstruct_solution(fiber: FiberContext, e_trace, reference=None,
                         *, tol: float = LEAKAGE_TOL):
    """Rebuild the full 6N trace from its electric part.

    Each sample is projected on the positive electric wave modes and lifted
    with ``iota_E``. Returns ``(trace, report)``; with a ``reference`` trace
    the report holds the largest W-norm deviation, relative to the largest
    reference norm, plus the same for the magnetic part alone.
    """
    e = np.atleast_2d(np.asarray(e_trace, dtype=complex))
    s = fiber.s_eps
    dec = fiber.electric
    z = dec.vectors[:, dec.zero]
    leak = 0.0
    for row in e:
        total = norm(row, s)
        if total > 0.0:
            leak = max(leak, float(np.linalg.norm(z.conj().T @ (s @ row))) / total)
    if leak > tol:
        raise DecompositionError(
            f"electric trace has longitudinal fraction {leak:.2e} > {tol:.0e}",
            operation="reconstruct_solution", k=fiber.k, details={"leakage": leak},
        )
    lift = fiber.iota_matrix("E") @ fiber.transversal_projector("E")
    out = e @ lift.T
    report = {"leakage": leak}
    if reference is not None:
        ref = np.atleast_2d(np.asarray(reference, dtype=complex))
        scale = max(float(np.max(energy_norms(fiber, ref))), 1e-300)
        report["deviation"] = float(np.max(energy_norms(fiber, out - ref))) / scale
        ne = fiber.n_electric
        dh = out[:, ne:] - ref[:, ne:]
        mag = np.sqrt(np.einsum("ti,ij,tj->t", dh.conj(), fiber.s_mu, dh).real)
        report["magnetic_deviation"] = float(np.max(mag)) / scale
    return out, report


def band_coefficients(fiber: FiberContext, psi, bands) -> np.ndarray:
    """``alpha_n = <phi_n, psi>_W`` for positive bands ``n``."""
    sp = fiber.first_order
    cols = sp.positive_index[np.asarray(bands) - 1]
    return sp.frames[:, cols].conj().T @ (fiber.s_w @ np.asarray(psi, dtype=complex))


def electric_band_coefficients(fiber: FiberContext, e, bands) -> np.ndarray:
    """``alpha_n^E = <phi_n^E / ||phi_n^E||_eps, e>_eps`` from the electric part alone."""
    sp = fiber.first_order
    cols = sp.positive_index[np.asarray(bands) - 1]
    fe = sp.frames[: fiber.n_electric, cols]
    fe = fe / np.sqrt(np.einsum("ij,ik,kj->j", fe.conj(), fiber.s_eps, fe).real)
    return fe.conj().T @ (fiber.s_eps @ np.asarray(e, dtype=complex))


def modal_trajectory(fiber: FiberContext, coefficients, bands, times) -> np.ndarray:
    """``sum_n alpha_n exp(-i omega_n t) phi_n`` on ``times``."""
    sp = fiber.first_order
    cols = sp.positive_index[np.asarray(bands) - 1]
    om = sp.omegas[cols]
    phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), om))
    return (phases * np.asarray(coefficients)[None, :]) @ sp.frames[:, cols].T


def conjugation_index(fiber: FiberContext) -> np.ndarray:
    """Per-entry index of the ``-G`` partner, for ``c(G) -> conj(c(-G))``."""
    b = fiber.basis
    slots = b.slots(-b.miller)
    if np.any(slots < 0):
        raise ValueError("basis is not symmetric under G -> -G")
    ne, nh = fiber.n_electric // len(b), fiber.n_magnetic // len(b)
    e_idx = (slots[:, None] * ne + np.arange(ne)).ravel()
    h_idx = fiber.n_electric + (slots[:, None] * nh + np.arange(nh)).ravel()
    return np.concatenate([e_idx, h_idx])


def real_part_discrepancy(fiber: FiberContext, partner: FiberContext, phi) -> float:
    """``||2 Re(Q phi) - phi||_W / ||phi||_W`` for a real field supported on ``+-k``.

    ``phi`` holds the coefficients at ``k``; those at ``-k`` (held by
    ``partner``) follow from reality. Zero for real weights; for complex
    weights the value is reported as a diagnostic.
    """
    if not np.allclose(partner.k, -fiber.k):
        raise ValueError("partner fiber must sit at -k")
    idx = conjugation_index(fiber)
    phi = np.asarray(phi, dtype=complex)
    phi_minus = np.conj(phi[idx])
    q_plus = q_representative(fiber, phi).psi
    q_minus = q_representative(partner, phi_minus).psi
    total = q_plus + np.conj(q_minus[idx])
    return norm(total - phi, fiber.s_w) / norm(phi, fiber.s_w)


__all__ = [
    "FieldState",
    "band_coefficients",
    "conjugation_index",
    "electric_band_coefficients",
    "energy_norms",
    "modal_coefficients",
    "modal_trajectory",
    "propagate",
    "pr_component",
    "q_representative",
    "real_part_discrepancy",
    "reconstruct_solution",
    "second_order_residual",
    "trajectory",
]
