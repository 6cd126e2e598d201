"""Fiber eigensolves, mode classification and band structures."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConvergenceError,
    DiscretizationAnomalyError,
    GapError,
    IndefiniteMetricError,
)
from .lattice import KMesh, PlaneWaveBasis
from .materials import MaterialWeights
from .operators import (
    ELECTRIC,
    FIRST_ORDER,
    FiberProblem,
    assemble,
    components,
    cross_matrix,
    equivariance_shift,
)

ZERO_TOL = 1e-8
RESIDUAL_TOL = 1e-9
ORTHO_TOL = 1e-10
ANGLE_TOL = 1e-6

ZERO, POSITIVE, NEGATIVE = 0, 1, -1


@dataclass(eq=False)
class FiberSpectrum:
    """Sorted eigenpairs of one fiber problem.

    ``frames`` columns are S-orthonormal eigenvectors; when only part of the
    spectrum was kept, ``frame_index`` lists which eigenvalue each column
    belongs to.
    """

    k: np.ndarray
    kind: str
    eigenvalues: np.ndarray
    labels: np.ndarray
    frames: np.ndarray | None
    frame_index: np.ndarray | None = None
    problem: FiberProblem | None = field(default=None, repr=False)

    @property
    def is_wave(self) -> bool:
        return self.kind != FIRST_ORDER

    @property
    def omegas(self) -> np.ndarray:
        """Frequencies: eigenvalues for first-order, ``sqrt(lambda)`` for wave problems."""
        if self.is_wave:
            return np.sqrt(np.clip(self.eigenvalues, 0.0, None)) * (self.labels != ZERO)
        return np.where(self.labels == ZERO, 0.0, self.eigenvalues)

    @property
    def positive_index(self) -> np.ndarray:
        return np.flatnonzero(self.labels == POSITIVE)

    @property
    def positive_omegas(self) -> np.ndarray:
        return self.omegas[self.positive_index]

    @property
    def zero_count(self) -> int:
        return int(np.sum(self.labels == ZERO))

    def columns(self, eig_index) -> np.ndarray:
        """Frame columns for the given eigenvalue positions."""
        eig_index = np.atleast_1d(eig_index)
        if self.frames is None:
            raise ValueError("eigenvectors were not kept")
        if self.frame_index is None:
            return self.frames[:, eig_index]
        where = {int(j): i for i, j in enumerate(self.frame_index)}
        try:
            cols = [where[int(j)] for j in eig_index]
        except KeyError:
            raise ValueError("requested eigenvector was not kept") from None
        return self.frames[:, cols]

    def band(self, n: int):
        """``(omega_n, vector)`` for positive band ``n >= 1``."""
        j = self.positive_index[n - 1]
        return self.omegas[j], self.columns([j])[:, 0]

    def band_frames(self, bands) -> np.ndarray:
        return self.columns(self.positive_index[np.asarray(bands) - 1])

    def zero_frames(self) -> np.ndarray:
        return self.columns(np.flatnonzero(self.labels == ZERO))


def _labels(eigenvalues, kind, zero_tol):
    scale = np.max(np.abs(eigenvalues)) if len(eigenvalues) else 0.0
    lab = np.where(eigenvalues > 0, POSITIVE, NEGATIVE)
    lab[np.abs(eigenvalues) <= zero_tol * scale] = ZERO
    if kind != FIRST_ORDER:
        # wave operators are non-negative; tiny negatives are roundoff zeros
        lab[lab == NEGATIVE] = ZERO
    return lab


def solve_fiber(problem: FiberProblem, count=None, *, zero_tol: float = ZERO_TOL,
                keep_problem: bool = True) -> FiberSpectrum:
    """Solve ``A v = lambda S v``; eigenvalues ascending, vectors S-orthonormal.

    ``count`` limits the kept eigenvectors to the zero modes plus the lowest
    ``count`` positive bands; all eigenvalues are always returned.
    """
    a, s = problem.stiffness, problem.gram
    try:
        w, v = sla.eigh(a, s)
    except np.linalg.LinAlgError:
        raise IndefiniteMetricError(
            "metric is not positive definite", operation="solve_fiber", k=problem.k
        ) from None
    norm_a = max(np.linalg.norm(a, 2), 1e-300)
    res = np.linalg.norm(a @ v - (s @ v) * w[None, :], axis=0)
    if np.max(res) > RESIDUAL_TOL * norm_a:
        raise ConvergenceError(
            f"eigen-residual {np.max(res) / norm_a:.2e} exceeds tolerance",
            operation="solve_fiber", k=problem.k,
        )
    labels = _labels(w, problem.kind, zero_tol)
    frames, frame_index = v, None
    if count is not None and count != "all":
        pos = np.flatnonzero(labels == POSITIVE)[: int(count)]
        frame_index = np.concatenate([np.flatnonzero(labels == ZERO), pos])
        frames = v[:, frame_index]
    return FiberSpectrum(problem.k, problem.kind, w, labels, frames, frame_index,
                         problem if keep_problem else None)


def longitudinal_basis(problem: FiberProblem) -> np.ndarray:
    """Orthonormal (Euclidean) basis of the analytic gradient-field kernel.

    Per plane wave the kernel of the restricted ``(k+G)x`` block is found by
    SVD; for first-order problems electric and magnetic kernels are stacked.
    """
    e_comp, h_comp = components(problem.polarization)
    kg = problem.k[None, :] + problem.basis.g_vectors
    blocks = cross_matrix(kg)

    def kernel(rows, cols):
        n, nc = len(kg), len(cols)
        vecs = []
        for i in range(n):
            b = blocks[i][list(rows)][:, list(cols)]
            _, sv, vh = np.linalg.svd(b)
            scale = max(np.linalg.norm(kg[i]), 1.0)
            rank = int(np.sum(sv > 1e-12 * scale))
            for row in vh[rank:]:
                full = np.zeros(n * nc, dtype=complex)
                full[i * nc:(i + 1) * nc] = row.conj()
                vecs.append(full)
        return np.array(vecs).T if vecs else np.zeros((n * nc, 0), dtype=complex)

    if problem.kind == FIRST_ORDER:
        ke, kh = kernel(h_comp, e_comp), kernel(e_comp, h_comp)
        out = np.zeros((ke.shape[0] + kh.shape[0], ke.shape[1] + kh.shape[1]), dtype=complex)
        out[: ke.shape[0], : ke.shape[1]] = ke
        out[ke.shape[0]:, ke.shape[1]:] = kh
        return out
    if problem.kind == ELECTRIC:
        return kernel(h_comp, e_comp)
    return kernel(e_comp, h_comp)


def principal_angle(a, b) -> float:
    """Largest principal angle between column spans of ``a`` and ``b``."""
    if a.shape[1] == 0 and b.shape[1] == 0:
        return 0.0
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    sv = np.linalg.svd(qa.conj().T @ qb, compute_uv=False)
    return float(np.arccos(np.clip(np.min(sv), -1.0, 1.0)))


def classify_modes(spectrum: FiberSpectrum, k=None, basis: PlaneWaveBasis | None = None,
                   *, check_span: bool = True) -> np.ndarray:
    """Return the labels after cross-checking the zero cluster.

    The zero-mode count must equal the analytic gradient-field dimension and,
    when eigenvectors are available, their span must coincide with the
    longitudinal space within ``ANGLE_TOL``.
    """
    problem = spectrum.problem
    if problem is None:
        raise ValueError("classify_modes needs the spectrum's problem")
    lon = longitudinal_basis(problem)
    if spectrum.zero_count != lon.shape[1]:
        raise DiscretizationAnomalyError(
            f"{spectrum.zero_count} zero modes, analytic dimension {lon.shape[1]}",
            operation="classify_modes", k=spectrum.k,
        )
    if check_span and spectrum.frames is not None and lon.shape[1]:
        angle = principal_angle(spectrum.zero_frames(), lon)
        if angle > ANGLE_TOL:
            raise DiscretizationAnomalyError(
                f"zero modes deviate from longitudinal space by angle {angle:.2e}",
                operation="classify_modes", k=spectrum.k,
            )
    return spectrum.labels


def chiral_operator(problem: FiberProblem) -> np.ndarray:
    """Diagonal of ``J = diag(+1, -1)`` on (electric, magnetic) slots."""
    ne = problem.n_electric
    return np.concatenate([np.ones(ne), -np.ones(problem.size - ne)])


def chiral_check(spectrum: FiberSpectrum):
    """Chiral pairing residuals of a first-order spectrum.

    Returns ``(pairing, vectors)``: ``max |omega_-n + omega_n|`` over the
    sorted spectrum, and ``max ||A Jv + omega S Jv|| / ||A||`` over the kept
    positive eigenvectors.
    """
    if spectrum.kind != FIRST_ORDER:
        raise ValueError("chiral pairing applies to first-order spectra only")
    w = spectrum.eigenvalues
    pairing = float(np.max(np.abs(w + w[::-1])))
    vec_res = 0.0
    problem = spectrum.problem
    if problem is not None and spectrum.frames is not None:
        j = chiral_operator(problem)
        pos = spectrum.positive_index
        if spectrum.frame_index is not None:
            pos = np.intersect1d(pos, spectrum.frame_index)
        if len(pos):
            v = spectrum.columns(pos) * j[:, None]
            a, s = problem.stiffness, problem.gram
            r = a @ v + (s @ v) * w[pos][None, :]
            vec_res = float(np.max(np.linalg.norm(r, axis=0)) / np.linalg.norm(a, 2))
    return pairing, vec_res


@dataclass(eq=False)
class BandStructure:
    mesh: KMesh
    kind: str
    mode: str
    polarization: str
    spectra: list
    basis: PlaneWaveBasis | None = None
    weights: MaterialWeights | None = None

    def __len__(self):
        return len(self.spectra)

    def omegas(self, count: int) -> np.ndarray:
        """Lowest ``count`` positive frequencies per mesh point, shape (npts, count)."""
        return np.array([sp.positive_omegas[:count] for sp in self.spectra])

    def band(self, n: int) -> np.ndarray:
        return np.array([sp.positive_omegas[n - 1] for sp in self.spectra])

    @property
    def zero_counts(self) -> np.ndarray:
        return np.array([sp.zero_count for sp in self.spectra])


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("EMCHERN_THREADS", 1)
    return max(1, int(threads))


def band_structure(mesh: KMesh, weights: MaterialWeights, basis: PlaneWaveBasis,
                   kind: str = FIRST_ORDER, mode: str = "consistent", *,
                   polarization: str = "full", keep=None, keep_problems: bool = False,
                   threads=None, zero_tol: float = ZERO_TOL,
                   check_zero_modes: bool = True) -> BandStructure:
    """Solve every mesh point; results are ordered by mesh index.

    ``keep`` is forwarded to :func:`solve_fiber` as ``count``.
    """

    def one(k):
        problem = assemble(k, basis, weights, kind, mode, polarization)
        sp = solve_fiber(problem, keep, zero_tol=zero_tol)
        if check_zero_modes:
            classify_modes(sp, check_span=False)
        if not keep_problems:
            sp.problem = None
        return sp

    n = resolve_threads(threads)
    points = list(mesh.points)
    if n == 1:
        spectra = [one(k) for k in points]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            spectra = list(pool.map(one, points))
    return BandStructure(mesh, kind, mode, polarization, spectra, basis, weights)


@dataclass(frozen=True)
class RelevantBands:
    index_set: tuple
    gap_margin: float
    omega_range: tuple
    worst_k: np.ndarray | None = None


GROUND_STATE_BANDS = {"full": 2, "TM": 1, "TE": 1}


def detect_gap(bands: BandStructure, index_set, *, gap_tol: float = 1e-6,
               allow_ground_state: bool = False) -> RelevantBands:
    """Verify the gap condition for positive bands ``index_set``.

    The complement contains every other eigenfrequency, the zero modes and,
    for first-order problems, the negative bands.

    The lowest bands (two for ``full``, one per planar sector) are acoustic:
    they reach ``omega = 0`` at ``k = 0`` even when the mesh skips that point.
    Families containing them are rejected unless ``allow_ground_state``.
    """
    index_set = tuple(sorted(int(n) for n in index_set))
    if not index_set or min(index_set) < 1:
        raise ValueError("index set must contain positive band indices")
    n_ground = GROUND_STATE_BANDS.get(bands.polarization, 2)
    if not allow_ground_state and min(index_set) <= n_ground:
        raise GapError(
            f"bands {index_set} include acoustic bands 1..{n_ground}, which close "
            "the gap to omega = 0 at k = 0",
            operation="detect_gap",
            details={"bands": list(index_set), "acoustic": n_ground},
        )
    margin, lo, hi, worst = np.inf, np.inf, -np.inf, None
    for sp in bands.spectra:
        om = sp.omegas
        pos = sp.positive_index
        if max(index_set) > len(pos):
            raise GapError(f"only {len(pos)} positive bands available",
                           operation="detect_gap", k=sp.k)
        sel = pos[np.asarray(index_set) - 1]
        rel = om[sel]
        rest = np.delete(om, sel)
        if not np.any(sp.labels == ZERO):
            rest = np.append(rest, 0.0)
        d = np.min(np.abs(rel[:, None] - rest[None, :]))
        if d < margin:
            margin, worst = d, sp.k
        lo, hi = min(lo, rel.min()), max(hi, rel.max())
    if not margin > gap_tol or not lo > gap_tol:
        raise GapError(
            f"gap condition violated for bands {index_set}: margin {margin:.3e}",
            operation="detect_gap", k=worst,
            details={"bands": list(index_set), "margin": float(margin)},
        )
    return RelevantBands(index_set, float(margin), (float(lo), float(hi)), worst)


def equivariance_residual(problem: FiberProblem, weights: MaterialWeights, gamma=(1, 0, 0),
                          *, zero_tol: float = ZERO_TOL) -> float:
    """Compare the re-indexed spectrum at ``k - gamma*`` with a direct solve there.

    Both problems live on the overlap basis; returns the largest eigenvalue
    difference relative to the largest eigenvalue magnitude.
    """
    shifted = equivariance_shift(problem, gamma)
    direct = assemble(shifted.k, shifted.basis, weights, problem.kind, problem.mode,
                      problem.polarization)
    a = solve_fiber(shifted, 0, zero_tol=zero_tol, keep_problem=False).eigenvalues
    b = solve_fiber(direct, 0, zero_tol=zero_tol, keep_problem=False).eigenvalues
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
