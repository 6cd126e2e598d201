"""Berry curvature and Chern numbers of gapped band families.

Chern numbers use the Fukui-Hatsugai-Suzuki link-variable construction with
metric-weighted overlaps ``det(F(k)^H S F(k'))``. The orientation follows the
projector trace formula ``-(i/2pi) int Tr(P [d_j P, d_l P])`` on the subtorus
spanned by the reciprocal directions ``e*_j, e*_l``.

Frames across a torus seam are obtained by re-indexing plane-wave
coefficients, ``u_{k+b}(G) = u_k(G+b)``; coefficients falling outside the
truncated basis are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (
    DegenerateProjectionError,
    GaugeAlignmentError,
    MeshTooCoarseError,
    TopologyInconsistencyError,
)
from .lattice import PlaneWaveBasis
from .operators import FIRST_ORDER, assemble_gram, components
from .spectrum import BandStructure, detect_gap

CHERN_TOL = 1e-6
LINK_TOL = 1e-12
MIN_DIVISIONS = 6
METRICS = ("W", "eps", "mu")
REPORT_KEYS = {"W": "em", "eps": "e", "mu": "h"}


@dataclass(eq=False)
class FrameField:
    """S-orthonormal frames spanning the relevant subspace at every mesh point.

    ``frames`` has shape (npts, dim, rank); ``layout`` gives the component
    count of each stacked block (two blocks for the 6N metric).
    """

    mesh: object
    metric: str
    gram: np.ndarray
    frames: np.ndarray
    basis: PlaneWaveBasis
    layout: tuple
    norms: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.frames.shape[-1]

    def grid(self) -> np.ndarray:
        return self.frames.reshape(tuple(self.mesh.divisions) + self.frames.shape[1:])

    def orthonormality_residual(self) -> float:
        f = self.frames
        o = np.einsum("pia,ij,pjb->pab", f.conj(), self.gram, f)
        return float(np.max(np.abs(o - np.eye(self.rank))))

    def seam_shift(self, frames, gamma) -> np.ndarray:
        """Frames at ``k + b`` from frames at ``k``; ``gamma`` is the Miller vector of ``b``."""
        src = self.basis.shift_slots(gamma)
        out = np.zeros_like(frames)
        offset = 0
        ok = src >= 0
        for nc in self.layout:
            dst_idx = (np.flatnonzero(ok)[:, None] * nc + np.arange(nc)).ravel() + offset
            src_idx = (src[ok][:, None] * nc + np.arange(nc)).ravel() + offset
            out[..., dst_idx, :] = frames[..., src_idx, :]
            offset += len(self.basis) * nc
        return out


def lowdin(frames, gram, *, tol=1e-8, k=None) -> tuple:
    """Symmetric orthonormalization in the metric ``gram``.

    Returns the orthonormal frame and the eigenvalues of the overlap matrix;
    a nearly singular overlap raises :class:`DegenerateProjectionError`.
    """
    o = frames.conj().T @ gram @ frames
    o = 0.5 * (o + o.conj().T)
    ev, u = np.linalg.eigh(o)
    if ev[0] <= tol * max(ev[-1], 1e-300):
        raise DegenerateProjectionError(
            f"projected frame is nearly singular (overlap eigenvalue {ev[0]:.2e})",
            operation="relevant_frames", k=k,
        )
    return frames @ (u / np.sqrt(ev)) @ u.conj().T, ev


def relevant_frames(bands: BandStructure, index_set, metric: str = "W") -> FrameField:
    """Frames for the positive bands in ``index_set``.

    ``W`` uses the first-order eigenvectors directly. ``eps``/``mu`` take the
    electric/magnetic component of those eigenvectors and re-orthonormalize
    it in its own metric. The squared component norms per band are recorded
    as ``norms`` for diagnostics.
    """
    if bands.kind != FIRST_ORDER:
        raise ValueError("relevant_frames needs a first-order band structure")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    index_set = sorted(int(n) for n in index_set)
    basis, weights, pol = bands.basis, bands.weights, bands.polarization
    e_comp, h_comp = components(pol)
    ne = len(basis) * len(e_comp)
    gram = assemble_gram(weights, basis, metric, pol)
    layout = {"W": (len(e_comp), len(h_comp)), "eps": (len(e_comp),), "mu": (len(h_comp),)}[metric]
    out, norms = [], []
    for sp in bands.spectra:
        f = sp.band_frames(index_set)
        if metric == "W":
            out.append(f)
            continue
        part = f[:ne] if metric == "eps" else f[ne:]
        norms.append(np.real(np.einsum("ia,ij,ja->a", part.conj(), gram, part)))
        frame, _ = lowdin(part, gram, k=sp.k)
        out.append(frame)
    return FrameField(bands.mesh, metric, gram, np.array(out), basis, layout,
                      np.array(norms) if norms else None)


def _unit(j):
    g = np.zeros(3, dtype=int)
    g[j] = 1
    return g


def subtorus(field: FrameField, j: int, l: int, slice_index: int = 0) -> np.ndarray:
    """Frames on the ``(j, l)`` subtorus at fixed index of the third direction."""
    g = field.grid()
    m = 3 - j - l
    g = np.moveaxis(g, (j, l, m), (0, 1, 2))
    return g[:, :, slice_index]


def _link(a, s, b, k=None):
    d = np.linalg.det(np.einsum("...ia,ij,...jb->...ab", a.conj(), s, b))
    mag = np.abs(d)
    if np.any(mag < LINK_TOL):
        raise MeshTooCoarseError(
            f"link variable magnitude {mag.min():.2e} below {LINK_TOL}",
            operation="chern_fhs", k=k,
        )
    return d / mag


def chern_fhs(field: FrameField, j: int = 0, l: int = 1, slice_index: int = 0,
              grid=None) -> float:
    """Raw Chern number on the ``(j, l)`` subtorus (sum of plaquette angles / 2 pi).

    Links are periodic in both directions; only the link that crosses a seam
    uses the re-indexed frame, so opposite edges share identical links and
    the plaquette sum is an exact multiple of 2 pi.
    """
    if grid is None:
        grid = subtorus(field, j, l, slice_index)
    s = field.gram
    next_j = np.concatenate([grid[1:], field.seam_shift(grid[:1], _unit(j))], axis=0)
    next_l = np.concatenate([grid[:, 1:], field.seam_shift(grid[:, :1], _unit(l))], axis=1)
    u1 = _link(grid, s, next_j)
    u2 = _link(grid, s, next_l)
    plaq = u1 * np.roll(u2, -1, axis=0) * np.conj(np.roll(u1, -1, axis=1)) * np.conj(u2)
    return float(np.sum(np.angle(plaq)) / (2.0 * np.pi))


def berry_curvature_fd(field: FrameField, j: int = 0, l: int = 1, slice_index: int = 0,
                       grid=None, *, order: int = 4, min_overlap: float = 0.1) -> np.ndarray:
    """Centered finite-difference Berry curvature of a single band.

    Neighbour phases are aligned to the centre point by maximal overlap and
    ``Omega = 2 Im <d_j u, (1 - P) d_l u>_S`` is evaluated per mesh point with
    a centered stencil of the given ``order`` (2 or 4). Derivatives are taken
    in fractional mesh coordinates, so ``Omega.sum() / (Nj * Nl * 2 pi)``
    approximates the Chern number.
    """
    if field.rank != 1:
        raise ValueError("finite-difference curvature needs a single band")
    stencils = {2: {1: 0.5}, 4: {1: 2.0 / 3.0, 2: -1.0 / 12.0}}
    if order not in stencils:
        raise ValueError("order must be 2 or 4")
    if grid is None:
        grid = subtorus(field, j, l, slice_index)
    nj, nl = grid.shape[:2]
    u = grid[..., 0]
    s = field.gram
    su = u @ s.T
    reach = max(stencils[order])

    def padded(axis, g):
        n = u.shape[axis]
        lo = np.take(u, range(n - reach, n), axis=axis)
        hi = np.take(u, range(reach), axis=axis)
        lo = field.seam_shift(lo[..., None], -g)[..., 0]
        hi = field.seam_shift(hi[..., None], g)[..., 0]
        return np.concatenate([lo, u, hi], axis=axis)

    def aligned(nb):
        ov = np.einsum("abi,abi->ab", su.conj(), nb)
        if np.any(np.abs(ov) < min_overlap):
            raise GaugeAlignmentError(
                f"neighbour overlap {np.abs(ov).min():.3f} below {min_overlap}; refine the mesh",
                operation="berry_curvature_fd",
            )
        return nb * (np.conj(ov) / np.abs(ov))[..., None]

    def derivative(axis, g, n):
        p = padded(axis, g)
        size = u.shape[axis]
        d = np.zeros_like(u)
        for step, c in stencils[order].items():
            fwd = np.take(p, range(reach + step, reach + step + size), axis=axis)
            bwd = np.take(p, range(reach - step, reach - step + size), axis=axis)
            d += c * (aligned(fwd) - aligned(bwd))
        return d * n

    dj = derivative(0, _unit(j), nj)
    dl = derivative(1, _unit(l), nl)
    # (1 - P) dl with P = |u><u| S
    dl_perp = dl - u * np.einsum("abi,abi->ab", su.conj(), dl)[..., None]
    return 2.0 * np.imag(np.einsum("abi,ij,abj->ab", dj.conj(), s, dl_perp))


@dataclass(eq=False)
class ChernReport:
    bands: tuple
    divisions: tuple
    slices: tuple
    raw: dict
    rounded: dict
    residuals: dict
    equal: bool
    computed: np.ndarray
    gap_margin: float | None = None
    electric_norms: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        def mat(a, cast):
            return [[cast(a[r, c]) if self.computed[r, c] else None for c in range(3)]
                    for r in range(3)]

        doc = {
            "bands": list(self.bands),
            "mesh": list(self.divisions),
            "slices": list(self.slices),
            "raw": {key: mat(v, float) for key, v in self.raw.items()},
            "rounded": {key: mat(v, int) for key, v in self.rounded.items()},
            "residuals": {key: float(v) for key, v in self.residuals.items()},
            "gap_margin": self.gap_margin,
            "verdict": bool(self.equal),
        }
        if self.electric_norms is not None:
            # squared eps-norms of the electric parts; recorded, not asserted
            doc["electric_norm_sq"] = {"min": float(np.min(self.electric_norms)),
                                       "max": float(np.max(self.electric_norms))}
        return doc


def chern_matrix(bands: BandStructure, index_set, *, tol: float = CHERN_TOL,
                 slices=None, check_gap: bool = True) -> ChernReport:
    """EM, electric and magnetic Chern matrices for a gapped band family.

    Every subtorus with at least ``MIN_DIVISIONS`` points in both directions is
    evaluated at two slices of the remaining direction (index 0 and N//2);
    their rounded values must agree.
    """
    div = tuple(bands.mesh.divisions)
    margin = detect_gap(bands, index_set).gap_margin if check_gap else None
    # short directions only supply slices; their subtori are reported as not computed
    pairs = [(j, l) for j, l in combinations(range(3), 2)
             if div[j] >= MIN_DIVISIONS and div[l] >= MIN_DIVISIONS]
    if not pairs:
        raise ValueError(f"no subtorus has >= {MIN_DIVISIONS} divisions in both directions: {div}")
    computed = np.zeros((3, 3), dtype=bool)
    raw, rounded, residuals = {}, {}, {}
    used_slices = set()
    norms = None
    for metric in METRICS:
        field_ = relevant_frames(bands, index_set, metric)
        if metric == "eps":
            norms = field_.norms
        r = np.zeros((3, 3))
        for j, l in pairs:
            m = 3 - j - l
            sl = sorted({0, div[m] // 2}) if slices is None else list(slices)
            values = [chern_fhs(field_, j, l, s) for s in sl]
            used_slices.update(sl)
            if len({int(np.rint(v)) for v in values}) != 1:
                raise TopologyInconsistencyError(
                    f"{metric} Chern number on subtorus ({j}, {l}) differs between slices {sl}: {values}",
                    operation="chern_matrix",
                )
            r[j, l], r[l, j] = values[0], -values[0]
            computed[j, l] = computed[l, j] = True
        key = REPORT_KEYS[metric]
        raw[key] = r
        rounded[key] = np.rint(r).astype(int)
        residuals[key] = float(np.max(np.abs(r - np.rint(r))[computed])) if computed.any() else 0.0
    same = all(np.array_equal(rounded["em"], rounded[x]) for x in ("e", "h"))
    equal = same and all(v <= tol for v in residuals.values())
    return ChernReport(tuple(sorted(index_set)), div, tuple(sorted(used_slices)), raw, rounded,
                       residuals, equal, computed, margin, norms)
