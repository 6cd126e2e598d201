"""Periodic material weights ``W = diag(eps, mu)``.

Samples live on the real-space grid ``x = sum_i (n_i/N_i) e_i`` as arrays of
shape ``grid + (3, 3)``. Fourier coefficients follow
``W_hat(G) = (1/|grid|) sum_x W(x) exp(-i G.x)``, which is exactly
``numpy.fft.fftn / size`` in Miller coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidProfileError, InvalidWeightsError, ResolutionError
from .lattice import Lattice, PlaneWaveBasis

HERMITIAN_TOL = 1e-10
PROFILE_KINDS = ("homogeneous", "gyrotropic-rod-array", "user-tabulated")


def as_tensor(value) -> np.ndarray:
    """Scalar or 3x3 nested list -> complex 3x3 array."""
    a = np.asarray(value, dtype=complex)
    if a.ndim == 0:
        return a * np.eye(3, dtype=complex)
    if a.shape != (3, 3):
        raise InvalidProfileError(f"tensor must be a scalar or 3x3, got shape {a.shape}")
    return a


def gyrotropic_tensor(e1: float, kappa: float, e3: float) -> np.ndarray:
    return np.array(
        [[e1, 1j * kappa, 0.0], [-1j * kappa, e1, 0.0], [0.0, 0.0, e3]], dtype=complex
    )


@dataclass(frozen=True)
class MaterialProfile:
    """Catalogue entry describing a medium.

    For ``gyrotropic-rod-array`` a single rod of radius ``radius * |e_1|`` runs
    along ``e_3`` through the cell origin. ``gyrotropic`` selects which weight
    carries the tensor ``[[e1, i kappa, 0], [-i kappa, e1, 0], [0, 0, e3]]``;
    the other weight equals ``rod_scalar`` inside the rod. ``smoothing`` is the
    width of the raised-cosine ramp at the rod boundary, in grid cells
    (0 means a sharp step).
    """

    kind: str = "homogeneous"
    eps: object = 1.0
    mu: object = 1.0
    radius: float = 0.11
    rod_tensor: tuple = (14.0, 12.4, 15.0)
    gyrotropic: str = "eps"
    rod_scalar: float = 1.0
    smoothing: float = 1.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise InvalidProfileError(f"unknown profile kind {self.kind!r}")
        if self.kind == "gyrotropic-rod-array":
            e1, kappa, e3 = self.rod_tensor
            if not e1 > abs(kappa) >= 0.0 or e3 <= 0.0:
                raise InvalidProfileError(
                    f"gyrotropic tensor needs e1 > |kappa| and e3 > 0, got {self.rod_tensor}",
                    operation="sample_weights",
                )
            if self.gyrotropic not in ("eps", "mu"):
                raise InvalidProfileError(f"gyrotropic must be 'eps' or 'mu', got {self.gyrotropic!r}")
            if self.rod_scalar <= 0.0:
                raise InvalidProfileError("rod_scalar must be positive")
            if not 0.0 < self.radius < 0.5:
                raise InvalidProfileError("radius must lie in (0, 0.5)")
            if self.smoothing < 0.0:
                raise InvalidProfileError("smoothing must be non-negative")
        if self.kind == "user-tabulated" and not self.path:
            raise InvalidProfileError("user-tabulated profile needs a path")

    @property
    def z_invariant(self) -> bool:
        return self.kind in ("homogeneous", "gyrotropic-rod-array")


@dataclass(frozen=True, eq=False)
class WeightReport:
    """Outcome of :func:`validate_weights`."""

    hermiticity_residual: float
    c: float
    C: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_tuple(self):
        return (self.hermiticity_residual, self.c, self.C)

    def require(self, name="weights"):
        if not self.ok:
            shown = "; ".join(f"{tuple(p)}: {why}" for p, why in self.violations[:5])
            raise InvalidWeightsError(
                f"{name} violate lossless/positivity: {shown}"
                + (f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""),
                operation="validate_weights",
                details={"points": [list(map(int, p)) for p, _ in self.violations[:50]]},
            )
        return self


def validate_weights(samples) -> WeightReport:
    """Hermiticity residual and spectral bounds ``(c, C)`` over the grid."""
    s = np.asarray(samples, dtype=complex)
    flat = s.reshape(-1, 3, 3)
    grid = s.shape[:-2]
    herm = np.max(np.abs(flat - np.conj(np.swapaxes(flat, -1, -2))), axis=(1, 2))
    ev = np.linalg.eigvalsh(0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2))))
    c, C = float(ev[:, 0].min()), float(ev[:, -1].max())
    violations = []
    for i in np.flatnonzero(herm > HERMITIAN_TOL):
        violations.append((np.unravel_index(i, grid), f"non-Hermitian ({herm[i]:.2e})"))
    for i in np.flatnonzero(ev[:, 0] <= 0.0):
        violations.append((np.unravel_index(i, grid), f"eigenvalue {ev[i, 0]:.4g} <= 0"))
    return WeightReport(float(herm.max()), c, C, violations)


def _fft_table(samples) -> np.ndarray:
    s = np.asarray(samples, dtype=complex)
    grid = s.shape[:3]
    return np.fft.fftn(s, axes=(0, 1, 2)) / np.prod(grid)


def _lookup(table, grid, miller, operation) -> np.ndarray:
    m = np.asarray(miller, dtype=int).reshape(-1, 3)
    limit = (np.asarray(grid) - 1) // 2
    if np.any(np.abs(m) > limit):
        worst = np.max(np.abs(m), axis=0)
        raise ResolutionError(
            f"grid {tuple(grid)} cannot resolve Miller index {tuple(worst)}; "
            f"need grid >= {tuple(2 * worst + 1)}",
            operation=operation,
        )
    idx = tuple((m[:, i] % grid[i]) for i in range(3))
    return table[idx]


def fourier_coefficients(samples, miller) -> np.ndarray:
    """Coefficients ``W_hat(G)`` for the requested Miller rows, shape (n, 3, 3).

    ``miller`` may be a :class:`PlaneWaveBasis`.
    """
    if isinstance(miller, PlaneWaveBasis):
        miller = miller.miller
    s = np.asarray(samples, dtype=complex)
    return _lookup(_fft_table(s), s.shape[:3], miller, "fourier_coefficients")


def pointwise_inverse(samples) -> np.ndarray:
    return np.linalg.inv(np.asarray(samples, dtype=complex))


@dataclass(frozen=True, eq=False)
class MaterialWeights:
    """Sampled ``eps`` and ``mu`` plus lazily computed Fourier tables."""

    grid: tuple
    eps_samples: np.ndarray
    mu_samples: np.ndarray

    @classmethod
    def from_samples(cls, eps, mu, *, validate=True) -> "MaterialWeights":
        eps = np.asarray(eps, dtype=complex)
        mu = np.asarray(mu, dtype=complex)
        if eps.shape != mu.shape or eps.ndim != 5 or eps.shape[-2:] != (3, 3):
            raise InvalidWeightsError(
                f"samples must have shape (n1, n2, n3, 3, 3), got {eps.shape} and {mu.shape}"
            )
        w = cls(tuple(int(n) for n in eps.shape[:3]), eps, mu)
        if validate:
            w.report("eps").require("eps")
            w.report("mu").require("mu")
        return w

    @classmethod
    def homogeneous(cls, eps=1.0, mu=1.0, grid=(4, 4, 4)) -> "MaterialWeights":
        g = tuple(grid)
        e = np.broadcast_to(as_tensor(eps), g + (3, 3)).copy()
        m = np.broadcast_to(as_tensor(mu), g + (3, 3)).copy()
        return cls.from_samples(e, m)

    def report(self, which: str) -> WeightReport:
        return validate_weights(self.eps_samples if which == "eps" else self.mu_samples)

    @cached_property
    def bounds(self) -> tuple:
        """Joint ``(c, C)`` with ``c id <= W <= C id``."""
        re, rm = self.report("eps"), self.report("mu")
        return (min(re.c, rm.c), max(re.C, rm.C))

    @cached_property
    def _tables(self) -> dict:
        return {}

    def table(self, which: str) -> np.ndarray:
        """Full FFT table for ``eps``, ``mu``, ``eps_inv`` or ``mu_inv``."""
        tabs = self._tables
        if which not in tabs:
            if which == "eps":
                tabs[which] = _fft_table(self.eps_samples)
            elif which == "mu":
                tabs[which] = _fft_table(self.mu_samples)
            elif which == "eps_inv":
                tabs[which] = _fft_table(pointwise_inverse(self.eps_samples))
            elif which == "mu_inv":
                tabs[which] = _fft_table(pointwise_inverse(self.mu_samples))
            else:
                raise KeyError(which)
        return tabs[which]

    def coefficients(self, which: str, miller) -> np.ndarray:
        if isinstance(miller, PlaneWaveBasis):
            miller = miller.miller
        return _lookup(self.table(which), self.grid, miller, "fourier_coefficients")

    @property
    def eps_hat(self):
        return lambda miller: self.coefficients("eps", miller)

    @property
    def mu_hat(self):
        return lambda miller: self.coefficients("mu", miller)

    def breaks_time_reversal(self, tol: float = 1e-12) -> bool:
        """True when some sample has a nonzero imaginary part (complex weights)."""
        return bool(
            np.max(np.abs(self.eps_samples.imag)) > tol
            or np.max(np.abs(self.mu_samples.imag)) > tol
        )

    def block_diagonal_xy_z(self, tol: float = 1e-14) -> bool:
        """True when no sample couples the in-plane components to ``z``."""
        for s in (self.eps_samples, self.mu_samples):
            if np.max(np.abs(s[..., :2, 2])) > tol or np.max(np.abs(s[..., 2, :2])) > tol:
                return False
        return True


def inverse_weights(samples, basis) -> np.ndarray:
    """Fourier coefficients of the pointwise inverse ``W(x)^-1``.

    Inversion happens on the real-space grid before the transform.
    """
    report = validate_weights(samples)
    report.require()
    return fourier_coefficients(pointwise_inverse(samples), basis)


def grid_points(lattice: Lattice, grid) -> np.ndarray:
    """Cartesian sample positions, shape ``grid + (3,)``."""
    axes = [np.arange(n) / n for n in grid]
    f = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return f @ lattice.basis


def _rod_fill(lattice: Lattice, grid, radius: float, smoothing: float) -> np.ndarray:
    """Fill fraction in [0, 1] of a rod along e_3 through the origin."""
    axes = [np.arange(n) / n for n in grid]
    f = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    f = f - np.round(f)
    axis = lattice.basis[2] / np.linalg.norm(lattice.basis[2])
    dist = np.full(tuple(grid), np.inf)
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            x = (f + np.array([i, j, 0.0])) @ lattice.basis
            perp = x - np.multiply.outer(x @ axis, axis)
            dist = np.minimum(dist, np.linalg.norm(perp, axis=-1))
    a = np.linalg.norm(lattice.basis[0])
    r = radius * a
    w = smoothing * a / grid[0]
    if w <= 0.0:
        return (dist <= r).astype(float)
    t = np.clip((dist - (r - 0.5 * w)) / w, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def sample_weights(profile: MaterialProfile, lattice: Lattice, grid) -> MaterialWeights:
    """Evaluate ``profile`` on the real-space grid."""
    grid = tuple(int(n) for n in grid)
    if len(grid) != 3 or min(grid) < 1:
        raise ValueError(f"grid must be three positive integers, got {grid}")
    if profile.kind == "user-tabulated":
        w = load_tabulated(profile.path)
        if w.grid != grid:
            raise InvalidProfileError(
                f"tabulated grid {w.grid} does not match requested grid {grid}",
                operation="sample_weights",
            )
        return w
    if profile.kind == "homogeneous":
        return MaterialWeights.homogeneous(profile.eps, profile.mu, grid)

    if min(grid[:2]) < 4:
        raise ValueError("rod profiles need at least 4 grid points in-plane")
    e_bg, m_bg = as_tensor(profile.eps), as_tensor(profile.mu)
    rod = gyrotropic_tensor(*profile.rod_tensor)
    other = profile.rod_scalar * np.eye(3, dtype=complex)
    e_rod, m_rod = (rod, other) if profile.gyrotropic == "eps" else (other, rod)
    t = _rod_fill(lattice, grid, profile.radius, profile.smoothing)[..., None, None]
    eps = t * e_rod + (1.0 - t) * e_bg
    mu = t * m_rod + (1.0 - t) * m_bg
    return MaterialWeights.from_samples(eps, mu)


def _encode(samples) -> list:
    flat = np.asarray(samples, dtype=complex).reshape(-1, 9)
    return [[[float(z.real), float(z.imag)] for z in row] for row in flat]


def _decode(rows, grid) -> np.ndarray:
    a = np.asarray(rows, dtype=float)
    n = int(np.prod(grid))
    if a.shape != (n, 9, 2):
        raise InvalidProfileError(f"expected {n} x 9 [re, im] pairs, got shape {a.shape}")
    return (a[..., 0] + 1j * a[..., 1]).reshape(tuple(grid) + (3, 3))


def dump_tabulated(path, lattice: Lattice, weights: MaterialWeights) -> None:
    doc = {
        "lattice": lattice.basis.tolist(),
        "grid": list(weights.grid),
        "eps": _encode(weights.eps_samples),
        "mu": _encode(weights.mu_samples),
    }
    Path(path).write_text(json.dumps(doc))


def load_tabulated(path) -> MaterialWeights:
    doc = json.loads(Path(path).read_text())
    missing = {"grid", "eps", "mu"} - set(doc)
    if missing:
        raise InvalidProfileError(f"tabulated profile lacks keys {sorted(missing)}")
    grid = tuple(int(n) for n in doc["grid"])
    return MaterialWeights.from_samples(_decode(doc["eps"], grid), _decode(doc["mu"], grid))
