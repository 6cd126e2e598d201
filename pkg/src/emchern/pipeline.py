"""Pipeline orchestration and artifact emission.

Stages: ``bands`` writes ``bands.csv``; ``chern`` writes ``chern.json``
(and ``bands.csv``); ``verify`` writes ``verify.json``; ``dynamics`` writes
``trajectory.csv`` and ``dynamics.json``. Every report carries the checks it
ran and whether each passed.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .config import RunSpec
from .dynamics import (
    FieldState,
    band_coefficients,
    electric_band_coefficients,
    energy_norms,
    modal_trajectory,
    reconstruct_solution,
    second_order_residual,
    trajectory,
)
from .lattice import bz_mesh, reciprocal_shell
from .materials import sample_weights
from .operators import ELECTRIC, FIRST_ORDER, MAGNETIC, assemble
from .reconstruct import (
    FiberContext,
    align_phase,
    intertwining_residual,
    iota,
    norm,
    pr_component,
    sgn_eigenvalue,
    u_eh_matrix,
)
from .spectrum import (
    band_structure,
    chiral_check,
    equivariance_residual,
    solve_fiber,
)
from .topology import chern_matrix

log = logging.getLogger(__name__)


def _check(value, limit, *, above=False, asserted=True) -> dict:
    ok = value > limit if above else value <= limit
    return {"value": float(value), "limit": float(limit), "passed": bool(ok or not asserted),
            "asserted": bool(asserted)}


def _write_json(path: Path, doc) -> None:
    # json uses the shortest round-trip repr for floats, so no precision is lost
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def write_bands_csv(path: Path, bands, count: int) -> None:
    """Rows ``k1,k2,k3,band,omega``; ``k`` in fractional reciprocal coordinates."""
    om = bands.omegas(count)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k1", "k2", "k3", "band", "omega"])
        for frac, row in zip(bands.mesh.fractional, om):
            for n, value in enumerate(row, start=1):
                w.writerow([f"{frac[0]:.17g}", f"{frac[1]:.17g}", f"{frac[2]:.17g}", n,
                            f"{value:.17g}"])


class Setup:
    """Lattice, weights, basis and mesh shared by all stages of a run."""

    def __init__(self, spec: RunSpec, mode: str | None = None):
        self.spec = spec
        self.mode = mode or spec.mode
        self.lattice = spec.lattice
        self.weights = sample_weights(spec.profile, spec.lattice, spec.grid)
        self.basis = reciprocal_shell(spec.lattice.dual_basis, spec.cutoff, axes=spec.shell_axes)
        self.mesh = bz_mesh(spec.lattice.dual_basis, spec.divisions, spec.shift)
        self._bands = {}

    def bands(self, kind=FIRST_ORDER, keep=None):
        key = (kind, keep)
        if key not in self._bands:
            self._bands[key] = band_structure(
                self.mesh, self.weights, self.basis, kind, self.mode,
                polarization=self.spec.polarization, keep=keep, threads=self.spec.threads,
                zero_tol=self.spec.tolerances["zero"],
            )
        return self._bands[key]

    def fiber(self, k) -> FiberContext:
        return FiberContext.build(k, self.basis, self.weights, self.mode,
                                  self.spec.polarization, zero_tol=self.spec.tolerances["zero"])


def stage_bands(setup: Setup, out: Path) -> dict:
    bands = setup.bands(keep=0)
    write_bands_csv(out / "bands.csv", bands, setup.spec.n_bands)
    # band output asserts nothing
    return {}


def stage_chern(setup: Setup, out: Path) -> dict:
    spec = setup.spec
    keep = max(max(spec.bands), spec.n_bands)
    bands = setup.bands(keep=keep)
    write_bands_csv(out / "bands.csv", bands, spec.n_bands)
    report = chern_matrix(bands, spec.bands, tol=spec.tolerances["chern"])
    doc = report.to_json()
    doc["mode"] = setup.mode
    doc["polarization"] = spec.polarization
    doc["basis_size"] = len(setup.basis)
    _write_json(out / "chern.json", doc)
    return {"chern": _check(0.0 if report.equal else 1.0, 0.0)}


def verify_fiber(setup: Setup, k, rng) -> dict:
    """Reconstruction, unitarity, chiral and equivariance residuals at one ``k``."""
    spec, tol = setup.spec, setup.spec.tolerances
    nb = spec.n_bands
    fiber = setup.fiber(k)
    first = solve_fiber(assemble(k, setup.basis, setup.weights, FIRST_ORDER,
                                 polarization=spec.polarization), zero_tol=tol["zero"])
    om = first.positive_omegas[:nb]
    out = {}
    for kind, key in ((ELECTRIC, "E"), (MAGNETIC, "H")):
        wave = solve_fiber(assemble(k, setup.basis, setup.weights, kind, setup.mode,
                                    spec.polarization), zero_tol=tol["zero"], keep_problem=False)
        w = wave.positive_omegas[:nb]
        out[f"band_equality_{key}"] = float(np.max(np.abs(om - w) / om))

    pairing, vec = chiral_check(first)
    out["chiral"] = max(pairing / np.max(np.abs(first.eigenvalues)), vec)
    out["equivariance"] = equivariance_residual(first.problem, setup.weights, (1, 0, 0),
                                                zero_tol=tol["zero"])

    s_w, ne = fiber.s_w, fiber.n_electric
    rec, sgn = 0.0, 1.0
    for n in range(1, nb + 1):
        _, v = first.band(n)
        for which in ("E", "H"):
            part = pr_component(v, which, ne)
            img = iota(fiber, part, which)
            rec = max(rec, norm(pr_component(img, which, ne) - part, fiber.gram(
                "eps" if which == "E" else "mu")))
            rec = max(rec, norm(align_phase(img, v, s_w) - v, s_w))
            if setup.mode == "consistent":
                sgn = min(sgn, sgn_eigenvalue(fiber, img))
    out["reconstruction"] = rec
    out["sign"] = 1.0 - sgn

    u = u_eh_matrix(fiber)
    p = fiber.transversal_projector("H")
    x = rng.normal(size=(fiber.n_magnetic, spec.verify["samples"])) \
        + 1j * rng.normal(size=(fiber.n_magnetic, spec.verify["samples"]))
    x = p @ x
    x /= np.sqrt(np.einsum("ij,ik,kj->j", x.conj(), fiber.s_mu, x).real)[None, :]
    ux = u @ x
    g_mu = x.conj().T @ fiber.s_mu @ x
    g_eps = ux.conj().T @ fiber.s_eps @ ux
    out["unitarity"] = float(np.max(np.abs(g_eps - g_mu)))
    out["intertwining"] = intertwining_residual(fiber)
    return out


def stage_verify(setup: Setup, out: Path) -> dict:
    spec, tol = setup.spec, setup.spec.tolerances
    rng = np.random.default_rng(spec.seed)
    points = setup.mesh.points[: spec.verify["points"]]
    per_k = [verify_fiber(setup, k, rng) for k in points]
    worst = {key: max(r[key] for r in per_k) for key in per_k[0]}
    exact = setup.mode == "consistent"
    checks = {
        "band_equality_E": _check(worst["band_equality_E"], tol["band_equality"], asserted=exact),
        "band_equality_H": _check(worst["band_equality_H"], tol["band_equality"], asserted=exact),
        "reconstruction": _check(worst["reconstruction"], tol["reconstruction"], asserted=exact),
        "sign": _check(worst["sign"], tol["sign"], asserted=exact),
        "unitarity": _check(worst["unitarity"], tol["unitarity"], asserted=exact),
        "intertwining": _check(worst["intertwining"], tol["intertwining"], asserted=exact),
        "chiral": _check(worst["chiral"], tol["chiral"]),
        "equivariance": _check(worst["equivariance"], tol["equivariance"]),
    }
    doc = {
        "mode": setup.mode,
        "polarization": spec.polarization,
        "basis_size": len(setup.basis),
        "points": [[float(x) for x in k] for k in points],
        "checks": checks,
        "per_k": per_k,
    }
    _write_json(out / "verify.json", doc)
    return {f"verify.{key}": c for key, c in checks.items()}


def stage_dynamics(setup: Setup, out: Path) -> dict:
    spec, tol = setup.spec, setup.spec.tolerances
    cfg = spec.dynamics
    bands = cfg["bands"]
    k = setup.mesh.points[cfg["k_index"]]
    fiber = setup.fiber(k)
    sp = fiber.first_order
    cols = sp.positive_index[np.asarray(bands) - 1]
    omegas = sp.omegas[cols]
    psi0 = sp.frames[:, cols].sum(axis=1) / np.sqrt(len(bands))
    h = cfg["step"] / omegas.max()
    times = np.arange(0.0, cfg["periods"] / omegas.min() + 0.5 * h, h)
    traj = trajectory(fiber, FieldState(k, psi0), times)
    norms = energy_norms(fiber, traj)
    ne = fiber.n_electric
    drift = float(np.max(np.abs(norms - norms[0])) / norms[0])
    residual = second_order_residual(fiber, traj[:, :ne], h)
    _, rec = reconstruct_solution(fiber, traj[:, :ne], traj)

    # electric-only coefficients differ from the true ones when the
    # initial magnetic field is dropped
    e0 = np.sqrt(2.0) * sp.frames[:ne, cols].sum(axis=1)
    phi = np.concatenate([e0, np.zeros(fiber.n_magnetic, dtype=complex)])
    alpha = band_coefficients(fiber, phi, bands)
    alpha_e = electric_band_coefficients(fiber, e0, bands)
    short = times[: min(len(times), 1000)]
    gap = float(np.max(energy_norms(fiber, modal_trajectory(fiber, alpha, bands, short)
                                    - modal_trajectory(fiber, alpha_e, bands, short))))

    amps = band_coefficients(fiber, psi0, bands)[None, :] * np.exp(-1j * np.outer(times, omegas))
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"]
        for n in bands:
            head += [f"re_a{n}", f"im_a{n}"]
        w.writerow(head + ["norm"])
        for t, a, nrm in zip(times, amps, norms):
            row = [f"{t:.17g}"]
            for z in a:
                row += [f"{z.real:.17g}", f"{z.imag:.17g}"]
            w.writerow(row + [f"{nrm:.17g}"])

    checks = {
        "energy_drift": _check(drift, tol["energy_drift"]),
        "second_order": _check(residual, float(omegas.max()) ** 4 * h ** 2),
        "reconstruction": _check(rec["deviation"], tol["trajectory"]),
        "electric_only_gap": _check(gap, tol["negative_margin"], above=True),
    }
    doc = {
        "k": [float(x) for x in k],
        "bands": bands,
        "omegas": [float(x) for x in omegas],
        "step": h,
        "samples": len(times),
        "coefficients": {"true": [[z.real, z.imag] for z in alpha],
                         "electric_only": [[z.real, z.imag] for z in alpha_e]},
        "checks": checks,
    }
    _write_json(out / "dynamics.json", doc)
    return {f"dynamics.{key}": c for key, c in checks.items()}


STAGES = {"bands": stage_bands, "chern": stage_chern, "verify": stage_verify,
          "dynamics": stage_dynamics}


def run_pipeline(spec: RunSpec, out=None, *, mode=None) -> tuple:
    """Run the enabled stages. Returns ``(exit_status, checks)``.

    Exit status is 0 only if every asserted check passed. Errors propagate.
    """
    out = Path(out or spec.output)
    out.mkdir(parents=True, exist_ok=True)
    setup = Setup(spec, mode)
    checks = {}
    for name in spec.pipeline:
        if name == "bands" and "chern" in spec.pipeline:
            continue
        log.info("stage %s", name)
        checks.update(STAGES[name](setup, out))
    status = 0 if all(c["passed"] for c in checks.values()) else 1
    return status, checks
