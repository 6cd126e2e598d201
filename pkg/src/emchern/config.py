"""Run configuration: JSON schema, defaults and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateLatticeError, InvalidProfileError, ParseError, ValidationError
from .lattice import Lattice
from .materials import PROFILE_KINDS, MaterialProfile
from .operators import MODES, SECTORS

PIPELINES = ("bands", "chern", "verify", "dynamics")

DEFAULT_TOLERANCES = {
    "zero": 1e-8,
    "gap": 1e-6,
    "chern": 1e-6,
    "band_equality": 1e-10,
    "reconstruction": 1e-9,
    "sign": 1e-8,
    "unitarity": 1e-9,
    "intertwining": 1e-8,
    "chiral": 1e-9,
    "equivariance": 1e-8,
    "energy_drift": 1e-10,
    "trajectory": 1e-8,
    "negative_margin": 1e-3,
}

DEFAULT_DYNAMICS = {"bands": [1, 2], "k_index": 0, "periods": 100.0, "step": 0.01}
DEFAULT_VERIFY = {"points": 8, "samples": 20}

TOP_KEYS = {
    "lattice", "profile", "cutoff", "shell_axes", "grid", "mesh", "polarization",
    "pipeline", "bands", "n_bands", "mode", "tolerances", "output", "seed",
    "threads", "dynamics", "verify",
}
PROFILE_KEYS = {"kind", "eps", "mu", "radius", "rod_tensor", "gyrotropic",
                "rod_scalar", "smoothing", "path"}
MESH_KEYS = {"divisions", "shift"}


def tensor_from_json(value):
    """Scalar, diagonal triple, 3x3 real matrix or ``{"re": .., "im": ..}``."""
    if isinstance(value, dict):
        extra = set(value) - {"re", "im"}
        if extra:
            raise ParseError(f"unknown tensor key {sorted(extra)[0]!r}")
        re = np.asarray(value.get("re", 0.0), dtype=float)
        im = np.asarray(value.get("im", 0.0), dtype=float)
        a = re + 1j * im
    else:
        a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return complex(a) if np.iscomplexobj(a) else float(a)
    if a.shape == (3,):
        return np.diag(a).astype(complex)
    if a.shape == (3, 3):
        return a.astype(complex)
    raise ParseError(f"tensor must be a scalar, a triple or 3x3, got shape {a.shape}")


@dataclass(frozen=True)
class RunSpec:
    """Validated run description. ``raw`` keeps the JSON echo with defaults filled."""

    lattice: Lattice
    profile: MaterialProfile
    cutoff: float
    shell_axes: tuple
    grid: tuple
    divisions: tuple
    shift: tuple
    polarization: str
    pipeline: tuple
    bands: tuple
    n_bands: int
    mode: str
    tolerances: dict
    output: str
    seed: int
    threads: int | None
    dynamics: dict
    verify: dict
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def to_json(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def with_overrides(self, **kw) -> "RunSpec":
        doc = self.to_json()
        doc.update({k: v for k, v in kw.items() if v is not None})
        return build_spec(doc)


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ParseError(f"{where} must be a JSON object")
    for key in doc:
        if key not in allowed:
            raise ParseError(f"unknown key {key!r} in {where}", details={"key": key})


def _ints(value, n, name):
    try:
        out = tuple(int(x) for x in value)
    except (TypeError, ValueError):
        raise ParseError(f"{name} must be a list of integers", details={"key": name}) from None
    if len(out) != n:
        raise ValidationError(f"{name} needs {n} entries, got {len(out)}", details={"key": name})
    return out


def _positive(value, name):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ParseError(f"{name} must be a number", details={"key": name}) from None
    if not x > 0 or not np.isfinite(x):
        raise ValidationError(f"{name} must be positive, got {value}", details={"key": name})
    return x


def build_spec(doc: dict) -> RunSpec:
    """Validate a parsed JSON document and fill defaults."""
    _check_keys(doc, TOP_KEYS, "config")
    raw = json.loads(json.dumps(doc))

    basis = raw.setdefault("lattice", np.eye(3).tolist())
    try:
        lattice = Lattice.from_basis(basis)
    except (TypeError, ValueError):
        raise ParseError("lattice must be a 3x3 list", details={"key": "lattice"}) from None
    except DegenerateLatticeError as exc:
        raise ValidationError(exc.message, details={"key": "lattice"}) from None

    prof = raw.setdefault("profile", {"kind": "homogeneous"})
    _check_keys(prof, PROFILE_KEYS, "profile")
    if prof.get("kind", "homogeneous") not in PROFILE_KINDS:
        raise ValidationError(f"unknown profile kind {prof.get('kind')!r}", details={"key": "kind"})
    kw = dict(prof)
    for key in ("eps", "mu"):
        if key in kw:
            kw[key] = tensor_from_json(kw[key])
    if "rod_tensor" in kw:
        kw["rod_tensor"] = tuple(float(x) for x in kw["rod_tensor"])
    try:
        profile = MaterialProfile(**kw)
    except InvalidProfileError as exc:
        raise ValidationError(exc.message, details={"key": "profile"}) from None

    cutoff = raw.setdefault("cutoff", 2.0 * np.pi)
    try:
        cutoff = float(cutoff)
    except (TypeError, ValueError):
        raise ParseError("cutoff must be a number", details={"key": "cutoff"}) from None
    if not cutoff >= 0 or not np.isfinite(cutoff):
        raise ValidationError(f"cutoff must be non-negative, got {cutoff}", details={"key": "cutoff"})

    grid = _ints(raw.setdefault("grid", [32, 32, 32]), 3, "grid")
    if min(grid) < 1:
        raise ValidationError("grid entries must be positive", details={"key": "grid"})
    axes = raw.setdefault("shell_axes", [i for i in range(3) if grid[i] > 1])
    axes = tuple(sorted(int(a) for a in axes))
    if any(a not in (0, 1, 2) for a in axes):
        raise ValidationError("shell_axes entries must be 0, 1 or 2", details={"key": "shell_axes"})

    mesh = raw.setdefault("mesh", {})
    _check_keys(mesh, MESH_KEYS, "mesh")
    divisions = _ints(mesh.setdefault("divisions", [4, 4, 1]), 3, "divisions")
    if min(divisions) < 1:
        raise ValidationError("mesh divisions must be positive", details={"key": "divisions"})
    shift = mesh.setdefault("shift", [0.5 if d > 1 else 0.0 for d in divisions])
    shift = tuple(float(x) for x in shift)
    if len(shift) != 3 or any(not 0.0 <= s < 1.0 for s in shift):
        raise ValidationError("mesh shift entries must lie in [0, 1)", details={"key": "shift"})

    polarization = raw.setdefault("polarization", "full")
    if polarization not in SECTORS:
        raise ValidationError(f"unknown polarization {polarization!r}", details={"key": "polarization"})
    mode = raw.setdefault("mode", "consistent")
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}", details={"key": "mode"})

    pipeline = raw.setdefault("pipeline", ["bands"])
    if isinstance(pipeline, str):
        pipeline = [pipeline]
    for p in pipeline:
        if p not in PIPELINES:
            raise ValidationError(f"unknown pipeline stage {p!r}", details={"key": "pipeline"})
    pipeline = tuple(p for p in PIPELINES if p in pipeline)
    if not pipeline:
        raise ValidationError("pipeline is empty", details={"key": "pipeline"})

    bands = tuple(sorted(int(n) for n in raw.setdefault("bands", [])))
    if "chern" in pipeline and not bands:
        raise ValidationError("chern pipeline needs a band index set", details={"key": "bands"})
    if any(n < 1 for n in bands):
        raise ValidationError("band indices start at 1", details={"key": "bands"})
    n_bands = int(raw.setdefault("n_bands", 8))
    if n_bands < 1:
        raise ValidationError("n_bands must be positive", details={"key": "n_bands"})

    tol = dict(DEFAULT_TOLERANCES)
    given = raw.setdefault("tolerances", {})
    _check_keys(given, set(DEFAULT_TOLERANCES), "tolerances")
    for key, value in given.items():
        tol[key] = _positive(value, key)
    raw["tolerances"] = dict(tol)

    dyn = dict(DEFAULT_DYNAMICS)
    _check_keys(raw.setdefault("dynamics", {}), set(DEFAULT_DYNAMICS), "dynamics")
    dyn.update(raw["dynamics"])
    dyn["bands"] = [int(n) for n in dyn["bands"]]
    if not dyn["bands"] or min(dyn["bands"]) < 1:
        raise ValidationError("dynamics bands must be positive indices", details={"key": "dynamics"})
    dyn["k_index"] = int(dyn["k_index"])
    if not 0 <= dyn["k_index"] < int(np.prod(divisions)):
        raise ValidationError("dynamics k_index is outside the mesh", details={"key": "k_index"})
    dyn["periods"] = _positive(dyn["periods"], "periods")
    dyn["step"] = _positive(dyn["step"], "step")
    raw["dynamics"] = dict(dyn)

    ver = dict(DEFAULT_VERIFY)
    _check_keys(raw.setdefault("verify", {}), set(DEFAULT_VERIFY), "verify")
    ver.update({k: int(v) for k, v in raw["verify"].items()})
    if min(ver.values()) < 1:
        raise ValidationError("verify counts must be positive", details={"key": "verify"})
    raw["verify"] = dict(ver)

    threads = raw.setdefault("threads", None)
    if threads is not None and int(threads) < 1:
        raise ValidationError("threads must be positive", details={"key": "threads"})

    return RunSpec(
        lattice=lattice,
        profile=profile,
        cutoff=cutoff,
        shell_axes=axes,
        grid=grid,
        divisions=divisions,
        shift=shift,
        polarization=polarization,
        pipeline=pipeline,
        bands=bands,
        n_bands=n_bands,
        mode=mode,
        tolerances=tol,
        output=str(raw.setdefault("output", "out")),
        seed=int(raw.setdefault("seed", 0)),
        threads=None if threads is None else int(threads),
        dynamics=dyn,
        verify=ver,
        raw=raw,
    )


def parse_config(path) -> RunSpec:
    """Read and validate a JSON config file.

    Relative tabulated-profile paths resolve against the config's directory.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    prof = doc.get("profile")
    if isinstance(prof, dict) and prof.get("path") and not Path(prof["path"]).is_absolute():
        prof["path"] = str(path.parent / prof["path"])
    return build_spec(doc)


__all__ = ["PIPELINES", "DEFAULT_TOLERANCES", "RunSpec", "build_spec", "parse_config",
           "tensor_from_json"]
