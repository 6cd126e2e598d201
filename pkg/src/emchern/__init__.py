"""Plane-wave photonic band structures, field reconstruction and Chern numbers."""

from .errors import EmchernError
from .lattice import Lattice, PlaneWaveBasis, bz_mesh, dual_lattice, reciprocal_shell
from .materials import MaterialProfile, MaterialWeights, sample_weights, validate_weights
from .operators import ELECTRIC, FIRST_ORDER, MAGNETIC, assemble
from .spectrum import band_structure, detect_gap, solve_fiber
from .reconstruct import FiberContext, iota, pr_component, sgn_eigenvalue, u_eh, u_he
from .topology import chern_fhs, chern_matrix, relevant_frames
from .dynamics import FieldState, propagate, q_representative
from .config import RunSpec, parse_config

__version__ = "0.1.0"

__all__ = [
    "ELECTRIC", "FIRST_ORDER", "MAGNETIC", "EmchernError", "FiberContext", "FieldState",
    "Lattice", "MaterialProfile", "MaterialWeights", "PlaneWaveBasis", "RunSpec",
    "assemble", "band_structure", "bz_mesh", "chern_fhs", "chern_matrix", "detect_gap",
    "dual_lattice", "iota", "parse_config", "pr_component", "propagate", "q_representative",
    "reciprocal_shell", "relevant_frames", "sample_weights", "sgn_eigenvalue", "solve_fiber",
    "u_eh", "u_he", "validate_weights",
]
