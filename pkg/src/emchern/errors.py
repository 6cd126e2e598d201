"""Exception hierarchy.

Every error carries the module and operation that raised it and, when
relevant, the offending Bloch momentum, so the CLI can emit a structured
diagnostic.
"""

from __future__ import annotations

import numpy as np


class EmchernError(Exception):
    module = "emchern"

    def __init__(self, message, *, operation=None, k=None, details=None):
        super().__init__(message)
        self.message = message
        self.operation = operation
        self.k = None if k is None else np.asarray(k, dtype=float)
        self.details = details or {}

    def diagnostic(self) -> dict:
        out = {
            "error": type(self).__name__,
            "module": self.module,
            "operation": self.operation,
            "message": self.message,
        }
        if self.k is not None:
            out["k"] = [float(x) for x in self.k]
        if self.details:
            out["details"] = self.details
        return out


# lattice
class LatticeError(EmchernError):
    module = "lattice"


class DegenerateLatticeError(LatticeError):
    pass


class BasisSizeError(LatticeError):
    pass


# materials
class MaterialError(EmchernError):
    module = "materials"


class InvalidProfileError(MaterialError):
    pass


class InvalidWeightsError(MaterialError):
    pass


class ResolutionError(MaterialError):
    pass


# operators
class OperatorError(EmchernError):
    module = "operators"


class IndefiniteMetricError(OperatorError):
    pass


class ShiftTooLargeError(OperatorError):
    pass


class PolarizationError(OperatorError):
    pass


# spectrum
class SpectrumError(EmchernError):
    module = "spectrum"


class ConvergenceError(SpectrumError):
    pass


class DiscretizationAnomalyError(SpectrumError):
    pass


class GapError(SpectrumError):
    pass


# reconstruct
class ReconstructError(EmchernError):
    module = "reconstruct"


class TransversalityError(ReconstructError):
    pass


class IllConditionedError(ReconstructError):
    pass


# topology
class TopologyError(EmchernError):
    module = "topology"


class DegenerateProjectionError(TopologyError):
    pass


class MeshTooCoarseError(TopologyError):
    pass


class GaugeAlignmentError(TopologyError):
    pass


class TopologyInconsistencyError(TopologyError):
    pass


# dynamics
class DynamicsError(EmchernError):
    module = "dynamics"


class UnphysicalStateError(DynamicsError):
    pass


class DecompositionError(DynamicsError):
    pass


# cli / config
class ConfigError(EmchernError):
    module = "cli"


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
