# errors.py - Exception hierarchy for the continuation toolkit

from typing import Optional

import numpy as np


class PdeContError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(PdeContError):
    """Invalid grid, boundary condition, model name or run configuration"""


class EvaluationError(PdeContError):
    """Non-finite value produced while evaluating a residual"""

    def __init__(self, message: str, node: Optional[int] = None, slice_index: Optional[int] = None):
        super().__init__(message)
        self.node = node
        self.slice_index = slice_index


class ShiftSingularError(PdeContError):
    """Shifted pencil could not be factored; retry with a perturbed shift"""

    def __init__(self, message: str, shift: complex):
        super().__init__(message)
        self.shift = shift


class StepRejectedError(PdeContError):
    """Corrector failed; the caller should reduce the step length"""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SolverError(PdeContError):
    """Singular factorization or failed linear solve"""


class ResidualStagnationError(SolverError):
    """Iterative refinement of a bordered solve did not reach its tolerance"""

    def __init__(self, message: str, solution: np.ndarray, residual: float):
        super().__init__(message)
        self.solution = solution
        self.residual = residual


class NotAHopfError(PdeContError):
    """Eigenvalue nearest the imaginary axis is not critical"""


class DegenerateHopfError(PdeContError):
    """Cubic normal-form coefficient vanishes"""


class FA1InapplicableError(PdeContError):
    """A collocation block M_j is singular, so the monodromy product cannot be formed"""


class PeriodicSchurConvergenceError(PdeContError):
    """Periodic QZ iteration exceeded its sweep limit"""


class TimeStepError(PdeContError):
    """Newton failure inside an implicit time step"""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class NegativeDiffusionError(ConfigurationError):
    """Time integration refused for a problem with backward diffusion"""
