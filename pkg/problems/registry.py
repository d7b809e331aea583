# problems/registry.py - Named demo models resolvable from the command line

import math
import logging
from typing import Callable, Dict, List, Optional

from errors import ConfigurationError
from models import BcSpec
from problems.base import PdeProblem
from problems.brusselator import BrusselatorModel, K_TURING_HOPF
from problems.cgl import CglModel
from problems.ocpollution import OcPollutionModel
from solvers.spatial import build_grid

logger = logging.getLogger(__name__)


def _cgl1d(counts: Optional[List[int]], params, active) -> PdeProblem:
    grid = build_grid(1, counts or [31], [(-math.pi, math.pi)])
    return CglModel(grid, BcSpec.neumann(2), params, active)


def _cgl2d(counts, params, active) -> PdeProblem:
    grid = build_grid(2, counts or [41, 21], [(-math.pi, math.pi), (-math.pi / 2, math.pi / 2)])
    return CglModel(grid, BcSpec.spring(2, grid.faces), params, active)


def _bruss1d(counts, params, active) -> PdeProblem:
    half = 0.5 * math.pi / K_TURING_HOPF
    grid = build_grid(1, counts or [61], [(-half, half)])
    return BrusselatorModel(grid, BcSpec.neumann(3), params, active)


def _bruss2d(counts, params, active) -> PdeProblem:
    grid = build_grid(2, counts or [41, 11], [(-math.pi / 2, math.pi / 2), (-math.pi / 8, math.pi / 8)])
    return BrusselatorModel(grid, BcSpec.neumann(3), params, active)


def _ocpol(counts, params, active) -> PdeProblem:
    grid = build_grid(1, counts or [41], [(-math.pi / 2, math.pi / 2)])
    return OcPollutionModel(grid, BcSpec.neumann(4), params, active)


MODEL_BUILDERS: Dict[str, Callable[..., PdeProblem]] = {
    "cgl1d": _cgl1d,
    "cgl2d": _cgl2d,
    "bruss1d": _bruss1d,
    "bruss2d": _bruss2d,
    "ocpol": _ocpol,
}


def build_model(name: str, params: Optional[Dict[str, float]] = None, active: Optional[str] = None,
                counts: Optional[List[int]] = None) -> PdeProblem:
    """Instantiate a registered model with optional parameter overrides and grid counts"""
    key = name.strip().lower()
    if key not in MODEL_BUILDERS:
        raise ConfigurationError(f"Unknown model '{name}'; choose from {sorted(MODEL_BUILDERS)}")
    problem = MODEL_BUILDERS[key](counts, params or {}, active)
    logger.info(f"Built model {key}: {problem}")
    return problem
