# problems/base.py - Base class for N-component reaction-diffusion problems M u' = -G(u, lambda)

import hashlib
import logging
from abc import ABC, abstractmethod
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp

from errors import ConfigurationError
from models import Grid, BcSpec
from solvers.spatial import Discretization, residual, jacobian

logger = logging.getLogger(__name__)


class PdeProblem(ABC):
    """
    Reaction-diffusion system u_t = D Laplace(u) + f(u, p) on a tensor grid.

    Subclasses set `name`, `n_comp`, `default_params`, `default_active` and implement
    the nodewise `reaction` and `reaction_jacobian` on arrays of shape (n_comp, n_p).
    """

    name = "base"
    n_comp = 1
    default_params: Dict[str, float] = {}
    default_active = ""

    def __init__(self, grid: Grid, bc: BcSpec, params: Optional[Dict[str, float]] = None,
                 active: Optional[str] = None):
        self.grid = grid
        self.bc = bc
        self.params = dict(self.default_params)
        for key, value in (params or {}).items():
            if key not in self.params:
                raise ConfigurationError(f"Unknown parameter '{key}' for model {self.name}")
            self.params[key] = float(value)
        self.active = active or self.default_active
        if self.active not in self.params:
            raise ConfigurationError(f"Active parameter '{self.active}' not in {sorted(self.params)}")
        self._disc: Optional[Discretization] = None

    # ─── Model definition ───

    @abstractmethod
    def diffusion(self) -> np.ndarray:
        """Diffusion coefficient per component"""

    @abstractmethod
    def reaction(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        """Nodewise reaction f, shape (n_comp, n_p)"""

    @abstractmethod
    def reaction_jacobian(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        """Nodewise df/du, shape (n_comp, n_comp, n_p)"""

    def homogeneous_state(self) -> np.ndarray:
        """Spatially homogeneous steady state as an (n_comp,) vector"""
        return np.zeros(self.n_comp)

    # ─── Derived quantities ───

    @property
    def lam(self) -> float:
        return self.params[self.active]

    @property
    def disc(self) -> Discretization:
        if self._disc is None:
            self._disc = Discretization(self.grid, self.bc, self.diffusion())
        return self._disc

    @property
    def n_u(self) -> int:
        return self.n_comp * self.grid.n_p

    def param_values(self, lam: float) -> Dict[str, float]:
        p = dict(self.params)
        p[self.active] = float(lam)
        return p

    def with_params(self, **updates: float) -> "PdeProblem":
        params = dict(self.params)
        params.update(updates)
        return type(self)(self.grid, self.bc, params, self.active)

    def initial_state(self) -> np.ndarray:
        return np.repeat(self.homogeneous_state(), self.grid.n_p)

    def fingerprint(self) -> str:
        """Stable hash of model, grid and parameters, used to seed random test vectors"""
        text = f"{self.name}|{self.grid.counts}|{self.grid.bounds}|{sorted(self.params.items())}|{self.active}"
        return hashlib.sha256(text.encode()).hexdigest()

    def seed(self) -> int:
        return int(self.fingerprint()[:8], 16)

    # ─── Residual interface ───

    def G(self, u: np.ndarray, lam: float) -> np.ndarray:
        return residual(self, self.disc, u, lam)

    def Gu(self, u: np.ndarray, lam: float) -> sp.csc_matrix:
        return jacobian(self, self.disc, u, lam)

    def Glam(self, u: np.ndarray, lam: float) -> np.ndarray:
        h = 1e-6 * max(1.0, abs(lam))
        return (self.G(u, lam + h) - self.G(u, lam - h)) / (2 * h)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(active={self.active}, lam={self.lam:.6g}, n_u={self.n_u})"
