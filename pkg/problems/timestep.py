# problems/timestep.py - Trapezoidal time integration of M u' = -G(u, lambda)

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from errors import NegativeDiffusionError, TimeStepError
from problems.base import PdeProblem
from solvers.spatial import assemble_mass

logger = logging.getLogger(__name__)


def time_step(problem: PdeProblem, u0: np.ndarray, dt: float, n_steps: int,
              lam: Optional[float] = None, force: bool = False, lumped: bool = False,
              tol: float = 1e-10, max_iter: int = 8) -> np.ndarray:
    """
    Integrate with the implicit trapezoidal rule and return the states, shape (n_steps + 1, n_u).

    Problems with a negative diffusion coefficient are refused unless `force` is set.
    """
    if np.any(problem.diffusion() < 0) and not force:
        raise NegativeDiffusionError(
            f"{problem.name} has backward diffusion {problem.diffusion()}; pass force=True to integrate anyway")
    lam = problem.lam if lam is None else lam
    disc = problem.disc
    if lumped:
        M = sp.block_diag([assemble_mass(problem.grid, lumped=True)] * disc.n_comp, format="csc")
    else:
        M = disc.M_block

    states = np.empty((n_steps + 1, disc.n_u))
    states[0] = u0
    u = u0.copy()
    for n in range(1, n_steps + 1):
        g_old = problem.G(u, lam)
        x = u.copy()
        for it in range(max_iter):
            R = M @ (x - u) / dt + 0.5 * (problem.G(x, lam) + g_old)
            if np.max(np.abs(R)) < tol:
                break
            try:
                lu = splu((M / dt + 0.5 * problem.Gu(x, lam)).tocsc())
                x = x - lu.solve(R)
            except RuntimeError as e:
                raise TimeStepError(f"Singular step matrix at step {n}: {str(e)}", step=n) from e
        else:
            R = M @ (x - u) / dt + 0.5 * (problem.G(x, lam) + g_old)
            if np.max(np.abs(R)) >= tol:
                raise TimeStepError(f"Newton did not converge in time step {n} (residual {np.max(np.abs(R)):.3e})", step=n)
        u = x
        states[n] = u
        if not np.all(np.isfinite(u)):
            raise TimeStepError(f"Non-finite state after time step {n}", step=n)

    logger.info(f"Integrated {n_steps} steps of dt={dt} for {problem.name} at lambda={lam:.6g}")
    return states
