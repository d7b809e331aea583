# solvers/spatial.py - Tensor-grid finite elements and the semidiscrete residual G(u, lambda)

import logging
from typing import List, Tuple, Sequence, TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from pydantic import ValidationError

from errors import ConfigurationError, EvaluationError
from models import Grid, BcSpec, FaceBc

if TYPE_CHECKING:
    from problems.base import PdeProblem

logger = logging.getLogger(__name__)


def build_grid(dim: int, counts: Sequence[int], bounds: Sequence[Tuple[float, float]]) -> Grid:
    """Build a 1D or 2D tensor grid; invalid input raises ConfigurationError"""
    try:
        return Grid(dim=dim, counts=tuple(int(n) for n in counts),
                    bounds=tuple((float(lo), float(hi)) for lo, hi in bounds))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid grid: {str(e)}") from e


# ─── 1D Element Matrices ────────────────────────────────────────────────────

def _mass_1d(n: int, h: float, lumped: bool = False) -> sp.csr_matrix:
    if lumped:
        d = np.full(n, h)
        d[[0, -1]] = h / 2
        return sp.diags(d).tocsr()
    main = np.full(n, 2 * h / 3)
    main[[0, -1]] = h / 3
    off = np.full(n - 1, h / 6)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def _stiffness_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2 / h)
    main[[0, -1]] = 1 / h
    off = np.full(n - 1, -1 / h)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def assemble_mass(grid: Grid, lumped: bool = False) -> sp.csr_matrix:
    """Scalar P1/Q1 mass matrix; the consistent version is SPD with entry sum |Omega|"""
    mats = [_mass_1d(n, h, lumped) for n, h in zip(grid.counts, grid.spacing)]
    if grid.dim == 1:
        return mats[0]
    mx, my = mats
    return sp.kron(my, mx, format="csr")


def _face_mass(grid: Grid, face: str) -> sp.csr_matrix:
    """Mass matrix of the boundary face restricted to its nodes"""
    if grid.dim == 1:
        return sp.identity(1, format="csr")
    axis = 1 if face in ("left", "right") else 0
    return _mass_1d(grid.counts[axis], grid.spacing[axis])


def assemble_stiffness(grid: Grid, bc: BcSpec, component: int,
                       diffusion: float = 1.0) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    Stiffness of -div(d grad u) with the boundary terms of component `component`.

    Robin faces add q times the consistent face mass and g times the face load.
    Spring faces add s times the lumped face mass and s*target times the face load.
    """
    ks = [_stiffness_1d(n, h) for n, h in zip(grid.counts, grid.spacing)]
    if grid.dim == 1:
        K = diffusion * ks[0]
    else:
        ms = [_mass_1d(n, h) for n, h in zip(grid.counts, grid.spacing)]
        K = diffusion * (sp.kron(ms[1], ks[0]) + sp.kron(ks[1], ms[0]))
    shape = (grid.n_p, grid.n_p)
    rhs = np.zeros(grid.n_p)

    for face in grid.faces:
        fbc: FaceBc = bc.face(component, face)
        if fbc.kind == "neumann":
            continue
        nodes = grid.boundary_nodes(face)
        Mf = _face_mass(grid, face).tocoo()
        load = np.asarray(Mf.sum(axis=1)).ravel()
        if fbc.kind == "robin":
            K = K + sp.csr_matrix((fbc.q * Mf.data, (nodes[Mf.row], nodes[Mf.col])), shape=shape)
            rhs[nodes] += fbc.g * load
        else:
            K = K + sp.csr_matrix((fbc.s * load, (nodes, nodes)), shape=shape)
            rhs[nodes] += fbc.s * fbc.target * load

    return sp.csr_matrix(K), rhs


# ─── System Discretization ──────────────────────────────────────────────────

class Discretization:
    """Block mass, diffusion-scaled stiffness and boundary load for an N-component system"""

    def __init__(self, grid: Grid, bc: BcSpec, diffusion: Sequence[float], lumped: bool = False):
        self.grid = grid
        self.n_comp = len(diffusion)
        self.n_p = grid.n_p
        self.n_u = self.n_comp * self.n_p
        self.area = grid.area
        self.M = assemble_mass(grid, lumped=lumped)
        self.M_block = sp.block_diag([self.M] * self.n_comp, format="csc")

        blocks: List[sp.csr_matrix] = []
        loads: List[np.ndarray] = []
        for c, d in enumerate(diffusion):
            K, rhs = assemble_stiffness(grid, bc, c, d)
            blocks.append(K)
            loads.append(rhs)
        self.K_block = sp.block_diag(blocks, format="csc")
        self.rhs = np.concatenate(loads)

        logger.debug(f"Discretized {grid.dim}D grid: n_p={self.n_p}, n_u={self.n_u}")


def _reaction(problem: "PdeProblem", U: np.ndarray, lam: float) -> np.ndarray:
    F = np.asarray(problem.reaction(U, problem.param_values(lam)), dtype=float)
    if not np.all(np.isfinite(F)):
        bad = int(np.flatnonzero(~np.isfinite(F.ravel()))[0])
        node = bad % U.shape[1]
        raise EvaluationError(f"Non-finite reaction term at node {node} (lambda={lam})", node=node)
    return F


def residual(problem: "PdeProblem", disc: Discretization, u: np.ndarray, lam: float) -> np.ndarray:
    """G(u, lambda) = K_D u - M_N f(u, lambda) - rhs_bc"""
    if u.shape[0] != disc.n_u:
        raise ConfigurationError(f"State has length {u.shape[0]}, expected {disc.n_u}")
    U = u.reshape(disc.n_comp, disc.n_p)
    F = _reaction(problem, U, lam)
    return disc.K_block @ u - disc.M_block @ F.ravel() - disc.rhs


def jacobian(problem: "PdeProblem", disc: Discretization, u: np.ndarray, lam: float) -> sp.csc_matrix:
    """Sparse G_u = K_D - M_N diag-blocks(df/du)"""
    U = u.reshape(disc.n_comp, disc.n_p)
    J = np.asarray(problem.reaction_jacobian(U, problem.param_values(lam)), dtype=float)
    if not np.all(np.isfinite(J)):
        bad = int(np.flatnonzero(~np.isfinite(J.reshape(-1, disc.n_p)).any(axis=0))[0])
        raise EvaluationError(f"Non-finite reaction Jacobian at node {bad} (lambda={lam})", node=bad)
    n = disc.n_comp
    Fu = sp.bmat([[sp.diags(J[a, b]) for b in range(n)] for a in range(n)], format="csc")
    return (disc.K_block - disc.M_block @ Fu).tocsc()


def l2_norm(disc: Discretization, u: np.ndarray) -> float:
    """sqrt(sum_c u_c^T M u_c / |Omega|)"""
    return float(np.sqrt(max(u @ (disc.M_block @ u), 0.0) / disc.area))


def check_jacobian(problem: "PdeProblem", u: np.ndarray, lam: float,
                   n_trials: int = 3, seed: int = 0, eps: float = 1e-6) -> float:
    """Largest relative error between G_u v and a centered difference of G along random v"""
    rng = np.random.default_rng(seed)
    disc = problem.disc
    J = jacobian(problem, disc, u, lam)
    worst = 0.0
    for _ in range(n_trials):
        v = rng.standard_normal(disc.n_u)
        v /= np.linalg.norm(v)
        h = eps * max(1.0, np.linalg.norm(u))
        fd = (residual(problem, disc, u + h * v, lam) - residual(problem, disc, u - h * v, lam)) / (2 * h)
        ex = J @ v
        worst = max(worst, np.linalg.norm(fd - ex) / max(np.linalg.norm(ex), 1e-14))
    return worst
