# solvers/floquet.py - Floquet multipliers from the collocation blocks (monodromy product or periodic QZ)

import logging
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import splu, eigs, ArpackNoConvergence

from errors import FA1InapplicableError, PeriodicSchurConvergenceError
from models import FloquetSpectrum, PeriodicOrbit
from problems.base import PdeProblem
from solvers.periodic_schur import periodic_schur, product_eigenvalues
from solvers.po import CollocationBlocks, po_jacobian

logger = logging.getLogger(__name__)

DENSE_MULTIPLIERS = 300
TOL_FL = 1e-6


# ─── Spectrum Bookkeeping ───────────────────────────────────────────────────

def _trivial_index(gammas: np.ndarray, log_mod: np.ndarray) -> int:
    dist = np.where(np.isfinite(log_mod), np.abs(gammas - 1.0), np.inf)
    dist = np.where(np.isnan(dist), np.inf, dist)
    return int(np.argmin(dist))


def floq_index(log_moduli: np.ndarray, trivial: int, tol_fl: float = TOL_FL) -> int:
    """Count multipliers with |gamma| > 1 + tol_fl, leaving out the trivial one"""
    mask = np.ones(len(log_moduli), dtype=bool)
    mask[trivial] = False
    return int(np.sum(log_moduli[mask] > np.log1p(tol_fl)))


def classify_candidate(gamma: Optional[complex], tol: float = 1e-3) -> Optional[str]:
    """Fold-type (near +1), period-doubling (near -1) or torus (complex pair) for a crossing multiplier"""
    if gamma is None:
        return None
    if abs(gamma.imag) <= tol * max(1.0, abs(gamma)):
        return "fold" if gamma.real > 0 else "period-doubling"
    return "torus"


def build_spectrum(gammas: np.ndarray, log_mod: np.ndarray, algorithm: str,
                   tol_fl: float = TOL_FL, overflow: bool = False,
                   warnings: Optional[List[str]] = None) -> FloquetSpectrum:
    """Sort by modulus, locate the trivial multiplier and derive err_mu, ind and gamma_cand"""
    warnings = list(warnings or [])
    order = np.argsort(-np.nan_to_num(log_mod, nan=-np.inf))
    gammas, log_mod = gammas[order], log_mod[order]
    k = _trivial_index(gammas, log_mod)
    err_mu = float(abs(gammas[k] - 1.0)) if np.isfinite(gammas[k]) else float("inf")
    if err_mu > tol_fl:
        msg = f"Trivial multiplier off by err_mu={err_mu:.2e} > {tol_fl:g}; refine the time mesh"
        logger.warning(msg)
        warnings.append(msg)
    ind = floq_index(log_mod, k, tol_fl)
    outside = [i for i in range(len(gammas)) if i != k and log_mod[i] > 0]
    cand = complex(gammas[min(outside, key=lambda i: log_mod[i])]) if outside else None
    return FloquetSpectrum(multipliers=gammas, log_moduli=log_mod, err_mu=err_mu, ind=ind,
                           algorithm=algorithm, tol_fl=tol_fl, gamma_cand=cand,
                           overflow=overflow, warnings=warnings)


# ─── FA1: Monodromy Product ─────────────────────────────────────────────────

def monodromy_fa1(blocks: CollocationBlocks) -> np.ndarray:
    """Dense M_{m-1}^{-1} H_{m-1} ... M_1^{-1} H_1"""
    n = blocks.n_u
    X = np.eye(n)
    for j, (Mj, Hj) in enumerate(zip(blocks.M_blocks, blocks.H_blocks)):
        try:
            lu = splu(Mj.tocsc())
        except RuntimeError as e:
            raise FA1InapplicableError(f"Block M_{j + 1} is singular: {str(e)}") from e
        X = lu.solve(np.asarray(Hj @ X))
        if not np.all(np.isfinite(X)):
            raise FA1InapplicableError(f"Monodromy product overflowed at block {j + 1}")
    return X


def multipliers_fa1(blocks: CollocationBlocks, n_plus: Optional[int] = None,
                    tol_fl: float = TOL_FL) -> FloquetSpectrum:
    """Eigenvalues of the monodromy product; all of them when small, else the n_plus largest"""
    mono = monodromy_fa1(blocks)
    n = mono.shape[0]
    warnings: List[str] = []
    if n <= DENSE_MULTIPLIERS or n_plus is None or n_plus >= n - 1:
        gammas = sla.eigvals(mono)
    else:
        try:
            gammas = eigs(mono, k=n_plus, which="LM", return_eigenvectors=False)
        except ArpackNoConvergence as e:
            gammas = e.eigenvalues
            warnings.append(f"Arnoldi returned {len(gammas)} of {n_plus} multipliers")
        if len(gammas) and np.min(np.abs(gammas)) >= 1:
            msg = f"All {len(gammas)} computed multipliers lie outside the unit circle; ind may be truncated"
            logger.warning(msg)
            warnings.append(msg)
    with np.errstate(divide="ignore"):
        log_mod = np.log(np.abs(gammas))
    return build_spectrum(np.asarray(gammas, dtype=complex), log_mod, "FA1", tol_fl, warnings=warnings)


# ─── FA2: Periodic Schur ────────────────────────────────────────────────────

def multipliers_fa2(blocks: CollocationBlocks, tol_fl: float = TOL_FL) -> FloquetSpectrum:
    """All multipliers from the periodic Schur form of the pairs (H_j, M_j)"""
    A = [Hj.toarray() for Hj in blocks.H_blocks]
    B = [Mj.toarray() for Mj in blocks.M_blocks]
    form = periodic_schur(A, B)
    log_mod, phase, overflow = product_eigenvalues(form)
    with np.errstate(over="ignore", invalid="ignore"):
        gammas = np.exp(log_mod) * np.exp(1j * phase)
    if overflow or not np.all(np.isfinite(gammas[np.isfinite(log_mod)])):
        overflow = True
        logger.warning("Floquet multiplier overflow; moduli are kept as logarithms")
    logger.debug(f"FA2 used {form.sweeps} sweeps")
    return build_spectrum(gammas, log_mod, "FA2", tol_fl, overflow=overflow)


def floquet_spectrum(problem: PdeProblem, orbit: PeriodicOrbit, blocks: Optional[CollocationBlocks] = None,
                     algorithm: str = "fa1", n_plus: Optional[int] = None,
                     tol_fl: float = TOL_FL) -> FloquetSpectrum:
    """Multipliers of an orbit with the chosen algorithm; FA1 falls back to FA2 when inapplicable"""
    blocks = blocks or po_jacobian(problem, orbit)
    if algorithm.lower() == "fa2":
        return multipliers_fa2(blocks, tol_fl)
    try:
        return multipliers_fa1(blocks, n_plus, tol_fl)
    except FA1InapplicableError as e:
        logger.warning(f"{str(e)}; using the periodic Schur method")
        return multipliers_fa2(blocks, tol_fl)


def floquet_hook(algorithm: str = "fa1", n_plus: Optional[int] = None, tol_fl: float = TOL_FL):
    """Callable for continue_orbits; returns None when algorithm is 'off'"""
    if algorithm == "off":
        return None

    def hook(problem: PdeProblem, orbit: PeriodicOrbit, blocks: CollocationBlocks) -> Optional[FloquetSpectrum]:
        try:
            return floquet_spectrum(problem, orbit, blocks, algorithm, n_plus, tol_fl)
        except PeriodicSchurConvergenceError as e:
            logger.error(f"Error computing multipliers at step {orbit.step}: {str(e)}")
            return None

    return hook


# ─── Defects for Canonical Systems ──────────────────────────────────────────

def steady_defect(problem: PdeProblem, u: np.ndarray, lam: float, axis_tol: float = 1e-8) -> Tuple[int, List[str]]:
    """
    n_u/2 minus the number of eigenvalues of (G_u, M) with positive real part.

    Backward-diffusion problems have decaying modes at Re mu > 0 in forward time.
    """
    mu = sla.eigvals(problem.Gu(u, lam).toarray(), problem.disc.M_block.toarray())
    mu = mu[np.isfinite(mu)]
    notes = []
    if np.any(np.abs(mu.real) < axis_tol):
        notes.append(f"Eigenvalue within {axis_tol:g} of the imaginary axis; defect is ambiguous")
        logger.warning(notes[-1])
    return problem.n_u // 2 - int(np.sum(mu.real > 0)), notes


def orbit_defect(problem: PdeProblem, spectrum: FloquetSpectrum) -> int:
    """ind - n_u/2 from a full multiplier spectrum"""
    return spectrum.ind - problem.n_u // 2


def oc_defects(problem: PdeProblem, u: Optional[np.ndarray] = None, lam: Optional[float] = None,
               spectrum: Optional[FloquetSpectrum] = None) -> dict:
    """Defects of a steady state and/or an orbit for a canonical system"""
    out = {}
    if u is not None:
        d, notes = steady_defect(problem, u, problem.lam if lam is None else lam)
        out["steady"] = d
        out["notes"] = notes
    if spectrum is not None:
        out["orbit"] = orbit_defect(problem, spectrum)
    return out
