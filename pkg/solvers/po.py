# solvers/po.py - Periodic orbits: trapezoidal collocation, bordered Newton and arclength continuation

import math
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from errors import (
    EvaluationError, ResidualStagnationError, SolverError, StepRejectedError, ConfigurationError
)
from models import OrbitSettings, PeriodicOrbit, FloquetSpectrum, OrbitBranch, Predictor
from problems.base import PdeProblem

logger = logging.getLogger(__name__)


# ─── xi-Norm ────────────────────────────────────────────────────────────────

def xi_inner(a: np.ndarray, b: np.ndarray, nm: int, xi: float, w_T: float) -> float:
    """Weighted inner product of (u, T, lambda) vectors whose u part has length nm"""
    return float(xi * (a[:nm] @ b[:nm])
                 + (1 - xi) * (w_T * a[nm] * b[nm] + (1 - w_T) * a[nm + 1] * b[nm + 1]))


def xi_norm(a: np.ndarray, nm: int, xi: float, w_T: float) -> float:
    return math.sqrt(max(xi_inner(a, a, nm, xi, w_T), 0.0))


# ─── Collocation Residual ───────────────────────────────────────────────────

def _prev(b: int, m: int) -> int:
    """Slice coupled to slice b by block b; block 0 wraps to slice m-2"""
    return m - 2 if b == 0 else b - 1


def _block_h(tmesh: np.ndarray, b: int) -> float:
    m = len(tmesh)
    return float(tmesh[m - 1] - tmesh[m - 2]) if b == 0 else float(tmesh[b] - tmesh[b - 1])


def _slice_residuals(problem: PdeProblem, U: np.ndarray, lam: float) -> np.ndarray:
    m = U.shape[0]
    out = np.empty((m - 1, U.shape[1]))
    for l in range(m - 1):
        try:
            out[l] = problem.G(U[l], lam)
        except EvaluationError as e:
            raise EvaluationError(f"{str(e)} in time slice {l}", node=e.node, slice_index=l) from e
    return out


def po_residual(problem: PdeProblem, orbit: PeriodicOrbit, lam: Optional[float] = None) -> np.ndarray:
    """
    Stacked collocation residual of length m n_u.

    Blocks 0..m-2 are -M (u_b - u_prev)/h - T/2 (G(u_b) + G(u_prev)); the last block is u_m - u_1.
    """
    lam = orbit.lam if lam is None else lam
    U, m, T = orbit.slices, orbit.m, orbit.T
    M = problem.disc.M_block
    Gs = _slice_residuals(problem, U, lam)
    R = np.empty_like(U)
    for b in range(m - 1):
        p = _prev(b, m)
        R[b] = -(M @ (U[b] - U[p])) / _block_h(orbit.tmesh, b) - 0.5 * T * (Gs[b] + Gs[p])
    R[m - 1] = U[m - 1] - U[0]
    return R.ravel()


class CollocationBlocks:
    """Jacobian blocks of the collocation system at an orbit"""

    def __init__(self, M_blocks: List[sp.csc_matrix], H_blocks: List[sp.csc_matrix],
                 dT: np.ndarray, dlam: np.ndarray, n_u: int):
        self.M_blocks = M_blocks
        self.H_blocks = H_blocks
        self.dT = dT
        self.dlam = dlam
        self.n_u = n_u

    @property
    def m(self) -> int:
        return len(self.M_blocks) + 1

    def assemble(self) -> sp.csc_matrix:
        """Cyclic block matrix with M_j on the diagonal, -H_j below it and the periodicity row"""
        m, n_u = self.m, self.n_u
        grid: List[List[Optional[sp.spmatrix]]] = [[None] * m for _ in range(m)]
        for b in range(m - 1):
            grid[b][b] = self.M_blocks[b]
            grid[b][_prev(b, m)] = -self.H_blocks[b]
        eye = sp.identity(n_u, format="csc")
        grid[m - 1][0] = -eye
        grid[m - 1][m - 1] = eye
        return sp.bmat(grid, format="csc")


def po_jacobian(problem: PdeProblem, orbit: PeriodicOrbit) -> CollocationBlocks:
    """
    M_j = -M/h - T/2 G_u(u_j), H_j = -M/h + T/2 G_u(u_prev), the analytic T-column
    and a centered-difference lambda-column.
    """
    U, m, T, lam = orbit.slices, orbit.m, orbit.T, orbit.lam
    M = problem.disc.M_block
    Gs = _slice_residuals(problem, U, lam)
    Jus = [problem.Gu(U[l], lam) for l in range(m - 1)]
    M_blocks, H_blocks = [], []
    dT = np.zeros_like(U)
    for b in range(m - 1):
        p = _prev(b, m)
        h = _block_h(orbit.tmesh, b)
        M_blocks.append((-M / h - 0.5 * T * Jus[b]).tocsc())
        H_blocks.append((-M / h + 0.5 * T * Jus[p]).tocsc())
        dT[b] = -0.5 * (Gs[b] + Gs[p])
    dl = 1e-6 * max(1.0, abs(lam))
    dlam = (po_residual(problem, orbit, lam + dl) - po_residual(problem, orbit, lam - dl)) / (2 * dl)
    return CollocationBlocks(M_blocks, H_blocks, dT.ravel(), dlam, orbit.n_u)


def check_po_jacobian(problem: PdeProblem, orbit: PeriodicOrbit, seed: int = 0, eps: float = 1e-6) -> float:
    """Relative error of the collocation Jacobian against a centered difference along a random direction"""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(orbit.m * orbit.n_u + 2)
    v /= np.linalg.norm(v)
    blocks = po_jacobian(problem, orbit)
    nm = orbit.m * orbit.n_u
    exact = blocks.assemble() @ v[:nm] + blocks.dT * v[nm] + blocks.dlam * v[nm + 1]
    h = eps * max(1.0, float(np.linalg.norm(orbit.vector())))
    x = orbit.vector()
    fd = (po_residual(problem, orbit.with_vector(x + h * v))
          - po_residual(problem, orbit.with_vector(x - h * v))) / (2 * h)
    return float(np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-14))


def reference_derivative(problem: PdeProblem, orbit: PeriodicOrbit) -> np.ndarray:
    """Time derivative of each slice from M u' = -T G(u), shape (m, n_u)"""
    lu = splu(problem.disc.M_block.tocsc())
    Gs = _slice_residuals(problem, orbit.slices, orbit.lam)
    udot = np.empty_like(orbit.slices)
    for l in range(orbit.m - 1):
        udot[l] = -orbit.T * lu.solve(Gs[l])
    udot[-1] = udot[0]
    return udot


# ─── Phase and Arclength Conditions ─────────────────────────────────────────

def phase_gradient(problem: PdeProblem, orbit: PeriodicOrbit) -> np.ndarray:
    """Gradient of sum_{l<m} h_l <u_l, M udot_ref_l> with respect to the stacked slices"""
    if orbit.udot_ref is None:
        raise ConfigurationError("Orbit has no reference derivative for the phase condition")
    M = problem.disc.M_block
    grad = np.zeros_like(orbit.slices)
    h = orbit.h
    for l in range(orbit.m - 1):
        grad[l] = h[l] * (M @ orbit.udot_ref[l])
    return grad.ravel()


def phase_condition(problem: PdeProblem, orbit: PeriodicOrbit) -> float:
    return float(phase_gradient(problem, orbit) @ orbit.slices.ravel())


def arclength_row(orbit: PeriodicOrbit, tau: np.ndarray) -> np.ndarray:
    nm = orbit.m * orbit.n_u
    xi, w_T = orbit.xi, orbit.w_T
    return np.concatenate([xi * tau[:nm], [(1 - xi) * w_T * tau[nm], (1 - xi) * (1 - w_T) * tau[nm + 1]]])


def arclength_condition(orbit: PeriodicOrbit, prev: PeriodicOrbit, tau: np.ndarray, ds: float) -> float:
    return float(arclength_row(orbit, tau) @ (orbit.vector() - prev.vector()) - ds)


# ─── Bordered Linear Solver ─────────────────────────────────────────────────

class BorderedMatrix:
    """[[A, B], [C, D]] with sparse square A and k dense border columns and rows"""

    def __init__(self, A: sp.spmatrix, B: np.ndarray, C: np.ndarray, D: np.ndarray):
        self.A = sp.csc_matrix(A)
        self.B = np.atleast_2d(np.asarray(B, dtype=float).reshape(A.shape[0], -1))
        self.C = np.atleast_2d(np.asarray(C, dtype=float).reshape(-1, A.shape[1]))
        self.D = np.atleast_2d(np.asarray(D, dtype=float))
        k = self.B.shape[1]
        if self.C.shape[0] != k or self.D.shape != (k, k):
            raise ConfigurationError(f"Inconsistent border sizes {self.B.shape}, {self.C.shape}, {self.D.shape}")
        self._lu = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = splu(self.A)
            except RuntimeError as e:
                raise SolverError(f"Singular collocation matrix: {str(e)}") from e
        return self._lu

    def matvec(self, x: np.ndarray) -> np.ndarray:
        top = self.A @ x[:self.n] + self.B @ x[self.n:]
        bottom = self.C @ x[:self.n] + self.D @ x[self.n:]
        return np.concatenate([top, bottom])

    def to_sparse(self) -> sp.csc_matrix:
        return sp.bmat([[self.A, sp.csc_matrix(self.B)], [sp.csc_matrix(self.C), sp.csc_matrix(self.D)]],
                       format="csc")


def _eliminate(mat: BorderedMatrix, V: np.ndarray, Dt: np.ndarray, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    x1 = mat.lu.solve(f)
    try:
        y = np.linalg.solve(Dt, g - mat.C @ x1)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"Singular Schur complement: {str(e)}") from e
    return np.concatenate([x1 - V @ y, y])


def bordered_solve(mat: BorderedMatrix, f: np.ndarray, g: np.ndarray,
                   k_ref: int = 5, tol: float = 1e-10) -> np.ndarray:
    """
    Block elimination: V = A^{-1} B, D~ = D - C V, y = D~^{-1}(g - C A^{-1} f), x = A^{-1} f - V y.

    Up to k_ref refinement passes reuse the factorization of A. ResidualStagnationError
    carries the last solution when the relative residual stays above tol.
    """
    rhs = np.concatenate([f, np.atleast_1d(g)])
    scale = float(np.max(np.abs(rhs)))
    if scale == 0:
        return np.zeros_like(rhs)
    V = mat.lu.solve(mat.B) if mat.k else np.zeros((mat.n, 0))
    V = V.reshape(mat.n, mat.k)
    Dt = mat.D - mat.C @ V
    x = _eliminate(mat, V, Dt, f, np.atleast_1d(g))
    res = float(np.max(np.abs(mat.matvec(x) - rhs))) / scale
    passes = 0
    while res > tol and passes < k_ref:
        r = mat.matvec(x) - rhs
        x = x - _eliminate(mat, V, Dt, r[:mat.n], r[mat.n:])
        res = float(np.max(np.abs(mat.matvec(x) - rhs))) / scale
        passes += 1
    if not np.all(np.isfinite(x)):
        raise SolverError("Bordered solve produced non-finite values")
    if res > tol:
        raise ResidualStagnationError(f"Relative residual {res:.2e} after {passes} refinements",
                                      solution=x, residual=res)
    logger.debug(f"Bordered solve: {passes} refinements, residual {res:.2e}")
    return x


def _solve_with_fallback(mat: BorderedMatrix, f: np.ndarray, g: np.ndarray, settings: OrbitSettings) -> np.ndarray:
    try:
        return bordered_solve(mat, f, g, settings.k_ref, settings.ref_tol)
    except (ResidualStagnationError, SolverError) as e:
        logger.debug(f"Block elimination failed ({str(e)}); solving the full system")
        try:
            return splu(mat.to_sparse()).solve(np.concatenate([f, np.atleast_1d(g)]))
        except RuntimeError as e2:
            raise SolverError(f"Singular bordered system: {str(e2)}") from e2


# ─── Newton Corrector ───────────────────────────────────────────────────────

def _arclength_matrix(problem: PdeProblem, orbit: PeriodicOrbit, blocks: CollocationBlocks,
                      tau: np.ndarray) -> BorderedMatrix:
    row = arclength_row(orbit, tau)
    nm = orbit.m * orbit.n_u
    C = np.vstack([phase_gradient(problem, orbit), row[:nm]])
    D = np.array([[0.0, 0.0], [row[nm], row[nm + 1]]])
    B = np.column_stack([blocks.dT, blocks.dlam])
    return BorderedMatrix(blocks.assemble(), B, C, D)


def _close(orbit: PeriodicOrbit) -> PeriodicOrbit:
    slices = orbit.slices.copy()
    slices[-1] = slices[0]
    return orbit.model_copy(update=dict(slices=slices))


def newton_po(problem: PdeProblem, guess: PeriodicOrbit, prev: PeriodicOrbit, ds: float,
              settings: OrbitSettings) -> Tuple[PeriodicOrbit, int]:
    """
    Correct `guess` onto the orbit branch with the phase and arclength conditions
    relative to `prev` and its tangent.

    Returns the corrected orbit and the iteration count; raises StepRejectedError.
    """
    tau = prev.tangent
    orbit = guess
    err = float("inf")
    for it in range(settings.max_iter + 1):
        try:
            R = po_residual(problem, orbit)
        except EvaluationError as e:
            raise StepRejectedError(f"Residual evaluation failed: {str(e)}", iterations=it) from e
        g = np.array([phase_condition(problem, orbit), arclength_condition(orbit, prev, tau, ds)])
        err = max(float(np.max(np.abs(R))), float(np.max(np.abs(g))))
        logger.debug(f"  orbit newton it={it} T={orbit.T:.8g} lambda={orbit.lam:.8g} residual={err:.3e}")
        if err < settings.tol:
            break
        if it == settings.max_iter:
            raise StepRejectedError(f"Orbit Newton: no convergence in {it} iterations (residual {err:.3e})",
                                    iterations=it, residual=err)
        mat = _arclength_matrix(problem, orbit, po_jacobian(problem, orbit), tau)
        try:
            dx = _solve_with_fallback(mat, R, g, settings)
        except SolverError as e:
            raise StepRejectedError(str(e), iterations=it) from e
        x = orbit.vector() - dx
        if not np.all(np.isfinite(x)) or x[mat.n] <= 0:
            raise StepRejectedError(f"Orbit Newton produced an invalid iterate (T={x[mat.n]:.4g})", iterations=it)
        orbit = orbit.with_vector(x)
    orbit = _close(orbit)
    return orbit.model_copy(update=dict(residual=err)), it


def new_tangent(problem: PdeProblem, orbit: PeriodicOrbit, tau_old: np.ndarray,
                blocks: Optional[CollocationBlocks] = None,
                settings: Optional[OrbitSettings] = None) -> np.ndarray:
    """Solve the extended system for the tangent, xi-normalize and orient it along tau_old"""
    settings = settings or OrbitSettings()
    blocks = blocks or po_jacobian(problem, orbit)
    mat = _arclength_matrix(problem, orbit, blocks, tau_old)
    f = np.zeros(mat.n)
    tau = _solve_with_fallback(mat, f, np.array([0.0, 1.0]), settings)
    nm = mat.n
    tau /= xi_norm(tau, nm, orbit.xi, orbit.w_T)
    if xi_inner(tau, tau_old, nm, orbit.xi, orbit.w_T) < 0:
        tau = -tau
    return tau


# ─── Natural Corrector ──────────────────────────────────────────────────────

def natural_corrector(problem: PdeProblem, guess: PeriodicOrbit, udot0: Optional[np.ndarray] = None,
                      settings: Optional[OrbitSettings] = None) -> Tuple[PeriodicOrbit, int]:
    """
    Newton in (u, T) at fixed lambda with the phase condition <u(0), M udot0(0)> = 0.

    An input that already solves the system is returned unchanged after 0 iterations.
    """
    settings = settings or OrbitSettings()
    M = problem.disc.M_block
    if udot0 is None:
        udot0 = guess.udot_ref if guess.udot_ref is not None else reference_derivative(problem, guess)
    grad = np.zeros_like(guess.slices)
    grad[0] = M @ udot0[0]
    grad = grad.ravel()
    orbit = guess
    nm = guess.m * guess.n_u
    err = float("inf")
    for it in range(settings.max_iter + 1):
        try:
            R = po_residual(problem, orbit)
        except EvaluationError as e:
            raise StepRejectedError(f"Residual evaluation failed: {str(e)}", iterations=it) from e
        phi = float(grad @ orbit.slices.ravel())
        err = max(float(np.max(np.abs(R))), abs(phi))
        if err < settings.tol:
            break
        if it == settings.max_iter:
            raise StepRejectedError(f"Natural corrector: no convergence in {it} iterations (residual {err:.3e})",
                                    iterations=it, residual=err)
        blocks = po_jacobian(problem, orbit)
        mat = BorderedMatrix(blocks.assemble(), blocks.dT.reshape(-1, 1), grad.reshape(1, -1), np.zeros((1, 1)))
        try:
            dx = _solve_with_fallback(mat, R, np.array([phi]), settings)
        except SolverError as e:
            raise StepRejectedError(str(e), iterations=it) from e
        x = np.concatenate([orbit.slices.ravel() - dx[:nm], [orbit.T - dx[nm]]])
        if not np.all(np.isfinite(x)) or x[nm] <= 0:
            raise StepRejectedError("Natural corrector produced an invalid iterate", iterations=it)
        orbit = orbit.model_copy(update=dict(slices=x[:nm].reshape(orbit.m, orbit.n_u), T=float(x[nm])))
    if it == 0:
        return guess, 0
    orbit = _close(orbit)
    return orbit.model_copy(update=dict(residual=err)), it


# ─── Mesh Refinement ────────────────────────────────────────────────────────

def refine_tmesh(problem: PdeProblem, orbit: PeriodicOrbit, m_new: int,
                 settings: Optional[OrbitSettings] = None) -> PeriodicOrbit:
    """
    Insert m_new - m mesh points by bisecting the intervals where the orbit moves most,
    interpolate slices and tangent, and re-correct at fixed lambda. When the
    re-correction fails the input orbit is returned unchanged.
    """
    if m_new < orbit.m:
        raise ConfigurationError(f"Cannot refine from m={orbit.m} to m={m_new}")
    if m_new == orbit.m:
        return orbit
    t = list(orbit.tmesh)
    U = [row for row in orbit.slices]
    nm = orbit.m * orbit.n_u
    tang = None
    if orbit.tangent is not None:
        tang = [row for row in orbit.tangent[:nm].reshape(orbit.m, orbit.n_u)]
    while len(t) < m_new:
        jumps = [np.linalg.norm(U[j + 1] - U[j]) for j in range(len(t) - 1)]
        j = int(np.argmax(jumps))
        t.insert(j + 1, 0.5 * (t[j] + t[j + 1]))
        U.insert(j + 1, 0.5 * (U[j] + U[j + 1]))
        if tang is not None:
            tang.insert(j + 1, 0.5 * (tang[j] + tang[j + 1]))

    refined = orbit.model_copy(update=dict(slices=np.array(U), tmesh=np.array(t), udot_ref=None))
    refined = refined.model_copy(update=dict(udot_ref=reference_derivative(problem, refined)))
    if tang is not None:
        tau = np.concatenate([np.ravel(tang), orbit.tangent[nm:]])
        tau /= xi_norm(tau, m_new * orbit.n_u, orbit.xi, orbit.w_T)
        refined = refined.model_copy(update=dict(tangent=tau))
    try:
        corrected, iters = natural_corrector(problem, refined, settings=settings)
    except StepRejectedError as e:
        logger.warning(f"Re-correction after mesh refinement failed: {str(e)}")
        return orbit
    logger.info(f"Refined time mesh from m={orbit.m} to m={m_new} ({iters} corrector iterations)")
    return corrected.model_copy(update=dict(udot_ref=reference_derivative(problem, corrected)))


# ─── Branch Measures ────────────────────────────────────────────────────────

def branch_norm(problem: PdeProblem, orbit: PeriodicOrbit) -> float:
    """L2 norm over space and one period divided by sqrt(T |Omega|), trapezoid rule in time"""
    M = problem.disc.M_block
    q = np.einsum("ij,ij->i", orbit.slices, (M @ orbit.slices.T).T)
    integral = float(np.sum(orbit.h * 0.5 * (q[:-1] + q[1:])))
    return math.sqrt(max(integral, 0.0) / problem.disc.area)


def orbit_amplitude(orbit: PeriodicOrbit) -> float:
    """Largest nodal oscillation max_t u - min_t u"""
    return float(np.max(orbit.slices.max(axis=0) - orbit.slices.min(axis=0)))


# ─── Continuation Driver ────────────────────────────────────────────────────

FloquetHook = Callable[[PdeProblem, PeriodicOrbit, CollocationBlocks], Optional[FloquetSpectrum]]


def _accept(problem: PdeProblem, orbit: PeriodicOrbit, tau_old: np.ndarray, step: int,
            settings: OrbitSettings) -> Tuple[PeriodicOrbit, CollocationBlocks]:
    blocks = po_jacobian(problem, orbit)
    tau = new_tangent(problem, orbit, tau_old, blocks, settings)
    udot = reference_derivative(problem, orbit)
    return orbit.model_copy(update=dict(tangent=tau, udot_ref=udot, step=step)), blocks


def continue_orbits(problem: PdeProblem, start: Predictor, settings: OrbitSettings, steps: int,
                    floquet: Optional[FloquetHook] = None,
                    lam_bounds: Tuple[float, float] = (-math.inf, math.inf),
                    on_step: Optional[Callable[[PeriodicOrbit, Optional[FloquetSpectrum]], None]] = None
                    ) -> OrbitBranch:
    """
    Arclength (or natural) continuation of the orbit branch born at a Hopf point.

    The first step corrects the predictor; later steps predict along the tangent.
    Rejected steps halve ds down to ds_min. A sign change of tau_lambda is noted as FOLD.
    """
    if settings.parametrization == "natural":
        return continue_orbits_natural(problem, start, settings, steps, floquet, lam_bounds, on_step)

    branch = OrbitBranch()
    prev = start.base
    guess = start.orbit
    ds = settings.ds
    fast = 0
    step = 0
    while step < steps:
        try:
            orbit, iters = newton_po(problem, guess, prev, ds, settings)
            orbit, blocks = _accept(problem, orbit, prev.tangent, step + 1, settings)
        except (StepRejectedError, SolverError) as e:
            ds *= 0.5
            fast = 0
            logger.info(f"Orbit step {step + 1} rejected ({str(e)}); ds -> {ds:.3g}")
            if ds < settings.ds_min:
                logger.warning(f"Orbit continuation stopped: ds below ds_min={settings.ds_min}")
                break
            guess = prev.with_vector(prev.vector() + ds * prev.tangent)
            continue

        step += 1
        spectrum = floquet(problem, orbit, blocks) if floquet else None
        norm = branch_norm(problem, orbit)
        branch.orbits.append(orbit)
        branch.spectra.append(spectrum)
        branch.norms.append(norm)
        branch.step_lengths.append(ds)
        if branch.orbits[:-1] and np.sign(orbit.tangent[-1]) != np.sign(prev.tangent[-1]) and prev.tangent[-1] != 0:
            branch.messages[step] = "FOLD"
            logger.info(f"Fold of orbits near lambda={orbit.lam:.8g}")
        _log_orbit(orbit, norm, spectrum, ds, iters)
        if on_step:
            on_step(orbit, spectrum)

        if not lam_bounds[0] <= orbit.lam <= lam_bounds[1]:
            logger.info(f"lambda={orbit.lam:.6g} left [{lam_bounds[0]}, {lam_bounds[1]}]")
            break
        fast = fast + 1 if iters <= 3 else 0
        if fast >= 2:
            ds = min(ds * settings.grow, settings.ds_max)
            fast = 0
        prev = orbit
        guess = prev.with_vector(prev.vector() + ds * prev.tangent)
    return branch


def continue_orbits_natural(problem: PdeProblem, start: Predictor, settings: OrbitSettings, steps: int,
                            floquet: Optional[FloquetHook] = None,
                            lam_bounds: Tuple[float, float] = (-math.inf, math.inf),
                            on_step=None) -> OrbitBranch:
    """Step lambda by ds in the predictor's direction with the natural corrector; halts at folds"""
    branch = OrbitBranch()
    direction = start.s if start.s != 0 else 1
    guess = start.orbit
    lam = guess.lam
    ds = settings.ds
    prev: Optional[PeriodicOrbit] = None
    step = 0
    while step < steps:
        try:
            orbit, iters = natural_corrector(problem, guess, settings=settings)
        except (StepRejectedError, SolverError) as e:
            ds *= 0.5
            logger.info(f"Natural step {step + 1} rejected ({str(e)}); ds -> {ds:.3g}")
            if ds < settings.ds_min or prev is None:
                logger.warning("Natural continuation stopped, likely at a fold")
                break
            guess = prev.model_copy(update=dict(lam=prev.lam + direction * ds))
            continue
        step += 1
        orbit = orbit.model_copy(update=dict(udot_ref=reference_derivative(problem, orbit), step=step))
        blocks = po_jacobian(problem, orbit)
        spectrum = floquet(problem, orbit, blocks) if floquet else None
        norm = branch_norm(problem, orbit)
        branch.orbits.append(orbit)
        branch.spectra.append(spectrum)
        branch.norms.append(norm)
        branch.step_lengths.append(ds)
        _log_orbit(orbit, norm, spectrum, ds, iters)
        if on_step:
            on_step(orbit, spectrum)
        if not lam_bounds[0] <= orbit.lam <= lam_bounds[1]:
            break
        prev = orbit
        lam = orbit.lam + direction * ds
        guess = orbit.model_copy(update=dict(lam=lam))
    return branch


def _log_orbit(orbit: PeriodicOrbit, norm: float, spectrum: Optional[FloquetSpectrum], ds: float, iters: int):
    fl = f" ind={spectrum.ind} err_mu={spectrum.err_mu:.2e}" if spectrum else ""
    logger.info(f"orbit step={orbit.step} lambda={orbit.lam:.8g} T={orbit.T:.6g} "
                f"norm={norm:.6g}{fl} ds={ds:.3g} iters={iters}")
