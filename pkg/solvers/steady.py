# solvers/steady.py - Stationary arclength continuation with branch point and Hopf detection

import math
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu, eigs, ArpackNoConvergence

from errors import (
    ShiftSingularError, StepRejectedError, EvaluationError, SolverError
)
from models import (
    StationaryPoint, DetectorSettings, SteadySettings, BifurcationEvent, SteadyBranch
)
from problems.base import PdeProblem
from solvers.spatial import l2_norm

logger = logging.getLogger(__name__)

DENSE_LIMIT = 600
EIG_RESIDUAL_TOL = 1e-8


def _imag_tol(mu: np.ndarray) -> np.ndarray:
    return 1e-8 * np.maximum(1.0, np.abs(mu))

# ─── Eigenvalues Near a Shift ───────────────────────────────────────────────

def eigs_near(A: sp.spmatrix, M: sp.spmatrix, sigma: complex, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    The n eigenpairs of mu M phi = A phi closest to sigma, sorted by |mu - sigma|.

    Eigenvectors are normalized to phi^H M phi = 1. Small pencils are solved densely;
    larger ones by shift-invert Arnoldi on the complexified pencil.
    """
    n_u = A.shape[0]
    sigma = complex(sigma)
    if n_u <= DENSE_LIMIT or n >= n_u - 1:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        mu, V = sla.eig(Ad, Md)
        keep = np.isfinite(mu)
        mu, V = mu[keep], V[:, keep]
    else:
        Ac = sp.csc_matrix(A, dtype=complex)
        Mc = sp.csc_matrix(M, dtype=complex)
        try:
            mu, V = eigs(Ac, k=n, M=Mc, sigma=sigma, which="LM")
        except ArpackNoConvergence as e:
            logger.warning(f"Arnoldi did not converge near {sigma:.4g}: {len(e.eigenvalues)} of {n} pairs")
            mu, V = e.eigenvalues, e.eigenvectors
        except RuntimeError as e:
            raise ShiftSingularError(f"Shifted pencil singular at sigma={sigma}: {str(e)}", sigma) from e

    order = np.argsort(np.abs(mu - sigma))[:n]
    mu, V = mu[order], V[:, order]
    scale = np.sqrt(np.abs(np.einsum("ij,ij->j", V.conj(), M @ V)))
    V = V / np.where(scale > 0, scale, 1.0)

    res = np.linalg.norm(A @ V - (M @ V) * mu, axis=0) / np.maximum(np.linalg.norm(V, axis=0), 1e-300)
    if len(res) and res.max() > EIG_RESIDUAL_TOL * max(1.0, abs(sigma)):
        logger.warning(f"Eigenpair residual {res.max():.2e} near sigma={sigma:.4g}")
    return mu, V


def eigs_near_retry(A, M, sigma: complex, n: int, retries: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """eigs_near, perturbing the shift when it hits an eigenvalue"""
    shift = complex(sigma)
    for attempt in range(retries + 1):
        try:
            return eigs_near(A, M, shift, n)
        except ShiftSingularError:
            if attempt == retries:
                raise
            shift = shift + 1e-7 * (1 + abs(shift)) * (1 + 1j)
            logger.warning(f"Retrying eigenvalue solve with perturbed shift {shift:.8g}")


def _perm_parity(perm: np.ndarray) -> int:
    seen = np.zeros(len(perm), dtype=bool)
    cycles = 0
    for i in range(len(perm)):
        if not seen[i]:
            cycles += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = perm[j]
    return 1 if (len(perm) - cycles) % 2 == 0 else -1


def det_sign(J) -> int:
    """Sign of det(J) from a sparse LU factorization; 0 flags an exactly singular matrix"""
    try:
        lu = splu(sp.csc_matrix(J))
    except RuntimeError:
        return 0
    d = lu.U.diagonal()
    if np.any(d == 0):
        return 0
    sign = np.prod(np.sign(d)) * _perm_parity(lu.perm_r) * _perm_parity(lu.perm_c)
    return int(sign)

# ─── Resonance Scan ─────────────────────────────────────────────────────────

def default_test_vectors(problem: PdeProblem, include_constant: bool = False) -> List[np.ndarray]:
    """Unit pseudo-random test vector seeded from the problem fingerprint, optionally the constant vector"""
    rng = np.random.default_rng(problem.seed())
    b = rng.standard_normal(problem.n_u)
    vectors = [b / np.linalg.norm(b)]
    if include_constant:
        vectors.append(np.ones(problem.n_u) / math.sqrt(problem.n_u))
    return vectors


def resonance_scan(problem: PdeProblem, u: np.ndarray, lam: float, omega_max: float,
                   n_samples: int = 200, vectors: Optional[Sequence[np.ndarray]] = None,
                   refine_rounds: int = 2) -> List[float]:
    """
    Peaks of g(omega) = sum_b |b^T (G_u - i omega M)^{-1} b| on (0, omega_max].

    Each local maximum is refined by `refine_rounds` bisection rounds; peaks are
    returned sorted by |g| descending.
    """
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    vectors = list(vectors) if vectors is not None else default_test_vectors(problem)
    Gu = problem.Gu(u, lam).astype(complex)
    M = problem.disc.M_block

    def g(omega: float) -> float:
        try:
            lu = splu((Gu - 1j * omega * M).tocsc())
        except RuntimeError:
            logger.warning(f"Resonance sample omega={omega:.6g} singular, skipped")
            return float("nan")
        return float(sum(abs(b @ lu.solve(b.astype(complex))) for b in vectors))

    omegas = np.linspace(0.0, omega_max, n_samples)
    values = np.array([g(w) for w in omegas])
    step = omegas[1] - omegas[0]

    peaks = []
    for i in range(1, n_samples - 1):
        v = values[i]
        if not np.isfinite(v):
            continue
        left = values[i - 1] if np.isfinite(values[i - 1]) else -np.inf
        right = values[i + 1] if np.isfinite(values[i + 1]) else -np.inf
        if v >= left and v > right:
            w, gv, h = omegas[i], v, step
            for _ in range(refine_rounds):
                h *= 0.5
                for cand in (w - h, w + h):
                    gc = g(cand) if cand > 0 else float("nan")
                    if np.isfinite(gc) and gc > gv:
                        w, gv = cand, gc
            peaks.append((gv, float(w)))

    peaks.sort(key=lambda x: x[0], reverse=True)
    logger.info(f"Resonance scan found {len(peaks)} peaks: {[round(w, 4) for _, w in peaks[:5]]}")
    return [w for _, w in peaks]

# ─── Counting ───────────────────────────────────────────────────────────────

def _count_and_critical(mu: np.ndarray, omega: float) -> Tuple[int, complex]:
    if omega > 0:
        upper = mu.imag >= -_imag_tol(mu)
        mu = mu[upper]
        weights = np.where(np.abs(mu.imag) > _imag_tol(mu), 2, 1)
    else:
        weights = np.ones(len(mu), dtype=int)
    if len(mu) == 0:
        return 0, complex(np.inf)
    count = int(weights[mu.real < 0].sum())
    crit = complex(mu[np.argmin(np.abs(mu - 1j * omega))])
    return count, crit


def count_unstable(problem: PdeProblem, u: np.ndarray, lam: float,
                   detector: DetectorSettings) -> Tuple[List[int], List[complex]]:
    """
    Per shift, the number of computed eigenvalues with negative real part (unstable).

    Near a positive shift only the upper half plane is searched, and a complex
    eigenvalue counts twice for itself and its conjugate. The critical eigenvalue
    of a shift is the computed one closest to i omega.
    """
    Gu = problem.Gu(u, lam)
    M = problem.disc.M_block
    counts, crit = [], []
    for omega, n in zip(detector.shifts, detector.n_eig):
        mu, _ = eigs_near_retry(Gu, M, 1j * omega, n)
        c, k = _count_and_critical(mu, omega)
        counts.append(c)
        crit.append(k)
    return counts, crit

# ─── Arclength Corrector ────────────────────────────────────────────────────

def xi_inner(a: np.ndarray, b: np.ndarray, xi: float) -> float:
    return float(xi * (a[:-1] @ b[:-1]) + (1 - xi) * a[-1] * b[-1])


def xi_norm_stationary(a: np.ndarray, xi: float) -> float:
    return math.sqrt(max(xi_inner(a, a, xi), 0.0))


def extended_matrix(Gu: sp.spmatrix, Glam: np.ndarray, tau: np.ndarray, xi: float) -> sp.csc_matrix:
    """[[G_u, G_lambda], [xi tau_u^T, (1 - xi) tau_lambda]]"""
    row = np.concatenate([xi * tau[:-1], [(1 - xi) * tau[-1]]])
    top = sp.hstack([Gu, sp.csc_matrix(Glam.reshape(-1, 1))])
    return sp.vstack([top, sp.csr_matrix(row.reshape(1, -1))]).tocsc()


def stationary_tangent(problem: PdeProblem, u: np.ndarray, lam: float, xi: float,
                       tau_old: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int]:
    """Tangent with xi-norm 1 oriented along tau_old, and the extended determinant sign"""
    if tau_old is None:
        tau_old = np.zeros(len(u) + 1)
        tau_old[-1] = 1.0
    A = extended_matrix(problem.Gu(u, lam), problem.Glam(u, lam), tau_old, xi)
    rhs = np.zeros(len(u) + 1)
    rhs[-1] = 1.0
    try:
        tau = splu(A).solve(rhs)
    except RuntimeError as e:
        raise SolverError(f"Singular extended matrix at lambda={lam:.6g}: {str(e)}") from e
    tau /= xi_norm_stationary(tau, xi)
    if xi_inner(tau_old, tau, xi) < 0:
        tau = -tau
    row_new = extended_matrix(problem.Gu(u, lam), problem.Glam(u, lam), tau, xi)
    return tau, det_sign(row_new)


def correct_stationary(problem: PdeProblem, u: np.ndarray, lam: float,
                       tol: float = 1e-8, max_iter: int = 10) -> np.ndarray:
    """Newton at fixed lambda"""
    u = u.copy()
    for it in range(max_iter + 1):
        G = problem.G(u, lam)
        err = float(np.max(np.abs(G)))
        if err < tol:
            logger.debug(f"Fixed-lambda Newton converged in {it} iterations")
            return u
        if it == max_iter:
            break
        try:
            u = u - splu(problem.Gu(u, lam).tocsc()).solve(G)
        except RuntimeError as e:
            raise SolverError(f"Singular G_u at lambda={lam:.6g}: {str(e)}") from e
    raise StepRejectedError(f"Fixed-lambda Newton failed at lambda={lam:.6g} (residual {err:.3e})",
                            iterations=max_iter, residual=err)


def cont_step_stationary(problem: PdeProblem, point: StationaryPoint, ds: float,
                         settings: SteadySettings, xi: float) -> Tuple[StationaryPoint, int]:
    """
    One predictor-corrector step of length ds in the xi-norm.

    Returns the new point and the Newton iteration count; raises StepRejectedError
    when the corrector does not converge within settings.max_iter iterations.
    """
    tau = point.tangent
    x0 = np.append(point.u, point.lam)
    x = x0 + ds * tau
    err = float("inf")
    for it in range(settings.max_iter + 1):
        u, lam = x[:-1], float(x[-1])
        try:
            G = problem.G(u, lam)
        except EvaluationError as e:
            raise StepRejectedError(f"Residual evaluation failed: {str(e)}", iterations=it) from e
        psi = xi_inner(tau, x - x0, xi) - ds
        err = max(float(np.max(np.abs(G))), abs(psi))
        logger.debug(f"  newton it={it} lambda={lam:.8g} residual={err:.3e}")
        if err < settings.tol:
            break
        if it == settings.max_iter:
            raise StepRejectedError(f"No convergence in {it} iterations (residual {err:.3e})",
                                    iterations=it, residual=err)
        A = extended_matrix(problem.Gu(u, lam), problem.Glam(u, lam), tau, xi)
        try:
            x = x - splu(A).solve(np.append(G, psi))
        except RuntimeError as e:
            raise StepRejectedError(f"Singular extended matrix: {str(e)}", iterations=it) from e
        if not np.all(np.isfinite(x)):
            raise StepRejectedError("Newton iterate not finite", iterations=it)

    try:
        tau_new, sign = stationary_tangent(problem, u, lam, xi, tau)
    except SolverError as e:
        raise StepRejectedError(str(e), iterations=it) from e
    new = StationaryPoint(u=u.copy(), lam=lam, tangent=tau_new, det_sign=sign,
                          step=point.step + 1, arclength=point.arclength + ds,
                          residual=float(np.max(np.abs(problem.G(u, lam)))))
    return new, it

# ─── Detection and Localization ─────────────────────────────────────────────

def _shift_state(problem: PdeProblem, point: StationaryPoint, omega: float, n: int) -> Tuple[int, complex]:
    mu, _ = eigs_near_retry(problem.Gu(point.u, point.lam), problem.disc.M_block, 1j * omega, n)
    return _count_and_critical(mu, omega)


def _event(point: StationaryPoint, mu: complex, j: int) -> BifurcationEvent:
    kind = "BP" if abs(mu.imag) <= 1e-8 * max(1.0, abs(mu)) else "HBP"
    return BifurcationEvent(kind=kind, lam=point.lam, omega=abs(mu.imag), mu=mu, shift_index=j, point=point)


def _bisect(problem: PdeProblem, prev: StationaryPoint, curr: StationaryPoint, j: int,
            detector: DetectorSettings, settings: SteadySettings, xi: float) -> Optional[BifurcationEvent]:
    omega, n = detector.shifts[j], detector.n_eig[j]
    lo, hi = 0.0, curr.arclength - prev.arclength
    c_lo = prev.counts[j]
    re_lo, re_hi = prev.crit[j].real, curr.crit[j].real
    pt_lo, pt_hi = prev, curr

    for k in range(detector.max_bisect):
        mid = 0.5 * (lo + hi)
        try:
            pt, _ = cont_step_stationary(problem, prev, mid, settings, xi)
        except StepRejectedError as e:
            logger.warning(f"Bisection corrector failed at s={mid:.3e}: {str(e)}")
            return None
        c_mid, mu = _shift_state(problem, pt, omega, n)
        if abs(mu.real) < detector.mu2:
            return _event(pt, mu, j)
        if c_mid == c_lo:
            lo, re_lo, pt_lo = mid, mu.real, pt
        else:
            hi, re_hi, pt_hi = mid, mu.real, pt

    # secant between the bracketing points once the halvings are spent
    if re_lo * re_hi < 0:
        s_star = lo + (hi - lo) * re_lo / (re_lo - re_hi)
        try:
            pt, _ = cont_step_stationary(problem, prev, s_star, settings, xi)
            _, mu = _shift_state(problem, pt, omega, n)
            if abs(mu.real) < detector.mu2:
                return _event(pt, mu, j)
        except StepRejectedError:
            pass
    logger.warning(f"Dropped candidate at shift {omega:.4g} between lambda={pt_lo.lam:.6g} and "
                   f"{pt_hi.lam:.6g}: |Re mu| stays above {detector.mu2}")
    return None


def detect_and_localize(problem: PdeProblem, prev: StationaryPoint, curr: StationaryPoint,
                        detector: DetectorSettings, settings: SteadySettings,
                        xi: float) -> List[BifurcationEvent]:
    """Gate count changes by mu1, localize by bisection in arclength, accept below mu2"""
    events: List[BifurcationEvent] = []
    for j, omega in enumerate(detector.shifts):
        change = curr.counts[j] - prev.counts[j]
        if change == 0:
            continue
        if abs(change) > 2:
            logger.warning(f"Count at shift {omega:.4g} changed by {change} in one step "
                           f"near lambda={curr.lam:.6g}; reduce the step length")
            continue
        gate = min(abs(prev.crit[j].real), abs(curr.crit[j].real))
        if gate > detector.mu1:
            logger.info(f"Candidate at shift {omega:.4g} near lambda={curr.lam:.6g} rejected by gate "
                        f"|Re mu|={gate:.3e} > {detector.mu1}")
            continue
        ev = _bisect(problem, prev, curr, j, detector, settings, xi)
        if ev is None:
            continue
        if any(abs(ev.lam - e.lam) < 1e-4 * max(1.0, abs(e.lam)) and abs(ev.omega - e.omega) < 1e-3
               for e in events):
            continue
        logger.info(f"Localized {ev.kind} at lambda={ev.lam:.8g}, omega={ev.omega:.6g}, "
                    f"Re mu={ev.mu.real:.2e}")
        events.append(ev)
    return events

# ─── Branch Switching at Branch Points ──────────────────────────────────────

def switch_at_bp(problem: PdeProblem, event: BifurcationEvent, ds: float,
                 settings: SteadySettings, xi: float, gate: float = 0.01) -> StationaryPoint:
    """First point on the branch bifurcating at a simple branch point, along the kernel vector"""
    u0, lam = event.point.u, event.point.lam
    M = problem.disc.M_block
    mu, V = eigs_near(problem.Gu(u0, lam), M, 0.0, 2)
    if abs(mu[0].imag) > 1e-8 * max(1.0, abs(mu[0])) or abs(mu[0]) >= gate:
        raise SolverError(f"No simple real kernel at lambda={lam:.6g}: nearest eigenvalue {mu[0]:.3e}")
    v = V[:, 0]
    k = int(np.argmax(np.abs(v)))
    phi = np.real(v * np.conj(v[k]) / abs(v[k]))
    tau = np.append(phi, 0.0)
    tau /= xi_norm_stationary(tau, xi)
    start = event.point.model_copy(update={"tangent": tau})
    new, _ = cont_step_stationary(problem, start, ds, settings, xi)
    logger.info(f"Switched at BP lambda={lam:.6g}: new branch norm {l2_norm(problem.disc, new.u):.4g}")
    return new

# ─── Continuation Driver ────────────────────────────────────────────────────

def _refresh_shifts(problem: PdeProblem, point: StationaryPoint, detector: DetectorSettings) -> DetectorSettings:
    guesses = resonance_scan(problem, point.u, point.lam, detector.omega_max, detector.n_samples)
    n_extra = max(1, len(detector.shifts) - 1, len(detector.n_eig) - 1)
    shifts = [0.0] + [w for w in guesses if w > 0][:n_extra]
    n_eig = [detector.n_eig[0]] + [detector.n_eig[-1]] * (len(shifts) - 1)
    logger.info(f"Detector shifts set to {[round(w, 4) for w in shifts]}")
    return detector.model_copy(update={"shifts": shifts, "n_eig": n_eig})


def continue_stationary(problem: PdeProblem, settings: SteadySettings, detector: DetectorSettings,
                        steps: int, u0: Optional[np.ndarray] = None, lam0: Optional[float] = None,
                        direction: int = 1, lam_bounds: Tuple[float, float] = (-math.inf, math.inf),
                        start: Optional[StationaryPoint] = None,
                        on_step: Optional[Callable[[StationaryPoint, List[BifurcationEvent]], None]] = None
                        ) -> SteadyBranch:
    """Run `steps` arclength steps from (u0, lam0) or from a point with tangent, detecting bifurcations"""
    xi = settings.xi or 1.0 / problem.n_u
    if start is None:
        lam = problem.lam if lam0 is None else lam0
        u = correct_stationary(problem, problem.initial_state() if u0 is None else u0, lam, settings.tol)
        tau_seed = np.zeros(len(u) + 1)
        tau_seed[-1] = float(np.sign(direction) or 1)
        tau, sign = stationary_tangent(problem, u, lam, xi, tau_seed)
        point = StationaryPoint(u=u, lam=lam, tangent=tau, det_sign=sign,
                                residual=float(np.max(np.abs(problem.G(u, lam)))))
    else:
        point = start

    if detector.auto:
        detector = _refresh_shifts(problem, point, detector)
    point.counts, point.crit = count_unstable(problem, point.u, point.lam, detector)
    branch = SteadyBranch(points=[point], shifts=list(detector.shifts))
    _log_point(problem, point, settings.ds)
    if on_step:
        on_step(point, [])

    ds, fast, accepted = settings.ds, 0, 0
    while accepted < steps:
        try:
            new, iters = cont_step_stationary(problem, point, ds, settings, xi)
        except StepRejectedError as e:
            ds *= 0.5
            logger.warning(f"Step rejected ({str(e)}); ds -> {ds:.3e}")
            if ds < settings.ds_min:
                logger.error(f"Step length below ds_min={settings.ds_min} at lambda={point.lam:.6g}")
                branch.messages[point.step] = "ds_min"
                break
            continue

        at_bound = not lam_bounds[0] <= new.lam <= lam_bounds[1]
        if at_bound:
            new = _clip_to_bounds(problem, point, new, lam_bounds, settings, xi)
            if new is None:
                break
        accepted += 1
        if detector.auto and detector.refresh and accepted % detector.refresh == 0:
            detector = _refresh_shifts(problem, new, detector)
            point.counts, point.crit = count_unstable(problem, point.u, point.lam, detector)
            branch.shifts = list(detector.shifts)
        new.counts, new.crit = count_unstable(problem, new.u, new.lam, detector)

        events = detect_and_localize(problem, point, new, detector, settings, xi)
        if point.det_sign * new.det_sign < 0 and not any(e.kind == "BP" for e in events):
            branch.messages[new.step] = "det-sign"
            logger.info(f"Extended determinant changed sign near lambda={new.lam:.6g}")
        branch.events.extend(events)
        if events:
            branch.messages[new.step] = " ".join(f"{e.kind}@{e.lam:.6g}" for e in events)
        branch.points.append(new)
        _log_point(problem, new, ds)
        if on_step:
            on_step(new, events)

        if iters <= 3:
            fast += 1
            if fast >= 2:
                ds, fast = min(ds * settings.grow, settings.ds_max), 0
        else:
            fast = 0
        point = new
        if at_bound:
            logger.info(f"Reached the bound lambda={new.lam:.6g}, stopping")
            break

    branch.shifts = list(detector.shifts)
    return branch


def _clip_to_bounds(problem: PdeProblem, point: StationaryPoint, new: StationaryPoint,
                    lam_bounds: Tuple[float, float], settings: SteadySettings,
                    xi: float) -> Optional[StationaryPoint]:
    """Replace a step that left [lam_min, lam_max] by a point on the crossed bound"""
    bound = lam_bounds[1] if new.lam > lam_bounds[1] else lam_bounds[0]
    frac = (bound - point.lam) / (new.lam - point.lam)
    if not 0 < frac < 1:
        return None
    try:
        near, _ = cont_step_stationary(problem, point, frac * (new.arclength - point.arclength), settings, xi)
        u = correct_stationary(problem, near.u, bound, settings.tol, settings.max_iter)
        tau, sign = stationary_tangent(problem, u, bound, xi, near.tangent)
    except (StepRejectedError, SolverError) as e:
        logger.warning(f"Could not clip the last step to lambda={bound:.6g}: {str(e)}")
        return None
    return near.model_copy(update=dict(u=u, lam=float(bound), tangent=tau, det_sign=sign,
                                       residual=float(np.max(np.abs(problem.G(u, bound))))))


def _log_point(problem: PdeProblem, point: StationaryPoint, ds: float) -> None:
    logger.info(f"step={point.step} lambda={point.lam:.8g} norm={l2_norm(problem.disc, point.u):.6g} "
                f"counts={point.counts} det={point.det_sign:+d} ds={ds:.3g}")
