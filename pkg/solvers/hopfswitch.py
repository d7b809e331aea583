# solvers/hopfswitch.py - Hopf eigenpair, normal-form direction of bifurcation and orbit predictor

import math
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from errors import NotAHopfError, DegenerateHopfError, SolverError, StepRejectedError
from models import HopfPoint, OrbitSettings, PeriodicOrbit, Predictor, BifurcationEvent
from problems.base import PdeProblem
from solvers.po import xi_norm
from solvers.steady import eigs_near_retry, correct_stationary

logger = logging.getLogger(__name__)

DEGENERATE_C1 = 1e-12
B_STEP = 1e-4
C_STEP = 1e-3


def _normalize(psi: np.ndarray, M: sp.spmatrix) -> np.ndarray:
    """Scale to psi^H M psi = 1 with the largest-modulus entry real and positive"""
    psi = psi / math.sqrt(abs(np.vdot(psi, M @ psi)))
    k = int(np.argmax(np.abs(psi)))
    return psi * (abs(psi[k]) / psi[k])


def hopf_eigenpair(problem: PdeProblem, u0: np.ndarray, lam: float, omega_guess: float,
                   mu2: float = 1e-4) -> Tuple[float, np.ndarray]:
    """
    Refine the critical eigenpair G_u psi = i omega M psi at a Hopf point.

    Returns omega_H > 0 and psi normalized with psi^H M psi = 1. Raises NotAHopfError
    when the eigenvalue nearest i*omega_guess is not within mu2 of the imaginary axis.
    """
    M = problem.disc.M_block
    mu, V = eigs_near_retry(problem.Gu(u0, lam), M, 1j * abs(omega_guess), 2)
    mu0, psi = complex(mu[0]), V[:, 0]
    if mu0.imag < 0:
        mu0, psi = mu0.conjugate(), psi.conj()
    if abs(mu0.real) >= mu2:
        raise NotAHopfError(f"Eigenvalue {mu0:.6g} nearest i*{omega_guess:.4g} is not critical (|Re| >= {mu2})")
    if mu0.imag <= 0:
        raise NotAHopfError(f"Critical eigenvalue {mu0:.6g} is real; this is a branch point")
    return float(mu0.imag), _normalize(psi, M)


# ─── Multilinear Forms ──────────────────────────────────────────────────────

def _split(x: np.ndarray):
    return [(x.real, 1.0), (x.imag, 1j)]


def bilinear(problem: PdeProblem, u0: np.ndarray, lam: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """B(x, y): centered difference of G_u along x applied to y, complex arguments split into parts"""
    out = np.zeros(len(u0), dtype=complex)
    for part, weight in _split(x):
        size = np.max(np.abs(part))
        if size == 0:
            continue
        h = B_STEP / size
        dJ = problem.Gu(u0 + h * part, lam) - problem.Gu(u0 - h * part, lam)
        out += weight * (dJ @ y) / (2 * h)
    return out


def trilinear(problem: PdeProblem, u0: np.ndarray, lam: float,
              x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """C(x, y, z): mixed centered second difference of G_u applied to z"""
    out = np.zeros(len(u0), dtype=complex)
    for a, wa in _split(x):
        sa = np.max(np.abs(a))
        if sa == 0:
            continue
        for b, wb in _split(y):
            sb = np.max(np.abs(b))
            if sb == 0:
                continue
            ha, hb = C_STEP / sa, C_STEP / sb
            Gu = problem.Gu
            d = (Gu(u0 + ha * a + hb * b, lam) - Gu(u0 + ha * a - hb * b, lam)
                 - Gu(u0 - ha * a + hb * b, lam) + Gu(u0 - ha * a - hb * b, lam))
            out += wa * wb * (d @ z) / (4 * ha * hb)
    return out


def _solve(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    try:
        return splu(sp.csc_matrix(A, dtype=complex)).solve(b.astype(complex))
    except RuntimeError as e:
        raise SolverError(f"Singular matrix in normal-form computation: {str(e)}") from e


def _adjoint(problem: PdeProblem, hp: HopfPoint, q: np.ndarray) -> np.ndarray:
    """w with G_u^T w = i omega M w and w^H M q = 1"""
    M = problem.disc.M_block
    mu, W = eigs_near_retry(problem.Gu(hp.u0, hp.lam).T.tocsc(), M, 1j * hp.omega, 2)
    w = W[:, int(np.argmin(np.abs(mu - 1j * hp.omega)))]
    return w / np.conj(np.vdot(w, M @ q))


def first_lyapunov(problem: PdeProblem, hp: HopfPoint) -> float:
    """
    Real part c_1 of the cubic normal-form coefficient of the flow u' = -M^{-1} G(u).

    c_1 > 0 means subcritical, c_1 < 0 supercritical (for a crossing with positive speed).
    """
    u0, lam, om = hp.u0, hp.lam, hp.omega
    M = problem.disc.M_block
    Gu = problem.Gu(u0, lam)
    q = hp.psi.conj()
    w = _adjoint(problem, hp, q)
    qb = q.conj()

    Bqqb = bilinear(problem, u0, lam, q, qb)
    Bqq = bilinear(problem, u0, lam, q, q)
    r11 = _solve(Gu, Bqqb)
    r20 = _solve(Gu + 2j * om * M, Bqq)
    term_c = trilinear(problem, u0, lam, q, q, qb)
    term_1 = bilinear(problem, u0, lam, q, r11)
    term_2 = bilinear(problem, u0, lam, qb, r20)
    c = 0.5 * (-np.vdot(w, term_c) + 2 * np.vdot(w, term_1) + np.vdot(w, term_2))
    logger.debug(f"Complex normal-form coefficient {c:.6g}")
    return float(c.real)


def growth_rate_derivative(problem: PdeProblem, hp: HopfPoint) -> float:
    """d/dlambda of the growth rate Re(-mu) of the critical mode by centered differences"""
    h = 1e-4 * max(1.0, abs(hp.lam))
    M = problem.disc.M_block
    Gu0 = problem.Gu(hp.u0, hp.lam)
    du = splu(Gu0.tocsc()).solve(-problem.Glam(hp.u0, hp.lam))
    rates = []
    for sign in (1, -1):
        lam = hp.lam + sign * h
        u = correct_stationary(problem, hp.u0 + sign * h * du, lam, tol=1e-11)
        mu, V = eigs_near_retry(problem.Gu(u, lam), M, 1j * hp.omega, 4)
        overlap = np.abs(V.conj().T @ (M @ hp.psi))
        rates.append(-complex(mu[int(np.argmax(overlap))]).real)
    return float((rates[0] - rates[1]) / (2 * h))


def branch_direction(problem: PdeProblem, hp: HopfPoint) -> HopfPoint:
    """
    Fill in mu_r', c_1, the direction s and the amplitude factor alpha.

    The bifurcating branch satisfies lambda - lambda_H ~ s eps^2 with amplitude
    ~ 2 eps alpha. Raises DegenerateHopfError when |c_1| is negligible.
    """
    try:
        mu_p = growth_rate_derivative(problem, hp)
    except (StepRejectedError, SolverError) as e:
        raise SolverError(f"Could not differentiate the critical eigenvalue: {str(e)}") from e
    c1 = first_lyapunov(problem, hp)
    logger.info(f"Hopf at lambda={hp.lam:.6g}: omega={hp.omega:.6g}, mu_r'={mu_p:.6g}, c1={c1:.6g}")
    if abs(c1) < DEGENERATE_C1:
        raise DegenerateHopfError(f"c1={c1:.3e} vanishes at lambda={hp.lam:.6g}")
    s = -int(np.sign(mu_p / c1))
    alpha = math.sqrt(abs(mu_p / c1))
    kind = "supercritical" if s * mu_p > 0 else "subcritical"
    logger.info(f"Bifurcation is {kind} (s={s}, alpha={alpha:.6g})")
    return hp.model_copy(update=dict(mu_r_prime=mu_p, c1=c1, s=s, alpha=alpha))


def hopf_point(problem: PdeProblem, event: BifurcationEvent, mu2: float = 1e-4) -> HopfPoint:
    """HopfPoint from a localized HBP event, without the normal-form data"""
    omega, psi = hopf_eigenpair(problem, event.point.u, event.lam, event.omega, mu2)
    return HopfPoint(u0=event.point.u.copy(), lam=event.lam, omega=omega, psi=psi)


# ─── Predictor ──────────────────────────────────────────────────────────────

def default_xi(settings: OrbitSettings, n_u: int) -> float:
    return settings.xi if settings.xi is not None else min(0.5, 10.0 / (settings.m * n_u))


def build_predictor(problem: PdeProblem, hp: HopfPoint, settings: OrbitSettings,
                    ds: Optional[float] = None) -> Predictor:
    """
    Initial orbit u(t) = u0 + 2 eps alpha Re(exp(-2 pi i t) psi), T = 2 pi/omega, lambda = lambda_H + s eps^2.

    eps solves the xi-norm step condition for ds. When c_1 is degenerate a fixed
    `settings.amplitude` is used at lambda_H.
    """
    ds = settings.ds if ds is None else ds
    m, n_u = settings.m, len(hp.u0)
    xi, w_T = default_xi(settings, n_u), settings.w_T
    tmesh = np.linspace(0.0, 1.0, m)
    phase = np.exp(-2j * np.pi * tmesh)
    T0 = 2 * math.pi / hp.omega

    if hp.c1 is None or hp.alpha is None or hp.s is None:
        if settings.amplitude is None:
            raise DegenerateHopfError("No normal-form data and no fallback amplitude")
        shape = 2 * np.real(np.outer(phase, hp.psi))
        eps, s, alpha = settings.amplitude, 0, 1.0
        logger.warning(f"Using fallback amplitude {eps} at lambda={hp.lam:.6g}")
    else:
        s, alpha = hp.s, hp.alpha
        shape = 2 * alpha * np.real(np.outer(phase, hp.psi))
        a = xi * float(np.sum(shape ** 2))
        b = (1 - xi) * (1 - w_T)
        if b > 0:
            eps = math.sqrt((-a + math.sqrt(a * a + 4 * b * ds * ds)) / (2 * b))
        else:
            eps = ds / math.sqrt(a)

    base_slices = np.tile(hp.u0, (m, 1))
    slices = base_slices + eps * shape
    shape_dot = 2 * alpha * np.real(np.outer(-2j * np.pi * phase, hp.psi))
    lam = hp.lam + s * eps ** 2

    base = PeriodicOrbit(slices=base_slices, tmesh=tmesh, T=T0, lam=hp.lam, xi=xi, w_T=w_T,
                         udot_ref=eps * shape_dot)
    orbit = PeriodicOrbit(slices=slices, tmesh=tmesh, T=T0, lam=lam, xi=xi, w_T=w_T,
                          udot_ref=eps * shape_dot)
    step = orbit.vector() - base.vector()
    length = xi_norm(step, m * n_u, xi, w_T)
    tau = step / length if length > 0 else step
    base = base.model_copy(update=dict(tangent=tau))
    orbit = orbit.model_copy(update=dict(tangent=tau))
    logger.info(f"Predictor: eps={eps:.4g}, T={T0:.6g}, lambda={lam:.8g}")
    return Predictor(base=base, orbit=orbit, eps=eps, s=s, alpha=alpha)


