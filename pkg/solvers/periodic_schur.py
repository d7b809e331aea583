# solvers/periodic_schur.py - Periodic QZ for the formal product B_m^{-1} A_m ... B_1^{-1} A_1

import math
import logging
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from errors import ConfigurationError, PeriodicSchurConvergenceError
from models import PeriodicSchurForm

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
EXCEPTIONAL_EVERY = 10
SWEEPS_PER_ROW = 30


# ─── Plane Rotations ────────────────────────────────────────────────────────

def _givens(a: complex, b: complex) -> np.ndarray:
    """Unitary G = [[c, s], [-conj(s), c]] with G @ [a, b] = [r, 0]"""
    if b == 0:
        return np.eye(2, dtype=complex)
    if a == 0:
        s = np.conj(b) / abs(b)
        return np.array([[0.0, s], [-np.conj(s), 0.0]], dtype=complex)
    r = math.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return np.array([[c, s], [-np.conj(s), c]], dtype=complex)


class _Cycle:
    """Working copies of the cyclic pencil with accumulated unitary factors"""

    def __init__(self, A: Sequence[np.ndarray], B: Sequence[np.ndarray]):
        self.m = len(A)
        self.n = A[0].shape[0]
        self.A = [np.array(a, dtype=complex) for a in A]
        self.B = [np.array(b, dtype=complex) for b in B]
        self.Q = [np.eye(self.n, dtype=complex) for _ in range(self.m)]
        self.Z = [np.eye(self.n, dtype=complex) for _ in range(self.m)]

    # Q_i acts on the rows of A_i and B_i; Z_i on the columns of B_i and A_{i+1}, cyclically

    def rows(self, i: int, r: int, G: np.ndarray):
        idx = [r - 1, r]
        self.A[i][idx] = G @ self.A[i][idx]
        self.B[i][idx] = G @ self.B[i][idx]
        self.Q[i][:, idx] = self.Q[i][:, idx] @ G.conj().T

    def cols(self, i: int, r: int, W: np.ndarray):
        idx = [r - 1, r]
        nxt = (i + 1) % self.m
        self.B[i][:, idx] = self.B[i][:, idx] @ W
        self.A[nxt][:, idx] = self.A[nxt][:, idx] @ W
        self.Z[i][:, idx] = self.Z[i][:, idx] @ W

    def zero_by_rows(self, i: int, X: np.ndarray, r: int, col: int):
        self.rows(i, r, _givens(X[r - 1, col], X[r, col]))

    def zero_by_cols(self, i: int, X: np.ndarray, r: int):
        """Column rotation on (r-1, r) that zeros X[r, r-1] against X[r, r]"""
        G = _givens(X[r, r], X[r, r - 1])
        c, s = G[0, 0], G[0, 1]
        W = np.array([[c, s], [-np.conj(s), c]], dtype=complex)
        self.cols(i, r, W)
        X[r, r - 1] = 0.0

    def chase_forward(self, r: int):
        """After a row rotation (r-1, r) on A_1, restore triangularity of the other factors"""
        for i in range(self.m):
            self.zero_by_cols(i, self.B[i], r)
            if i + 1 < self.m:
                self.zero_by_rows(i + 1, self.A[i + 1], r, r - 1)
                self.A[i + 1][r, r - 1] = 0.0


# ─── Hessenberg-Triangular Reduction ───────────────────────────────────────

def _reduce(cyc: _Cycle):
    m, n = cyc.m, cyc.n
    for i in range(m - 1, 0, -1):
        U, R = sla.qr(cyc.B[i])
        cyc.B[i] = np.triu(R)
        cyc.A[i] = U.conj().T @ cyc.A[i]
        cyc.Q[i] = cyc.Q[i] @ U
        R2, Y = sla.rq(cyc.A[i])
        W = Y.conj().T
        cyc.A[i] = np.triu(R2)
        cyc.B[i - 1] = cyc.B[i - 1] @ W
        cyc.Z[i - 1] = cyc.Z[i - 1] @ W
    U, R = sla.qr(cyc.B[0])
    cyc.B[0] = np.triu(R)
    cyc.A[0] = U.conj().T @ cyc.A[0]
    cyc.Q[0] = cyc.Q[0] @ U

    for k in range(n - 2):
        for r in range(n - 1, k + 1, -1):
            if cyc.A[0][r, k] == 0:
                continue
            cyc.zero_by_rows(0, cyc.A[0], r, k)
            cyc.A[0][r, k] = 0.0
            cyc.chase_forward(r)


# ─── Shifts ─────────────────────────────────────────────────────────────────

def _scaled_product(cyc: _Cycle, sl: slice, first: np.ndarray) -> Tuple[np.ndarray, float]:
    """Apply B_m^{-1} A_m ... B_1^{-1} to `first` (already multiplied by A_1) on a window, tracking log scale"""
    X = first.astype(complex)
    log_scale = 0.0
    for i in range(cyc.m):
        if i > 0:
            X = cyc.A[i][sl, sl] @ X
        X = sla.solve_triangular(cyc.B[i][sl, sl], X)
        size = float(np.max(np.abs(X)))
        if size == 0 or not np.isfinite(size):
            return X, log_scale
        X = X / size
        log_scale += math.log(size)
    return X, log_scale


def _shift_vector(cyc: _Cycle, lo: int, hi: int, exceptional: bool) -> np.ndarray:
    """Direction of (Pi - sigma I) e_lo restricted to rows lo, lo+1"""
    head = slice(lo, lo + 2)
    tail = slice(hi - 1, hi + 1)
    try:
        v, lv = _scaled_product(cyc, head, cyc.A[0][head, lo])
        P, lp = _scaled_product(cyc, tail, cyc.A[0][tail, tail])
    except (np.linalg.LinAlgError, ValueError):
        return cyc.A[0][head, lo]
    if exceptional:
        sigma = P[1, 1] * (1 + 0.1j) + abs(P[1, 0])
    else:
        tr, det = P[0, 0] + P[1, 1], P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
        disc = np.sqrt(tr * tr - 4 * det + 0j)
        roots = np.array([(tr + disc) / 2, (tr - disc) / 2])
        sigma = roots[int(np.argmin(np.abs(roots - P[1, 1])))]
    d = lv - lp
    if d > 700:
        return v
    if d < -700:
        return np.array([-sigma, 0.0], dtype=complex)
    x = math.exp(d) * v
    x[0] -= sigma
    return x


def _qz_sweep(cyc: _Cycle, lo: int, hi: int, exceptional: bool):
    x = _shift_vector(cyc, lo, hi, exceptional)
    G = _givens(x[0], x[1])
    W = G.conj().T
    m = cyc.m
    cyc.cols(m - 1, lo + 1, W)
    for i in range(m - 1, -1, -1):
        cyc.zero_by_rows(i, cyc.B[i], lo + 1, lo)
        cyc.B[i][lo + 1, lo] = 0.0
        if i > 0:
            cyc.zero_by_cols(i - 1, cyc.A[i], lo + 1)
    for k in range(lo, hi - 1):
        cyc.zero_by_rows(0, cyc.A[0], k + 2, k)
        cyc.A[0][k + 2, k] = 0.0
        cyc.chase_forward(k + 2)


def _negligible(A1: np.ndarray, l: int, norm: float) -> bool:
    local = abs(A1[l - 1, l - 1]) + abs(A1[l, l])
    if local == 0:
        local = norm
    return abs(A1[l, l - 1]) <= EPS * local


# ─── Public Interface ───────────────────────────────────────────────────────

def periodic_schur(A: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> PeriodicSchurForm:
    """
    Unitary Q_i, Z_i with Q_i^H A_i Z_{i-1} and Q_i^H B_i Z_i upper triangular (Z_0 = Z_m).

    The eigenvalues of the product are the products of the diagonal ratios. Raises
    PeriodicSchurConvergenceError after more than 30 n sweeps.
    """
    if len(A) != len(B) or not A:
        raise ConfigurationError("Periodic Schur needs equally many A and B factors")
    n = np.asarray(A[0]).shape[0]
    for a, b in zip(A, B):
        if np.asarray(a).shape != (n, n) or np.asarray(b).shape != (n, n):
            raise ConfigurationError("All periodic Schur factors must be square of equal size")

    cyc = _Cycle(A, B)
    _reduce(cyc)
    norm = float(np.linalg.norm(cyc.A[0]))
    max_sweeps = SWEEPS_PER_ROW * n
    sweeps = 0
    stalled = 0
    hi = n - 1
    while hi > 0:
        l = hi
        while l > 0 and not _negligible(cyc.A[0], l, norm):
            l -= 1
        if l > 0:
            cyc.A[0][l, l - 1] = 0.0
        if l == hi:
            hi -= 1
            stalled = 0
            continue
        if sweeps >= max_sweeps:
            raise PeriodicSchurConvergenceError(f"Periodic QZ did not converge in {max_sweeps} sweeps (n={n}, m={cyc.m})")
        stalled += 1
        _qz_sweep(cyc, l, hi, exceptional=stalled % EXCEPTIONAL_EVERY == 0)
        sweeps += 1

    cyc.A[0] = np.triu(cyc.A[0])
    logger.debug(f"Periodic QZ converged in {sweeps} sweeps (n={n}, m={cyc.m})")
    return PeriodicSchurForm(Q=cyc.Q, Z=cyc.Z, A=cyc.A, B=[np.triu(b) for b in cyc.B], sweeps=sweeps)


def product_eigenvalues(form: PeriodicSchurForm) -> Tuple[np.ndarray, np.ndarray, bool]:
    """
    Eigenvalues of the product from the diagonals as (log moduli, phases, overflow).

    Zero diagonal entries in A give log modulus -inf; zero entries in B give +inf and set overflow.
    """
    n = form.A[0].shape[0]
    log_mod = np.zeros(n)
    phase = np.zeros(n)
    overflow = False
    with np.errstate(divide="ignore"):
        for a, b in zip(form.A, form.B):
            da, db = np.diag(a), np.diag(b)
            log_mod += np.log(np.abs(da)) - np.log(np.abs(db))
            phase += np.angle(da) - np.angle(db)
    if np.any(np.isnan(log_mod)) or np.any(log_mod == np.inf):
        overflow = True
    return log_mod, phase, overflow


def reconstruction_error(form: PeriodicSchurForm, A: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> float:
    """Largest relative error of A_i = Q_i A~_i Z_{i-1}^H and B_i = Q_i B~_i Z_i^H"""
    worst = 0.0
    m = len(A)
    for i in range(m):
        ea = np.linalg.norm(form.Q[i] @ form.A[i] @ form.Z[i - 1].conj().T - A[i]) / max(np.linalg.norm(A[i]), 1e-300)
        eb = np.linalg.norm(form.Q[i] @ form.B[i] @ form.Z[i].conj().T - B[i]) / max(np.linalg.norm(B[i]), 1e-300)
        worst = max(worst, ea, eb)
    return float(worst)
