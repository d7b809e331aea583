# problems/brusselator.py - Extended three-component Brusselator and its dispersion relation

from typing import Dict, Tuple

import numpy as np

from problems.base import PdeProblem

# Critical wave number of the first Turing-Hopf instability at a = 0.95
K_TURING_HOPF = 0.7


class BrusselatorModel(PdeProblem):
    """
    u_t = Du Lap u + a - (1+b)u + u^2 v - c u + d w
    v_t = Dv Lap v + b u - u^2 v
    w_t = Dw Lap w + c u - d w
    """

    name = "bruss"
    n_comp = 3
    default_params = {"a": 0.95, "b": 2.75, "c": 1.0, "d": 1.0, "Du": 0.01, "Dv": 0.1, "Dw": 1.0}
    default_active = "b"

    def diffusion(self) -> np.ndarray:
        return np.array([self.params["Du"], self.params["Dv"], self.params["Dw"]])

    def homogeneous_state(self) -> np.ndarray:
        p = self.params
        return np.array([p["a"], p["b"] / p["a"], p["a"] * p["c"] / p["d"]])

    def steady_state(self, b: float) -> np.ndarray:
        p = self.params
        return np.repeat([p["a"], b / p["a"], p["a"] * p["c"] / p["d"]], self.grid.n_p)

    def reaction(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        u, v, w = U
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        return np.array([
            a - (1 + b) * u + u ** 2 * v - c * u + d * w,
            b * u - u ** 2 * v,
            c * u - d * w,
        ])

    def reaction_jacobian(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        u, v, _ = U
        b, c, d = p["b"], p["c"], p["d"]
        J = np.zeros((3, 3) + u.shape)
        J[0, 0] = -(1 + b) + 2 * u * v - c
        J[0, 1] = u ** 2
        J[0, 2] = d
        J[1, 0] = b - 2 * u * v
        J[1, 1] = -u ** 2
        J[2, 0] = c
        J[2, 2] = -d
        return J


def bruss_dispersion(a: float, b: float, k: float, c: float = 1.0, d: float = 1.0,
                     Du: float = 0.01, Dv: float = 0.1, Dw: float = 1.0) -> np.ndarray:
    """Eigenvalues of the linearization at U_s for wave number k; positive real part means unstable"""
    L = np.array([
        [b - 1 - c, a ** 2, d],
        [-b, -a ** 2, 0.0],
        [c, 0.0, -d],
    ]) - np.diag([Du, Dv, Dw]) * k ** 2
    ev = np.linalg.eigvals(L)
    return ev[np.argsort(-ev.real)]


def first_instability(a: float, k_values: np.ndarray, b_range: Tuple[float, float] = (2.0, 4.0),
                      tol: float = 1e-6, **kw) -> Tuple[float, float, float]:
    """Smallest b in b_range at which some k in k_values turns unstable; returns (b, k, omega)"""

    def growth(b: float) -> Tuple[float, float, float]:
        best = (-np.inf, 0.0, 0.0)
        for k in k_values:
            ev = bruss_dispersion(a, b, k, **kw)[0]
            if ev.real > best[0]:
                best = (ev.real, float(k), abs(ev.imag))
        return best

    lo, hi = b_range
    if growth(lo)[0] >= 0 or growth(hi)[0] < 0:
        raise ValueError(f"no sign change of the growth rate on b in {b_range}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if growth(mid)[0] >= 0:
            hi = mid
        else:
            lo = mid
    _, k, omega = growth(hi)
    return hi, k, omega


def admissible_wavenumbers(bounds, n_max: int = 40) -> np.ndarray:
    """Neumann wave numbers |k| resolvable on an interval or a box"""
    lengths = [hi - lo for lo, hi in bounds]
    ks = [np.pi * np.arange(n_max) / L for L in lengths]
    if len(ks) == 1:
        return ks[0]
    kx, ky = np.meshgrid(*ks)
    return np.unique(np.round(np.sqrt(kx ** 2 + ky ** 2).ravel(), 12))
