# problems/ocpollution.py - Canonical system of the distributed optimal pollution control problem

import math
from typing import Dict, Optional, Tuple

import numpy as np

from models import PeriodicOrbit
from problems.base import PdeProblem


class OcPollutionModel(PdeProblem):
    """
    States (v1, v2) = (emissions, pollution stock) and co-states (l1, l2):

        v1_t =  d1 Lap v1 - k
        v2_t =  d2 Lap v2 + v1 - v2 (1 - v2)
        l1_t = -d1 Lap l1 + rho l1 - p - l2
        l2_t = -d2 Lap l2 + (rho + 1 - 2 v2) l2 + beta

    with the optimal control k = -(1 + l1)/gamma. The co-states diffuse backwards,
    so the system is ill-posed as an initial value problem.
    """

    name = "ocpol"
    n_comp = 4
    default_params = {"p": 1.0, "beta": 0.2, "gamma": 300.0, "rho": 0.5, "d1": 0.001, "d2": 0.2}
    default_active = "rho"

    def diffusion(self) -> np.ndarray:
        d1, d2 = self.params["d1"], self.params["d2"]
        return np.array([d1, d2, -d1, -d2])

    def homogeneous_state(self) -> np.ndarray:
        return oc_css(self.params)

    def reaction(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        v1, v2, l1, l2 = U
        k = -(1 + l1) / p["gamma"]
        return np.array([
            -k,
            v1 - v2 * (1 - v2),
            p["rho"] * l1 - p["p"] - l2,
            (p["rho"] + 1 - 2 * v2) * l2 + p["beta"],
        ])

    def reaction_jacobian(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        v1, v2, l1, l2 = U
        J = np.zeros((4, 4) + v1.shape)
        J[0, 2] = 1 / p["gamma"]
        J[1, 0] = 1.0
        J[1, 1] = -1 + 2 * v2
        J[2, 2] = p["rho"]
        J[2, 3] = -1.0
        J[3, 1] = -2 * l2
        J[3, 3] = p["rho"] + 1 - 2 * v2
        return J

    def current_value(self, U: np.ndarray, p: Optional[Dict[str, float]] = None) -> np.ndarray:
        """Local current value J_c = p v1 - beta v2 - C(k) per node"""
        p = p or self.params
        v1, v2, l1, _ = U
        k = -(1 + l1) / p["gamma"]
        return p["p"] * v1 - p["beta"] * v2 - (k + k ** 2 / (2 * p["gamma"]))

    def averaged_value(self, u: np.ndarray, lam: Optional[float] = None) -> float:
        """Spatial average J_{c,a} of the current value, by mass-matrix quadrature"""
        U = u.reshape(self.n_comp, self.grid.n_p)
        w = np.asarray(self.disc.M.sum(axis=0)).ravel()
        p = self.params if lam is None else self.param_values(lam)
        return float(w @ self.current_value(U, p) / self.grid.area)


# ─── Closed Forms ───────────────────────────────────────────────────────────

def oc_zstar(params: Dict[str, float]) -> float:
    p, beta, rho = params["p"], params["beta"], params["rho"]
    return 0.5 * (1 + rho - beta / (p + rho))


def oc_css(params: Dict[str, float]) -> np.ndarray:
    """Spatially homogeneous canonical steady state (z(1-z), z, -1, -(p+rho))"""
    z = oc_zstar(params)
    return np.array([z * (1 - z), z, -1.0, -(params["p"] + params["rho"])])


def oc_css_and_value(model: OcPollutionModel) -> Tuple[np.ndarray, float]:
    """Replicated CSS and its value J(u*) = J_{c,a}(u*)/rho"""
    u = model.initial_state()
    return u, model.averaged_value(u) / model.params["rho"]


def oc_hopf_condition(params: Dict[str, float], l: int) -> float:
    """K(l) = -(a' + d2 l^2)(rho + a' + d2 l^2) - d1 l^2 (rho + d1 l^2) with a' = 1 - 2 z*"""
    rho, d1, d2 = params["rho"], params["d1"], params["d2"]
    ap = 1 - 2 * oc_zstar(params)
    return -(ap + d2 * l ** 2) * (rho + ap + d2 * l ** 2) - d1 * l ** 2 * (rho + d1 * l ** 2)


def oc_orbit_value(model: OcPollutionModel, orbit: PeriodicOrbit, phi: float) -> float:
    """
    J(u_H; phi) = (1 - e^{-rho T})^{-1} int_0^T e^{-rho t} J_{c,a}(u_H(t + phi)) dt.

    J_{c,a} along the orbit is interpolated linearly in time with periodic wrap and the
    integral is taken by the trapezoidal rule on the orbit mesh shifted by phi.
    """
    rho, T = model.param_values(orbit.lam)["rho"], orbit.T
    jca = np.array([model.averaged_value(u, orbit.lam) for u in orbit.slices[:-1]])
    t_nodes = orbit.tmesh[:-1] * T
    n_fine = max(50 * orbit.m, 2000)
    t = np.linspace(0.0, T, n_fine + 1)
    values = np.interp((t + phi) % T, t_nodes, jca, period=T)
    integrand = np.exp(-rho * t) * values
    integral = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(t)))
    return integral / (1 - math.exp(-rho * T))
