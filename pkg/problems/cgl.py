# problems/cgl.py - Cubic-quintic complex Ginzburg-Landau equation in real two-component form

import math
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, Field

from errors import ConfigurationError
from problems.base import PdeProblem


class CglModel(PdeProblem):
    """
    A_t = Laplace(A) + (r + i nu) A - (c3 + i mu)|A|^2 A - c5 |A|^4 A with u = (Re A, Im A).

    At u = 0 the eigenvalues of the pencil (G_u, M) are k^2 - r -+ i nu, so the
    mode of wave number k turns unstable when r crosses k^2.
    """

    name = "cgl"
    n_comp = 2
    default_params = {"r": -0.2, "nu": 1.0, "c3": -1.0, "mu": 0.1, "c5": 1.0}
    default_active = "r"

    def diffusion(self) -> np.ndarray:
        return np.ones(2)

    def reaction(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        u1, u2 = U
        s = u1 ** 2 + u2 ** 2
        f1 = p["r"] * u1 - p["nu"] * u2 - s * (p["c3"] * u1 - p["mu"] * u2) - p["c5"] * s ** 2 * u1
        f2 = p["nu"] * u1 + p["r"] * u2 - s * (p["mu"] * u1 + p["c3"] * u2) - p["c5"] * s ** 2 * u2
        return np.array([f1, f2])

    def reaction_jacobian(self, U: np.ndarray, p: Dict[str, float]) -> np.ndarray:
        u1, u2 = U
        r, nu, c3, mu, c5 = p["r"], p["nu"], p["c3"], p["mu"], p["c5"]
        s = u1 ** 2 + u2 ** 2
        a = c3 * u1 - mu * u2
        b = mu * u1 + c3 * u2
        J = np.empty((2, 2) + u1.shape)
        J[0, 0] = r - 2 * u1 * a - c3 * s - c5 * (4 * s * u1 ** 2 + s ** 2)
        J[0, 1] = -nu - 2 * u2 * a + mu * s - 4 * c5 * s * u1 * u2
        J[1, 0] = nu - 2 * u1 * b - mu * s - 4 * c5 * s * u1 * u2
        J[1, 1] = r - 2 * u2 * b - c3 * s - c5 * (4 * s * u2 ** 2 + s ** 2)
        return J


# ─── Analytic Oracle ────────────────────────────────────────────────────────

class CglBranchValues(BaseModel):
    """Closed-form data of the plane-wave branches A = a e^{i(kx + omega t)}"""
    amp2: float = Field(..., description="Squared amplitude |a|^2")
    omega: float = Field(..., description="Temporal frequency")
    T: float = Field(..., description="Period, infinite when omega = 0")
    gamma2: Optional[float] = Field(None, description="Nontrivial k=0 multiplier exp(h T)")


class CglOracle(BaseModel):
    """Both roots of the amplitude equation and the fold location"""
    k: float
    r: float
    fold_r: float = Field(..., description="Parameter value of the fold")
    roots: list = Field(default_factory=list, description="CglBranchValues for the upper and lower root")


def cgl_oracle(k: float, r: float, c3: float = -1.0, c5: float = 1.0,
               nu: float = 1.0, mu: float = 0.1) -> CglOracle:
    """
    |a|^2 = -c3/(2 c5) +- sqrt(c3^2/(4 c5^2) + r - k^2), omega = nu - mu |a|^2.

    For k = 0 the second multiplier is exp(h T) with h = r - 3 c3 a^2 - 5 c5 a^4.
    Raises ConfigurationError below the fold.
    """
    fold_r = k ** 2 - c3 ** 2 / (4 * c5 ** 2)
    radicand = c3 ** 2 / (4 * c5 ** 2) + r - k ** 2
    if radicand < 0:
        raise ConfigurationError(f"No plane-wave branch with k={k} at r={r} (fold at r={fold_r})")
    roots = []
    for sign in (1.0, -1.0):
        amp2 = -c3 / (2 * c5) + sign * math.sqrt(radicand)
        if amp2 < 0:
            continue
        omega = nu - mu * amp2
        T = 2 * math.pi / abs(omega) if omega != 0 else math.inf
        gamma2 = None
        if k == 0 and math.isfinite(T):
            h = r - 3 * c3 * amp2 - 5 * c5 * amp2 ** 2
            gamma2 = math.exp(h * T)
        roots.append(CglBranchValues(amp2=amp2, omega=omega, T=T, gamma2=gamma2))
    return CglOracle(k=k, r=r, fold_r=fold_r, roots=roots)


def cgl_k0_monodromy(amp2: float, r: float, T: float, c3: float = -1.0, c5: float = 1.0) -> np.ndarray:
    """Monodromy matrix of the k = 0 orbit in (amplitude, phase) coordinates"""
    h = r - 3 * c3 * amp2 - 5 * c5 * amp2 ** 2
    a = math.sqrt(amp2)
    return np.array([[math.exp(h * T), 0.0], [a / h * (math.exp(h * T) - 1), 1.0]])


def cgl_hopf_values(bounds, bc: str = "neumann") -> list:
    """Exact Hopf parameters |k|^2 of the resolvable modes on an interval or a box"""
    lengths = [hi - lo for lo, hi in bounds]
    base = [(math.pi / L) for L in lengths]
    values = set()
    start = 0 if bc == "neumann" else 1
    for i in range(start, 8):
        if len(base) == 1:
            values.add(round((i * base[0]) ** 2, 12))
            continue
        for j in range(start, 8):
            values.add(round((i * base[0]) ** 2 + (j * base[1]) ** 2, 12))
    return sorted(values)
