# models.py - Pydantic models for the continuation toolkit

import math
from typing import List, Optional, Dict, Tuple, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

FACES_1D = ("left", "right")
FACES_2D = ("left", "right", "bottom", "top")

# ─── Spatial Models ─────────────────────────────────────────────────────────

class Grid(BaseModel):
    """Tensor grid on an interval or a rectangle, nodes ordered with x fastest"""
    model_config = ConfigDict(frozen=True)

    dim: int = Field(..., ge=1, le=2, description="Spatial dimension")
    counts: Tuple[int, ...] = Field(..., description="Point count per axis")
    bounds: Tuple[Tuple[float, float], ...] = Field(..., description="Interval bounds per axis")

    @model_validator(mode="after")
    def _check_axes(self):
        if len(self.counts) != self.dim or len(self.bounds) != self.dim:
            raise ValueError(f"expected {self.dim} axes, got counts={self.counts} bounds={self.bounds}")
        for n in self.counts:
            if n < 3:
                raise ValueError(f"point count {n} < 3")
        for lo, hi in self.bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds ({lo}, {hi}) not strictly ordered")
        return self

    @property
    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, n) for n, (lo, hi) in zip(self.counts, self.bounds)]

    @property
    def spacing(self) -> List[float]:
        return [(hi - lo) / (n - 1) for n, (lo, hi) in zip(self.counts, self.bounds)]

    @property
    def n_p(self) -> int:
        return int(np.prod(self.counts))

    @property
    def area(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @property
    def faces(self) -> Tuple[str, ...]:
        return FACES_1D if self.dim == 1 else FACES_2D

    @property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (n_p, dim)"""
        if self.dim == 1:
            return self.axes[0][:, None]
        xx, yy = np.meshgrid(*self.axes)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def boundary_nodes(self, face: str) -> np.ndarray:
        if face not in self.faces:
            raise ValueError(f"unknown face '{face}' for a {self.dim}D grid")
        if self.dim == 1:
            return np.array([0 if face == "left" else self.counts[0] - 1])
        nx, ny = self.counts
        idx = np.arange(nx * ny).reshape(ny, nx)
        return {"left": idx[:, 0], "right": idx[:, -1], "bottom": idx[0, :], "top": idx[-1, :]}[face]


class FaceBc(BaseModel):
    """Boundary condition n·(c∇u) + q u = g on one face, or a stiff spring towards a target"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["neumann", "robin", "spring"] = Field("neumann", description="Boundary condition type")
    q: float = Field(0.0, description="Robin coefficient")
    g: float = Field(0.0, description="Robin boundary flux")
    target: float = Field(0.0, description="Dirichlet target for the spring approximation")
    s: float = Field(1e3, gt=0, description="Spring constant per unit boundary measure")

    @field_validator("q", "g", "target")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("boundary coefficients must be finite")
        return v


class BcSpec(BaseModel):
    """Per-component, per-face boundary conditions; missing faces are homogeneous Neumann"""
    model_config = ConfigDict(frozen=True)

    components: Tuple[Dict[str, FaceBc], ...] = Field(..., description="One face map per component")

    def face(self, component: int, face: str) -> FaceBc:
        if component >= len(self.components):
            return FaceBc()
        return self.components[component].get(face, FaceBc())

    @classmethod
    def neumann(cls, n_comp: int) -> "BcSpec":
        return cls(components=tuple({} for _ in range(n_comp)))

    @classmethod
    def spring(cls, n_comp: int, faces: Tuple[str, ...], s: float = 1e3, target: float = 0.0) -> "BcSpec":
        bc = FaceBc(kind="spring", s=s, target=target)
        return cls(components=tuple({f: bc for f in faces} for _ in range(n_comp)))

# ─── Stationary Continuation Models ─────────────────────────────────────────

class StationaryPoint(BaseModel):
    """A converged point on a stationary branch"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: np.ndarray = Field(..., description="State vector, component-major")
    lam: float = Field(..., description="Active parameter value")
    tangent: Optional[np.ndarray] = Field(None, description="Tangent (tau_u, tau_lambda), xi-normalized")
    counts: List[int] = Field(default_factory=list, description="Weighted count of negative-real-part eigenvalues per shift")
    crit: List[complex] = Field(default_factory=list, description="Eigenvalue closest to the imaginary axis per shift")
    det_sign: int = Field(0, description="Sign of the extended Jacobian determinant")
    step: int = Field(0, description="Continuation step index")
    arclength: float = Field(0.0, description="Accumulated arclength")
    residual: float = Field(0.0, description="Infinity norm of G at the point")

    @property
    def stable(self) -> bool:
        return bool(self.counts) and all(c == 0 for c in self.counts)


class DetectorSettings(BaseModel):
    """Shifts, eigenvalue counts and thresholds for bifurcation detection"""
    shifts: List[float] = Field(default_factory=lambda: [0.0], description="Spectral shifts omega_j >= 0")
    n_eig: List[int] = Field(default_factory=lambda: [6], description="Eigenvalues computed per shift")
    mu1: float = Field(0.01, gt=0, description="Candidate gate on |Re mu|")
    mu2: float = Field(1e-4, gt=0, description="Acceptance gate on |Re mu| after bisection")
    refresh: int = Field(20, ge=0, description="Steps between shift re-estimation (0 disables)")
    auto: bool = Field(False, description="Estimate shifts by the resonance scan")
    omega_max: float = Field(5.0, gt=0, description="Upper end of the resonance scan")
    n_samples: int = Field(200, ge=8, description="Resonance scan samples")
    max_bisect: int = Field(10, ge=1, description="Bisection halvings before a candidate is dropped")

    @model_validator(mode="after")
    def _check(self):
        if self.mu2 >= self.mu1:
            raise ValueError(f"mu2={self.mu2} must be smaller than mu1={self.mu1}")
        if any(w < 0 for w in self.shifts) or len(set(self.shifts)) != len(self.shifts):
            raise ValueError(f"shifts must be non-negative and distinct: {self.shifts}")
        if len(self.n_eig) == 1 and len(self.shifts) > 1:
            self.n_eig = self.n_eig * len(self.shifts)
        if self.auto:
            # the resonance scan replaces the shifts before the first count
            if len(self.n_eig) < len(self.shifts):
                raise ValueError("n_eig needs at least one entry per shift")
        elif len(self.n_eig) != len(self.shifts):
            raise ValueError("n_eig needs one entry per shift")
        if any(n < 1 for n in self.n_eig):
            raise ValueError("n_eig entries must be positive")
        return self


class SteadySettings(BaseModel):
    """Step control for stationary arclength continuation"""
    ds: float = Field(0.05, gt=0, description="Initial step length")
    ds_min: float = Field(1e-6, gt=0, description="Smallest step before giving up")
    ds_max: float = Field(0.2, gt=0, description="Largest step")
    xi: Optional[float] = Field(None, gt=0, lt=1, description="Weight of u in the arclength norm (default 1/n_u)")
    tol: float = Field(1e-8, gt=0, description="Newton tolerance, infinity norm")
    max_iter: int = Field(10, ge=1, description="Newton iteration cap")
    grow: float = Field(1.3, ge=1, description="Step growth factor after fast steps")

    @model_validator(mode="after")
    def _bounds(self):
        if not self.ds_min <= self.ds <= self.ds_max:
            raise ValueError(f"need ds_min <= ds <= ds_max, got {self.ds_min}, {self.ds}, {self.ds_max}")
        return self


class BifurcationEvent(BaseModel):
    """A localized branch point or Hopf point on a stationary branch"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["BP", "HBP"] = Field(..., description="Bifurcation type")
    lam: float = Field(..., description="Parameter value at the bifurcation")
    omega: float = Field(0.0, description="Imaginary part of the critical eigenvalue")
    mu: complex = Field(0j, description="Critical eigenvalue at acceptance")
    shift_index: int = Field(0, description="Index of the shift that flagged the crossing")
    point: StationaryPoint = Field(..., description="Stationary point at the bifurcation")


class SteadyBranch(BaseModel):
    """Result of a stationary continuation run"""
    points: List[StationaryPoint] = Field(default_factory=list, description="Accepted points in order")
    events: List[BifurcationEvent] = Field(default_factory=list, description="Localized bifurcations")
    shifts: List[float] = Field(default_factory=list, description="Detector shifts in use at the end of the run")
    messages: Dict[int, str] = Field(default_factory=dict, description="Per-step notes keyed by step index")

# ─── Hopf and Periodic Orbit Models ─────────────────────────────────────────

class HopfPoint(BaseModel):
    """Steady state at a Hopf bifurcation with its critical eigenpair and normal-form data"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u0: np.ndarray = Field(..., description="Steady state at lambda_H")
    lam: float = Field(..., description="Parameter value lambda_H")
    omega: float = Field(..., gt=0, description="Hopf frequency")
    psi: np.ndarray = Field(..., description="Complex eigenvector with <psi, M psi> = 1")
    mu_r_prime: Optional[float] = Field(None, description="Derivative of the growth rate of the critical mode")
    c1: Optional[float] = Field(None, description="Real cubic normal-form coefficient")
    s: Optional[int] = Field(None, description="Direction of bifurcation in lambda")
    alpha: Optional[float] = Field(None, description="Amplitude factor of the predictor")


class OrbitSettings(BaseModel):
    """Discretization and step control for periodic-orbit continuation"""
    m: int = Field(21, ge=5, description="Number of time slices including the periodic copy")
    ds: float = Field(0.1, gt=0, description="Initial step length in the xi-norm")
    ds_min: float = Field(1e-5, gt=0, description="Smallest step before giving up")
    ds_max: float = Field(0.5, gt=0, description="Largest step")
    xi: Optional[float] = Field(None, gt=0, lt=1, description="Weight of u in the xi-norm (default 10/(m n_u))")
    w_T: float = Field(0.5, ge=0, le=1, description="Weight of T against lambda")
    tol: float = Field(1e-8, gt=0, description="Newton tolerance, infinity norm")
    max_iter: int = Field(10, ge=1, description="Newton iteration cap")
    k_ref: int = Field(5, ge=0, description="Refinement passes of the bordered solver")
    ref_tol: float = Field(1e-10, gt=0, description="Relative residual target of the bordered solver")
    grow: float = Field(1.3, ge=1, description="Step growth factor after fast steps")
    parametrization: Literal["arclength", "natural"] = Field("arclength", description="Corrector type")
    amplitude: Optional[float] = Field(None, gt=0, description="Fallback predictor amplitude for degenerate Hopf points")

    @model_validator(mode="after")
    def _bounds(self):
        if not self.ds_min <= self.ds <= self.ds_max:
            raise ValueError(f"need ds_min <= ds <= ds_max, got {self.ds_min}, {self.ds}, {self.ds_max}")
        return self


class PeriodicOrbit(BaseModel):
    """Time slices of a periodic orbit on a mesh of [0, 1] with its period and parameter"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    slices: np.ndarray = Field(..., description="States u(t_j), shape (m, n_u), last slice equals the first")
    tmesh: np.ndarray = Field(..., description="Time mesh 0 = t_1 < ... < t_m = 1")
    T: float = Field(..., description="Period")
    lam: float = Field(..., description="Active parameter value")
    xi: float = Field(..., gt=0, lt=1, description="Weight of u in the xi-norm")
    w_T: float = Field(0.5, ge=0, le=1, description="Weight of T against lambda")
    tangent: Optional[np.ndarray] = Field(None, description="Tangent (tau_u, tau_T, tau_lambda)")
    udot_ref: Optional[np.ndarray] = Field(None, description="Reference time derivative for the phase condition")
    step: int = Field(0, description="Continuation step index")
    residual: float = Field(0.0, description="Infinity norm of the collocation residual")

    @field_validator("tmesh")
    @classmethod
    def _mesh(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or len(v) < 3 or np.any(np.diff(v) <= 0):
            raise ValueError("time mesh must be strictly increasing with at least 3 points")
        return v

    @property
    def m(self) -> int:
        return self.slices.shape[0]

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.tmesh)

    @property
    def n_u(self) -> int:
        return self.slices.shape[1]

    def vector(self) -> np.ndarray:
        return np.concatenate([self.slices.ravel(), [self.T, self.lam]])

    def with_vector(self, x: np.ndarray, **updates) -> "PeriodicOrbit":
        nm = self.m * self.n_u
        data = dict(slices=x[:nm].reshape(self.m, self.n_u).copy(), T=float(x[nm]), lam=float(x[nm + 1]))
        data.update(updates)
        return self.model_copy(update=data)

class Predictor(BaseModel):
    """Initial periodic-orbit guess at a Hopf point"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    base: PeriodicOrbit = Field(..., description="Steady state at the Hopf point as a constant orbit, with tangent")
    orbit: PeriodicOrbit = Field(..., description="Predicted orbit after a step of length ds")
    eps: float = Field(..., ge=0, description="Amplitude parameter")
    s: int = Field(..., description="Direction of bifurcation in lambda")
    alpha: float = Field(..., description="Amplitude factor")


# ─── Floquet Models ─────────────────────────────────────────────────────────

class FloquetSpectrum(BaseModel):
    """Floquet multipliers of a periodic orbit with accuracy and instability measures"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    multipliers: np.ndarray = Field(..., description="Multipliers sorted by modulus, descending")
    log_moduli: np.ndarray = Field(..., description="Natural log of the multiplier moduli")
    err_mu: float = Field(..., ge=0, description="Distance of the trivial multiplier from 1")
    ind: int = Field(..., ge=0, description="Number of nontrivial multipliers outside the unit circle")
    algorithm: Literal["FA1", "FA2"] = Field(..., description="Computation method")
    tol_fl: float = Field(1e-6, gt=0, description="Tolerance for counting unstable multipliers")
    gamma_cand: Optional[complex] = Field(None, description="Smallest multiplier of modulus greater than 1")
    overflow: bool = Field(False, description="A multiplier is infinite")
    warnings: List[str] = Field(default_factory=list, description="Accuracy and convergence warnings")


class PeriodicSchurForm(BaseModel):
    """Periodic Schur form Q_i^H A_i Z_{i-1} = A~_i, Q_i^H B_i Z_i = B~_i with unitary factors"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    Q: List[np.ndarray] = Field(..., description="Left unitary factors")
    Z: List[np.ndarray] = Field(..., description="Right unitary factors")
    A: List[np.ndarray] = Field(..., description="Transformed A_i, all upper triangular")
    B: List[np.ndarray] = Field(..., description="Transformed B_i, upper triangular")
    sweeps: int = Field(0, description="QZ sweeps used")


class OrbitBranch(BaseModel):
    """Result of a periodic-orbit continuation run"""
    orbits: List[PeriodicOrbit] = Field(default_factory=list, description="Accepted orbits in order")
    spectra: List[Optional[FloquetSpectrum]] = Field(default_factory=list, description="Floquet spectrum per orbit")
    norms: List[float] = Field(default_factory=list, description="Branch norm per orbit")
    step_lengths: List[float] = Field(default_factory=list, description="Step length ds used for each accepted orbit")
    messages: Dict[int, str] = Field(default_factory=dict, description="Per-step notes such as FOLD")

# ─── Run Configuration ──────────────────────────────────────────────────────

class RunConfig(BaseModel):
    """Validated settings for one command-line run"""
    model: str = Field(..., description="Registered model name")
    params: Dict[str, float] = Field(default_factory=dict, description="Model parameter overrides")
    active: Optional[str] = Field(None, description="Continuation parameter name")
    counts: Optional[List[int]] = Field(None, description="Grid point counts per axis")
    steps: int = Field(50, ge=0, description="Continuation steps")
    lam_min: float = Field(-math.inf, description="Stop when lambda leaves [lam_min, lam_max]")
    lam_max: float = Field(math.inf, description="Stop when lambda leaves [lam_min, lam_max]")
    ds: float = Field(0.05, gt=0, description="Initial step length")
    ds_min: float = Field(1e-6, gt=0, description="Smallest step length")
    ds_max: float = Field(0.2, gt=0, description="Largest step length")
    m: int = Field(21, ge=5, description="Time slices for orbits")
    xi: Optional[float] = Field(None, gt=0, lt=1, description="Arclength weight of u")
    w_T: float = Field(0.5, ge=0, le=1, description="Arclength weight of T")
    parametrization: Literal["arclength", "natural"] = Field("arclength", description="Orbit corrector")
    shifts: Optional[List[float]] = Field(None, description="Detector shifts, None means [0]")
    detector_auto: bool = Field(False, description="Estimate shifts with the resonance scan")
    n_eig: List[int] = Field(default_factory=lambda: [6], description="Eigenvalues per shift")
    mu1: float = Field(0.01, gt=0, description="Candidate gate")
    mu2: float = Field(1e-4, gt=0, description="Acceptance gate")
    omega_max: float = Field(5.0, gt=0, description="Resonance scan range")
    refresh: int = Field(20, ge=0, description="Steps between shift re-estimation with the automatic detector")
    max_bisect: int = Field(10, ge=1, description="Bisection halvings per candidate")
    floquet: Literal["fa1", "fa2", "off"] = Field("fa1", description="Floquet algorithm for orbit branches")
    n_plus: Optional[int] = Field(None, ge=1, description="Multipliers to compute with FA1")
    tol_fl: float = Field(1e-6, gt=0, description="Floquet tolerance")
    amplitude: Optional[float] = Field(None, gt=0, description="Fallback amplitude for degenerate Hopf points")
    seed: int = Field(0, description="Seed for random test vectors")
    output: str = Field("output", description="Output directory")

    @field_validator("model")
    @classmethod
    def _lower(cls, v: str) -> str:
        return v.strip().lower()

    @model_validator(mode="after")
    def _cross_check(self):
        if self.mu2 >= self.mu1:
            raise ValueError(f"mu2={self.mu2} must be smaller than mu1={self.mu1}")
        if not self.ds_min <= self.ds <= self.ds_max:
            raise ValueError(f"need ds_min <= ds <= ds_max, got {self.ds_min}, {self.ds}, {self.ds_max}")
        if self.lam_min >= self.lam_max:
            raise ValueError("lam_min must be smaller than lam_max")
        return self

    def detector(self) -> DetectorSettings:
        return DetectorSettings(
            shifts=self.shifts or [0.0], n_eig=self.n_eig, mu1=self.mu1, mu2=self.mu2,
            auto=self.detector_auto, omega_max=self.omega_max, refresh=self.refresh,
            max_bisect=self.max_bisect,
        )

    def steady_settings(self) -> SteadySettings:
        return SteadySettings(ds=self.ds, ds_min=self.ds_min, ds_max=self.ds_max, xi=self.xi)

    def orbit_settings(self) -> OrbitSettings:
        return OrbitSettings(
            m=self.m, ds=self.ds, ds_min=min(self.ds_min, self.ds), ds_max=max(self.ds_max, self.ds),
            xi=self.xi, w_T=self.w_T, parametrization=self.parametrization, amplitude=self.amplitude,
        )
