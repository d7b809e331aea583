# tests/test_po.py - Bordered solver, collocation residual and the cGL orbit branch

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from errors import ConfigurationError, ResidualStagnationError
from models import OrbitSettings, PeriodicOrbit, Predictor
from problems.cgl import cgl_oracle
from solvers.floquet import floquet_hook, floquet_spectrum
from solvers.hopfswitch import build_predictor
from solvers.po import (
    BorderedMatrix, arclength_condition, bordered_solve, branch_norm, check_po_jacobian, continue_orbits,
    natural_corrector, orbit_amplitude, po_residual, refine_tmesh, xi_inner, xi_norm
)


def _bordered_system(seed: int, n: int, k: int):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.2, random_state=rng) + n * sp.identity(n)
    B = 0.5 * rng.standard_normal((n, k))
    C = 0.5 * rng.standard_normal((k, n))
    D = 3.0 * np.eye(k) + 0.1 * rng.standard_normal((k, k))
    f = rng.standard_normal(n)
    g = rng.standard_normal(k)
    return BorderedMatrix(A, B, C, D), f, g


def _dense_reference(mat: BorderedMatrix, f, g):
    full = np.block([[mat.A.toarray(), mat.B], [mat.C, mat.D]])
    return np.linalg.solve(full, np.concatenate([f, g]))


def _orbit(slices, tmesh=None, T=2 * math.pi, lam=-0.2):
    m = slices.shape[0]
    tmesh = np.linspace(0.0, 1.0, m) if tmesh is None else tmesh
    return PeriodicOrbit(slices=slices, tmesh=tmesh, T=T, lam=lam, xi=0.01)


# ─── Bordered Solver ────────────────────────────────────────────────────────

@given(seed=st.integers(0, 2 ** 31), n=st.integers(5, 30), k=st.integers(1, 3))
def test_bordered_solve_matches_dense_solve(seed, n, k):
    mat, f, g = _bordered_system(seed, n, k)
    x = bordered_solve(mat, f, g)
    assert np.abs(x - _dense_reference(mat, f, g)).max() < 1e-8


def test_bordered_solve_without_coupling():
    mat, f, _ = _bordered_system(5, 12, 2)
    plain = BorderedMatrix(mat.A, np.zeros((12, 2)), np.zeros((2, 12)), np.eye(2))
    g = np.array([0.5, -2.0])
    x = bordered_solve(plain, f, g)
    assert np.allclose(x[:12], np.linalg.solve(mat.A.toarray(), f), atol=1e-12)
    assert np.allclose(x[12:], g)


def test_bordered_solve_zero_right_hand_side():
    mat, _, _ = _bordered_system(2, 8, 1)
    assert not bordered_solve(mat, np.zeros(8), np.zeros(1)).any()


def test_residual_stagnation_carries_last_solution():
    mat, f, g = _bordered_system(11, 20, 2)
    with pytest.raises(ResidualStagnationError) as info:
        bordered_solve(mat, f, g, k_ref=0, tol=1e-300)
    assert np.abs(info.value.solution - _dense_reference(mat, f, g)).max() < 1e-8
    assert info.value.residual >= 0


def test_inconsistent_border_sizes():
    with pytest.raises(ConfigurationError):
        BorderedMatrix(sp.identity(4), np.zeros((4, 2)), np.zeros((1, 4)), np.zeros((2, 2)))


# ─── Collocation ────────────────────────────────────────────────────────────

def test_residual_of_trivial_orbit_vanishes(cgl1d):
    orbit = _orbit(np.zeros((9, cgl1d.n_u)))
    assert not po_residual(cgl1d, orbit).any()


def test_collocation_jacobian_on_nonuniform_mesh(cgl1d_coarse):
    rng = np.random.default_rng(21)
    tmesh = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, 5)), [1.0]])
    slices = 0.3 * rng.standard_normal((7, cgl1d_coarse.n_u))
    orbit = _orbit(slices, tmesh=tmesh, T=5.0, lam=-0.1)
    assert check_po_jacobian(cgl1d_coarse, orbit, seed=4) < 1e-5


def test_natural_corrector_keeps_a_solution(cgl1d):
    orbit = _orbit(np.zeros((9, cgl1d.n_u)))
    out, iters = natural_corrector(cgl1d, orbit, udot0=np.zeros((9, cgl1d.n_u)))
    assert iters == 0
    assert out is orbit


def test_xi_norm_weights():
    a = np.array([1.0, 1.0, 2.0, 2.0])
    assert xi_inner(a, a, 2, 0.5, 0.5) == pytest.approx(3.0)
    assert xi_norm(a, 2, 0.5, 0.5) == pytest.approx(math.sqrt(3.0))


def test_branch_norm_and_amplitude(cgl1d):
    n_p = cgl1d.grid.n_p
    u = np.concatenate([np.full(n_p, 0.3), np.full(n_p, -0.4)])
    orbit = _orbit(np.tile(u, (7, 1)), tmesh=np.array([0.0, 0.1, 0.15, 0.4, 0.6, 0.9, 1.0]))
    assert branch_norm(cgl1d, orbit) == pytest.approx(0.5, rel=1e-12)
    assert orbit_amplitude(orbit) == 0.0
    small = _orbit(np.array([[0.0, 1.0], [3.0, -1.0], [0.0, 1.0]]))
    assert orbit_amplitude(small) == 3.0


# ─── cGL k = 0 Orbit Branch ─────────────────────────────────────────────────

def _lower_root(lam: float) -> float:
    return math.sqrt(min(r.amp2 for r in cgl_oracle(0.0, lam).roots))


def _discrete_period(m: int, amp2: float, nu: float = 1.0, mu: float = 0.1) -> float:
    return 2 * (m - 1) * math.tan(math.pi / (m - 1)) / (nu - mu * amp2)


@pytest.mark.slow
def test_k0_branch_matches_plane_wave_oracle(cgl_k0_branch):
    problem, settings, _, branch = cgl_k0_branch
    assert len(branch.orbits) == 6
    assert "FOLD" not in branch.messages.values()
    for orbit, norm in zip(branch.orbits, branch.norms):
        assert np.abs(po_residual(problem, orbit)).max() < 1e-8
        assert orbit.lam < 0
        assert norm == pytest.approx(_lower_root(orbit.lam), abs=1e-5)
        assert orbit.T == pytest.approx(_discrete_period(settings.m, norm ** 2), rel=1e-6)


@pytest.mark.slow
def test_k0_branch_moves_away_from_the_hopf_point(cgl_k0_branch):
    problem, _, _, branch = cgl_k0_branch
    lams = [o.lam for o in branch.orbits]
    assert np.all(np.diff(lams) < 0)
    assert np.all(np.diff(branch.norms) > 0)
    nm = branch.orbits[0].m * problem.n_u
    for a, b in zip(branch.orbits, branch.orbits[1:]):
        assert xi_inner(a.tangent, b.tangent, nm, a.xi, a.w_T) > 0


def _uniform_mode_monodromy(problem, orbit: PeriodicOrbit) -> np.ndarray:
    """Trapezoidal monodromy restricted to spatially constant perturbations of a constant-in-space orbit"""
    p = problem.param_values(orbit.lam)
    n_p = problem.grid.n_p
    J = [problem.reaction_jacobian(u.reshape(problem.n_comp, n_p).mean(axis=1, keepdims=True), p)[:, :, 0]
         for u in orbit.slices]
    eye = np.eye(problem.n_comp)
    P = eye
    for j in range(1, orbit.m):
        h = (orbit.tmesh[j] - orbit.tmesh[j - 1]) * orbit.T
        P = np.linalg.solve(eye - 0.5 * h * J[j], (eye + 0.5 * h * J[j - 1]) @ P)
    return P


@pytest.mark.slow
def test_k0_branch_is_unstable_with_one_multiplier(cgl_k0_branch):
    problem, _, _, branch = cgl_k0_branch
    orbit = branch.orbits[-1]
    spectrum = floquet_spectrum(problem, orbit, algorithm="fa1")
    assert spectrum.ind == 1
    assert spectrum.err_mu < 1e-10
    assert spectrum.gamma_cand is not None and spectrum.gamma_cand.real > 1

    discrete = np.linalg.eigvals(_uniform_mode_monodromy(problem, orbit))
    assert np.min(np.abs(discrete - 1.0)) < 1e-10
    assert abs(spectrum.multipliers[0]) == pytest.approx(np.max(np.abs(discrete)), rel=1e-7)

    # exp(eta T) solves the continuous problem; O(h^2) off
    a2 = branch.norms[-1] ** 2
    eta = orbit.lam + 3 * a2 - 5 * a2 ** 2
    assert abs(spectrum.multipliers[0]) == pytest.approx(math.exp(eta * orbit.T), rel=2e-2)


@pytest.mark.slow
def test_k0_multipliers_agree_between_algorithms(cgl_k0_branch):
    problem, _, _, branch = cgl_k0_branch
    orbit = branch.orbits[2]
    fa1 = floquet_spectrum(problem, orbit, algorithm="fa1")
    fa2 = floquet_spectrum(problem, orbit, algorithm="fa2")
    assert fa2.algorithm == "FA2"
    assert fa1.ind == fa2.ind == 1
    assert np.allclose(fa1.log_moduli[:4], fa2.log_moduli[:4], atol=1e-7)


@pytest.mark.slow
def test_refine_tmesh_keeps_the_orbit(cgl_k0_branch):
    problem, settings, _, branch = cgl_k0_branch
    orbit = branch.orbits[-1]
    refined = refine_tmesh(problem, orbit, 25, settings)
    assert refined.m == 25
    assert refined.tangent is not None and len(refined.tangent) == 25 * problem.n_u + 2
    assert np.abs(po_residual(problem, refined)).max() < 1e-7
    assert branch_norm(problem, refined) == pytest.approx(branch.norms[-1], abs=1e-5)
    with pytest.raises(ConfigurationError):
        refine_tmesh(problem, orbit, 15, settings)


@pytest.mark.slow
def test_natural_continuation_from_a_converged_orbit(cgl_k0_branch):
    problem, _, predictor, branch = cgl_k0_branch
    settings = OrbitSettings(m=21, ds=0.002, parametrization="natural")
    start = Predictor(base=predictor.base, orbit=branch.orbits[-1], eps=0.0, s=-1, alpha=1.0)
    natural = continue_orbits(problem, start, settings, steps=3)
    assert len(natural.orbits) == 3
    assert natural.orbits[0].lam == branch.orbits[-1].lam
    lams = [o.lam for o in natural.orbits]
    assert np.allclose(np.diff(lams), -0.002)
    for orbit, norm in zip(natural.orbits, natural.norms):
        assert norm == pytest.approx(_lower_root(orbit.lam), abs=1e-5)


@pytest.mark.slow
def test_refine_tmesh_returns_the_input_when_correction_fails(cgl_k0_branch):
    problem, _, _, branch = cgl_k0_branch
    orbit = branch.orbits[-1]
    strict = OrbitSettings(m=21, ds=0.05, ds_max=0.2, tol=1e-30, max_iter=1)
    kept = refine_tmesh(problem, orbit, 25, strict)
    assert kept is orbit
    assert kept.m == 21


@pytest.mark.slow
def test_every_arclength_step_has_length_ds(cgl_k0_branch):
    problem, settings, predictor, branch = cgl_k0_branch
    assert len(branch.step_lengths) == len(branch.orbits)
    nm = settings.m * problem.n_u
    prev = predictor.base
    for orbit, ds in zip(branch.orbits, branch.step_lengths):
        assert abs(arclength_condition(orbit, prev, prev.tangent, ds)) <= 10 * settings.tol
        step = xi_norm(orbit.vector() - prev.vector(), nm, orbit.xi, orbit.w_T)
        assert ds - 10 * settings.tol <= step <= 1.1 * ds
        prev = orbit


@pytest.mark.slow
def test_time_mesh_halving_converges_at_second_order(cgl_k0_branch):
    problem, settings, _, branch = cgl_k0_branch
    coarse = branch.orbits[-1]
    fine = refine_tmesh(problem, coarse, 2 * coarse.m - 1, settings)
    assert fine.m == 41
    assert np.allclose(np.diff(fine.tmesh), 1.0 / 40, atol=1e-14)

    a2 = branch.norms[-1] ** 2
    exact = 2 * math.pi / (1 - 0.1 * a2)
    ratio = abs(coarse.T - exact) / abs(fine.T - exact)
    assert 3.5 <= ratio <= 4.5


@pytest.fixture(scope="module")
def cgl_k0_through_fold(cgl_hopf):
    problem, hp = cgl_hopf
    settings = OrbitSettings(m=21, ds=0.1, ds_max=0.2)
    predictor = build_predictor(problem, hp, settings)
    branch = continue_orbits(problem, predictor, settings, steps=20, floquet=floquet_hook("fa1"))
    return problem, settings, predictor, branch


@pytest.mark.slow
def test_k0_branch_folds_at_quarter(cgl_k0_through_fold):
    _, settings, predictor, branch = cgl_k0_through_fold
    lams = np.array([o.lam for o in branch.orbits])
    assert "FOLD" in branch.messages.values()
    assert lams.min() == pytest.approx(-0.25, abs=0.01)
    assert np.all(lams >= -0.25 - 1e-6)
    assert branch.norms[-1] ** 2 > 0.6

    prev = predictor.base
    for orbit, ds in zip(branch.orbits, branch.step_lengths):
        assert abs(arclength_condition(orbit, prev, prev.tangent, ds)) <= 10 * settings.tol
        prev = orbit


@pytest.mark.slow
def test_k0_branch_stabilizes_after_the_fold(cgl_k0_through_fold):
    _, _, _, branch = cgl_k0_through_fold
    upper = 0
    for norm, spectrum in zip(branch.norms, branch.spectra):
        assert spectrum is not None
        if norm ** 2 < 0.4:
            assert spectrum.ind == 1
        elif 0.6 < norm ** 2 < 0.9:
            assert spectrum.ind == 0
            upper += 1
    assert upper >= 1
