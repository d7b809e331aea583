# tests/test_hopfswitch.py - Critical eigenpair, normal-form direction and orbit predictor

import math

import numpy as np
import pytest

from errors import DegenerateHopfError, NotAHopfError
from models import HopfPoint, OrbitSettings
from solvers.hopfswitch import bilinear, build_predictor, default_xi, hopf_eigenpair
from solvers.po import xi_norm


def test_hopf_eigenpair_at_trivial_state(cgl1d):
    u0 = np.zeros(cgl1d.n_u)
    omega, psi = hopf_eigenpair(cgl1d, u0, 0.0, 0.9)
    M = cgl1d.disc.M_block
    assert omega == pytest.approx(1.0, abs=1e-10)
    assert np.vdot(psi, M @ psi).real == pytest.approx(1.0, rel=1e-10)
    res = cgl1d.Gu(u0, 0.0) @ psi - 1j * omega * (M @ psi)
    assert np.abs(res).max() < 1e-10
    k = int(np.argmax(np.abs(psi)))
    assert psi[k].real > 0 and abs(psi[k].imag) < 1e-12


def test_off_axis_eigenvalue_is_not_a_hopf_point(cgl1d):
    with pytest.raises(NotAHopfError):
        hopf_eigenpair(cgl1d, np.zeros(cgl1d.n_u), 0.1, 1.0)


def test_bilinear_form_vanishes_for_odd_nonlinearity(cgl1d, rng):
    u0 = np.zeros(cgl1d.n_u)
    x = rng.standard_normal(cgl1d.n_u) + 1j * rng.standard_normal(cgl1d.n_u)
    y = rng.standard_normal(cgl1d.n_u)
    assert np.abs(bilinear(cgl1d, u0, 0.0, x, y)).max() == 0


def test_cgl_k0_hopf_is_subcritical(cgl_hopf):
    problem, hp = cgl_hopf
    # c1 = -2 c3 / |Omega| for the spatially constant mode
    assert hp.c1 == pytest.approx(1.0 / math.pi, rel=1e-3)
    assert hp.mu_r_prime == pytest.approx(1.0, abs=1e-6)
    assert hp.s == -1
    assert hp.alpha == pytest.approx(math.sqrt(math.pi), rel=1e-3)


def test_predictor_takes_a_step_of_length_ds(cgl_hopf):
    problem, hp = cgl_hopf
    settings = OrbitSettings(m=11, ds=0.05)
    pred = build_predictor(problem, hp, settings)
    nm = settings.m * problem.n_u
    xi = default_xi(settings, problem.n_u)
    assert xi == pytest.approx(10.0 / nm)

    step = pred.orbit.vector() - pred.base.vector()
    assert xi_norm(step, nm, xi, settings.w_T) == pytest.approx(0.05, rel=1e-10)
    assert pred.orbit.lam == pytest.approx(hp.lam - pred.eps ** 2)
    assert pred.orbit.T == pytest.approx(2 * math.pi / hp.omega)
    assert np.abs(pred.orbit.slices[0] - pred.orbit.slices[-1]).max() < 1e-14
    assert xi_norm(pred.base.tangent, nm, xi, settings.w_T) == pytest.approx(1.0)


def test_degenerate_hopf_needs_fallback_amplitude(cgl_hopf):
    problem, hp = cgl_hopf
    bare = HopfPoint(u0=hp.u0, lam=hp.lam, omega=hp.omega, psi=hp.psi)
    with pytest.raises(DegenerateHopfError):
        build_predictor(problem, bare, OrbitSettings(m=11))
    pred = build_predictor(problem, bare, OrbitSettings(m=11, amplitude=0.01))
    assert pred.s == 0
    assert pred.orbit.lam == hp.lam
    assert np.abs(pred.orbit.slices).max() > 0
