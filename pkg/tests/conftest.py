# tests/conftest.py - Shared fixtures and hypothesis profiles

import os

import hypothesis
import numpy as np
import pytest

from problems.registry import build_model

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("dev", max_examples=25, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture
def cgl1d():
    """cGL on (-pi, pi) with 31 nodes, Neumann, r = -0.2"""
    return build_model("cgl1d")


@pytest.fixture
def cgl1d_coarse():
    return build_model("cgl1d", counts=[11])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ─── cGL k = 0 Hopf point at r = 0 and its orbit branch ───

@pytest.fixture(scope="session")
def cgl_hopf():
    from models import HopfPoint
    from solvers.hopfswitch import branch_direction, hopf_eigenpair

    problem = build_model("cgl1d")
    u0 = np.zeros(problem.n_u)
    omega, psi = hopf_eigenpair(problem, u0, 0.0, 1.0)
    hp = branch_direction(problem, HopfPoint(u0=u0, lam=0.0, omega=omega, psi=psi))
    return problem, hp


@pytest.fixture(scope="session")
def cgl_k0_branch(cgl_hopf):
    from models import OrbitSettings
    from solvers.hopfswitch import build_predictor
    from solvers.po import continue_orbits

    problem, hp = cgl_hopf
    settings = OrbitSettings(m=21, ds=0.05, ds_max=0.2)
    predictor = build_predictor(problem, hp, settings)
    branch = continue_orbits(problem, predictor, settings, steps=6)
    return problem, settings, predictor, branch
