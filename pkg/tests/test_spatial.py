# tests/test_spatial.py - Grids, finite-element matrices and the semidiscrete residual

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from errors import ConfigurationError, EvaluationError
from models import BcSpec, FaceBc
from problems.cgl import CglModel
from problems.registry import MODEL_BUILDERS, build_model
from solvers.spatial import (
    assemble_mass, assemble_stiffness, build_grid, check_jacobian, l2_norm
)


@given(n=st.integers(3, 40), lo=st.floats(-5, 5), length=st.floats(0.1, 10))
def test_mass_entries_sum_to_interval_length(n, lo, length):
    grid = build_grid(1, [n], [(lo, lo + length)])
    M = assemble_mass(grid)
    assert M.sum() == pytest.approx(length, rel=1e-12)
    assert assemble_mass(grid, lumped=True).sum() == pytest.approx(length, rel=1e-12)


@given(nx=st.integers(3, 12), ny=st.integers(3, 12), lx=st.floats(0.5, 4), ly=st.floats(0.5, 4))
def test_mass_2d_sums_to_area_and_is_spd(nx, ny, lx, ly):
    grid = build_grid(2, [nx, ny], [(0, lx), (0, ly)])
    M = assemble_mass(grid).toarray()
    assert M.sum() == pytest.approx(lx * ly, rel=1e-12)
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0


def test_neumann_stiffness_annihilates_constants():
    for grid in (build_grid(1, [15], [(0, 2)]), build_grid(2, [9, 7], [(0, 2), (-1, 1)])):
        K, rhs = assemble_stiffness(grid, BcSpec.neumann(1), 0, diffusion=0.7)
        assert np.abs(K @ np.ones(grid.n_p)).max() < 1e-12
        assert not rhs.any()


def test_robin_and_spring_terms_in_1d():
    grid = build_grid(1, [11], [(0, 1)])
    h = grid.spacing[0]
    bc = BcSpec(components=({"left": FaceBc(kind="robin", q=2.0, g=3.0),
                             "right": FaceBc(kind="spring", s=500.0, target=0.25)},))
    K, rhs = assemble_stiffness(grid, bc, 0)
    assert K[0, 0] == pytest.approx(1 / h + 2.0)
    assert K[-1, -1] == pytest.approx(1 / h + 500.0)
    assert rhs[0] == pytest.approx(3.0)
    assert rhs[-1] == pytest.approx(125.0)
    assert not rhs[1:-1].any()


def test_invalid_grid_raises_configuration_error():
    with pytest.raises(ConfigurationError):
        build_grid(1, [2], [(0, 1)])
    with pytest.raises(ConfigurationError):
        build_grid(1, [10], [(1, 0)])
    with pytest.raises(ConfigurationError):
        build_grid(2, [10], [(0, 1)])
    with pytest.raises(ValueError):
        FaceBc(kind="robin", q=math.inf)


def test_residual_vanishes_at_trivial_state(cgl1d):
    assert np.abs(cgl1d.G(np.zeros(cgl1d.n_u), 0.3)).max() == 0


def test_residual_rejects_wrong_length(cgl1d):
    with pytest.raises(ConfigurationError):
        cgl1d.G(np.zeros(cgl1d.n_u + 1), 0.0)


class _Blowup(CglModel):
    def reaction(self, U, p):
        F = super().reaction(U, p)
        F[0, 3] = np.nan
        return F


def test_non_finite_reaction_reports_node():
    problem = _Blowup(build_grid(1, [9], [(0, 1)]), BcSpec.neumann(2))
    with pytest.raises(EvaluationError) as info:
        problem.G(np.zeros(problem.n_u), 0.0)
    assert info.value.node == 3


def test_l2_norm_of_constant_state(cgl1d):
    u = np.concatenate([np.full(cgl1d.grid.n_p, 0.3), np.full(cgl1d.grid.n_p, -0.4)])
    assert l2_norm(cgl1d.disc, u) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("name", sorted(MODEL_BUILDERS))
def test_jacobian_matches_finite_differences(name):
    problem = build_model(name)
    rng = np.random.default_rng(7)
    u = problem.initial_state() + 0.1 * rng.standard_normal(problem.n_u)
    assert check_jacobian(problem, u, problem.lam, seed=3) < 1e-5
