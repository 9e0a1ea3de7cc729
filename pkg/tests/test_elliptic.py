import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chemocons.core import Dirichlet, Field, Grid, face_energy
from chemocons.elliptic import (ConvergenceFailure, dirichlet_laplacian, elliptic_report,
                                elliptic_residual, solve_v)


def _cosh_error(n):
    g = Grid.interval(n)
    sol = solve_v(Field.constant(g, 4.0), 1.0, tol=1e-12)
    x = g.centers()[0]
    exact = np.cosh(2 * (x - 0.5)) / np.cosh(1.0)
    return float(np.max(np.abs(sol.v.values - exact))), sol


def test_zero_density_gives_boundary_level():
    sol = solve_v(Field.constant(Grid.rectangle(16), 0.0), 0.7)
    assert np.all(sol.v.values == 0.7)
    assert sol.iterations == 0


def test_constant_density_closed_form(frozen):
    err32, sol = _cosh_error(32)
    err64, _ = _cosh_error(64)
    # independent dense solve of the same discrete system
    assert err32 == pytest.approx(frozen["elliptic_err_n32"], rel=1e-6)
    assert err64 == pytest.approx(frozen["elliptic_err_n64"], rel=1e-6)
    assert 3.2 <= err32 / err64 <= 4.8
    mid = 0.5 * (sol.v.values[15] + sol.v.values[16])
    assert mid == pytest.approx(frozen["inv_cosh_1"], abs=5e-3)


def test_solution_fields_are_consistent():
    rng = np.random.default_rng(1)
    g = Grid.rectangle(12, 10)
    u = Field(g, rng.random(g.shape) * 5)
    sol = solve_v(u, 0.3, tol=1e-11)
    np.testing.assert_allclose(sol.v.values + sol.z.values, 0.3, rtol=0, atol=1e-16)
    assert sol.residual <= 1e-11
    assert np.max(np.abs(elliptic_residual(u, sol.v, 0.3))) < 1e-8


def test_center_value_decreases_with_density():
    g = Grid.rectangle(32)
    centers = []
    for c in (1.0, 10.0, 100.0):
        v = solve_v(Field.constant(g, c), 1.0).v.values
        centers.append(v[15:17, 15:17].mean())
    assert 0 < centers[2] < centers[1] < centers[0] < 1


@pytest.mark.parametrize("pc", ["fft", "jacobi", "none"])
def test_preconditioners_agree(pc):
    rng = np.random.default_rng(2)
    g = Grid.rectangle(16)
    u = Field(g, rng.random(g.shape) * 3)
    ref = solve_v(u, 1.0, tol=1e-12).v.values
    np.testing.assert_allclose(solve_v(u, 1.0, tol=1e-12, preconditioner=pc).v.values, ref,
                               atol=1e-10)


def test_fft_preconditioner_is_exact_for_constant_density():
    sol = solve_v(Field.constant(Grid.rectangle(64), 2.5), 1.0, tol=1e-10)
    assert sol.iterations <= 2


def test_input_validation():
    g = Grid.interval(8)
    with pytest.raises(ValueError, match="nonnegative"):
        solve_v(Field.constant(g, -1e-6), 1.0)
    with pytest.raises(ValueError):
        solve_v(Field.constant(g, 1.0), 0.0)
    with pytest.raises(ValueError):
        solve_v(Field.constant(g, 1.0), 1.0, tol=0.0)
    with pytest.raises(ValueError):
        solve_v(Field.constant(g, 1.0), 1.0, preconditioner="ilu")


def test_roundoff_negative_density_is_clamped():
    g = Grid.interval(8)
    vals = np.full(8, 1.0)
    vals[3] = -1e-14
    sol = solve_v(Field(g, vals), 1.0)
    ref = solve_v(Field(g, np.where(vals < 0, 0.0, vals)), 1.0)
    np.testing.assert_array_equal(sol.v.values, ref.v.values)


def test_iteration_cap_is_reported():
    g = Grid.rectangle(32)
    with pytest.raises(ConvergenceFailure):
        solve_v(Field.constant(g, 1.0), 1.0, tol=1e-12, preconditioner="none", maxiter=3)


def test_matrix_is_symmetric_positive_definite():
    g = Grid.rectangle(6, 5)
    a = dirichlet_laplacian(g).toarray()
    np.testing.assert_allclose(a, a.T)
    assert np.linalg.eigvalsh(a).min() > 0


def test_report_zero_density():
    u = Field.constant(Grid.rectangle(8), 0.0)
    rep = elliptic_report(u, solve_v(u, 1.0))
    assert rep.energy_lhs == 0 and rep.energy_rhs == 0
    assert rep.gn_ratio is None and rep.c1_estimate is None


def test_report_constant_density_energy_and_identity():
    defects = []
    for n in (16, 32, 64):
        u = Field.constant(Grid.interval(n), 4.0)
        rep = elliptic_report(u, solve_v(u, 1.0, tol=1e-12))
        assert rep.energy_lhs < rep.energy_rhs
        assert rep.gn_ratio > 0 and rep.c1_estimate > 0
        defects.append(rep.identity_defect)
    # summation by parts makes the identity exact up to the solver tolerance
    assert max(defects) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 5.0))
def test_maximum_principle_and_energy(seed, vb):
    rng = np.random.default_rng(seed)
    g = Grid.rectangle(10, 8)
    u = Field(g, rng.random(g.shape) * rng.uniform(0.1, 50))
    tol = 1e-10
    sol = solve_v(u, vb, tol=tol)
    v = sol.v.values
    assert v.min() >= -10 * tol and v.max() <= vb * (1 + 10 * tol)
    assert v[1:-1, 1:-1].max() < vb
    rep = elliptic_report(u, sol)
    assert rep.energy_lhs <= rep.energy_rhs * (1 + 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    g = Grid.rectangle(9, 11)
    u1 = rng.random(g.shape) * 4
    u2 = u1 + rng.random(g.shape) * 2
    v1 = solve_v(Field(g, u1), 1.0, tol=1e-12).v.values
    v2 = solve_v(Field(g, u2), 1.0, tol=1e-12).v.values
    assert np.all(v1 >= v2 - 1e-11)


def test_energy_identity_uses_face_energy():
    u = Field.constant(Grid.rectangle(16), 3.0)
    sol = solve_v(u, 0.5, tol=1e-12)
    rep = elliptic_report(u, sol)
    assert rep.energy_lhs == face_energy(sol.z)
    assert math.isclose(rep.energy_lhs, rep.identity_rhs, rel_tol=1e-9)
