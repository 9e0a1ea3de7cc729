import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chemocons.core import (Dirichlet, Field, Grid, NoFlux, NonFiniteFieldError, face_energy,
                            grad_face, grad_lp_norm, integrate, laplacian, lp_norm, v_seminorm)


def test_grid_geometry():
    g = Grid.rectangle(4, 8, lx=2.0, ly=0.5)
    assert g.shape == (4, 8)
    assert g.h == (0.5, 0.0625)
    assert g.measure == 1.0
    assert g.cell_volume * g.size == g.measure
    x, y = g.centers()
    assert x[0, 0] == 0.25 and y[0, 1] == 0.5 * 0.0625 + 0.0625
    assert not g.oracle_mode and Grid.interval(5).oracle_mode


@pytest.mark.parametrize("bad", [((1.0,), (0,)), ((-1.0,), (4,)), ((1.0, 1.0), (4,))])
def test_grid_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        Grid(*bad)


def test_field_rejects_nonfinite():
    g = Grid.interval(4)
    with pytest.raises(NonFiniteFieldError):
        Field(g, [0.0, np.nan, 1.0, 2.0])
    with pytest.raises(ValueError):
        Field(g, np.zeros(5))


def test_field_values_read_only():
    f = Field.constant(Grid.interval(4), 1.0)
    with pytest.raises(ValueError):
        f.values[0] = 2.0


@pytest.mark.parametrize("n", [1, 7, 64])
def test_integrate_unit_square(n):
    assert integrate(Field.constant(Grid.rectangle(n), 1.0)) == 1.0


@pytest.mark.parametrize("n", [3, 10, 33])
def test_integrate_constant_on_interval(n):
    assert integrate(Field.constant(Grid.interval(n, 3.0), 2.0)) == pytest.approx(6.0, abs=1e-14)


def test_integrate_linear_midpoint_exact():
    f = Field.from_function(Grid.interval(4), lambda x: x)
    assert integrate(f) == 0.5


def test_lp_norm_examples():
    sq = Grid.rectangle(16)
    assert lp_norm(Field.constant(sq, 2.0), 2) == pytest.approx(2.0, abs=1e-15)
    assert lp_norm(Field.constant(sq, -3.0), math.inf) == 3.0
    half = np.zeros(sq.shape)
    half[:8] = 1.0
    assert lp_norm(Field(sq, half), 1) == 0.5


def test_lp_norm_rejects_small_p():
    with pytest.raises(ValueError):
        lp_norm(Field.constant(Grid.interval(4), 1.0), 0.5)


def test_grad_face_linear_and_constant():
    g = Grid.interval(16)
    f = Field.from_function(g, lambda x: x, Dirichlet(lambda x: x))
    np.testing.assert_allclose(grad_face(f)[0], 1.0, atol=1e-13)
    c = Field.constant(g, 3.0, Dirichlet(3.0))
    assert np.all(grad_face(c)[0] == 0.0)


def test_grad_face_quadratic_midpoint():
    g = Grid.interval(32)
    f = Field.from_function(g, lambda x: x**2, Dirichlet(lambda x: x**2))
    assert grad_face(f)[0][16] == pytest.approx(1.0, abs=1e-13)


def test_grad_face_requires_boundary_rule():
    g = Grid.interval(4)
    with pytest.raises(ValueError, match="boundary rule"):
        grad_face(Field.constant(g, 1.0))
    with pytest.raises(ValueError):
        grad_face(Field.constant(Grid.interval(1), 1.0, Dirichlet(1.0)))


def test_noflux_without_drift_has_zero_boundary_gradient():
    g = Grid.rectangle(6)
    f = Field.from_function(g, lambda x, y: x * y, NoFlux())
    gx, gy = grad_face(f)
    assert np.all(gx[[0, -1]] == 0) and np.all(gy[:, [0, -1]] == 0)
    # no-flux Laplacian conserves the integral
    assert abs(math.fsum(laplacian(f).ravel())) < 1e-12


def test_noflux_with_drift_cancels_total_boundary_flux():
    g = Grid.interval(8)
    v = Field.from_function(g, lambda x: np.cos(x), Dirichlet(1.0))
    u = Field.from_function(g, lambda x: 1 + x, NoFlux(v))
    gu = grad_face(u)[0]
    gv = grad_face(v)[0]
    np.testing.assert_allclose(gu[[0, -1]], u.values[[0, -1]] * gv[[0, -1]])


def test_grad_lp_norm_examples(frozen):
    sq = Grid.rectangle(16)
    f = Field.from_function(sq, lambda x, y: x + 0 * y, Dirichlet(lambda x, y: x + 0 * y))
    assert grad_lp_norm(f, 4) == pytest.approx(1.0, abs=1e-13)
    for p in (1, 2, 4, math.inf):
        assert grad_lp_norm(Field.constant(sq, 2.0, Dirichlet(2.0)), p) == 0.0
    s = Field.from_function(Grid.interval(64), lambda x: np.sin(np.pi * x), Dirichlet(0.0))
    assert grad_lp_norm(s, 2) == pytest.approx(frozen["pi_over_sqrt2"], rel=1e-2)


def test_grad_lp_norm_refinement_order():
    def err(n):
        g = Grid.rectangle(n)
        f = Field.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
                                Dirichlet(0.0))
        # |grad f|^2 integrates to pi^2 / 2 on the unit square
        return abs(grad_lp_norm(f, 2) - math.pi / math.sqrt(2))

    ratio = err(32) / err(64)
    assert 3.2 <= ratio <= 4.8


def test_face_energy_matches_summation_by_parts():
    rng = np.random.default_rng(3)
    g = Grid.rectangle(9, 7)
    f = Field(g, rng.random(g.shape), Dirichlet(0.0))
    lhs = face_energy(f)
    rhs = -integrate(Field(g, f.values * laplacian(f)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_quadrature_consistency_exact():
    rng = np.random.default_rng(0)
    f = Field(Grid.rectangle(13), rng.random((13, 13)))
    assert integrate(f) == lp_norm(f, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_norms_invariant_under_reflection(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n))
    sym = a + a[::-1] + a[:, ::-1] + a[::-1, ::-1]
    g = Grid.rectangle(n)
    f = Field(g, sym, Dirichlet(0.5))
    r = Field(g, sym[::-1].copy(), Dirichlet(0.5))
    t = Field(g, sym.T.copy(), Dirichlet(0.5))
    for p in (1, 2, 3, math.inf):
        assert lp_norm(r, p) == pytest.approx(lp_norm(f, p), rel=1e-14)
        assert grad_lp_norm(r, p) == pytest.approx(grad_lp_norm(f, p), rel=1e-13)
        assert grad_lp_norm(t, p) == pytest.approx(grad_lp_norm(f, p), rel=1e-13, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=4, max_size=4))
def test_integrate_equals_l1_for_nonnegative(vals):
    f = Field(Grid.interval(4), vals)
    assert integrate(f) == lp_norm(f, 1)


def _frozen_states(field, times):
    return [SimpleNamespace(t=t, u=field) for t in times]


def test_v_seminorm_examples(frozen):
    one = Field.constant(Grid.rectangle(8), 1.0, NoFlux())
    assert v_seminorm(_frozen_states(one, np.linspace(0, 1, 5)), 0.0, 1.0) == 1.0
    zero = Field.constant(Grid.rectangle(8), 0.0, Dirichlet(0.0))
    assert v_seminorm(_frozen_states(zero, [0.0, 0.5, 1.0]), 0.0, 1.0) == 0.0
    s = Field.from_function(Grid.interval(64), lambda x: np.sin(np.pi * x), Dirichlet(0.0))
    val = v_seminorm(_frozen_states(s, np.linspace(2, 3, 11)), 2.0, 3.0)
    assert val == pytest.approx(frozen["v_seminorm_sin"], rel=1e-2)


def test_v_seminorm_window_must_be_covered():
    one = Field.constant(Grid.interval(4), 1.0, NoFlux())
    states = _frozen_states(one, [0.0, 0.5])
    with pytest.raises(ValueError, match="not covered"):
        v_seminorm(states, 0.0, 1.0)
    with pytest.raises(ValueError):
        v_seminorm(states, 0.5, 0.5)
