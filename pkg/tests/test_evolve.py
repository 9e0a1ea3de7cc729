import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chemocons.core import Dirichlet, Field, Grid, integrate, lp_norm
from chemocons.evolve import (BlowUpError, ModelParams, StepControl, compute_dt, initial_state,
                              simulate, step, transport_divergence, face_slopes)


def _params(n=16, lam=1.0, mu=1.0, vb=0.1, u0=0.5, dim=2):
    g = Grid.rectangle(n) if dim == 2 else Grid.interval(n)
    return ModelParams(lam, mu, vb, Field.constant(g, u0))


def test_params_validation_names_assumptions():
    g = Grid.rectangle(4)
    with pytest.raises(ValueError, match="crowding"):
        ModelParams(1.0, 0.0, 0.1, Field.constant(g, 1.0))
    with pytest.raises(ValueError, match="growth"):
        ModelParams(-1.0, 1.0, 0.1, Field.constant(g, 1.0))
    with pytest.raises(ValueError, match="boundary"):
        ModelParams(1.0, 1.0, 0.0, Field.constant(g, 1.0))
    with pytest.raises(ValueError, match="positive"):
        ModelParams(1.0, 1.0, 0.1, Field.constant(g, 0.0))


def test_step_control_validation():
    for kw in ({"cfl_safety": 0.0}, {"cfl_safety": 1.5}, {"dt_max": 0.0},
               {"blowup_threshold": -1.0}, {"scheme": "rk4"}):
        with pytest.raises(ValueError):
            StepControl(**kw)


def test_compute_dt_diffusion_limited():
    g = Grid.rectangle(64)
    p = ModelParams(1.0, 1.0, 0.1, Field.constant(g, 1.0))
    u = Field.constant(g, 0.0)
    v = Field.constant(g, 0.1, Dirichlet(0.1))
    ctl = StepControl(cfl_safety=0.4, dt_max=1.0, scheme="explicit")
    assert compute_dt(u, v, ctl, p) == pytest.approx(0.4 / 16384, rel=1e-14)


def test_compute_dt_no_reaction_limit():
    g = Grid.rectangle(8)
    p = ModelParams(0.0, 1.0, 0.1, Field.constant(g, 1.0))
    u = Field.constant(g, 0.0)
    v = Field.constant(g, 0.1, Dirichlet(0.1))
    # implicit scheme: only the reaction limit applies, which is infinite here
    assert compute_dt(u, v, StepControl(dt_max=0.3), p) == 0.3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 50.0))
def test_compute_dt_nonincreasing_in_drift(seed, scale):
    rng = np.random.default_rng(seed)
    g = Grid.rectangle(12)
    p = ModelParams(1.0, 1.0, 0.1, Field.constant(g, 1.0))
    x, y = g.centers()
    base = np.sin(3 * x + rng.uniform(0, 3)) * np.cos(2 * y + rng.uniform(0, 3))
    u = Field.constant(g, 1.0)
    ctl = StepControl(dt_max=1.0, scheme="explicit")
    small = compute_dt(u, Field(g, base, Dirichlet(0.0)), ctl, p)
    large = compute_dt(u, Field(g, scale * base, Dirichlet(0.0)), ctl, p)
    assert large <= small


def test_transport_divergence_telescopes():
    rng = np.random.default_rng(4)
    g = Grid.rectangle(10, 7)
    u = rng.random(g.shape)
    v = Field(g, rng.random(g.shape), Dirichlet(0.0))
    div = transport_divergence(u, face_slopes(v), g)
    assert abs(math.fsum(div.ravel())) < 1e-12


@pytest.mark.parametrize("scheme", ["implicit", "explicit"])
def test_one_step_mass_identity(scheme):
    g = Grid.rectangle(16)
    x, y = g.centers()
    u0 = Field(g, 1.0 + 0.3 * np.cos(np.pi * x) * np.cos(2 * np.pi * y))
    p = ModelParams(1.3, 0.7, 1.0, u0)
    ctl = StepControl(scheme=scheme)
    s0 = initial_state(p, ctl)
    rec = []
    s1 = step(s0, ctl, p, record=rec)
    m0, m1 = integrate(s0.u), integrate(s1.u)
    l2 = lp_norm(s0.u, 2) ** 2
    expected = m0 + s1.dt_last * (p.lam * m0 - p.mu * l2)
    assert m1 == pytest.approx(expected, rel=1e-14, abs=1e-15)
    assert abs(rec[0].mass_residual) <= 1e-12 * (1 + m0)


def test_constant_unit_density_one_step():
    p = ModelParams(1.0, 1.0, 1.0, Field.constant(Grid.rectangle(16), 1.0))
    ctl = StepControl()
    s1 = step(initial_state(p, ctl), ctl, p)
    # lam = mu and u = 1: the source vanishes, flux telescopes
    assert integrate(s1.u) == pytest.approx(1.0, abs=1e-14)


def test_logistic_equilibrium_with_small_boundary_level():
    p = ModelParams(2.0, 0.5, 1e-12, Field.constant(Grid.rectangle(12), 4.0))
    traj = simulate(p, StepControl(dt_max=0.1), 2.0, observe_every=0.5)
    for s in traj.states:
        np.testing.assert_allclose(s.u.values, 4.0, rtol=1e-10)


def test_zero_growth_mass_strictly_decreases():
    p = _params(lam=0.0, vb=0.3)
    traj = simulate(p, StepControl(dt_max=0.02), 1.0)
    masses = [r.mass_new for r in traj.steps]
    assert all(b < a for a, b in zip([p.mass0] + masses, masses))


@pytest.mark.parametrize("scheme", ["implicit", "explicit"])
def test_positivity_from_peaked_data(scheme):
    g = Grid.rectangle(24)
    x, y = g.centers()
    u0 = Field(g, 1e-3 + 20 * np.exp(-((x - 0.3) ** 2 + (y - 0.6) ** 2) / 0.005))
    p = ModelParams(1.0, 1.0, 2.0, u0)
    traj = simulate(p, StepControl(scheme=scheme, dt_max=0.01), 0.2)
    assert min(r.min_u for r in traj.steps) > 0


def test_schemes_agree_on_small_steps():
    p = _params(n=16, vb=0.5)
    a = simulate(p, StepControl(scheme="implicit", dt_max=1e-3), 0.1).final.u.values
    b = simulate(p, StepControl(scheme="explicit", dt_max=1e-3), 0.1).final.u.values
    np.testing.assert_allclose(a, b, rtol=1e-4)


def test_simulate_zero_horizon():
    traj = simulate(_params(), StepControl(), 0.0)
    assert len(traj.states) == 1 and traj.states[0].t == 0.0 and not traj.steps


def test_simulate_lands_on_observation_times():
    traj = simulate(_params(), StepControl(dt_max=0.03), 1.0, observe_every=0.25)
    np.testing.assert_allclose(traj.times, [0, 0.25, 0.5, 0.75, 1.0], atol=1e-14)
    assert traj.steps[-1].t == pytest.approx(1.0, abs=1e-12)


def test_observers_are_called():
    seen = []
    simulate(_params(), StepControl(), 0.5, observers=[lambda s: seen.append(s.t)],
             observe_every=0.1)
    assert len(seen) == 6


def test_blowup_threshold_aborts():
    p = _params(u0=2.0)
    with pytest.raises(BlowUpError, match="continuation"):
        simulate(p, StepControl(blowup_threshold=1.5), 1.0)


def test_one_dimensional_runs():
    traj = simulate(_params(n=32, dim=1), StepControl(), 1.0)
    assert traj.final.u.grid.oracle_mode
