"""Positive and trivial steady states.

The positive steady state is reached by pseudo-time marching with the
implicit-transport stepper; its fixed points are exactly the solutions of
the discrete steady problem, independently of the step size.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import Dirichlet, Field, NoFlux, integrate
from .elliptic import elliptic_residual, solve_v
from .evolve import (ModelParams, StepControl, face_slopes, initial_state, step,
                     transport_divergence)


@dataclass(frozen=True)
class SteadyBoundReport:
    """Smallest cellwise slack in the two-sided steady-state bounds.

    Nonnegative margins mean the bounds hold on every cell.
    """

    lower_margin: float
    upper_margin: float
    v_upper_margin: float
    v_lower_margin: float

    @property
    def min_margin(self) -> float:
        return min(self.lower_margin, self.upper_margin, self.v_upper_margin, self.v_lower_margin)

    @property
    def violation(self) -> float:
        return max(0.0, -self.min_margin)


@dataclass(frozen=True, eq=False)
class SteadyState:
    U: Field
    V: Field
    residual: float
    marched_time: float
    bound_report: SteadyBoundReport
    converged: bool = True
    steps: int = 0
    tol: float = 1e-10


@dataclass(frozen=True)
class TrivialSteadyReport:
    u_residual: float
    v_interior_residual: float
    v_boundary_residual: float
    dirichlet_mismatch: bool

    @property
    def max_residual(self) -> float:
        return max(self.u_residual, self.v_interior_residual, self.v_boundary_residual)


@dataclass(frozen=True)
class GrowthReport:
    delta: float
    initial_rate: float
    predicted_rate: float
    linearized_rate: float
    mass_increasing: bool
    relative_error: float


def steady_bounds(U: Field, V: Field, params: ModelParams) -> SteadyBoundReport:
    cap = params.lam / params.mu
    u, v = U.values, V.values
    return SteadyBoundReport(
        lower_margin=float(np.min(u - np.exp(v - params.v_bar) * cap)),
        upper_margin=float(np.min(cap * np.exp(v) - u)),
        v_upper_margin=float(np.min(params.v_bar - v)),
        v_lower_margin=float(np.min(v)),
    )


def steady_operator_residual(U: Field, V: Field, params: ModelParams) -> float:
    """Max cell residual of the discrete density equation at (U, V)."""
    u = U.values
    src = params.lam * u - params.mu * u * u
    div = transport_divergence(u, face_slopes(V), U.grid)
    return float(np.max(np.abs(src - div)))


def find_steady(params: ModelParams, tol_ss: float = 1e-10, t_cap: float = 500.0,
                ctl: Optional[StepControl] = None) -> SteadyState:
    """March from ``params.u0`` until ``||u^{n+1} - u^n||_inf / dt <= tol_ss``.

    Running out of pseudo-time is not fatal: a warning is issued and the
    result carries ``converged=False``.
    """
    if not tol_ss > 0:
        raise ValueError("tol_ss must be positive")
    if ctl is None:
        ctl = StepControl(dt_max=1.0)
    ctl = ctl.with_(scheme="implicit",
                    elliptic_tol=min(ctl.elliptic_tol, max(1e-12, 1e-2 * tol_ss)))
    state = initial_state(params, ctl)
    residual = math.inf
    n = 0
    while state.t < t_cap:
        # pseudo-time only: keep the solve iterate so the operator residual tracks tol_ss
        new = step(state, ctl, params, dt_cap=t_cap - state.t, conservative=False)
        residual = float(np.max(np.abs(new.u.values - state.u.values))) / new.dt_last
        state = new
        n += 1
        if residual <= tol_ss:
            break
    converged = residual <= tol_ss
    if not converged:
        warnings.warn(f"steady march stopped at t_cap={t_cap} with residual {residual:.3e}",
                      RuntimeWarning, stacklevel=2)
    sol = solve_v(state.u, params.v_bar, ctl.elliptic_tol, x0=state.z,
                  preconditioner=ctl.preconditioner)
    U = Field(params.grid, state.u.values, NoFlux(sol.v))
    return SteadyState(U=U, V=sol.v, residual=residual, marched_time=state.t,
                       bound_report=steady_bounds(U, sol.v, params), converged=converged,
                       steps=n, tol=tol_ss)


def _boundary_mask(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = -1
        mask[tuple(idx)] = True
    return mask


def _as_field(x, grid, default) -> Field:
    if x is None:
        x = default
    if isinstance(x, Field):
        return x
    return Field(grid, np.broadcast_to(np.asarray(x, dtype=float), grid.shape))


def check_trivial_steady(params: ModelParams, U: Union[Field, float, None] = None,
                         V: Union[Field, float, None] = None,
                         tol: float = 1e-12) -> TrivialSteadyReport:
    """Discrete steady residuals at (U, V), by default the pair (0, v_bar).

    The chemoattractant residual is split between cells touching the
    boundary and the rest, so a wrong boundary level shows up as
    ``dirichlet_mismatch``.
    """
    grid = params.grid
    Uf = _as_field(U, grid, 0.0)
    Vf = _as_field(V, grid, params.v_bar).with_bc(Dirichlet(params.v_bar))
    u_res = steady_operator_residual(Uf, Vf, params)
    v_res = np.abs(elliptic_residual(Uf, Vf, params.v_bar))
    mask = _boundary_mask(grid.shape)
    interior = float(v_res[~mask].max()) if np.any(~mask) else 0.0
    boundary = float(v_res[mask].max())
    # a boundary-only excess over the interior residual comes from the boundary level
    mismatch = boundary > interior + tol * max(1.0, params.v_bar / grid.h_min**2)
    return TrivialSteadyReport(u_residual=u_res, v_interior_residual=interior,
                               v_boundary_residual=boundary, dirichlet_mismatch=bool(mismatch))


def check_instability_trivial(params: ModelParams, delta: float, n_steps: int = 5,
                              dt: float = 1e-3, ctl: Optional[StepControl] = None) -> GrowthReport:
    """Start next to (0, v_bar) with ``u0 = delta`` and measure early mass growth.

    ``initial_rate`` is the mean mass growth rate over the first ``n_steps``
    steps of size ``dt``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid = params.grid
    p = params.with_(u0=Field.constant(grid, delta))
    ctl = (ctl or StepControl()).with_(dt_max=dt)
    state = initial_state(p, ctl)
    m0 = integrate(state.u)
    masses = [m0]
    for _ in range(n_steps):
        state = step(state, ctl, p)
        masses.append(integrate(state.u))
    rate = (masses[-1] - m0) / state.t
    area = grid.measure
    predicted = (p.lam * delta - p.mu * delta**2) * area
    linear = p.lam * delta * area
    rel = abs(rate - linear) / linear if linear > 0 else math.inf
    return GrowthReport(delta=delta, initial_rate=rate, predicted_rate=predicted,
                        linearized_rate=linear, mass_increasing=bool(masses[1] > m0),
                        relative_error=rel)
