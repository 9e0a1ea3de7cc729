"""Time stepping for the coupled density / chemoattractant system.

Each step takes ``v = v(u^n)`` from the current state, advances ``u`` with a
donor-cell finite-volume flux ``F = -grad u + u grad v`` (zero on the
boundary) plus the logistic source ``lam u - mu u^2``, then solves for the
chemoattractant of the new density.

Two schemes are available:

``"implicit"`` (default)
    Backward Euler for the transport operator, explicit logistic source.
    The transport matrix is an M-matrix, so positivity only needs the
    reaction restriction on ``dt``.  After the linear solve the fluxes are
    re-evaluated from the solution and applied in conservative form, which
    makes the discrete mass balance independent of the solver tolerance.
``"explicit"``
    Forward Euler for everything, under diffusion, advection and reaction
    step limits that make the update a positive combination of old values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab

from . import _spectral
from .core import Field, Grid, NoFlux, _scale, face_energy, integrate
from .elliptic import EllipticSolution, solve_v


class SimulationError(RuntimeError):
    pass


class BlowUpError(SimulationError):
    """sup ||u||_inf exceeded the configured threshold.

    A bounded L-infinity norm on every finite time interval is what
    guarantees continuation of the solution; crossing the threshold is
    reported as a numerical violation of that criterion.
    """


class PositivityError(SimulationError):
    pass


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Growth rate ``lam``, crowding ``mu``, boundary level ``v_bar`` and data ``u0``."""

    lam: float
    mu: float
    v_bar: float
    u0: Field

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0 (crowding coefficient positivity), got {self.mu}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0 (nonnegative growth rate), got {self.lam}")
        if not self.v_bar > 0:
            raise ValueError("v_bar must be > 0 (positive boundary chemoattractant), "
                             f"got {self.v_bar}")
        if not self.u0.values.min() > 0:
            raise ValueError("u0 must be strictly positive on the closed domain")
        if self.u0.bc is None:
            object.__setattr__(self, "u0", self.u0.with_bc(NoFlux()))

    @property
    def grid(self) -> Grid:
        return self.u0.grid

    @property
    def mass0(self) -> float:
        return integrate(self.u0)

    @property
    def inf_u0(self) -> float:
        return float(self.u0.values.min())

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class StepControl:
    cfl_safety: float = 0.4
    dt_max: float = 0.05
    blowup_threshold: float = 1e6
    scheme: str = "implicit"
    elliptic_tol: float = 1e-10
    transport_tol: float = 1e-13
    preconditioner: str = "fft"

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.scheme not in ("implicit", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def with_(self, **kw) -> "StepControl":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class SimState:
    u: Field
    v: Field
    t: float
    dt_last: float = 0.0
    step_index: int = 0
    z: Optional[Field] = None


@dataclass(frozen=True)
class StepRecord:
    """Per-step bookkeeping used by the invariant monitors."""

    step_index: int
    t: float
    dt: float
    mass_old: float
    mass_new: float
    l2sq_old: float
    mass_residual: float
    min_u: float
    max_u: float
    v_min: float
    v_max: float
    v_interior_max: float
    energy_lhs: float
    energy_rhs: float
    cg_iterations: int


@dataclass
class Trajectory:
    params: ModelParams
    control: StepControl
    states: List[SimState] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> SimState:
        return self.states[-1]


def face_slopes(v: Field) -> list:
    """Interior-face differences of ``v`` per axis (the advective velocity)."""
    return [np.diff(v.values, axis=a) / h for a, h in enumerate(v.grid.h)]


def transport_divergence(u: np.ndarray, slopes: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """Cell divergence of ``-grad u + u_upwind grad v`` with zero boundary flux."""
    out = np.zeros(grid.shape)
    for axis, (g, h) in enumerate(zip(slopes, grid.h)):
        uu = np.moveaxis(u, axis, 0)
        gg = np.moveaxis(g, axis, 0)
        ul, ur = uu[:-1], uu[1:]
        flux = -(ur - ul) / h + np.where(gg > 0, ul, ur) * gg
        div = np.empty_like(uu)
        div[0] = flux[0]
        div[1:-1] = flux[1:] - flux[:-1]
        div[-1] = -flux[-1]
        np.moveaxis(out, axis, 0)[...] += div / h
    return out


def compute_dt(u: Field, v: Field, ctl: StepControl, params: ModelParams) -> float:
    """Largest admissible step under the scheme's restrictions."""
    grid = u.grid
    umax = float(u.values.max())
    rate = params.lam + 2.0 * params.mu * max(umax, 0.0)
    limits = [1.0 / rate if rate > 0 else math.inf]
    if ctl.scheme == "explicit":
        limits.append(1.0 / (2.0 * sum(1.0 / h**2 for h in grid.h)))
        adv = sum(float(np.max(np.abs(g), initial=0.0)) / h
                  for g, h in zip(face_slopes(v), grid.h))
        limits.append(1.0 / (2.0 * adv) if adv > 0 else math.inf)
    return min(ctl.cfl_safety * min(limits), ctl.dt_max)


def _solve_transport(b: np.ndarray, x0: np.ndarray, slopes, grid: Grid, dt: float,
                     tol: float) -> np.ndarray:
    shape, n = grid.shape, grid.size

    def matvec(x):
        x = x.reshape(shape)
        return (x + dt * transport_divergence(x, slopes, grid)).ravel()

    def prec(r):
        return _spectral.solve_shifted(r, grid.n_cells, grid.h, "neumann", 1.0, dt).ravel()

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    m = LinearOperator((n, n), matvec=prec, dtype=float)
    x, info = bicgstab(op, b.ravel(), x0=x0.ravel(), rtol=tol, atol=0.0, M=m, maxiter=500)
    if info != 0:
        res = np.linalg.norm(matvec(x) - b.ravel()) / np.linalg.norm(b)
        if not res < 1e3 * tol:
            raise SimulationError(f"transport solve stalled at relative residual {res:.2e}")
    return x.reshape(shape)


def _with_v(grid: Grid, u_vals: np.ndarray, sol: EllipticSolution) -> Field:
    return Field(grid, u_vals, NoFlux(sol.v))


def initial_state(params: ModelParams, ctl: StepControl = StepControl()) -> SimState:
    sol = solve_v(params.u0, params.v_bar, ctl.elliptic_tol, preconditioner=ctl.preconditioner)
    return SimState(u=_with_v(params.grid, params.u0.values, sol), v=sol.v, t=0.0, z=sol.z)


def _interior_max(v: np.ndarray) -> float:
    core = v[(slice(1, -1),) * v.ndim]
    return float(core.max()) if core.size else float(v.max())


def step(state: SimState, ctl: StepControl, params: ModelParams,
         dt_cap: float = math.inf, record: Optional[list] = None,
         conservative: bool = True) -> SimState:
    """Advance one step; returns the new state with ``v`` solved for the new ``u``.

    ``dt_cap`` clips the step (used to land on observation times).  When a
    list is passed as ``record`` a :class:`StepRecord` is appended to it.
    With ``conservative=False`` the implicit scheme keeps the linear-solve
    iterate instead of re-applying the fluxes; this trades the exact mass
    balance for a steady residual that is not amplified by ``1/h^2``.
    """
    grid = params.grid
    u = state.u.values
    dt = min(compute_dt(state.u, state.v, ctl, params), dt_cap)
    if not dt > 0:
        raise SimulationError(f"non-positive time step {dt}")
    slopes = face_slopes(state.v)
    source = params.lam * u - params.mu * u * u
    b = u + dt * source
    if ctl.scheme == "implicit":
        x = _solve_transport(b, u, slopes, grid, dt, ctl.transport_tol)
        u_new = b - dt * transport_divergence(x, slopes, grid) if conservative else x
    else:
        u_new = b - dt * transport_divergence(u, slopes, grid)

    if not np.all(np.isfinite(u_new)):
        raise SimulationError(f"non-finite density at t = {state.t + dt:.6g}")
    umin, umax = float(u_new.min()), float(u_new.max())
    if umax > ctl.blowup_threshold:
        raise BlowUpError(
            f"||u||_inf = {umax:.3e} exceeds blowup threshold {ctl.blowup_threshold:.1e} at "
            f"t = {state.t + dt:.6g}: the L-infinity continuation criterion fails numerically")
    if not umin > 0:
        raise PositivityError(f"density lost positivity (min u = {umin:.3e}) at step "
                              f"{state.step_index + 1}; step restriction violated")

    sol = solve_v(Field(grid, u_new), params.v_bar, ctl.elliptic_tol, x0=state.z,
                  preconditioner=ctl.preconditioner)
    t_new = state.t + dt
    new = SimState(u=_with_v(grid, u_new, sol), v=sol.v, t=t_new, dt_last=dt,
                   step_index=state.step_index + 1, z=sol.z)
    if record is not None:
        mass_old = _scale(math.fsum(u.ravel()), grid)
        l2sq_old = _scale(math.fsum((u * u).ravel()), grid)
        dmass = _scale(math.fsum((u_new - u).ravel()), grid)
        resid = dmass / dt - (params.lam * mass_old - params.mu * l2sq_old)
        vv = sol.v.values
        record.append(StepRecord(
            step_index=new.step_index, t=t_new, dt=dt, mass_old=mass_old,
            mass_new=_scale(math.fsum(u_new.ravel()), grid), l2sq_old=l2sq_old, mass_residual=resid,
            min_u=umin, max_u=umax, v_min=float(vv.min()), v_max=float(vv.max()),
            v_interior_max=_interior_max(vv), energy_lhs=face_energy(sol.z),
            energy_rhs=params.v_bar**2 * _scale(math.fsum(u_new.ravel()), grid),
            cg_iterations=sol.iterations))
    return new


Observer = Callable[[SimState], None]


def simulate(params: ModelParams, ctl: StepControl, t_end: float,
             observers: Sequence[Observer] = (), observe_every: Optional[float] = None,
             record_steps: bool = True, state: Optional[SimState] = None) -> Trajectory:
    """Step from ``u0`` (or ``state``) to ``t_end``, storing observed states.

    Observations happen at t = 0, every ``observe_every`` time units, and at
    ``t_end``; steps are shortened to land on them exactly.  Each observer
    is called with every observed state.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    traj = Trajectory(params, ctl)
    state = initial_state(params, ctl) if state is None else state
    t0 = state.t
    t_stop = t0 + t_end

    def observe(s):
        traj.states.append(s)
        for obs in observers:
            obs(s)

    observe(state)
    if t_end == 0:
        return traj
    every = t_end if observe_every is None or observe_every <= 0 else observe_every
    k = 1
    records = traj.steps if record_steps else None
    while state.t < t_stop:
        t_next = min(t0 + k * every, t_stop)
        state = step(state, ctl, params, dt_cap=t_next - state.t, record=records)
        if t_next - state.t <= 1e-12 * max(1.0, abs(t_next)):
            state = replace(state, t=t_next)
            observe(state)
            k += 1
    return traj
