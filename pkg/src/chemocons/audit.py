"""Invariant monitors: turn trajectories into a pass/fail ledger.

Each monitored estimate appears exactly once in an :class:`InvariantReport`
with a verdict and the smallest measured slack (``margin >= 0`` means the
estimate held everywhere it was checked).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .analysis import (DecayRateParams, difference_diagnostics, logistic_exact, subsolution)
from .core import Dirichlet, Field, face_energy, grad_lp_norm, integrate, lp_norm
from .elliptic import elliptic_residual
from .evolve import ModelParams, Trajectory
from .steady import SteadyState

MASS_REL_TOL = 1e-12
V_BOUND_TOL = 1e-9
ENERGY_REL_TOL = 1e-6
SUBSOLUTION_TOL = 1e-6


@dataclass
class EstimateCheck:
    key: str
    statement: str
    passed: bool
    margin: float
    samples: int
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


@dataclass
class InvariantReport:
    mode: str
    checks: List[EstimateCheck] = field(default_factory=list)
    empirical_constants: Dict[str, float] = field(default_factory=dict)
    meta: Dict[str, object] = field(default_factory=dict)

    def add(self, key, statement, passed, margin, samples, detail=""):
        if any(c.key == key for c in self.checks):
            raise ValueError(f"estimate {key!r} already recorded")
        self.checks.append(EstimateCheck(key, statement, bool(passed), float(margin),
                                         int(samples), detail))

    def __getitem__(self, key) -> EstimateCheck:
        for c in self.checks:
            if c.key == key:
                return c
        raise KeyError(key)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[EstimateCheck]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "all_passed": self.passed,
            "estimates": [dict(asdict(c), verdict=c.verdict) for c in self.checks],
            "empirical_constants": dict(self.empirical_constants),
            "meta": dict(self.meta),
        }


def mode_label(grid) -> str:
    return "oracle mode (1-D)" if grid.oracle_mode else "2-D"


def _finite_or_nan(x):
    return float(x) if x is not None and math.isfinite(x) else math.nan


def audit_trajectory(traj: Trajectory, steady: Optional[SteadyState] = None,
                     decay: Optional[DecayRateParams] = None,
                     subsolution_tol: float = SUBSOLUTION_TOL) -> InvariantReport:
    """Check every monitored estimate over a stored trajectory."""
    params = traj.params
    grid = params.grid
    vb = params.v_bar
    rep = InvariantReport(mode=mode_label(grid))
    states, steps = traj.states, traj.steps

    masses = np.array([integrate(s.u) for s in states] + [r.mass_new for r in steps])
    bound = max(params.mass0, params.lam * grid.measure / params.mu)
    allowed = bound * (1 + MASS_REL_TOL)
    rep.add("mass_bound", "||u(t)||_1 <= max{||u0||_1, lambda |Omega| / mu}",
            masses.max() <= allowed, (allowed - masses.max()) / bound, masses.size,
            f"bound {bound:.17g}, max mass {masses.max():.17g}")

    if steps:
        scaled = np.array([abs(r.mass_residual) / (1 + r.mass_old) for r in steps])
        worst = float(scaled.max())
    else:
        worst = 0.0
    rep.add("mass_identity", "d/dt ||u||_1 = lambda ||u||_1 - mu ||u||_2^2 (per step)",
            worst <= MASS_REL_TOL, MASS_REL_TOL - worst, len(steps),
            f"max |residual| / (1 + mass) = {worst:.3e}")

    umins = [float(s.u.values.min()) for s in states] + [r.min_u for r in steps]
    rep.add("positivity", "u > 0 everywhere", min(umins) > 0, min(umins), len(umins))

    vmin = min([float(s.v.values.min()) for s in states] + [r.v_min for r in steps])
    vmax = max([float(s.v.values.max()) for s in states] + [r.v_max for r in steps])
    imax = max([float(np.max(s.v.values[(slice(1, -1),) * grid.dim], initial=-np.inf))
                for s in states] + [r.v_interior_max for r in steps])
    margin = min(vmin + V_BOUND_TOL, vb + V_BOUND_TOL - vmax)
    strict = imax < vb
    rep.add("max_principle", "0 <= v <= v_bar, interior max v < v_bar",
            margin >= 0 and strict, margin, len(states) + len(steps),
            f"min v {vmin:.3e}, max v {vmax:.17g}, interior max v {imax:.17g}")

    lhs = []
    rhs = []
    for s in states:
        z = Field(grid, vb - s.v.values, Dirichlet(0.0))
        lhs.append(face_energy(z))
        rhs.append(vb**2 * integrate(s.u))
    lhs += [r.energy_lhs for r in steps]
    rhs += [r.energy_rhs for r in steps]
    lhs, rhs = np.array(lhs), np.array(rhs)
    slack = rhs * (1 + ENERGY_REL_TOL) - lhs
    rep.add("energy_inequality", "||grad z||_2^2 <= v_bar^2 ||u||_1, z = v_bar - v",
            np.all(slack >= 0), float(slack.min()), lhs.size,
            f"max lhs/rhs = {float(np.max(lhs / np.where(rhs > 0, rhs, np.inf))):.4f}")

    y = logistic_exact(subsolution(params), traj.times)
    mins = np.array([s.u.values.min() for s in states])
    sub_margin = mins - y
    rep.add("subsolution", "min_x u(x,t) >= y(t), y' = lambda y - (mu + v_bar) y^2",
            np.all(sub_margin >= -subsolution_tol), float(sub_margin.min()), len(states),
            f"tolerance {subsolution_tol:.1e}")

    umax = max([lp_norm(s.u, math.inf) for s in states] + [r.max_u for r in steps])
    rep.add("linf_bound", "sup_t ||u(t)||_inf < infinity (below blow-up threshold)",
            umax < traj.control.blowup_threshold, traj.control.blowup_threshold - umax,
            len(umins))
    rep.empirical_constants["sup_u_inf"] = umax

    # empirical constants of the gradient estimates
    gn, c1, grad_inf = [], [], []
    for s in states:
        l1 = integrate(s.u)
        gv4 = grad_lp_norm(s.v, 4) ** 4
        gn.append(gv4 / (vb**4 * l1 * lp_norm(s.u, 2) ** 2))
        ginf = grad_lp_norm(s.v, math.inf)
        grad_inf.append(ginf)
        c1.append(ginf / (vb * lp_norm(s.u, 3)))
    rep.empirical_constants["gn_ratio_sup"] = max(gn)
    rep.empirical_constants["c1_sup"] = max(c1)
    rep.empirical_constants["c22_proxy"] = (max(grad_inf) / vb) ** 2

    u2, gv4t = _spacetime_window_sups(traj)
    finite = math.isfinite(u2) and math.isfinite(gv4t)
    rep.add("spacetime_integrals",
            "int_t^{t+1} int u^2 and int_t^{t+1} int |grad v|^4 / v_bar^4 finite",
            finite, 0.0 if finite else -math.inf, len(states),
            f"sup windows: u^2 {u2:.4g}, |grad v|^4 / v_bar^4 {gv4t:.4g}")
    rep.empirical_constants["c5_u2"] = u2
    rep.empirical_constants["c5_gradv4"] = gv4t

    if steady is not None:
        d = decay or DecayRateParams.for_model(params)
        diags = [difference_diagnostics(s, steady, d) for s in states]
        floor = 1e-12 * max(diags[0].lyap_rhs, np.finfo(float).tiny)
        margins = np.array([g.lyap_margin for g in diags])
        rep.add("lyapunov_difference",
                "||grad v~||^2 + int (u - eps1) v~^2 <= ||V||_inf^2 ||u~||^2 / (4 eps1)",
                np.all(margins >= -floor), float(margins.min()), len(diags),
                f"eps1 {d.eps1:.6g}, round-off floor {floor:.2e}")
        b = steady.bound_report
        rep.add("steady_sandwich",
                "exp(V - v_bar) lambda/mu <= U <= lambda/mu exp(V), 0 < V <= v_bar",
                b.min_margin >= -1e-3, b.min_margin, grid.size,
                f"lower {b.lower_margin:.4g}, upper {b.upper_margin:.4g}, "
                f"v_upper {b.v_upper_margin:.4g}")
    rep.meta.update(t_end=float(traj.times[-1]), steps=len(steps), n_cells=list(grid.n_cells),
                    scheme=traj.control.scheme)
    return rep


def _spacetime_window_sups(traj: Trajectory, tau: float = 1.0):
    """Largest unit-window space-time integrals of u^2 and |grad v|^4 / v_bar^4."""
    t = traj.times
    if t.size < 2:
        return 0.0, 0.0
    u2 = np.array([lp_norm(s.u, 2) ** 2 for s in traj.states])
    g4 = np.array([grad_lp_norm(s.v, 4) ** 4 for s in traj.states]) / traj.params.v_bar**4
    best_u = best_g = 0.0
    starts = t[t <= max(t[-1] - tau, t[0]) + 1e-12]
    for t0 in starts:
        sel = (t >= t0 - 1e-12) & (t <= t0 + tau + 1e-12)
        if sel.sum() < 2:
            continue
        best_u = max(best_u, float(np.trapezoid(u2[sel], t[sel])))
        best_g = max(best_g, float(np.trapezoid(g4[sel], t[sel])))
    return best_u, best_g


def audit_snapshot(u: Field, v: Field, params: ModelParams, tol: float = 1e-8) -> InvariantReport:
    """Check a stored (u, v) pair: positivity, maximum principle, elliptic
    consistency and the energy inequality."""
    grid = u.grid
    vb = params.v_bar
    rep = InvariantReport(mode=mode_label(grid))
    umin = float(u.values.min())
    rep.add("positivity", "u > 0 everywhere", umin > 0, umin, grid.size)
    vmin, vmax = float(v.values.min()), float(v.values.max())
    margin = min(vmin + V_BOUND_TOL, vb + V_BOUND_TOL - vmax)
    rep.add("max_principle", "0 <= v <= v_bar (maximum principle)", margin >= 0, margin,
            grid.size, f"min v {vmin:.6g}, max v {vmax:.6g}, v_bar {vb:.6g}")
    res = np.abs(elliptic_residual(u, v, vb))
    scale = vb * max(float(np.abs(u.values).max()), 1.0)
    rel = float(res.max()) / scale
    rep.add("elliptic_consistency", "-Lap v + u v = 0 with v = v_bar on the boundary",
            rel <= tol, tol - rel, grid.size, f"max residual / (v_bar max u) = {rel:.3e}")
    z = Field(grid, vb - v.values, Dirichlet(0.0))
    lhs, rhs = face_energy(z), vb**2 * integrate(u)
    rep.add("energy_inequality", "||grad z||_2^2 <= v_bar^2 ||u||_1, z = v_bar - v",
            lhs <= rhs * (1 + ENERGY_REL_TOL), rhs * (1 + ENERGY_REL_TOL) - lhs, 1)
    return rep


TIMESERIES_COLUMNS = [
    "t", "mass", "l2", "linf", "min_u", "y_subsolution", "grad_v_l4", "err_u_l2",
    "err_gradv_l2", "margin_mass_bound", "margin_max_principle", "margin_energy",
    "margin_subsolution", "margin_lyapunov",
]


def timeseries_rows(traj: Trajectory, steady: Optional[SteadyState] = None,
                    decay: Optional[DecayRateParams] = None) -> List[dict]:
    params = traj.params
    grid = params.grid
    vb = params.v_bar
    bound = max(params.mass0, params.lam * grid.measure / params.mu)
    sub = subsolution(params)
    d = decay or (DecayRateParams.for_model(params) if steady is not None else None)
    rows = []
    for s in traj.states:
        mass = integrate(s.u)
        z = Field(grid, vb - s.v.values, Dirichlet(0.0))
        y = logistic_exact(sub, s.t)
        row = {
            "t": s.t, "mass": mass, "l2": lp_norm(s.u, 2), "linf": lp_norm(s.u, math.inf),
            "min_u": float(s.u.values.min()), "y_subsolution": y,
            "grad_v_l4": grad_lp_norm(s.v, 4),
            "err_u_l2": math.nan, "err_gradv_l2": math.nan,
            "margin_mass_bound": bound - mass,
            "margin_max_principle": min(float(s.v.values.min()), vb - float(s.v.values.max())),
            "margin_energy": vb**2 * mass - face_energy(z),
            "margin_subsolution": float(s.u.values.min()) - y,
            "margin_lyapunov": math.nan,
        }
        if steady is not None:
            g = difference_diagnostics(s, steady, d)
            row.update(err_u_l2=g.err_u_l2, err_gradv_l2=g.err_gradv_l2,
                       margin_lyapunov=g.lyap_margin)
        rows.append(row)
    return rows
