"""Long-time behaviour: ODE oracles, decay functional, rate fitting, sweeps."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate as spi

from .core import Dirichlet, Field, face_energy, grad_lp_norm, integrate, lp_norm
from .evolve import ModelParams, SimState, StepControl, Trajectory, simulate
from .steady import SteadyState, find_steady


# ---------------------------------------------------------------- logistic ODE

@dataclass(frozen=True)
class LogisticParams:
    """``y' = growth * y - damping * y**2``, ``y(0) = y0``."""

    growth: float
    damping: float
    y0: float

    def __post_init__(self):
        if not self.damping > 0:
            raise ValueError("damping must be positive")
        if not self.y0 > 0:
            raise ValueError("y0 must be positive")
        if not self.growth >= 0:
            raise ValueError("growth must be nonnegative")


def logistic_exact(p: LogisticParams, t):
    """Closed-form logistic solution; vectorised over ``t``."""
    t = np.asarray(t, dtype=float)
    lam, k, y0 = p.growth, p.damping, p.y0
    if lam == 0:
        out = y0 / (1.0 + k * y0 * t)
    else:
        # divided through by lam exp(lam t): finite for large t, no cancellation for small lam
        x = -lam * t
        small = np.abs(x) < 1e-8
        # (1 - exp(x)) / lam, by series where x is tiny or subnormal
        frac = np.where(small, t * (1.0 + 0.5 * x), -np.expm1(x) / lam)
        out = y0 / (np.exp(x) + k * y0 * frac)
    return float(out) if out.ndim == 0 else out


def subsolution(params: ModelParams):
    """Spatially uniform lower barrier for the density."""
    return LogisticParams(params.lam, params.mu + params.v_bar, params.inf_u0)


# ------------------------------------------------------- ODE comparison bound

def comparison_integral(z: float, a: float, b: float, theta: float) -> float:
    """``int_z^inf dy / (a y^theta - b)`` for ``z`` above the equilibrium.

    With ``y = z / s`` the integral becomes
    ``int_0^1 s^(theta-2) z / (a z^theta - b s^theta) ds`` whose only
    singularity, at ``s = 0`` for ``theta < 2``, is handled by an algebraic
    weight.
    """
    az = a * z**theta
    if not az > b:
        return math.inf

    def f(s):
        return z / (az - b * s**theta)

    with warnings.catch_warnings():
        # near the equilibrium quad reports round-off limits; bisection only needs the sign
        warnings.simplefilter("ignore", spi.IntegrationWarning)
        val, _err = spi.quad(f, 0.0, 1.0, weight="alg", wvar=(theta - 2.0, 0.0),
                             epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def ode_comparison_bound(a: float, b: float, tau: float, theta: float,
                         rtol: float = 1e-10) -> float:
    """Bound on ``y(t)`` for ``t > tau`` valid for every solution of ``y' + a y^theta <= b``.

    Returns ``max((b/a)^(1/theta), z*)`` where ``z*`` solves
    ``comparison_integral(z*) = tau``, found by bisection.
    """
    if not (a > 0 and b > 0 and tau > 0):
        raise ValueError("a, b and tau must be positive")
    if not theta > 1:
        raise ValueError("theta must exceed 1 for the tail integral to converge")
    ystar = (b / a) ** (1.0 / theta)

    def g(z):
        return comparison_integral(z, a, b, theta) - tau

    lo = ystar
    hi = 2.0 * ystar
    while g(hi) > 0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return max(ystar, 0.5 * (lo + hi))


# ------------------------------------------------------------ decay functional

@dataclass(frozen=True)
class DecayRateParams:
    eps1: float
    c22_estimate: float
    inf_u0: float
    lam: float
    mu: float
    v_bar: float

    def __post_init__(self):
        upper = min(self.inf_u0, self.lam / (self.mu + self.v_bar))
        if not 0 < self.eps1 < upper:
            raise ValueError(f"eps1 must lie in (0, {upper:.6g}), got {self.eps1}")
        if self.c22_estimate < 0:
            raise ValueError("c22_estimate must be nonnegative")

    @classmethod
    def for_model(cls, params: ModelParams, c22: float = 0.0,
                  eps1: Optional[float] = None) -> "DecayRateParams":
        """Default ``eps1`` is the midpoint of its admissible interval."""
        if eps1 is None:
            eps1 = 0.5 * min(params.inf_u0, params.lam / (params.mu + params.v_bar))
        return cls(eps1=eps1, c22_estimate=c22, inf_u0=params.inf_u0, lam=params.lam,
                   mu=params.mu, v_bar=params.v_bar)


def decay_functional(p: DecayRateParams) -> float:
    """Lower bound for the L^2 decay exponent of ``u - U`` divided by ``2 mu``.

    Negative values mean the formula certifies nothing.
    """
    lam, mu, vb = p.lam, p.mu, p.v_bar
    cap = lam / mu
    return (min(p.inf_u0, lam / (mu + vb)) + math.exp(-vb) * cap - cap
            - vb**2 * p.c22_estimate / mu
            - vb**2 * lam**2 * math.exp(2 * vb) / (4 * p.eps1 * mu**3))


def predicted_rate(p: DecayRateParams) -> float:
    """Certified exponential rate ``2 mu F`` (zero when F <= 0)."""
    return max(0.0, 2.0 * p.mu * decay_functional(p))


def certified_threshold(lam: float, mu: float, inf_u0: float, c22: float,
                        eps1: Optional[float] = None, v_max: float = 10.0,
                        n_grid: int = 400, rtol: float = 1e-10) -> float:
    """Smallest boundary level where the decay functional changes sign.

    ``eps1=None`` uses the per-level midpoint default.  Returns ``inf`` if
    no sign change is found below ``v_max``.
    """
    def f(vb):
        e = eps1 if eps1 is not None else 0.5 * min(inf_u0, lam / (mu + vb))
        return decay_functional(DecayRateParams(e, c22, inf_u0, lam, mu, vb))

    grid = np.linspace(0.0, v_max, n_grid + 1)[1:]
    prev = grid[0] * 1e-3
    for vb in grid:
        if f(vb) <= 0:
            lo, hi = prev, vb
            while hi - lo > rtol * hi:
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
            return 0.5 * (lo + hi)
        prev = vb
    return math.inf


# ------------------------------------------------------------- rate fitting

def fit_decay_rate(series, window: Optional[Tuple[float, float]] = None) -> Tuple[float, float]:
    """Least-squares exponential rate of a positive series.

    Parameters
    ----------
    series : array_like, shape (n, 2)
        ``(t, value)`` pairs.
    window : (t_lo, t_hi), optional
        Closed time window; the whole series by default.

    Returns
    -------
    rate, r_squared
        ``rate = -slope`` of ``log(value)`` against ``t``.
    """
    arr = np.asarray(series, dtype=float)
    t, y = arr[:, 0], arr[:, 1]
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if t.size < 10:
        raise ValueError(f"need at least 10 samples in the fit window, got {t.size}")
    if np.any(y <= 0):
        raise ValueError("nonpositive values in fit window; shrink the window")
    if np.all(y == y[0]):
        return 0.0, 1.0
    ly = np.log(y)
    tc = t - t.mean()
    lc = ly - ly.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ lc) / sxx
    ss_tot = float(lc @ lc)
    ss_res = float(np.sum((lc - slope * tc) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return -slope, r2


def default_fit_window(times, values, start_fraction: float = 0.1,
                       floor_factor: float = 1e3) -> Optional[Tuple[float, float]]:
    """Window from the first drop below ``start_fraction`` of the initial value
    to the first drop below ``floor_factor`` times the round-off floor.

    The floor is the larger of machine epsilon (relative to the initial
    value) and the smallest recorded value, which catches plateaus.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if y.size == 0 or y[0] <= 0:
        return None
    floor = floor_factor * max(np.finfo(float).eps * y[0], float(y.min()))
    start = np.nonzero(y <= start_fraction * y[0])[0]
    if start.size == 0:
        return None
    i0 = int(start[0])
    stop = np.nonzero((y <= floor) & (np.arange(y.size) > i0))[0]
    i1 = int(stop[0]) if stop.size else y.size - 1
    if i1 <= i0:
        return None
    return float(t[i0]), float(t[i1])


# ------------------------------------------------------ difference diagnostics

@dataclass(frozen=True)
class DifferenceDiagnostics:
    err_u_l2: float
    err_gradv_l2: float
    lyap_lhs: float
    lyap_rhs: float

    @property
    def lyap_margin(self) -> float:
        return self.lyap_rhs - self.lyap_lhs


def difference_diagnostics(state: SimState, ss: SteadyState,
                           p: DecayRateParams) -> DifferenceDiagnostics:
    """Norms of ``u - U`` and ``grad(v - V)`` and both sides of the
    chemoattractant difference energy inequality."""
    grid = state.u.grid
    if grid != ss.U.grid:
        raise ValueError("state and steady state live on different grids")
    du = state.u.values - ss.U.values
    dv = Field(grid, state.v.values - ss.V.values, Dirichlet(0.0))
    err_u2 = lp_norm(Field(grid, du), 2) ** 2
    grad_dv2 = face_energy(dv)
    weighted = integrate(Field(grid, (state.u.values - p.eps1) * dv.values**2))
    vmax = lp_norm(ss.V, math.inf)
    return DifferenceDiagnostics(
        err_u_l2=math.sqrt(err_u2), err_gradv_l2=math.sqrt(grad_dv2),
        lyap_lhs=grad_dv2 + weighted, lyap_rhs=vmax**2 * err_u2 / (4 * p.eps1))


# ------------------------------------------------------ convergence experiment

@dataclass
class ConvergenceReport:
    v_bar: float
    F: float
    predicted_rate: float
    c22_estimate: float
    eps1: float
    times: np.ndarray
    err_u: np.ndarray
    err_gradv: np.ndarray
    lyap_margins: np.ndarray
    rate_u: float = math.nan
    r2_u: float = math.nan
    rate_gradv: float = math.nan
    r2_gradv: float = math.nan
    window_u: Optional[Tuple[float, float]] = None
    window_gradv: Optional[Tuple[float, float]] = None
    slack: float = 0.25
    steady: Optional[SteadyState] = field(default=None, repr=False)
    trajectory: Optional[Trajectory] = field(default=None, repr=False)
    error: Optional[str] = None

    @property
    def certified(self) -> bool:
        return self.F > 0

    @property
    def converged(self) -> bool:
        return bool(self.rate_u > 0 and self.rate_gradv > 0)

    @property
    def rate_floor_ok(self) -> bool:
        """Fitted rate clears the certified rate minus the relative slack."""
        if not self.certified:
            return True
        return bool(self.rate_u >= (1.0 - self.slack) * self.predicted_rate)

    @property
    def passed(self) -> bool:
        return self.error is None and self.converged and self.rate_floor_ok


def convergence_experiment(params: ModelParams, ctl: StepControl, t_end: float,
                           p: Optional[DecayRateParams] = None,
                           ss: Optional[SteadyState] = None, observe_every: float = 0.1,
                           slack: float = 0.25, tol_ss: float = 1e-10,
                           observers: Sequence = (), keep_trajectory: bool = False
                           ) -> ConvergenceReport:
    """Run from ``u0`` towards the positive steady state and fit decay rates.

    ``c22`` in the decay functional is replaced by the measured
    ``(sup_t ||grad v||_inf / v_bar)^2`` of this run unless ``p`` is given.
    """
    if ss is None:
        ss = find_steady(params, tol_ss=tol_ss)
    p0 = p if p is not None else DecayRateParams.for_model(params)
    diags: List[DifferenceDiagnostics] = []
    sup_grad = [0.0]

    def observer(state):
        diags.append(difference_diagnostics(state, ss, p0))
        sup_grad[0] = max(sup_grad[0], grad_lp_norm(state.v, math.inf))

    traj = simulate(params, ctl, t_end, observers=[observer, *observers],
                    observe_every=observe_every, record_steps=keep_trajectory)
    c22 = p0.c22_estimate if p is not None else (sup_grad[0] / params.v_bar) ** 2
    pf = DecayRateParams(p0.eps1, c22, p0.inf_u0, p0.lam, p0.mu, p0.v_bar)
    F = decay_functional(pf)
    rep = ConvergenceReport(
        v_bar=params.v_bar, F=F, predicted_rate=predicted_rate(pf), c22_estimate=c22,
        eps1=pf.eps1, times=traj.times, err_u=np.array([d.err_u_l2 for d in diags]),
        err_gradv=np.array([d.err_gradv_l2 for d in diags]),
        lyap_margins=np.array([d.lyap_margin for d in diags]), slack=slack, steady=ss,
        trajectory=traj if keep_trajectory else None)
    for name, series in (("u", rep.err_u), ("gradv", rep.err_gradv)):
        window = default_fit_window(rep.times, series)
        if window is None:
            continue
        try:
            rate, r2 = fit_decay_rate(np.column_stack([rep.times, series]), window)
        except ValueError as exc:
            rep.error = str(exc)
            continue
        setattr(rep, f"rate_{name}", rate)
        setattr(rep, f"r2_{name}", r2)
        setattr(rep, f"window_{name}", window)
    return rep


# ----------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepRow:
    v_bar: float
    F: float
    predicted_rate: float
    fitted_rate: float
    r_squared: float
    converged: bool
    certified: bool
    error: Optional[str] = None


@dataclass
class SweepReport:
    rows: List[SweepRow]

    @property
    def certified_threshold(self) -> float:
        """Largest swept level with a positive decay functional (0 if none)."""
        ok = [r.v_bar for r in self.rows if r.certified and r.error is None]
        return max(ok, default=0.0)

    @property
    def observed_threshold(self) -> float:
        ok = [r.v_bar for r in self.rows if r.converged and r.error is None]
        return max(ok, default=0.0)


def _sweep_row(args) -> SweepRow:
    base, vb, ctl, t_end, observe_every = args
    try:
        rep = convergence_experiment(base.with_(v_bar=vb), ctl, t_end,
                                     observe_every=observe_every)
        return SweepRow(v_bar=vb, F=rep.F, predicted_rate=rep.predicted_rate,
                        fitted_rate=rep.rate_u, r_squared=rep.r2_u, converged=rep.converged,
                        certified=rep.certified, error=rep.error)
    except Exception as exc:  # row failures are recorded, the sweep goes on
        return SweepRow(v_bar=vb, F=math.nan, predicted_rate=math.nan, fitted_rate=math.nan,
                        r_squared=math.nan, converged=False, certified=False,
                        error=f"{type(exc).__name__}: {exc}")


def threshold_sweep(base: ModelParams, v_bar_grid: Sequence[float], ctl: StepControl,
                    t_end: float, observe_every: float = 0.1, workers: int = 1) -> SweepReport:
    """Convergence experiment for every boundary level in ``v_bar_grid``.

    Rows are independent; with ``workers > 1`` they run in separate
    processes and are collected in grid order.
    """
    if any(not vb > 0 for vb in v_bar_grid):
        raise ValueError("every v_bar must be positive")
    jobs = [(base, float(vb), ctl, t_end, observe_every) for vb in v_bar_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    return SweepReport(rows)
