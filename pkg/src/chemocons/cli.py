"""Command line entry point.

    chemocons {simulate,steady,convergence,sweep,audit} --config run.json
              [--output DIR] [--observe DT]

Exit status is 0 only when every monitored estimate passes; 1 on a monitor
failure, 2 when a solver aborts and 3 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from .analysis import DecayRateParams, convergence_experiment, threshold_sweep
from .audit import (InvariantReport, TIMESERIES_COLUMNS, audit_snapshot, audit_trajectory,
                    mode_label, timeseries_rows)
from .elliptic import EllipticError
from .evolve import SimulationError, simulate
from .io import (EXPERIMENTS, ConfigError, RunConfig, emit_plot_data, load_config,
                 read_snapshot, write_csv, write_json, write_snapshot)
from .steady import check_instability_trivial, check_trivial_steady, find_steady

log = logging.getLogger("chemocons")

EXIT_OK, EXIT_FAIL, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2, 3

SWEEP_COLUMNS = ["v_bar", "F", "predicted_rate", "fitted_rate", "r_squared", "converged",
                 "certified", "failed"]


def _snapshot_writer(cfg: RunConfig, prefix: str = "obs"):
    count = [0]
    out = cfg.output_dir / "snapshots"

    def observer(state):
        k = count[0]
        count[0] += 1
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            write_snapshot(out / f"{prefix}_{k:05d}.snap", {"u": state.u, "v": state.v}, state.t)
    return observer


def _config_summary(cfg: RunConfig) -> dict:
    p = cfg.params
    return {
        "experiment": cfg.experiment,
        "lambda": p.lam, "mu": p.mu, "v_bar": p.v_bar,
        "n_cells": list(p.grid.n_cells), "extent": list(p.grid.extent),
        "mass0": p.mass0, "inf_u0": p.inf_u0,
        "t_end": cfg.t_end, "observation_interval": cfg.observation_interval,
        "control": asdict(cfg.control),
    }


def _finish(cfg: RunConfig, report: InvariantReport, extra: Optional[dict] = None) -> int:
    body = {"config": _config_summary(cfg), "invariants": report.to_dict()}
    body.update(extra or {})
    write_json(cfg.output_dir / "report.json", body)
    for c in report.checks:
        line = f"{c.verdict} {c.key}: margin {c.margin:.3e}"
        if c.passed:
            log.info(line)
        else:
            print(f"{line} ({c.statement}) {c.detail}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def run_simulate(cfg: RunConfig) -> int:
    traj = simulate(cfg.params, cfg.control, cfg.t_end, observers=[_snapshot_writer(cfg)],
                    observe_every=cfg.observation_interval)
    write_csv(cfg.output_dir / "timeseries.csv", timeseries_rows(traj), TIMESERIES_COLUMNS)
    return _finish(cfg, audit_trajectory(traj))


def _steady_kwargs(cfg: RunConfig) -> dict:
    return {"tol_ss": float(cfg.steady.get("tol", 1e-10)),
            "t_cap": float(cfg.steady.get("t_cap", 500.0))}


def run_steady(cfg: RunConfig) -> int:
    p = cfg.params
    ss = find_steady(p, **_steady_kwargs(cfg))
    write_snapshot(cfg.output_dir / "snapshots" / "steady.snap", {"U": ss.U, "V": ss.V},
                   ss.marched_time)
    rep = InvariantReport(mode=mode_label(p.grid))
    rep.add("steady_residual", "pseudo-time residual ||u^{n+1} - u^n||_inf / dt <= tol_ss",
            ss.converged, ss.tol - ss.residual, ss.steps, f"marched to t = {ss.marched_time:.6g}")
    b = ss.bound_report
    rep.add("steady_sandwich",
            "exp(V - v_bar) lambda/mu <= U <= lambda/mu exp(V), 0 < V <= v_bar",
            b.min_margin >= -1e-3, b.min_margin, p.grid.size,
            f"lower {b.lower_margin:.6g}, upper {b.upper_margin:.6g}, "
            f"v_upper {b.v_upper_margin:.6g}, v_lower {b.v_lower_margin:.6g}")
    triv = check_trivial_steady(p)
    rep.add("trivial_steady", "(0, v_bar) solves the discrete steady problem",
            triv.max_residual <= 1e-12, 1e-12 - triv.max_residual, p.grid.size)
    delta = float(cfg.steady.get("instability_delta", 1e-3))
    g = check_instability_trivial(p, delta)
    rep.add("trivial_instability", "mass grows initially from u0 = delta near (0, v_bar)",
            g.mass_increasing and g.relative_error <= 0.01, 0.01 - g.relative_error, 1,
            f"growth rate {g.initial_rate:.6g} vs linearized {g.linearized_rate:.6g}")
    return _finish(cfg, rep, {"steady": {"residual": ss.residual, "marched_time": ss.marched_time,
                                         "steps": ss.steps, "bounds": asdict(b)}})


def run_convergence(cfg: RunConfig) -> int:
    p = cfg.params
    ss = find_steady(p, **_steady_kwargs(cfg))
    slack = float(cfg.steady.get("rate_slack", 0.25))
    cr = convergence_experiment(p, cfg.control, cfg.t_end, ss=ss,
                                observe_every=cfg.observation_interval, slack=slack,
                                observers=[_snapshot_writer(cfg)], keep_trajectory=True)
    traj = cr.trajectory
    decay = DecayRateParams.for_model(p, c22=cr.c22_estimate)
    write_csv(cfg.output_dir / "timeseries.csv", timeseries_rows(traj, ss, decay),
              TIMESERIES_COLUMNS)
    rep = audit_trajectory(traj, steady=ss, decay=decay)
    floor = (1 - slack) * cr.predicted_rate if cr.certified else 0.0
    ok = cr.passed and cr.r2_u >= 0.99
    rep.add("exponential_convergence",
            "||u - U||_2 and ||grad(v - V)||_2 decay exponentially, rate >= 2 mu F - slack",
            ok, cr.rate_u - floor if math.isfinite(cr.rate_u) else -math.inf, cr.times.size,
            f"rate_u {cr.rate_u:.6g} (r2 {cr.r2_u:.6f}), rate_gradv {cr.rate_gradv:.6g}, "
            f"predicted {cr.predicted_rate:.6g}, F {cr.F:.6g}"
            + (f", fit error: {cr.error}" if cr.error else ""))
    rep.empirical_constants["c22_proxy"] = cr.c22_estimate
    extra = {"convergence": {
        "F": cr.F, "predicted_rate": cr.predicted_rate, "certified": cr.certified,
        "eps1": cr.eps1, "c22_estimate": cr.c22_estimate, "rate_u": cr.rate_u,
        "r2_u": cr.r2_u, "rate_gradv": cr.rate_gradv, "r2_gradv": cr.r2_gradv,
        "window_u": cr.window_u, "window_gradv": cr.window_gradv, "slack": slack}}
    return _finish(cfg, rep, extra)


def run_sweep(cfg: RunConfig) -> int:
    p = cfg.params
    grid = [float(x) for x in cfg.sweep["v_bar_grid"]]
    res = threshold_sweep(p, grid, cfg.control, cfg.t_end,
                          observe_every=cfg.observation_interval,
                          workers=int(cfg.sweep.get("workers", 1)))
    rows = [dict(asdict(r), failed=r.error is not None) for r in res.rows]
    write_csv(cfg.output_dir / "sweep.csv", rows, SWEEP_COLUMNS)
    rep = InvariantReport(mode=mode_label(p.grid))
    failed = [r for r in res.rows if r.error is not None]
    rep.add("sweep_rows", "every sweep row ran to completion", not failed, -len(failed),
            len(res.rows), "; ".join(f"v_bar={r.v_bar}: {r.error}" for r in failed))
    bad = [r.v_bar for r in res.rows if r.certified and not r.converged]
    rep.add("certified_rows_converge", "F(v_bar) > 0 implies observed exponential convergence",
            not bad, -len(bad), sum(r.certified for r in res.rows),
            f"certified but not converged: {bad}" if bad else "")
    extra = {"sweep": {
        "certified_threshold_grid": res.certified_threshold,
        "observed_threshold_grid": res.observed_threshold,
        "rows": [asdict(r) for r in res.rows]}}
    return _finish(cfg, rep, extra)


def run_audit(cfg: RunConfig) -> int:
    snap = Path(cfg.audit["snapshot"])
    if not snap.is_absolute() and cfg.source is not None:
        snap = cfg.source.parent / snap
    header, fields = read_snapshot(snap)
    u = fields.get(cfg.audit.get("u_field", "u"))
    v = fields.get(cfg.audit.get("v_field", "v"))
    if u is None or v is None:
        raise ConfigError([("audit.snapshot", f"snapshot fields {header['fields']} lack u/v")])
    rep = audit_snapshot(u, v, cfg.params)
    rep.meta.update(snapshot=str(snap), time=header["time"])
    return _finish(cfg, rep)


RUNNERS = {"simulate": run_simulate, "steady": run_steady, "convergence": run_convergence,
           "sweep": run_sweep, "audit": run_audit}


def run(cfg: RunConfig) -> int:
    """Execute the configured experiment and write its artifacts."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    try:
        status = RUNNERS[cfg.experiment](cfg)
    except (SimulationError, EllipticError) as exc:
        print(f"ABORT {type(exc).__name__}: {exc}", file=sys.stderr)
        write_json(cfg.output_dir / "report.json",
                   {"config": _config_summary(cfg),
                    "abort": {"error": type(exc).__name__, "message": str(exc)}})
        return EXIT_ABORT
    if (cfg.output_dir / "timeseries.csv").exists() or (cfg.output_dir / "sweep.csv").exists():
        emit_plot_data(cfg.output_dir)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemocons", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        sp.add_argument("--output", type=Path, default=None,
                        help="output directory (overrides $CHEMOCONS_OUTPUT_DIR and config)")
        sp.add_argument("--observe", type=float, default=None,
                        help="observation interval (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true", help="log every verdict")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = load_config(args.config, output_override=args.output)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.experiment != args.experiment:
        log.info("subcommand %s overrides config experiment %s", args.experiment, cfg.experiment)
        cfg = replace(cfg, experiment=args.experiment)
        if args.experiment == "sweep" and "v_bar_grid" not in cfg.sweep:
            print("config error at sweep.v_bar_grid: required for sweep", file=sys.stderr)
            return EXIT_CONFIG
        if args.experiment == "audit" and "snapshot" not in cfg.audit:
            print("config error at audit.snapshot: required for audit", file=sys.stderr)
            return EXIT_CONFIG
    if args.observe is not None:
        if not args.observe > 0:
            print("error: --observe must be positive", file=sys.stderr)
            return EXIT_CONFIG
        cfg = replace(cfg, observation_interval=args.observe)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
