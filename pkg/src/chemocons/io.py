"""Configuration loading and on-disk formats.

Snapshot layout: an 8-byte little-endian header length, a UTF-8 JSON
header, then one block of raw little-endian float64 values per field in
row-major order.
"""
from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Field, Grid
from .evolve import ModelParams, StepControl

SNAPSHOT_VERSION = 1
EXPERIMENTS = ("simulate", "steady", "convergence", "sweep", "audit")
OUTPUT_ENV = "CHEMOCONS_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` holds ``(path, message)`` pairs."""

    def __init__(self, errors: Sequence[Tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


# ----------------------------------------------------------------- snapshots

def write_snapshot(path, fields: Dict[str, Field], time: float) -> Path:
    if not fields:
        raise ValueError("no fields to write")
    grids = {f.grid for f in fields.values()}
    if len(grids) != 1:
        raise ValueError("all snapshot fields must share one grid")
    grid = grids.pop()
    header = {
        "format_version": SNAPSHOT_VERSION,
        "byte_order": "little",
        "dtype": "float64",
        "order": "C",
        "grid_shape": list(grid.shape),
        "extent": list(grid.extent),
        "h": list(grid.h),
        "time": float(time),
        "fields": list(fields),
    }
    raw = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for f in fields.values():
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))
    return path


def read_snapshot(path) -> Tuple[dict, Dict[str, Field]]:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated snapshot")
    (n,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8:8 + n].decode())
    if header.get("format_version") != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {header.get('format_version')}")
    grid = Grid(tuple(header["extent"]), tuple(header["grid_shape"]))
    payload = data[8 + n:]
    names = header["fields"]
    expected = len(names) * grid.size * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype="<f8").reshape((len(names),) + grid.shape)
    return header, {name: Field(grid, arr[i].astype(float)) for i, name in enumerate(names)}


# ----------------------------------------------------------------- tables

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return repr(float(x))


def write_csv(path, rows: List[dict], columns: Sequence[str]) -> Path:
    """Comma separated, shortest round-trip float repr (deterministic)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> Tuple[List[str], np.ndarray]:
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split(",")
    if len(lines) == 1:
        return cols, np.empty((0, len(cols)))
    return cols, np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats so the report is strict JSON."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default))),
                      indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return path


# ----------------------------------------------------------------- config

@dataclass
class RunConfig:
    params: ModelParams
    control: StepControl
    experiment: str
    t_end: float
    observation_interval: float
    output_dir: Path
    snapshot_every: int = 1
    steady: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    source: Optional[Path] = None


_ASSUMPTIONS = {
    "mu": "crowding coefficient positivity (mu > 0)",
    "lambda": "nonnegative growth rate (lambda >= 0)",
    "v_bar": "positive boundary chemoattractant (v_bar > 0)",
}


def _num(d, key, path, errors, default=None, cond=None, why=""):
    if key not in d:
        if default is None:
            errors.append((f"{path}.{key}" if path else key, "required field missing"))
        return default
    val = d[key]
    where = f"{path}.{key}" if path else key
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        errors.append((where, f"expected a finite number, got {val!r}"))
        return default
    if cond is not None and not cond(val):
        errors.append((where, f"{val!r} violates {why}"))
        return default
    return float(val)


def _grid_from(model: dict, errors) -> Optional[Grid]:
    g = model.get("grid")
    if g is None:
        g = {"N": model.get("N")} if "N" in model else None
    if not isinstance(g, dict):
        errors.append(("model.grid", "give model.N or a model.grid object"))
        return None
    n = g.get("N")
    if isinstance(n, int) and not isinstance(n, bool):
        n = [n] * int(g.get("dim", 2))
    if (not isinstance(n, list) or not n or len(n) > 2
            or any(not isinstance(k, int) or isinstance(k, bool) or k < 2 for k in n)):
        errors.append(("model.grid.N", f"cells per axis must be integers >= 2, got {g.get('N')!r}"))
        return None
    ext = g.get("extent", [1.0] * len(n))
    if (not isinstance(ext, list) or len(ext) != len(n)
            or any(not isinstance(e, (int, float)) or not e > 0 for e in ext)):
        errors.append(("model.grid.extent", "extent must list one positive length per axis"))
        return None
    return Grid(tuple(float(e) for e in ext), tuple(n))


def _initial_data(spec, grid: Grid, base: Path, errors) -> Optional[Field]:
    path = "model.u0"
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        spec = {"type": "constant", "value": spec}
    if not isinstance(spec, dict):
        errors.append((path, "expected an object with a 'type'"))
        return None
    kind = spec.get("type")
    if kind == "constant":
        val = _num(spec, "value", path, errors, cond=lambda x: x > 0,
                   why="positive initial data (u0 > 0 on the closed domain)")
        return None if val is None else Field.constant(grid, val)
    if kind == "bump":
        b = _num(spec, "base", path, errors, cond=lambda x: x > 0,
                 why="positive initial data (u0 > 0 on the closed domain)")
        a = _num(spec, "amplitude", path, errors, cond=lambda x: x >= 0, why="amplitude >= 0")
        w = _num(spec, "width", path, errors, cond=lambda x: x > 0, why="width > 0")
        if None in (b, a, w):
            return None
        centre = [0.5 * e for e in grid.extent]

        def bump(*xs):
            r2 = sum((x - c) ** 2 for x, c in zip(xs, centre))
            return b + a * np.exp(-r2 / (2 * w * w))
        return Field.from_function(grid, bump)
    if kind == "snapshot":
        file = spec.get("path")
        if not isinstance(file, str):
            errors.append((f"{path}.path", "snapshot path required"))
            return None
        p = Path(file) if Path(file).is_absolute() else base / file
        try:
            _, flds = read_snapshot(p)
        except (OSError, ValueError, KeyError) as exc:
            errors.append((f"{path}.path", f"cannot read snapshot: {exc}"))
            return None
        name = spec.get("field", "u")
        if name not in flds:
            errors.append((f"{path}.field", f"snapshot has no field {name!r}"))
            return None
        f = flds[name]
        if f.grid != grid:
            errors.append((path, f"snapshot grid {f.grid.n_cells} differs from model grid "
                                 f"{grid.n_cells}"))
            return None
        if not f.values.min() > 0:
            errors.append((path, "snapshot field violates positive initial data (u0 > 0)"))
            return None
        return f
    errors.append((f"{path}.type", f"unknown initial data type {kind!r} "
                                   "(constant, bump or snapshot)"))
    return None


def parse_config(raw: dict, base: Path = Path("."), output_override=None) -> RunConfig:
    """Validate a decoded configuration; all problems are reported together."""
    errors: List[Tuple[str, str]] = []
    if not isinstance(raw, dict):
        raise ConfigError([("", "top level must be a JSON object")])
    model = raw.get("model")
    if not isinstance(model, dict):
        raise ConfigError([("model", "required object missing")])
    lam = _num(model, "lambda", "model", errors, cond=lambda x: x >= 0, why=_ASSUMPTIONS["lambda"])
    mu = _num(model, "mu", "model", errors, cond=lambda x: x > 0, why=_ASSUMPTIONS["mu"])
    vb = _num(model, "v_bar", "model", errors, cond=lambda x: x > 0, why=_ASSUMPTIONS["v_bar"])
    grid = _grid_from(model, errors)
    u0 = None
    if grid is not None:
        if "u0" not in model:
            errors.append(("model.u0", "required field missing"))
        else:
            u0 = _initial_data(model["u0"], grid, base, errors)

    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        errors.append(("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {exp!r}"))
    needs_t = exp in ("simulate", "convergence", "sweep")
    t_end = _num(raw, "t_end", "", errors, default=None if needs_t else 0.0,
                 cond=lambda x: x >= 0, why="t_end >= 0")
    obs = _num(raw, "observation_interval", "", errors, default=0.5,
               cond=lambda x: x > 0, why="observation_interval > 0")
    snap_every = raw.get("snapshot_every", 1)
    if not isinstance(snap_every, int) or isinstance(snap_every, bool) or snap_every < 0:
        errors.append(("snapshot_every", "must be a nonnegative integer (0 disables)"))

    ctl = StepControl()
    craw = raw.get("control", {})
    if not isinstance(craw, dict):
        errors.append(("control", "must be an object"))
        craw = {}
    known = set(StepControl.__dataclass_fields__)
    for k in craw:
        if k not in known:
            errors.append((f"control.{k}", "unknown control field"))
    try:
        ctl = StepControl(**{k: v for k, v in craw.items() if k in known})
    except (TypeError, ValueError) as exc:
        errors.append(("control", str(exc)))

    for section in ("steady", "sweep", "audit"):
        if not isinstance(raw.get(section, {}), dict):
            errors.append((section, "must be an object"))
    sweep = raw.get("sweep", {}) if isinstance(raw.get("sweep", {}), dict) else {}
    if exp == "sweep":
        g = sweep.get("v_bar_grid")
        if (not isinstance(g, list) or not g
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0
                       for x in g)):
            errors.append(("sweep.v_bar_grid", "list of positive boundary levels required"))
    audit = raw.get("audit", {}) if isinstance(raw.get("audit", {}), dict) else {}
    if exp == "audit" and not isinstance(audit.get("snapshot"), str):
        errors.append(("audit.snapshot", "path of the snapshot to audit required"))

    if errors:
        raise ConfigError(errors)
    params = ModelParams(lam=lam, mu=mu, v_bar=vb, u0=u0)
    out = output_override or os.environ.get(OUTPUT_ENV) or raw.get("output_dir", "chemocons_out")
    out = Path(out)
    if not out.is_absolute() and output_override is None and not os.environ.get(OUTPUT_ENV):
        out = base / out
    return RunConfig(params=params, control=ctl, experiment=exp, t_end=t_end,
                     observation_interval=obs, output_dir=out, snapshot_every=snap_every,
                     steady=raw.get("steady", {}), sweep=sweep, audit=audit)


def load_config(path, output_override=None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"JSON parse error: {exc}")]) from exc
    cfg = parse_config(raw, base=path.parent, output_override=output_override)
    cfg.source = path
    return cfg


# ----------------------------------------------------------------- plot data

def _write_dat(path: Path, header: Sequence[str], rows) -> Path:
    lines = ["# " + " ".join(header)]
    lines += [" ".join(_fmt(x) for x in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_plot_data(artifact_dir) -> List[Path]:
    """Turn ``timeseries.csv`` / ``sweep.csv`` in a run directory into
    whitespace-delimited ``.dat`` files plus a gnuplot script."""
    d = Path(artifact_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"artifact directory not found: {d}")
    ts, sw = d / "timeseries.csv", d / "sweep.csv"
    if not ts.exists() and not sw.exists():
        raise FileNotFoundError(f"no timeseries.csv or sweep.csv in {d}")
    written: List[Path] = []
    script = ["set terminal pngcairo size 900,600", "set key outside"]
    if ts.exists():
        cols, data = read_csv(ts)
        idx = {c: i for i, c in enumerate(cols)}
        keep = ["t", "mass", "l2", "linf", "min_u", "y_subsolution", "grad_v_l4"]
        written.append(_write_dat(d / "timeseries.dat", keep,
                                  [[r[idx[c]] for c in keep] for r in data]))
        script += ["set output 'timeseries.png'", "set xlabel 't'",
                   "plot 'timeseries.dat' u 1:2 w l t 'mass', '' u 1:5 w l t 'min u', "
                   "'' u 1:6 w l dt 2 t 'logistic sub-solution'"]
        rows = []
        meta = _read_report(d)
        rate = meta.get("predicted_rate")
        for r in data:
            eu = r[idx["err_u_l2"]]
            if not math.isfinite(eu):
                continue
            rows.append([r[idx["t"]], eu, r[idx["err_gradv_l2"]], math.nan])
        if rows and rate is not None:
            t0, e0 = rows[0][0], rows[0][1]
            for row in rows:
                row[3] = e0 * math.exp(-rate * (row[0] - t0))
        if rows:
            written.append(_write_dat(d / "error_decay.dat",
                                      ["t", "err_u_l2", "err_gradv_l2", "predicted_envelope"],
                                      rows))
            script += ["set output 'error_decay.png'", "set logscale y",
                       "plot 'error_decay.dat' u 1:2 w l t '||u - U||_2', "
                       "'' u 1:3 w l t '||grad(v - V)||_2', '' u 1:4 w l dt 2 t 'predicted'",
                       "unset logscale y"]
    if sw.exists():
        cols, data = read_csv(sw)
        idx = {c: i for i, c in enumerate(cols)}
        written.append(_write_dat(d / "threshold.dat", ["v_bar", "F", "fitted_rate"],
                                  [[r[idx["v_bar"]], r[idx["F"]], r[idx["fitted_rate"]]]
                                   for r in data]))
        script += ["set output 'threshold.png'", "set xlabel 'v_bar'",
                   "plot 'threshold.dat' u 1:2 w lp t 'F(v_bar)', '' u 1:3 w lp t 'fitted rate'"]
    gp = d / "plots.gp"
    gp.write_text("\n".join(script) + "\n")
    written.append(gp)
    return written


def _read_report(d: Path) -> dict:
    p = d / "report.json"
    if not p.exists():
        return {}
    try:
        rep = json.loads(p.read_text())
    except json.JSONDecodeError:
        return {}
    return rep.get("convergence", {}) or {}
