"""Command-line front end driven by TOML experiment manifests.

A manifest is one TOML document with an optional ``id``, ``command`` and
``expect`` plus the blocks ``[damping]``, ``[problem]``, ``[grid]``,
``[data]``, ``[run]`` and, for parameter sweeps, ``[scan]``. Every run
writes its artifacts under ``<out>/<id>/``: CSV tables, JSON reports, the
resolved config (``config.json``) and ``manifest.json`` with a digest of
config and code.

Exit status: 0 on success, 2 when the manifest declares ``expect`` and the
outcome differs, 1 on schema or numerical errors.
"""

import argparse
import copy
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, semilinear
from .damping import DampingSpec, b_infinity, solve_g, validate_effective
from .decay_character import (
    PowerCutoff,
    SpectralProfile,
    estimate_decay_character,
)
from .decay_verify import (
    CONSISTENT,
    VIOLATED,
    anchored_xi_grid,
    clock_values,
    envelope_stability,
    fit_observed_rate,
    heat_oracle,
    heat_rate_exponent,
    predicted_rate,
)
from .exponents import ExponentInputs, exponent_table
from .linear_modes import reconstruct_norms
from .phase_zones import ZONE_ORDER, ZoneParams, mass, weight, zone_codes

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2
MAX_SCAN_POINTS = 10_000


class ManifestError(ValueError):
    """The manifest does not fit the schema of its subcommand."""


# -- schema -------------------------------------------------------------------------

BLOCK_KEYS = {
    "damping": {"family", "mu", "kappa", "value", "sigma", "delta", "path"},
    "problem": {"sigma", "delta", "gamma", "n", "p", "coefficient", "alphas", "statement",
                "quantity", "alpha", "r0", "r1", "branch", "alpha_order", "s_values", "kind",
                "zone_params"},
    "grid": {"n", "L", "M", "t_min", "t_max", "n_t", "xi_min", "xi_max", "n_xi"},
    "data": {"u0", "u1", "profile", "csv"},
    "run": {"horizon", "times", "t_min", "t_max", "n_t", "spacing", "n_nodes", "xi_min",
            "xi_max", "rtol", "tail_tolerance", "escape_threshold", "dt_safety", "n_out",
            "fit_window", "window", "tolerance", "residual_tol", "mode", "g", "rho_max",
            "k_min", "k_max", "p_values", "t_range", "s_range", "xi_range", "shape",
            "amplitude", "threshold", "fit_predicted"},
}
TOP_KEYS = {"id", "command", "description", "expect", "scan"} | set(BLOCK_KEYS)

REQUIRED = {
    "validate-damping": ("damping",),
    "decay-character": ("data",),
    "zones": ("damping", "grid"),
    "solve-linear": ("damping", "data"),
    "verify-decay": ("problem",),
    "solve-semilinear": ("problem", "data"),
    "exponents": ("problem",),
}


def check_schema(cfg, command):
    if command not in REQUIRED:
        raise ManifestError(f"unknown subcommand {command!r}")
    if not cfg:
        raise ManifestError("empty manifest")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ManifestError(f"unknown top-level keys {sorted(unknown)}")
    for block, allowed in BLOCK_KEYS.items():
        if block not in cfg:
            continue
        if not isinstance(cfg[block], dict):
            raise ManifestError(f"[{block}] must be a table")
        extra = set(cfg[block]) - allowed
        if extra:
            raise ManifestError(f"unknown keys in [{block}]: {sorted(extra)}")
    missing = [b for b in REQUIRED[command] if b not in cfg]
    if missing:
        raise ManifestError(f"{command} needs the blocks {missing}")


# -- output helpers -------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def dumps_csv(columns):
    """Columns (equal-length sequences) as CSV text with round-trip floats."""
    names = list(columns)
    cols = [list(columns[k]) for k in names]
    if len({len(c) for c in cols}) > 1:
        raise ValueError("CSV columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def read_csv_columns(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise ManifestError(f"{path}: no data rows")
    head, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(head)}


def code_digest():
    """SHA-256 over the package sources, in file-name order."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def config_digest(cfg):
    return hashlib.sha256(json.dumps(_jsonable(cfg), sort_keys=True).encode()).hexdigest()


@dataclass
class RunResult:
    outcome: str
    metric: float = math.nan
    artifacts: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)
    stdout: str = ""


# -- block readers ---------------------------------------------------------------------

def _problem(cfg):
    return dict(cfg.get("problem", {}))


def _run(cfg):
    return dict(cfg.get("run", {}))


def _damping(cfg, base_dir):
    prob = _problem(cfg)
    block = cfg.get("damping", {"family": "constant"})
    return DampingSpec.from_config(block, sigma=prob.get("sigma"), delta=prob.get("delta"),
                                   base_dir=base_dir)


def _profile(block, n, base_dir):
    if block is None:
        return SpectralProfile(n, PowerCutoff(0.0, 0.0))
    return SpectralProfile.from_config(block, n, base_dir)


def _times(run, default=(1.0, 1e4, 60), spacing="geometric"):
    if "times" in run:
        t = np.asarray(run["times"], dtype=float)
    else:
        lo = float(run.get("t_min", default[0]))
        hi = float(run.get("t_max", default[1]))
        m = int(run.get("n_t", default[2]))
        kind = run.get("spacing", spacing)
        if kind == "geometric":
            t = np.geomspace(lo, hi, m)
        elif kind == "linear":
            t = np.linspace(lo, hi, m)
        else:
            raise ManifestError(f"unknown spacing {kind!r}")
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise ManifestError("times must be increasing")
    return t


def _rtol(run, opts, default):
    return float(opts.tol if opts.tol is not None else run.get("rtol", default))


# -- subcommands ------------------------------------------------------------------------

def cmd_validate_damping(cfg, opts, base_dir):
    spec = _damping(cfg, base_dir)
    run = _run(cfg)
    horizon = float(run.get("horizon", 1000.0))
    rep = validate_effective(spec, horizon)
    report = rep.to_dict()
    report["B_infinity"] = b_infinity(spec)
    report["nondecreasing"] = spec.is_nondecreasing()
    artifacts = {"report.json": report}
    if run.get("g", False):
        traj = solve_g(spec, horizon)
        report["g"] = {k: getattr(traj, k) for k in
                       ("B0", "A0", "B1", "B2", "T0", "T1", "B_inf", "band_ok", "slope_bound",
                        "slope_ok")}
        artifacts["g.csv"] = {"t": traj.times, "g": traj.g, "dg": traj.dg, "bg": traj.bg}
    resolved = {"damping": spec.to_config(), "run": {"horizon": horizon, "g": bool(run.get("g"))}}
    return RunResult("effective" if rep.effective else "not_effective", b_infinity(spec),
                     artifacts, resolved)


def cmd_decay_character(cfg, opts, base_dir):
    prob, run, data = _problem(cfg), _run(cfg), cfg["data"]
    n = int(prob.get("n", 1))
    block = data.get("profile", data.get("u0"))
    if block is None:
        raise ManifestError("decay-character needs [data.profile] or [data.u0]")
    prof = _profile(block, n, base_dir)
    kw = {k: run[k] for k in ("rho_max", "k_min", "k_max", "residual_tol") if k in run}
    est = estimate_decay_character(prof, **kw)
    artifacts = {"estimate.json": est.to_dict()}
    if est.rho:
        artifacts["energy.csv"] = {"rho": est.rho, "energy": est.energy}
    resolved = {"problem": {"n": n}, "data": {"profile": prof.to_config()}, "run": kw}
    return RunResult(est.status, est.r_star, artifacts, resolved)


def cmd_zones(cfg, opts, base_dir):
    spec = _damping(cfg, base_dir)
    grid = cfg["grid"]
    params = ZoneParams.from_config(_problem(cfg).get("zone_params"))
    t = np.geomspace(float(grid.get("t_min", 0.01)), float(grid.get("t_max", 100.0)),
                     int(grid.get("n_t", 40)))
    xi = np.geomspace(float(grid.get("xi_min", 1e-3)), float(grid.get("xi_max", 10.0)),
                      int(grid.get("n_xi", 40)))
    T, X = np.meshgrid(t, xi, indexing="ij")
    T, X = T.ravel(), X.ravel()
    codes = zone_codes(spec, params, T, X)
    labels = [ZONE_ORDER[c].value if c >= 0 else "none" for c in codes]
    counts = {z.value: int(np.sum(codes == i)) for i, z in enumerate(ZONE_ORDER)}
    counts["none"] = int(np.sum(codes < 0))
    artifacts = {"zones.csv": {"t": T, "xi": X, "label": labels, "weight": weight(spec, T, X),
                               "mass": mass(spec, T, X)},
                 "summary.json": {"counts": counts}}
    resolved = {"damping": spec.to_config(), "zone_params": vars(params).copy(),
                "grid": {"t": [t[0], t[-1], t.size], "xi": [xi[0], xi[-1], xi.size]}}
    return RunResult("ok", float(counts["none"]), artifacts, resolved)


def _linear_run(cfg, opts, base_dir, default_times=(1.0, 1e4, 60)):
    spec = _damping(cfg, base_dir)
    prob, run, data = _problem(cfg), _run(cfg), cfg.get("data", {})
    n = int(prob.get("n", 1))
    alphas = tuple(float(a) for a in prob.get("alphas", [0.0]))
    prof = (_profile(data.get("u0"), n, base_dir), _profile(data.get("u1"), n, base_dir))
    t = _times(run, default_times)
    kw = dict(n_nodes=int(run.get("n_nodes", 96)), xi_min=float(run.get("xi_min", 1e-4)),
              xi_max=float(run.get("xi_max", 32.0)), rtol=_rtol(run, opts, 1e-9),
              tail_tolerance=float(run.get("tail_tolerance", 0.01)))
    res = reconstruct_norms(spec, prof, alphas=alphas, t_grid=t, **kw)
    resolved = {"damping": spec.to_config(), "problem": {"n": n, "alphas": list(alphas)},
                "data": {"u0": prof[0].to_config(), "u1": prof[1].to_config()},
                "run": dict(kw, times=[t[0], t[-1], t.size])}
    return spec, res, resolved


def cmd_solve_linear(cfg, opts, base_dir):
    spec, res, resolved = _linear_run(cfg, opts, base_dir)
    summary = {"nsteps": res.nsteps, "max_tail_bound": float(np.max(res.tail_bound)),
               "max_quad_error": float(np.max(res.quad_error))}
    return RunResult("ok", float(np.max(res.error_bar)),
                     {"norms.csv": res.columns(), "summary.json": summary}, resolved)


def _rate_series(cfg, opts, base_dir, quantity, alpha):
    data = cfg.get("data", {})
    if "csv" in data:
        path = data["csv"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        cols = read_csv_columns(path)
        spec = _damping(cfg, base_dir)
        resolved = {"damping": spec.to_config(), "data": {"csv": data["csv"]}}
    else:
        spec, res, resolved = _linear_run(cfg, opts, base_dir)
        cols = res.columns()
    key = "norm_ut" if quantity == "ut" else f"norm_alpha_{alpha:g}"
    if key not in cols:
        raise ManifestError(f"series has no column {key!r}")
    return spec, np.asarray(cols["t"]), np.asarray(cols[key]), resolved


def _verify_rate(cfg, opts, base_dir):
    prob, run = _problem(cfg), _run(cfg)
    if "statement" not in prob:
        raise ManifestError("verify-decay needs problem.statement")
    quantity = prob.get("quantity", "u")
    alpha = float(prob.get("alpha", 0.0))
    spec, t, vals, resolved = _rate_series(cfg, opts, base_dir, quantity, alpha)
    pred = predicted_rate(prob["statement"], spec.sigma, spec.delta, int(prob.get("n", 1)),
                          alpha, float(prob.get("r0", 0.0)), float(prob.get("r1", 0.0)),
                          quantity=quantity, damping=spec)
    x = clock_values(spec, pred.abscissa, t)
    prefactor = None
    if pred.b_power:
        prefactor = np.array([spec.b(ti) for ti in t]) ** pred.b_power
    window = None
    if "window" in run:
        lo, hi = (float(v) for v in run["window"])
        window = tuple(clock_values(spec, pred.abscissa, [lo, hi]))
    rep = fit_observed_rate(t, vals, x, predicted=pred.exponent,
                            tolerance=float(run.get("tolerance", 0.1)),
                            residual_tol=float(run.get("residual_tol", 0.05)),
                            window=window, prefactor=prefactor)
    resolved["problem"] = dict(prob)
    resolved["run"] = dict(resolved.get("run", {}), window=run.get("window"),
                           tolerance=rep.tolerance)
    doc = {"prediction": pred.to_dict(), "fit": rep.to_dict(), "verdict": rep.verdict}
    series = {"t": t, "abscissa": x, "value": vals}
    return RunResult(rep.verdict, rep.slope, {"verdict.json": doc, "series.csv": series}, resolved)


def _verify_heat(cfg, opts, base_dir):
    prob, run, data = _problem(cfg), _run(cfg), cfg.get("data", {})
    spec = _damping(cfg, base_dir)
    n = int(prob.get("n", 1))
    order = float(prob.get("alpha_order", 1.0))
    s_values = tuple(float(s) for s in prob.get("s_values", [0.0]))
    prof = _profile(data.get("profile", data.get("u0")), n, base_dir)
    r_star = prob.get("r0")
    if r_star is None:
        est = estimate_decay_character(prof)
        r_star = est.r_star
    r_star = float(r_star)
    t = _times(run, (1.0, 1e6, 30))
    res = heat_oracle(spec, order, prof, t, s_values)
    tol = float(run.get("tolerance", 0.05))
    fits, verdict = {}, CONSISTENT
    for s in s_values:
        rep = fit_observed_rate(t, res.norms[s] ** 2, res.A, min_samples=min(20, t.size),
                                predicted=heat_rate_exponent(r_star, n, order, s),
                                tolerance=tol)
        fits[f"{s:g}"] = rep.to_dict()
        if rep.verdict != CONSISTENT:
            verdict = rep.verdict if verdict == CONSISTENT else verdict
    resolved = {"damping": spec.to_config(), "data": {"profile": prof.to_config()},
                "problem": {"n": n, "alpha_order": order, "s_values": list(s_values),
                            "r_star": r_star},
                "run": {"times": [t[0], t[-1], t.size], "tolerance": tol}}
    doc = {"r_star": r_star, "fits": fits, "verdict": verdict}
    metric = fits[f"{s_values[0]:g}"]["slope"]
    return RunResult(verdict, metric, {"verdict.json": doc, "heat.csv": res.columns()}, resolved)


def _verify_envelope(cfg, opts, base_dir):
    prob, run = _problem(cfg), _run(cfg)
    spec = _damping(cfg, base_dir)
    params = ZoneParams.from_config(prob.get("zone_params", {"c_prime": 0.5}))
    kind = prob.get("kind", "K1")
    t_range = tuple(float(v) for v in run.get("t_range", (1.0, 100.0)))
    s_range = tuple(float(v) for v in run.get("s_range", (0.0, 50.0)))
    if "xi_range" in run:
        xi_range = tuple(float(v) for v in run["xi_range"])
    else:
        xi_range = anchored_xi_grid(spec)
    shape = tuple(int(v) for v in run.get("shape", (20, 20, 10)))
    threshold = float(run.get("threshold", 1.05))
    base, dense = envelope_stability(spec, t_range, s_range, xi_range, shape=shape, kind=kind,
                                     params=params, rtol=_rtol(run, opts, 1e-9),
                                     amplitude=bool(run.get("amplitude", True)))
    regimes = sorted(base)
    table = {"regime": regimes,
             "C_fit": [base[r].C_fit for r in regimes],
             "n_base": [base[r].n_samples for r in regimes],
             "dense_max_ratio": [dense[r].max_ratio if r in dense else math.nan
                                 for r in regimes],
             "n_dense": [dense[r].n_samples if r in dense else 0 for r in regimes]}
    ratio = dense["all"].max_ratio
    ok = math.isfinite(base["all"].C_fit) and ratio < threshold
    verdict = CONSISTENT if ok else VIOLATED
    resolved = {"damping": spec.to_config(), "zone_params": vars(params).copy(),
                "problem": {"kind": kind},
                "run": {"t_range": t_range, "s_range": s_range, "xi_range": xi_range,
                        "shape": shape, "threshold": threshold}}
    doc = {"verdict": verdict, "dense_max_ratio": ratio, "C_fit": base["all"].C_fit}
    return RunResult(verdict, ratio, {"verdict.json": doc, "envelope.csv": table}, resolved)


def cmd_verify_decay(cfg, opts, base_dir):
    mode = _run(cfg).get("mode", "rate")
    handler = {"rate": _verify_rate, "heat": _verify_heat, "envelope": _verify_envelope}.get(mode)
    if handler is None:
        raise ManifestError(f"unknown verify-decay mode {mode!r}")
    res = handler(cfg, opts, base_dir)
    res.resolved.setdefault("run", {})["mode"] = mode
    return res


def cmd_solve_semilinear(cfg, opts, base_dir):
    prob, run, data = _problem(cfg), _run(cfg), cfg["data"]
    spec = _damping(cfg, base_dir)
    grid_block = dict(cfg.get("grid", {}))
    if "n" in prob:
        grid_block.setdefault("n", prob["n"])
    grid = semilinear.GridSpec.from_config(grid_block)
    conf = semilinear.SemilinearConfig(
        spec, gamma=float(prob.get("gamma", 0.0)), p=float(prob.get("p", 2.0)), grid=grid,
        u0=semilinear.FieldData.from_config(data.get("u0")),
        u1=semilinear.FieldData.from_config(data.get("u1")),
        horizon=float(run.get("horizon", 50.0)),
        escape_threshold=float(run.get("escape_threshold", 1e6)),
        dt_safety=float(run.get("dt_safety", 1.0)), rtol=_rtol(run, opts, 1e-7),
        n_out=int(run.get("n_out", 400)), coefficient=float(prob.get("coefficient", 1.0)))
    out = semilinear.solve_semilinear(conf)
    doc = out.summary()
    doc["critical_p"] = _safe_critical_p(spec, grid.n)
    doc["data_condition"] = semilinear.check_blowup_data_condition(spec, conf.u0, conf.u1,
                                                                   grid).to_dict()
    metric = out.blowup_time
    if "fit_window" in run and out.status != semilinear.BLOWN_UP:
        lo, hi = (float(v) for v in run["fit_window"])
        rep = fit_observed_rate(out.times, out.l2, window=(lo, hi),
                                predicted=float(run["fit_predicted"]) if "fit_predicted" in run
                                else None)
        doc["l2_fit"] = rep.to_dict()
        metric = rep.slope
    resolved = {"damping": spec.to_config(),
                "problem": {"gamma": conf.gamma, "p": conf.p, "coefficient": conf.coefficient},
                "grid": {"n": grid.n, "L": grid.L, "M": grid.M},
                "data": {"u0": conf.u0.to_config(), "u1": conf.u1.to_config()},
                "run": {"horizon": conf.horizon, "escape_threshold": conf.escape_threshold,
                        "dt_safety": conf.dt_safety, "rtol": conf.rtol, "n_out": conf.n_out,
                        "fit_window": run.get("fit_window")}}
    return RunResult(out.status, metric,
                     {"norms.csv": out.columns(), "outcome.json": doc}, resolved)


def _safe_critical_p(spec, n):
    try:
        return semilinear.critical_p(spec.sigma, spec.delta, n)
    except ValueError:
        return None


def cmd_exponents(cfg, opts, base_dir):
    prob = _problem(cfg)
    keys = ("sigma", "delta", "gamma", "n", "r0", "r1", "branch")
    inputs = ExponentInputs.from_config({k: prob[k] for k in keys if k in prob})
    p_values = [float(p) for p in _run(cfg).get("p_values", [])]
    table = exponent_table(inputs, p_values)
    text = dumps_json(table)
    ok = table["hypotheses"]["ok"]
    metric = float(eval_number(table.get("p_star"))) if ok else math.nan
    resolved = {"problem": {k: prob[k] for k in keys if k in prob},
                "run": {"p_values": p_values}}
    return RunResult("ok" if ok else "hypotheses_fail", metric, {"exponents.json": table},
                     resolved, stdout=text)


def eval_number(text):
    """Parse an exact-or-float string such as ``"3/2"`` or ``"inf"``."""
    if text is None:
        return math.nan
    if isinstance(text, (int, float)):
        return float(text)
    if "/" in text:
        a, b = text.split("/")
        return float(a) / float(b)
    return float(text)


COMMANDS = {
    "validate-damping": cmd_validate_damping,
    "decay-character": cmd_decay_character,
    "zones": cmd_zones,
    "solve-linear": cmd_solve_linear,
    "verify-decay": cmd_verify_decay,
    "solve-semilinear": cmd_solve_semilinear,
    "exponents": cmd_exponents,
}


# -- running manifests -------------------------------------------------------------------

@dataclass
class RunOptions:
    out: str = "out"
    threads: int = 1
    tol: float = None
    quiet: bool = False


def load_manifest(path):
    with open(path, "rb") as f:
        try:
            return tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ManifestError(f"{path}: {exc}") from exc


def _write(directory, artifacts):
    directory.mkdir(parents=True, exist_ok=True)
    for name, payload in artifacts.items():
        text = dumps_csv(payload) if name.endswith(".csv") else dumps_json(payload)
        (directory / name).write_text(text)


def execute(cfg, command, opts, base_dir=None, exp_id=None, out_dir=None):
    """Run one manifest and write its artifacts; returns ``(exit_code, RunResult)``."""
    check_schema(cfg, command)
    exp_id = exp_id or cfg.get("id") or command
    out_dir = Path(out_dir) if out_dir is not None else Path(opts.out) / exp_id
    result = COMMANDS[command](cfg, opts, base_dir)
    expect = cfg.get("expect")
    code = EXIT_MISMATCH if expect is not None and result.outcome != expect else EXIT_OK
    resolved = dict(result.resolved, command=command, id=exp_id)
    if expect is not None:
        resolved["expect"] = expect
    manifest = {"id": exp_id, "command": command, "version": __version__,
                "config_digest": config_digest(resolved), "code_digest": code_digest(),
                "outcome": result.outcome, "expect": expect, "exit_code": code}
    artifacts = dict(result.artifacts)
    artifacts["config.json"] = resolved
    artifacts["manifest.json"] = manifest
    _write(out_dir, artifacts)
    return code, result


def _set_dotted(cfg, key, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ManifestError(f"scan key {key!r} does not address a table")
    node[parts[-1]] = value


def scan_points(cfg):
    """Cartesian product of the ``[scan]`` lists, in manifest order."""
    grid = cfg.get("scan")
    if not grid:
        raise ManifestError("scan needs a [scan] table of parameter lists")
    keys = list(grid)
    values = []
    for k in keys:
        v = grid[k]
        values.append(list(v) if isinstance(v, list) else [v])
    total = math.prod(len(v) for v in values)
    if total > MAX_SCAN_POINTS:
        raise ManifestError(f"scan grid has {total} points (limit {MAX_SCAN_POINTS})")
    points = []
    for combo in itertools.product(*values):
        c = copy.deepcopy({k: v for k, v in cfg.items() if k != "scan"})
        for k, v in zip(keys, combo):
            _set_dotted(c, k, v)
        points.append((dict(zip(keys, combo)), c))
    return keys, points


def _scan_point(args):
    idx, cfg, command, opts, base_dir, out_dir = args
    try:
        code, res = execute(cfg, command, opts, base_dir, exp_id=f"point_{idx:04d}",
                            out_dir=out_dir)
        return idx, code, res.outcome, res.metric, ""
    except Exception as exc:  # recorded per point; the scan continues
        return idx, EXIT_ERROR, "error", math.nan, f"{type(exc).__module__}: {exc}"


def run_scan(cfg, opts, base_dir=None):
    command = cfg.get("command")
    if command is None or command == "scan":
        raise ManifestError("a scan manifest needs command = <subcommand>")
    if command not in REQUIRED:
        raise ManifestError(f"unknown subcommand {command!r}")
    keys, points = scan_points(cfg)
    exp_id = cfg.get("id") or f"scan-{command}"
    root = Path(opts.out) / exp_id
    point_opts = RunOptions(opts.out, 1, opts.tol, True)
    jobs = [(i, c, command, point_opts, base_dir, root / f"point_{i:04d}")
            for i, (_, c) in enumerate(points)]
    if opts.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=opts.threads) as pool:
            rows = list(pool.map(_scan_point, jobs))
    else:
        rows = [_scan_point(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    summary = {"point": [f"point_{r[0]:04d}" for r in rows]}
    for k in keys:
        summary[k] = [_cell(points[r[0]][0][k]) for r in rows]
    summary["outcome"] = [r[2] for r in rows]
    summary["metric"] = [float(r[3]) for r in rows]
    summary["exit_code"] = [r[1] for r in rows]
    summary["message"] = [r[4] for r in rows]
    _write(root, {"summary.csv": summary,
                  "scan.json": {"id": exp_id, "command": command, "keys": keys,
                                "n_points": len(rows), "config_digest": config_digest(cfg),
                                "code_digest": code_digest()}})
    codes = [r[1] for r in rows]
    code = EXIT_ERROR if EXIT_ERROR in codes else EXIT_MISMATCH if EXIT_MISMATCH in codes \
        else EXIT_OK
    return code, summary


# -- argument parsing --------------------------------------------------------------------

def _common(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="TOML manifest")
    parser.add_argument("--out", default=d("out"), help="output root (default: out)")
    parser.add_argument("--threads", type=int, default=d(1),
                        help="FFT workers and concurrent scan points")
    parser.add_argument("--tol", type=float, default=d(None),
                        help="relative integration tolerance (overrides run.rtol)")
    parser.add_argument("--id", default=d(None), help="experiment id (default: manifest id)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sigmadamp",
        description="Damped sigma-evolution laboratory: run an experiment manifest.")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    helps = {
        "validate-damping": "check the effective-damping conditions",
        "decay-character": "estimate the decay character of a radial profile",
        "zones": "classify a (t, xi) grid into phase-space zones",
        "solve-linear": "norms of the linear solution from mode integration",
        "verify-decay": "compare fitted decay with the predicted rate",
        "solve-semilinear": "pseudospectral semilinear run with blow-up detection",
        "exponents": "critical and admissible exponents",
        "scan": "run a subcommand over the [scan] parameter grid",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text), suppress=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = RunOptions(args.out, max(1, args.threads), args.tol)
    semilinear.FFT_WORKERS = opts.threads
    try:
        if args.config is None:
            raise ManifestError("--config is required")
        cfg = load_manifest(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
        command = args.command or cfg.get("command")
        if command is None:
            raise ManifestError("no subcommand given on the command line or in the manifest")
        if command == "scan":
            if args.id:
                cfg["id"] = args.id
            code, summary = run_scan(cfg, opts, base_dir)
            print(dumps_csv(summary), end="")
            return code
        if cfg.get("command") not in (None, command):
            raise ManifestError(f"manifest is for {cfg['command']!r}, not {command!r}")
        cfg.pop("command", None)
        code, res = execute(cfg, command, opts, base_dir, exp_id=args.id)
    except Exception as exc:
        print(f"error [{type(exc).__module__}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if res.stdout:
        print(res.stdout, end="")
    else:
        print(f"{command}: {res.outcome}")
    return code


if __name__ == "__main__":
    sys.exit(main())
