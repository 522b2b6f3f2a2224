"""Command-line runner: ``ra-lab run | presets | validate``.

A run reads a YAML config naming one experiment, expands its grid into
independent points, evaluates them (optionally on a process pool) and writes
one CSV row per result plus a JSON manifest. Decibel inputs (keys ending in
``_db``) are converted to linear values here and nowhere else.

Exit codes: 0 success, 2 configuration error, 3 numerical convergence error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata, resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np
import yaml

from . import analytics, asynchronous, de_irsa, detect, legacy, multirx, optimizer, slotted
from .channels import ChannelModel, ChannelSpec, ParameterError, db_to_linear
from .de_irsa import ConvergenceError
from .degree import DegreeDistribution

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3


class ConfigError(Exception):
    """Invalid or unreadable experiment configuration."""


# --------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_INT1 = {"type": "integer", "minimum": 1}
_GRID = {
    "oneOf": [
        {"type": "array", "items": _NUM, "minItems": 1},
        {
            "type": "object",
            "required": ["start", "stop", "step"],
            "additionalProperties": False,
            "properties": {"start": _NUM, "stop": _NUM, "step": _POS},
        },
    ]
}
_DIST = {
    "type": "object",
    "minProperties": 1,
    "patternProperties": {"^[1-9][0-9]*$": _PROB},
    "additionalProperties": False,
}
_CAPTURE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {"enum": ["collision", "rayleigh_capture"]},
        "mean_snr_db": _NUM,
        "capture_threshold_db": {"type": "number", "minimum": 0},
    },
    "required": ["model"],
}


def _obj(required: list[str], **props: Any) -> dict:
    return {"type": "object", "required": required, "additionalProperties": False, "properties": props}


_PARAMS = {
    "simulate-slotted": _obj(
        ["scheme", "m_s", "trials", "loads"],
        scheme={"enum": [s.value for s in slotted.Scheme]}, m_s=_INT1, trials=_INT1, max_iters=_INT1,
        poisson_arrivals={"type": "boolean"}, distribution=_DIST, channel=_CAPTURE, loads=_GRID),
    "simulate-async": _obj(
        ["schemes", "rate", "snr_db", "sim_length_packets", "loads"],
        schemes={"type": "array", "minItems": 1, "items": {"enum": [s.value for s in asynchronous.AsyncScheme]}},
        degree=_INT1, n_p=_INT1, n_s=_INT1, window=_INT1, shift=_INT1, rate=_POS, snr_db=_NUM,
        sim_length_packets=_INT1, max_sic=_INT1, max_sic_phase2=_INT1, loads=_GRID),
    "de-threshold": _obj(
        ["distributions"],
        channel=_CAPTURE, target_plr={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        distributions={"type": "array", "minItems": 1, "items": _obj(["name", "probs"], name={"type": "string"},
                                                                    probs=_DIST)}),
    "optimize-dist": _obj(
        ["d_max", "avg_degrees"],
        d_max={"type": "integer", "minimum": 2}, avg_degrees={"type": "array", "minItems": 1, "items": _NUM},
        channel=_CAPTURE, target_plr={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        population={"type": "integer", "minimum": 5}, F=_POS, CR=_PROB, generations=_INT1),
    "analytic": {
        "oneOf": [
            _obj(["quantity", "protocols", "loads"], quantity={"const": "classic-throughput"},
                 protocols={"type": "array", "minItems": 1, "items": {"enum": [p.value for p in analytics.Protocol]}},
                 loads=_GRID),
            _obj(["quantity", "rate", "snr_db", "loads"], quantity={"const": "plr-approx"},
                 mode={"enum": [m.value for m in analytics.VulnerableMode]}, rate=_POS, snr_db=_NUM,
                 alpha={"type": "number", "minimum": 0}, degree={"type": "integer", "minimum": 2},
                 frame_packets=_INT1, loads=_GRID),
            _obj(["quantity", "mean"], quantity={"const": "discretized-exponential"}, mean=_POS,
                 i_max=_INT1),
        ]
    },
    "multirx": {
        "oneOf": [
            _obj(["quantity", "relays", "erasure", "loads"], quantity={"const": "uplink"},
                 relays={"type": "array", "minItems": 1, "items": _INT1}, erasure=_PROB, loads=_GRID,
                 mc_slots={"type": "integer", "minimum": 0}),
            _obj(["quantity", "policies", "load", "erasure", "rates"], quantity={"const": "dropping"},
                 policies={"type": "array", "minItems": 1, "items": {"enum": [p.value for p in multirx.Policy]}},
                 load=_POS, erasure=_PROB, levels=_INT1, rates=_GRID),
            _obj(["quantity", "m_ul", "load", "erasure", "rates"], quantity={"const": "rlc"},
                 m_ul={"type": "array", "minItems": 1, "items": _INT1}, load=_POS, erasure=_PROB,
                 q={"type": "integer", "minimum": 2}, rates=_GRID, mc_trials={"type": "integer", "minimum": 0}),
        ]
    },
    "legacy": {
        "oneOf": [
            _obj(["quantity", "m_max", "runs"], quantity={"const": "sicta"}, m_max=_INT1,
                 p={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, runs=_INT1),
            _obj(["quantity", "n_users", "duty", "iota"], quantity={"const": "ti"},
                 n_users={"type": "array", "minItems": 1, "items": _INT1},
                 duty={"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                 iota={"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}}),
        ]
    },
    "detect-roc": {
        "oneOf": [
            _obj(["quantity", "loads", "es_n0_db", "trials", "thresholds"], quantity={"const": "roc"},
                 loads=_GRID, es_n0_db=_NUM, trials={"type": "integer", "minimum": detect.MIN_ROC_TRIALS},
                 f_max_ts={"type": "number", "minimum": 0, "maximum": 0.49},
                 thresholds={"type": "object", "minProperties": 1, "additionalProperties": False,
                             "properties": {"soft": _GRID, "aware": _GRID}}),
            _obj(["quantity", "loads", "es_n0_db", "windows"], quantity={"const": "combining"},
                 loads=_GRID, es_n0_db=_NUM, windows=_INT1, f_max_ts={"type": "number", "minimum": 0, "maximum": 0.49},
                 calibration_load=_POS, calibration_pf={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                 calibration_trials=_INT1),
        ]
    },
}

SCHEMA = {
    "type": "object",
    "required": ["experiment", "params"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": sorted(_PARAMS)},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "time_budget_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 1800},
        "params": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"experiment": {"const": k}}, "required": ["experiment"]},
         "then": {"properties": {"params": v}}}
        for k, v in _PARAMS.items()
    ],
}


def _stringify_keys(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_stringify_keys(v) for v in obj]
    return obj


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def _leaf_errors(err: jsonschema.ValidationError) -> list[jsonschema.ValidationError]:
    # oneOf failures are more useful when the branch that got furthest is reported
    if err.context:
        best = max(err.context, key=lambda e: (len(e.absolute_path), -len(list(e.context or []))))
        return _leaf_errors(best)
    return [err]


def validate_config(cfg: Any) -> dict:
    """Check a parsed config against the schema; raise ConfigError listing each bad field path."""
    cfg = _stringify_keys(cfg)
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for err in errors:
            for leaf in _leaf_errors(err):
                lines.append(f"{_error_path(leaf)}: {leaf.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(dict.fromkeys(lines)))
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return validate_config(cfg)


# --------------------------------------------------------------------------
# helpers


def expand_grid(spec: Any) -> list[float]:
    """List grids are taken as given; ``{start, stop, step}`` includes ``stop`` when it lies on the grid."""
    if isinstance(spec, list):
        return [float(x) for x in spec]
    start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
    if stop < start:
        raise ConfigError(f"grid stop {stop} is below start {start}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(n)]


def point_seed(seed: int, index: int) -> int:
    """Seed of grid point ``index``; independent of scheduling and worker count."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _capture_channel(ch: dict | None) -> ChannelSpec:
    ch = ch or {"model": "collision"}
    if ch["model"] == "collision":
        return ChannelSpec(ChannelModel.COLLISION)
    return ChannelSpec(ChannelModel.RAYLEIGH_CAPTURE, mean_snr=db_to_linear(ch.get("mean_snr_db", 20.0)),
                       capture_threshold=db_to_linear(ch.get("capture_threshold_db", 3.0)))


def _de_params(params: dict) -> de_irsa.DeParams:
    ch = params.get("channel") or {"model": "rayleigh_capture"}
    if ch["model"] == "collision":
        raise ConfigError("params.channel.model: density-evolution thresholds need the rayleigh_capture channel")
    return de_irsa.DeParams(mean_snr=db_to_linear(ch.get("mean_snr_db", 20.0)),
                            threshold=db_to_linear(ch.get("capture_threshold_db", 3.0)),
                            target_plr=params.get("target_plr", 1e-2))


def _dist(probs: dict | None) -> DegreeDistribution | None:
    return None if probs is None else DegreeDistribution({int(k): v for k, v in probs.items()})


# --------------------------------------------------------------------------
# point workers (module level so they pickle)


def _slotted_point(scheme, load, m_s, dist, channel, trials, seed, max_iters, poisson):
    r = slotted.simulate_slotted(scheme, load, m_s, dist, channel, trials, seed, max_iters, poisson)
    return [[load, r.throughput, r.plr, r.throughput_half_width]]


def _async_point(scheme, load, vf, channel, length, seed, max_sic, max_p2):
    r = asynchronous.simulate_async(scheme, load, vf, channel, length, seed, max_sic, max_p2)
    return [[scheme, load, r.throughput, r.plr, r.throughput_half_width, r.spectral_efficiency,
             r.normalized_capacity]]


def _threshold_point(name, dist, params):
    return [[name, dist.mean, dist.rate, de_irsa.load_threshold(dist, params)]]


def _optimize_point(d_max, avg, params, cfg):
    dist, g = optimizer.optimize_degree_distribution(d_max, avg, params, cfg)
    text = " ".join(f"{d}:{p:.6f}" for d, p in dist.probs.items())
    return [[d_max, avg, g, text]]


def _classic_point(protocol, load):
    return [[protocol, load, analytics.classic_throughput(protocol, load)]]


def _plr_approx_point(load, degree, frame_packets, t_v):
    return [[load, t_v, analytics.async_plr_approx(load, degree, frame_packets, t_v)]]


def _discretized_point(mean, i_max):
    pmf = analytics.fragment_pmf(analytics.PacketLengthLaw.exponential(mean), i_max)
    # E[ceil(X)] for exponential X; equals e/(e-1) at unit mean
    return [[mean, analytics.discretized_mean(pmf), 1.0 / -math.expm1(-1.0 / mean)]]


def _uplink_point(relays, load, erasure, slots, seed):
    spec = multirx.UplinkSpec(load, erasure, relays)
    exact = multirx.uplink_throughput(spec)
    if slots:
        mean, se = multirx.uplink_monte_carlo(spec, slots, np.random.default_rng(seed))
        return [[relays, load, exact, mean, se]]
    return [[relays, load, exact, "", ""]]


def _dropping_point(policy, rate, load, erasure, levels):
    try:
        value = multirx.dropping_policy_throughput(policy, rate, load, erasure, levels)
    except ParameterError:
        return []  # rate outside this policy's domain
    return [[policy, rate, value]]


def _rlc_point(m_ul, n_rows, load, erasure, q, trials, seed):
    spec = multirx.RlcSpec(m_ul=m_ul, q=q, r1=math.ceil(n_rows / 2) / m_ul, r2=(n_rows // 2) / m_ul)
    exact = multirx.rlc_finite_buffer_throughput(spec, load, erasure)
    r1, r2 = spec.rows
    if trials:
        mean, se = multirx.rlc_monte_carlo_oracle(spec, load, erasure, trials, seed)
        return [[m_ul, n_rows / m_ul, r1, r2, exact, mean, se]]
    return [[m_ul, n_rows / m_ul, r1, r2, exact, "", ""]]


def _sicta_point(m, p, runs, seed, expected):
    lengths = legacy.sicta_lengths(m, p, runs, np.random.default_rng(seed))
    return [[m, expected, float(lengths.mean()), float(lengths.std(ddof=1) / math.sqrt(runs)) if runs > 1 else ""]]


def _ti_point(n_users, duty, iota):
    return [[n_users, duty, iota, n_users * duty, legacy.ti_throughput(n_users, duty, iota)]]


def _roc_point(load, es_n0, f_max, trials, seed, thresholds):
    cfg = detect.DetectConfig(es_n0=es_n0, f_max_ts=f_max)
    samples = detect.metric_samples(load, trials, seed, cfg)
    rows = []
    for metric, grid in thresholds.items():
        for pt in detect.roc_from_samples(samples, grid, metric):
            rows.append([load, metric, pt.threshold, pt.p_f, pt.p_f_ci[0], pt.p_f_ci[1], pt.p_d, pt.p_d_ci[0],
                         pt.p_d_ci[1]])
    return rows


def _combining_point(load, cfg, windows, seed):
    st = detect.combining_probabilities(load, cfg, windows, seed)
    return [[load, cfg.threshold, st.p_d, st.p_cc, st.p_d ** 2, st.users]]


# --------------------------------------------------------------------------
# experiment planners: config -> (columns, [(fn, args), ...])

Task = tuple[Callable[..., list], tuple]


def _plan_slotted(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    channel = _capture_channel(p.get("channel"))
    dist = _dist(p.get("distribution"))
    loads = expand_grid(p["loads"])
    tasks = [(_slotted_point, (p["scheme"], g, p["m_s"], dist, channel, p["trials"], point_seed(seed, i),
                               p.get("max_iters", slotted.DEFAULT_MAX_ITERS), p.get("poisson_arrivals", False)))
             for i, g in enumerate(loads)]
    return ["G", "S", "plr", "ci95"], tasks


def _plan_async(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    vf = asynchronous.VirtualFrameConfig(n_p=p.get("n_p", 200), n_s=p.get("n_s", 100), degree=p.get("degree", 2),
                                         window=p.get("window", 600), shift=p.get("shift", 20))
    channel = ChannelSpec(ChannelModel.BLOCK_INTERFERENCE, signal_power=db_to_linear(p["snr_db"]),
                          noise_power=1.0, rate=p["rate"])
    tasks = []
    for scheme in p["schemes"]:
        for g in expand_grid(p["loads"]):
            tasks.append((_async_point, (scheme, g, vf, channel, p["sim_length_packets"], point_seed(seed, len(tasks)),
                                         p.get("max_sic", asynchronous.DEFAULT_MAX_SIC),
                                         p.get("max_sic_phase2", asynchronous.DEFAULT_MAX_SIC_PHASE2))))
    return ["scheme", "G", "S", "plr", "ci95", "spectral_efficiency", "normalized_capacity"], tasks


def _plan_threshold(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    params = _de_params(p)
    tasks = [(_threshold_point, (d["name"], _dist(d["probs"]), params)) for d in p["distributions"]]
    return ["name", "avg_degree", "rate", "G_star"], tasks


def _plan_optimize(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    params = _de_params(p)
    cfg = optimizer.DeConfig(population=p.get("population", 40), F=p.get("F", 0.7), CR=p.get("CR", 0.9),
                             generations=p.get("generations", 300), seed=seed)
    return ["d_max", "avg_degree", "G_star", "distribution"], [
        (_optimize_point, (p["d_max"], float(a), params, cfg)) for a in p["avg_degrees"]]


def _plan_analytic(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    q = p["quantity"]
    if q == "classic-throughput":
        return ["protocol", "G", "S"], [(_classic_point, (pr, g)) for pr in p["protocols"]
                                        for g in expand_grid(p["loads"])]
    if q == "plr-approx":
        mode = p.get("mode", "coded")
        degree = p.get("degree", 2)
        n_p = p.get("frame_packets", 200)
        spec = analytics.VulnerableSpec(rate=p["rate"], signal_power=db_to_linear(p["snr_db"]), noise_power=1.0,
                                        alpha=p.get("alpha", 0.0), degree=degree, frame_packets=n_p)
        t_v = analytics.vulnerable_period(mode, spec)
        return ["G", "vulnerable_period", "plr_approx"], [
            (_plr_approx_point, (g, degree, n_p, t_v)) for g in expand_grid(p["loads"])]
    return ["mean", "discretized_mean", "closed_form"], [(_discretized_point, (p["mean"], p.get("i_max", 200)))]


def _plan_multirx(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    q = p["quantity"]
    if q == "uplink":
        tasks = [(_uplink_point, (k, g, p["erasure"], p.get("mc_slots", 0), point_seed(seed, i * 10_000 + j)))
                 for i, k in enumerate(p["relays"]) for j, g in enumerate(expand_grid(p["loads"]))]
        return ["relays", "G", "T_analytic", "T_mc", "se_mc"], tasks
    if q == "dropping":
        tasks = [(_dropping_point, (pol, r, p["load"], p["erasure"], p.get("levels", 1)))
                 for pol in p["policies"] for r in expand_grid(p["rates"])]
        return ["policy", "R", "S"], tasks
    tasks = []
    for m in p["m_ul"]:
        rates = expand_grid(p["rates"])
        rows = sorted({int(round(r * m)) for r in rates})
        for n in rows:
            tasks.append((_rlc_point, (m, n, p["load"], p["erasure"], p.get("q", 256), p.get("mc_trials", 0),
                                       point_seed(seed, len(tasks)))))
    return ["m_ul", "R", "r1", "r2", "S_analytic", "S_mc", "se_mc"], tasks


def _plan_legacy(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    if p["quantity"] == "sicta":
        prob = p.get("p", 0.5)
        ell = legacy.sicta_expected_length(p["m_max"], prob)
        tasks = [(_sicta_point, (m, prob, p["runs"], point_seed(seed, m), float(ell[m])))
                 for m in range(1, p["m_max"] + 1)]
        return ["m", "cri_expected", "cri_mean", "cri_se"], tasks
    tasks = [(_ti_point, (n, p["duty"], i)) for n in p["n_users"] for i in p["iota"]]
    return ["n_users", "duty", "iota", "G", "S"], tasks


def _plan_detect(p: dict, seed: int) -> tuple[list[str], list[Task]]:
    es_n0 = db_to_linear(p["es_n0_db"])
    f_max = p.get("f_max_ts", 0.01)
    loads = expand_grid(p["loads"])
    if p["quantity"] == "roc":
        grids = {m: expand_grid(g) for m, g in p["thresholds"].items()}
        tasks = [(_roc_point, (g, es_n0, f_max, p["trials"], point_seed(seed, i), grids)) for i, g in enumerate(loads)]
        return ["G", "metric", "threshold", "P_F", "P_F_lo", "P_F_hi", "P_D", "P_D_lo", "P_D_hi"], tasks
    base = detect.DetectConfig(es_n0=es_n0, f_max_ts=f_max)
    psi = detect.calibrate_threshold(p.get("calibration_load", 0.5), p.get("calibration_pf", 1e-3),
                                     p.get("calibration_trials", 200_000), point_seed(seed, 10**6), base)
    cfg = detect.DetectConfig(es_n0=es_n0, f_max_ts=f_max, threshold=psi)
    tasks = [(_combining_point, (g, cfg, p["windows"], point_seed(seed, i))) for i, g in enumerate(loads)]
    return ["G", "psi", "P_D", "P_CC", "P_D_squared", "users"], tasks


PLANNERS = {
    "simulate-slotted": _plan_slotted,
    "simulate-async": _plan_async,
    "de-threshold": _plan_threshold,
    "optimize-dist": _plan_optimize,
    "analytic": _plan_analytic,
    "multirx": _plan_multirx,
    "legacy": _plan_legacy,
    "detect-roc": _plan_detect,
}


def _call(task: Task) -> list:
    fn, args = task
    return fn(*args)


def execute(cfg: dict, seed: int, jobs: int = 1) -> tuple[list[str], list[list]]:
    """Evaluate every grid point; rows come back in grid order for any ``jobs``."""
    columns, tasks = PLANNERS[cfg["experiment"]](cfg["params"], seed)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_call, tasks))
    else:
        chunks = [_call(t) for t in tasks]
    return columns, [row for chunk in chunks for row in chunk]


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "pyyaml", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def run_experiment(config_path: str | Path, out_dir: str | Path | None = None, seed: int | None = None,
                   jobs: int = 1) -> tuple[Path, Path]:
    """Run one config and write ``<name>.csv`` and ``<name>.manifest.json``; returns both paths."""
    cfg = load_config(config_path)
    name = cfg.get("name") or Path(config_path).stem
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out = Path(out_dir) if out_dir else Path("results") / name
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    columns, rows = execute(cfg, seed, jobs)
    wall = time.perf_counter() - start
    csv_path = out / f"{name}.csv"
    write_csv(csv_path, columns, rows)
    manifest = {
        "name": name,
        "experiment": cfg["experiment"],
        "config": str(config_path),
        "seed": seed,
        "jobs": jobs,
        "rows": len(rows),
        "columns": columns,
        "wall_time_s": round(wall, 3),
        "time_budget_s": cfg.get("time_budget_s"),
        "within_budget": None if cfg.get("time_budget_s") is None else wall <= cfg["time_budget_s"],
        "versions": _versions(),
        "params": cfg["params"],
        "csv": csv_path.name,
    }
    man_path = out / f"{name}.manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, man_path


# --------------------------------------------------------------------------
# presets


def _preset_dir():
    return resources.files("ra_lab") / "presets"


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str) -> Path:
    path = Path(str(_preset_dir() / f"{name}.yaml"))
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}")
    return path


def _resolve(config: str) -> Path:
    path = Path(config)
    if path.exists():
        return path
    if path.suffix == "" and config in list_presets():
        return preset_path(config)
    raise ConfigError(f"config {config!r} is neither a file nor a preset name")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ra-lab", description="Random-access MAC protocol laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config (file path or preset name)")
    run.add_argument("config")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output directory (default results/<name>)")
    sub.add_parser("presets", help="list bundled preset configs")
    val = sub.add_parser("validate", help="check a config against the schema")
    val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        if args.command == "presets":
            for name in list_presets():
                cfg = yaml.safe_load(preset_path(name).read_text(encoding="utf-8"))
                print(f"{name}\t{cfg.get('experiment')}\t{cfg.get('description', '')}")
            return EXIT_OK
        if args.command == "validate":
            cfg = load_config(_resolve(args.config))
            print(f"ok: {args.config} ({cfg['experiment']})")
            return EXIT_OK
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        csv_path, man_path = run_experiment(_resolve(args.config), args.out, args.seed, args.jobs)
        print(f"wrote {csv_path}\nwrote {man_path}")
        return EXIT_OK
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
