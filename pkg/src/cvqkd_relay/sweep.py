"""Distance sweeps: configuration, parallel evaluation, result files, zero crossings."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .gaussian import parse_measurement
from .keyrate import plob_bound, transmissivity_from_distance
from .protocols import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_R_GRID,
    ProtocolSpec,
    Variant,
    optimize_modulation,
    run_protocol,
)

WORKERS_ENV = "CVQKD_WORKERS"
COLUMNS = ("distance_km", "eta", "kappa_raw", "kappa_clamped", "i_ab", "chi_be",
           "p_ua", "p_qs", "plob", "mc_stderr", "best_r", "status")

# Documented defaults; every key here appears in a result header.
DEFAULTS = {
    "protocol": "baseline",
    "r": 0.5,
    "optimize_r": False,
    "r_grid": [float(r) for r in DEFAULT_R_GRID],
    "beta": 0.95,
    "epsilon": 0.02,
    "sigma": 0.0,
    "ua_copies": None,
    "scissor_t": "auto",
    "relay_position": 0.5,
    "relay_noise": "total",
    "bob_phase_noise": True,
    "alice_measurement": "heterodyne",
    "bob_measurement": "auto",
    "sifting": False,
    "distance_start_km": 1.0,
    "distance_end_km": 300.0,
    "n_points": 30,
    "log_spacing": False,
    "cutoff": None,
    "mc_samples": DEFAULT_MC_SAMPLES,
    "seed": 0,
    "loss_db_per_km": 0.2,
    "format": "csv",
}


class ConfigError(ValueError):
    """Invalid sweep configuration; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NoCrossingError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    spec: ProtocolSpec
    distance_start_km: float
    distance_end_km: float
    n_points: int
    optimize_r: bool = False
    r_grid: tuple = DEFAULT_R_GRID
    log_spacing: bool = False
    output_path: Optional[str] = None
    output_format: str = "csv"
    workers: int = 1
    settings: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 <= self.distance_start_km < self.distance_end_km:
            raise ConfigError("distance", "need 0 <= start < end")
        if self.n_points < 2:
            raise ConfigError("distance", "need at least 2 points")
        if self.log_spacing and self.distance_start_km == 0:
            raise ConfigError("distance", "log spacing needs start > 0")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("format", "must be csv or json")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        grid = tuple(float(r) for r in self.r_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0:
            raise ConfigError("r_grid", "must be non-empty, non-negative and strictly ascending")
        object.__setattr__(self, "r_grid", grid)

    def distances(self) -> np.ndarray:
        if self.log_spacing:
            return np.geomspace(self.distance_start_km, self.distance_end_km, self.n_points)
        return np.linspace(self.distance_start_km, self.distance_end_km, self.n_points)

    def header(self) -> dict:
        """Resolved settings that determine the numbers (no output path or worker count)."""
        return dict(self.settings)


def _spec_from_settings(s: Mapping) -> ProtocolSpec:
    variant = Variant(s["protocol"])
    ua = s["ua_copies"]
    if ua is None:
        ua = 2 if variant in (Variant.UNITARY_AVERAGING, Variant.HYBRID_UA_NLA) else 1
    bob = None if s["bob_measurement"] == "auto" else parse_measurement(s["bob_measurement"])
    scissor = s["scissor_t"]
    return ProtocolSpec(
        variant=variant, r=float(s["r"]), beta=float(s["beta"]), epsilon=float(s["epsilon"]),
        sigma=float(s["sigma"]), ua_copies=int(ua),
        scissor_T=scissor if scissor == "auto" else float(scissor),
        relay_position=float(s["relay_position"]),
        alice_kind=parse_measurement(s["alice_measurement"]), bob_kind=bob,
        mc_samples=int(s["mc_samples"]), seed=int(s["seed"]),
        loss_db_per_km=float(s["loss_db_per_km"]),
        cutoff=None if s["cutoff"] is None else int(s["cutoff"]),
        bob_phase_noise=bool(s["bob_phase_noise"]), relay_noise=s["relay_noise"],
        sifting=bool(s["sifting"]),
    )


_ERROR_KEYS = {
    "r": "r", "beta": "beta", "epsilon": "epsilon", "sigma": "sigma", "ua_copies": "ua_copies",
    "scissor_t": "scissor_T", "relay_position": "relay_position", "mc_samples": "mc_samples",
    "seed": "seed", "loss_db_per_km": "loss_db_per_km", "cutoff": "cutoff", "relay_noise": "relay_noise",
}


def _guess_key(message: str) -> str:
    for key, token in _ERROR_KEYS.items():
        if message.startswith(token) or f" {token} " in f" {message} ":
            return key
    if "phase noise" in message:
        return "sigma"
    if "variant" in message:
        return "ua_copies"
    return "protocol"


def config_from_settings(settings: Mapping, output_path: Optional[str] = None,
                         workers: int = 1) -> SweepConfig:
    """Build a SweepConfig from flat settings; unknown keys are rejected."""
    unknown = set(settings) - set(DEFAULTS)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(key, "unknown setting")
    s = dict(DEFAULTS)
    s.update(settings)
    try:
        spec = _spec_from_settings(s)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(_guess_key(str(exc)), str(exc)) from None
    # store the resolved values so the header reproduces the run exactly
    s["ua_copies"] = spec.ua_copies
    s["cutoff"] = spec.resolved_cutoff
    s["r_grid"] = [float(r) for r in s["r_grid"]]
    for key in ("r", "beta", "epsilon", "sigma", "relay_position", "loss_db_per_km",
                "distance_start_km", "distance_end_km"):
        s[key] = float(s[key])
    for key in ("n_points", "mc_samples", "seed"):
        s[key] = int(s[key])
    return SweepConfig(
        spec=spec, distance_start_km=s["distance_start_km"], distance_end_km=s["distance_end_km"],
        n_points=s["n_points"], optimize_r=bool(s["optimize_r"]), r_grid=tuple(s["r_grid"]),
        log_spacing=bool(s["log_spacing"]), output_path=output_path, output_format=s["format"],
        workers=workers, settings=s,
    )


# -- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _distance(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:end:points")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:end:points") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cvqkd-sweep", description="Sweep the CV-QKD secret key rate over distance.")
    p.add_argument("--config", help="JSON settings file or a previous result file (csv/json)")
    p.add_argument("--protocol", choices=[v.value for v in Variant])
    p.add_argument("--sigma", type=float, help="phase-noise standard deviation (rad)")
    p.add_argument("--epsilon", type=float, help="excess noise in shot-noise units")
    p.add_argument("--beta", type=float, help="reconciliation efficiency")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--r", type=float, help="two-mode squeezing parameter")
    g.add_argument("--optimize-r", action="store_const", const=True, default=None,
                   help="maximise kappa over the r grid at every distance")
    p.add_argument("--r-grid", help="comma-separated ascending squeezing values")
    p.add_argument("--ua-copies", type=int, choices=[2, 4])
    p.add_argument("--scissor-t", help="scissor beamsplitter transmissivity or 'auto'")
    p.add_argument("--relay-position", type=float, help="Alice-Charlie share of the distance")
    p.add_argument("--relay-noise", choices=["total", "per-link"])
    p.add_argument("--bob-phase-noise", type=_bool)
    p.add_argument("--alice-measurement", choices=["heterodyne", "homodyne", "homodyne-p"])
    p.add_argument("--bob-measurement", choices=["auto", "heterodyne", "homodyne", "homodyne-p"])
    p.add_argument("--sifting", type=_bool)
    p.add_argument("--distance", type=_distance, help="start:end:points in km")
    p.add_argument("--log-spacing", action="store_const", const=True, default=None)
    p.add_argument("--cutoff", type=int)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help=f"parallel processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--output", help="output path; stdout when omitted")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--loss-db-per-km", type=float)
    p.add_argument("--find-crossing", action="store_true",
                   help="also report the bisection-refined zero crossing of kappa")
    return p


def load_config_document(path: str) -> dict:
    """Settings from a JSON document, a JSON result file, or a CSV result header."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return dict(doc["config"]) if "config" in doc and "rows" in doc else doc
    return read_result(io.StringIO(text))[0]


def parse_config(args: Optional[Sequence[str]] = None, document: Optional[Mapping] = None):
    """Resolve settings with precedence flag > config document > default.

    Returns ``(SweepConfig, namespace)``; raises ConfigError naming the bad key.
    """
    ns = build_parser().parse_args(list(args) if args is not None else None)
    doc = dict(document or {})
    if ns.config:
        try:
            doc = {**load_config_document(ns.config), **doc}
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("config", f"cannot read {ns.config}: {exc}") from None
    settings = dict(doc)
    flag_map = {
        "protocol": ns.protocol, "sigma": ns.sigma, "epsilon": ns.epsilon, "beta": ns.beta,
        "r": ns.r, "optimize_r": ns.optimize_r, "ua_copies": ns.ua_copies,
        "scissor_t": ns.scissor_t, "relay_position": ns.relay_position, "relay_noise": ns.relay_noise,
        "bob_phase_noise": ns.bob_phase_noise, "alice_measurement": ns.alice_measurement,
        "bob_measurement": ns.bob_measurement, "sifting": ns.sifting, "log_spacing": ns.log_spacing,
        "cutoff": ns.cutoff, "mc_samples": ns.mc_samples, "seed": ns.seed,
        "format": ns.format, "loss_db_per_km": ns.loss_db_per_km,
    }
    if ns.r is not None:
        flag_map["optimize_r"] = False
    if ns.r_grid is not None:
        try:
            flag_map["r_grid"] = [float(x) for x in ns.r_grid.split(",")]
        except ValueError:
            raise ConfigError("r_grid", "expected comma-separated numbers") from None
    if ns.distance is not None:
        start, end, n = ns.distance
        flag_map.update(distance_start_km=start, distance_end_km=end, n_points=n)
    settings.update({k: v for k, v in flag_map.items() if v is not None})
    if "scissor_t" in settings and settings["scissor_t"] != "auto":
        try:
            settings["scissor_t"] = float(settings["scissor_t"])
        except (TypeError, ValueError):
            raise ConfigError("scissor_t", "must be a number or 'auto'") from None
    if ns.workers is not None:
        workers = ns.workers
    else:
        env = os.environ.get(WORKERS_ENV)
        try:
            workers = int(env) if env else 1
        except ValueError:
            raise ConfigError("workers", f"${WORKERS_ENV} must be an integer") from None
    return config_from_settings(settings, output_path=ns.output, workers=workers), ns


# -- evaluation ---------------------------------------------------------------

def evaluate_point(config: SweepConfig, distance: float) -> dict:
    """One result row; failures are reported in the ``status`` column."""
    spec = config.spec
    eta = transmissivity_from_distance(distance, spec.loss_db_per_km)
    row = dict.fromkeys(COLUMNS, math.nan)
    row.update(distance_km=float(distance), eta=eta,
               plob=plob_bound(eta) if eta < 1 else math.inf, status="ok")
    try:
        if config.optimize_r:
            best_r, res = optimize_modulation(spec, distance, config.r_grid)
        else:
            best_r, res = spec.r, run_protocol(spec, distance)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        row["status"] = f"error: {type(exc).__name__}: {exc}"
        return row
    row.update(kappa_raw=res.kappa, kappa_clamped=res.kappa_clamped, i_ab=res.i_ab,
               chi_be=res.chi_be, p_ua=res.p_ua, p_qs=res.p_qs,
               mc_stderr=res.diagnostics.get("mc_stderr", 0.0), best_r=best_r)
    return row


def _evaluate_star(task):
    return evaluate_point(*task)


@dataclass(frozen=True)
class SweepResult:
    config: dict
    rows: list

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def run_sweep(config: SweepConfig) -> SweepResult:
    """Evaluate every grid point, in parallel when ``config.workers > 1``.

    Points are independent and each uses only counter-based random numbers,
    so the rows do not depend on the worker count.
    """
    tasks = [(config, float(d)) for d in config.distances()]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(tasks))) as pool:
            rows = list(pool.map(_evaluate_star, tasks))
    else:
        rows = [_evaluate_star(t) for t in tasks]
    return SweepResult(config.header(), rows)


# -- file formats -------------------------------------------------------------

def _format_value(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def render_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    for key in sorted(result.config):
        buf.write(f"# {key}={json.dumps(result.config[key])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in result.rows:
        writer.writerow([_format_value(row[c]) for c in COLUMNS])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render_json(result: SweepResult) -> str:
    rows = [{c: _json_safe(row[c]) for c in COLUMNS} for row in result.rows]
    return json.dumps({"config": result.config, "rows": rows}, indent=1, sort_keys=True) + "\n"


def render(result: SweepResult, fmt: str) -> str:
    return render_csv(result) if fmt == "csv" else render_json(result)


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".cvqkd-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_result(source) -> tuple:
    """Parse a CSV or JSON result (path or file object) into ``(config, rows)``."""
    text = source.read() if hasattr(source, "read") else open(source, encoding="utf-8").read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = [{k: (math.nan if v is None else v) for k, v in row.items()} for row in doc["rows"]]
        return doc["config"], rows
    config, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            config[key] = json.loads(value)
        elif line.strip():
            body.append(line)
    rows = []
    for rec in csv.DictReader(body):
        rows.append({k: (v if k == "status" else float(v)) for k, v in rec.items()})
    return config, rows


# -- zero crossings -----------------------------------------------------------

def find_zero_crossing(distances: Sequence[float], kappas: Sequence[float],
                       evaluate: Optional[Callable[[float], float]] = None, tol: float = 1.0) -> float:
    """Distance where the raw key rate first changes sign.

    With ``evaluate`` (distance -> raw kappa) the bracket is bisected to
    ``tol`` km; otherwise the bracket is interpolated linearly.
    """
    d = np.asarray(distances, dtype=float)
    k = np.asarray(kappas, dtype=float)
    ok = np.isfinite(k)
    d, k = d[ok], k[ok]
    pos = k > 0
    flips = np.nonzero(pos[:-1] != pos[1:])[0]
    if len(flips) == 0:
        raise NoCrossingError("no crossing in range")
    i = flips[0]
    lo, hi, k_lo, k_hi = d[i], d[i + 1], k[i], k[i + 1]
    if evaluate is None:
        return float(lo + (hi - lo) * k_lo / (k_lo - k_hi))
    lo_pos = k_lo > 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (evaluate(mid) > 0) == lo_pos:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def crossing_evaluator(config: SweepConfig) -> Callable[[float], float]:
    """Raw kappa at a distance, evaluated exactly as a sweep row would be."""
    def evaluate(distance: float) -> float:
        row = evaluate_point(config, distance)
        if row["status"] != "ok":
            raise RuntimeError(row["status"])
        return row["kappa_raw"]
    return evaluate


def sweep_crossing(config: SweepConfig, result: Optional[SweepResult] = None, tol: float = 1.0) -> float:
    """Bisection-refined zero crossing of a (possibly already computed) sweep."""
    result = result or run_sweep(config)
    return find_zero_crossing(result.column("distance_km"), result.column("kappa_raw"),
                              crossing_evaluator(config), tol)
