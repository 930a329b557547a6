"""Scenario catalog, parameter sweeps and result files.

A sweep is a list of ``(metric, estimator, K)`` work items. Each item builds
its topology, evaluates one quantity and yields one :class:`ResultRow` (one
per threshold for the ``*_vs_s`` metrics). Seeds for every topology draw and
Monte Carlo run are derived from the master seed and the item's coordinates,
so rows can be computed in any order or in parallel.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analytic
from .mc_engine import derive_seed, estimate
from .solvers import (
    SchemeEval,
    default_s_max,
    maximize_effective_rate,
    solve_outage_snr_asymptotic,
    solve_outage_snr_mc,
)
from .topology import (
    ClassModel,
    GainMatrix,
    PathlossParams,
    block_gain_matrix,
    db_to_linear,
    geometric_gain_matrix,
)

log = logging.getLogger(__name__)

METRICS = ("multicast_rate", "outage_rate", "rate_vs_s", "outage_vs_s")
ESTIMATORS = ("baseline", "full", "collapsed", "approx", "asymptotic")
SCENARIOS = ("a", "b", "c", "custom")
CSV_HEADER = ("scenario", "metric", "estimator", "K", "s", "value", "stderr", "runtime_ms", "seed")

# Seed-derivation tags.
_TOPOLOGY_STREAM = 1
_MC_STREAM = 2


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ExperimentError(RuntimeError):
    """A work item failed; the message names the item."""


def scenario_a() -> ClassModel:
    """Single class close to the station: g_01 = 46 dB, g_11 = 23 dB."""
    return ClassModel.from_db([1.0], [[-np.inf, 46.0], [-np.inf, 23.0]])


def scenario_b() -> ClassModel:
    """Near class 1 relays to far class 2, which has no direct station link."""
    return ClassModel.from_db(
        [0.5, 0.5],
        [
            [-np.inf, 46.0, -np.inf],
            [-np.inf, 23.0, 13.0],
            [-np.inf, 13.0, 23.0],
        ],
    )


DEFAULT_PATHLOSS = PathlossParams()
DEFAULT_RADIUS_M = 250.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "a"
    model: Optional[ClassModel] = None
    pathloss: PathlossParams = DEFAULT_PATHLOSS
    radius_m: float = DEFAULT_RADIUS_M
    K_list: tuple = (10, 100, 1000)
    s_list: Optional[tuple] = None
    eps: float = 1e-2
    trials: int = 100_000
    realizations: int = 100
    seed: int = 0
    metrics: tuple = METRICS
    estimators: tuple = ("baseline", "collapsed", "approx", "asymptotic")
    grid_points: int = 256
    threads: Optional[int] = None
    record_runtime: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        ks = tuple(int(k) for k in self.K_list)
        if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError(f"K_list must be non-empty, positive and strictly increasing, got {list(ks)}")
        object.__setattr__(self, "K_list", ks)
        if self.s_list is not None:
            sl = tuple(float(s) for s in self.s_list)
            if any(not (s >= 0 and math.isfinite(s)) for s in sl):
                raise ConfigError("s_list entries must be finite and >= 0")
            object.__setattr__(self, "s_list", sl)
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.realizations < 1:
            raise ConfigError(f"realizations must be >= 1, got {self.realizations}")
        for name, allowed in (("metrics", METRICS), ("estimators", ESTIMATORS)):
            vals = tuple(getattr(self, name))
            bad = [v for v in vals if v not in allowed]
            if bad or not vals:
                raise ConfigError(f"{name} must be a non-empty subset of {allowed}, got {list(vals)}")
            object.__setattr__(self, name, vals)
        if self.scenario in ("a", "b") and self.model is None:
            object.__setattr__(self, "model", scenario_a() if self.scenario == "a" else scenario_b())
        if self.scenario == "custom" and self.model is None:
            raise ConfigError("a custom scenario needs alpha and g")

    @property
    def geometric(self) -> bool:
        return self.scenario == "c"

    @property
    def s_grid(self) -> tuple:
        if self.s_list is not None:
            return self.s_list
        return tuple(float(s) for s in np.geomspace(1.0, 1e6, 31))


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    metric: str
    estimator: str
    K: int
    s: float
    value: float
    stderr: float
    runtime_ms: float
    seed: int

    def sort_key(self):
        return (self.scenario, self.metric, self.estimator, self.K, self.s)


# --------------------------------------------------------------------------
# configuration files


def _gain_value(x):
    """Linear gain from a plain number or a ``{"unit": "dB", ...}`` marker."""
    if isinstance(x, dict):
        unit = str(x.get("unit", "linear")).lower()
        raw = x["values"] if "values" in x else x["value"]
        if unit == "db":
            return _db_array(raw)
        if unit == "linear":
            return np.asarray(raw, dtype=float)
        raise ConfigError(f"unknown unit {unit!r}")
    return np.asarray(x, dtype=float)


def _db_array(raw):
    arr = np.asarray(
        np.vectorize(lambda v: -np.inf if v is None or v in ("-inf", "-Infinity") else float(v), otypes=[float])(
            np.asarray(raw, dtype=object)
        ),
        dtype=float,
    )
    return db_to_linear(arr)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from the JSON document layout.

    ``scenario`` is either a preset id or an object with ``id`` and optional
    ``alpha``/``g`` (class scenarios) or ``radius_m``/``pathloss`` (scenario c).
    Gains accept ``{"unit": "dB", "values": ...}`` markers; ``null`` or
    ``"-inf"`` in dB means zero linear gain.
    """
    data = dict(data)
    known = {f.name for f in fields(ExperimentConfig)} - {"model", "pathloss", "radius_m"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    sc = data.pop("scenario", "a")
    if isinstance(sc, str):
        sc = {"id": sc}
    sid = str(sc.get("id", "a")).lower()
    kwargs = dict(scenario=sid)
    try:
        if "alpha" in sc or "g" in sc:
            base = scenario_b() if sid == "b" else scenario_a()
            alpha = np.asarray(sc.get("alpha", base.alpha), dtype=float)
            g = _gain_value(sc["g"]) if "g" in sc else base.g
            kwargs["model"] = ClassModel(alpha=alpha, g=g)
        if "radius_m" in sc:
            kwargs["radius_m"] = float(sc["radius_m"])
        if "pathloss" in sc:
            kwargs["pathloss"] = PathlossParams(**sc["pathloss"])
        for key in ("K_list", "s_list", "metrics", "estimators"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return ExperimentConfig(**kwargs, **data)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


# --------------------------------------------------------------------------
# evaluation of single work items


@dataclass
class _Point:
    s: float
    value: float
    stderr: float = 0.0


@dataclass
class _Item:
    metric: str
    estimator: str
    K: int
    points: list = field(default_factory=list)
    runtime_ms: float = 0.0


def _mc_outage_stderr(gm, ev: SchemeEval, cfg, estimator, seed) -> float:
    """Delta-method stderr of the MC outage rate from a CRN slope estimate."""
    if ev.s <= 0:
        return 0.0
    lo, hi = estimate(gm, [0.95 * ev.s, 1.05 * ev.s], cfg.trials, seed, estimator, cfg.threads)
    slope = (hi.all_success - lo.all_success) / (0.1 * ev.s)
    if slope >= 0:
        return 0.0
    sd_s = ev.stderr / -slope
    return sd_s / (2.0 * math.log(2.0) * (1.0 + ev.s))


def _evaluate(cfg: ExperimentConfig, metric: str, estimator: str, K: int, gm: GainMatrix, seed: int):
    """Points for one realization. Returns None when the pair does not apply."""
    model = None if cfg.geometric else cfg.model
    mc = estimator in ("full", "collapsed")

    if metric == "multicast_rate":
        s_max = default_s_max(gm.station_gains)
        if estimator == "baseline":
            if model is not None:
                ev = analytic.baseline_multicast_rate(model)
            else:
                ev = maximize_effective_rate(
                    lambda s: analytic.baseline_mean_success_realized(gm, s), 1.0, s_max, cfg.grid_points
                )
            return [_Point(ev.s, ev.effective_rate)]
        if mc:
            obj = lambda s: estimate(gm, [s], cfg.trials, seed, estimator, cfg.threads)[0].mean_success
            batch = lambda grid: [e.mean_success for e in estimate(gm, grid, cfg.trials, seed, estimator, cfg.threads)]
            ev = maximize_effective_rate(obj, 0.5, s_max, cfg.grid_points, tol=1e-4, source="mc", batch=batch)
            e = estimate(gm, [ev.s], cfg.trials, seed, estimator, cfg.threads)[0]
            return [_Point(ev.s, ev.effective_rate, ev.rate * e.stderr_mean)]
        if model is None:
            return None
        if estimator == "approx":
            if K < 2:
                return None
            ev = maximize_effective_rate(lambda s: analytic.approx_mean_success(model, s, K), 0.5, s_max, cfg.grid_points, source="approx")
        else:
            if K < 2:
                return None
            ev = analytic.asymptotic_multicast(model, K)
        return [_Point(ev.s, ev.effective_rate)]

    if metric == "outage_rate":
        if estimator == "baseline":
            if model is not None:
                ev = analytic.baseline_outage_rate(model, K, cfg.eps)
            else:
                ev = analytic.baseline_outage_rate_realized(gm, cfg.eps)
            return [_Point(ev.s, ev.rate)]
        if mc:
            ev = solve_outage_snr_mc(gm, cfg.eps, cfg.trials, seed, estimator=estimator, threads=cfg.threads)
            return [_Point(ev.s, ev.rate, _mc_outage_stderr(gm, ev, cfg, estimator, seed))]
        ev = solve_outage_snr_asymptotic(model if model is not None else gm, cfg.eps)
        return [_Point(ev.s, ev.rate)]

    s_grid = cfg.s_grid
    if metric == "rate_vs_s":
        if estimator == "baseline":
            f = (lambda s: analytic.baseline_mean_success(model, s)) if model is not None else (
                lambda s: analytic.baseline_mean_success_realized(gm, s)
            )
            return [_Point(s, math.log2(1 + s) * f(s)) for s in s_grid]
        if mc:
            ests = estimate(gm, s_grid, cfg.trials, seed, estimator, cfg.threads)
            return [_Point(s, 0.5 * math.log2(1 + s) * e.mean_success, 0.5 * math.log2(1 + s) * e.stderr_mean) for s, e in zip(s_grid, ests)]
        if model is None or K < 2:
            return None
        if estimator == "approx":
            f = lambda s: analytic.approx_mean_success(model, s, K)
        else:
            f = lambda s: 1.0 if s == 0 else analytic.phase_limit_mean_success(model, s / math.log(K))
        return [_Point(s, 0.5 * math.log2(1 + s) * f(s)) for s in s_grid]

    # outage_vs_s: probability that some user fails, 1 - P_+(s)
    if estimator == "baseline":
        f = (lambda s: analytic.baseline_all_success(model, s, K)) if model is not None else (
            lambda s: analytic.baseline_all_success_realized(gm, s)
        )
        return [_Point(s, 1.0 - f(s)) for s in s_grid]
    if mc:
        ests = estimate(gm, s_grid, cfg.trials, seed, estimator, cfg.threads)
        return [_Point(s, 1.0 - e.all_success, e.stderr_all) for s, e in zip(s_grid, ests)]
    f = (lambda s: analytic.asymptotic_outage_prob(model, s)) if model is not None else (
        lambda s: analytic.asymptotic_outage_prob_realized(gm, s)
    )
    return [_Point(s, 1.0 - f(s)) for s in s_grid]


def _topology(cfg: ExperimentConfig, K: int, r: int) -> GainMatrix:
    if cfg.geometric:
        return geometric_gain_matrix(cfg.radius_m, K, cfg.pathloss, derive_seed(cfg.seed, _TOPOLOGY_STREAM, K, r))
    return block_gain_matrix(cfg.model, K)


def _run_item(cfg: ExperimentConfig, metric: str, estimator: str, K: int) -> Optional[_Item]:
    start = time.perf_counter()
    n_real = cfg.realizations if cfg.geometric else 1
    per_real = []
    try:
        for r in range(n_real):
            gm = _topology(cfg, K, r)
            pts = _evaluate(cfg, metric, estimator, K, gm, derive_seed(cfg.seed, _MC_STREAM, K, r))
            if pts is None:
                log.warning("skipping %s/%s at K=%d: not defined for scenario %s", metric, estimator, K, cfg.scenario)
                return None
            per_real.append(pts)
    except Exception as exc:
        raise ExperimentError(f"{metric}/{estimator}/K={K}: {exc}") from exc

    item = _Item(metric, estimator, K)
    if n_real == 1:
        item.points = per_real[0]
    else:
        for j in range(len(per_real[0])):
            vals = np.array([pts[j].value for pts in per_real])
            ss = np.array([pts[j].s for pts in per_real])
            item.points.append(_Point(float(ss.mean()), float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_real))))
    item.runtime_ms = (time.perf_counter() - start) * 1e3
    return item


def run_scenario(config: ExperimentConfig, threads: Optional[int] = None) -> list[ResultRow]:
    """Evaluate every requested (metric, estimator, K) and return sorted rows.

    ``threads`` parallelises over work items; the output does not depend on it.
    """
    work = [(m, e, K) for m in config.metrics for e in config.estimators for K in config.K_list]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            items = list(pool.map(lambda w: _run_item(config, *w), work))
    else:
        items = [_run_item(config, *w) for w in work]

    rows = []
    for item in items:
        if item is None:
            continue
        runtime = round(item.runtime_ms, 3) if config.record_runtime else 0.0
        for p in item.points:
            rows.append(
                ResultRow(
                    scenario=config.scenario,
                    metric=item.metric,
                    estimator=item.estimator,
                    K=item.K,
                    s=float(p.s),
                    value=float(p.value),
                    stderr=float(p.stderr),
                    runtime_ms=runtime,
                    seed=config.seed,
                )
            )
    rows.sort(key=ResultRow.sort_key)
    return rows


# --------------------------------------------------------------------------
# result files


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_results(rows: Sequence[ResultRow], path, format: str = "csv") -> None:
    """Write rows as CSV (fixed header, 17 significant digits) or a JSON array."""
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    try:
        if format == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_HEADER)
                for row in rows:
                    w.writerow([_fmt(getattr(row, name)) for name in CSV_HEADER])
        elif format == "json":
            with path.open("w") as fh:
                json.dump([asdict(r) for r in rows], fh, indent=1)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def _coerce(name: str, value):
    if name in ("K", "seed"):
        return int(value)
    if name in ("s", "value", "stderr", "runtime_ms"):
        return float(value)
    return str(value)


def read_results(path, format: Optional[str] = None) -> list[ResultRow]:
    path = Path(path)
    format = format or ("json" if path.suffix == ".json" else "csv")
    if format == "json":
        records = json.loads(path.read_text())
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            records = list(reader)
    return [ResultRow(**{k: _coerce(k, rec[k]) for k in CSV_HEADER}) for rec in records]


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
