"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 configuration or validation error,
3 runtime error. Results go to stdout (or ``--out``); diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import analytic
from .experiments import (
    ESTIMATORS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    run_scenario,
    write_results,
)
from .mc_engine import derive_seed, estimate
from .solvers import (
    default_s_max,
    maximize_effective_rate,
    solve_outage_snr_asymptotic,
    solve_outage_snr_mc,
)
from .topology import TopologyError, block_gain_matrix, geometric_gain_matrix, validate_two_hop

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

ANALYTIC_QUANTITIES = (
    "beta_star",
    "beta",
    "baseline_multicast",
    "baseline_outage",
    "asymptotic_outage_prob",
    "outage_snr",
    "taylor_snr",
    "phase_limit",
    "approx_failure",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, out: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--scenario", choices=("a", "b", "c"), help="built-in scenario preset")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a top-level config key (value parsed as JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--K", type=int, help="number of users")
    p.add_argument("--s", type=float, help="SNR threshold (linear)")
    p.add_argument("--threads", type=int, help="parallelism hint; never changes results")
    if out:
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="d2dcast", description="Two-slot D2D-aided multicast: simulation and analysis")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="one Monte Carlo estimate at a threshold")
    _common(p)
    p.add_argument("--estimator", choices=("full", "collapsed", "baseline"), default="collapsed")

    p = sub.add_parser("analytic", help="closed-form and asymptotic quantities")
    _common(p)
    p.add_argument("--what", choices=ANALYTIC_QUANTITIES, required=True)
    p.add_argument("--beta", type=float, help="phase coefficient for phase_limit / approx_failure")
    p.add_argument("--class-index", type=int, default=1)

    p = sub.add_parser("optimize", help="best multicast operating point")
    _common(p)
    p.add_argument("--estimator", choices=ESTIMATORS, default="collapsed")

    p = sub.add_parser("outage", help="outage threshold and rate")
    _common(p)
    p.add_argument("--estimator", choices=ESTIMATORS, default="collapsed")

    p = sub.add_parser("sweep", help="run a full experiment and write result rows")
    _common(p)
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime per row")
    sub.choices["sweep"].set_defaults(format="csv")

    p = sub.add_parser("validate", help="check the configuration and two-hop reachability")
    _common(p, out=False)
    return parser


def _load(args) -> ExperimentConfig:
    if args.config and args.scenario:
        raise UsageError("--scenario and --config are mutually exclusive")
    cfg = load_config(args.config) if args.config else config_from_dict({"scenario": args.scenario or "a"})
    changes = dict(_split_override(o) for o in args.overrides)
    for key in ("K_list", "s_list", "metrics", "estimators"):
        if changes.get(key) is not None:
            changes[key] = tuple(changes[key])
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("eps", "eps"), ("threads", "threads")):
        if getattr(args, flag) is not None:
            changes[key] = getattr(args, flag)
    if args.K is not None:
        changes["K_list"] = (args.K,)
    if getattr(args, "timing", False):
        changes["record_runtime"] = True
    try:
        return replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _split_override(item: str):
    if "=" not in item:
        raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    known = set(ExperimentConfig.__dataclass_fields__) - {"model", "pathloss", "radius_m"}
    if key not in known:
        raise UsageError(f"unknown config key {key!r} in --set")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _network(cfg: ExperimentConfig):
    K = cfg.K_list[0]
    if cfg.geometric:
        return geometric_gain_matrix(cfg.radius_m, K, cfg.pathloss, derive_seed(cfg.seed, 1, K, 0))
    return block_gain_matrix(cfg.model, K)


def _emit(payload, args) -> None:
    if isinstance(payload, float):
        text = repr(payload)
    else:
        text = json.dumps(payload, indent=1, default=_json_default)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def _need_s(args) -> float:
    if args.s is None:
        raise UsageError("--s is required for this command")
    return args.s


def _require_model(cfg: ExperimentConfig, what: str):
    if cfg.model is None:
        raise ConfigError(f"{what} needs a class model; scenario {cfg.scenario} has none")
    return cfg.model


def _cmd_simulate(cfg, args):
    gm = _network(cfg)
    est = estimate(gm, [_need_s(args)], cfg.trials, cfg.seed, args.estimator, cfg.threads)[0]
    _emit(est.to_dict(), args)


def _cmd_analytic(cfg, args):
    what = args.what
    if what == "outage_snr":
        target = cfg.model if cfg.model is not None else _network(cfg)
        _emit(solve_outage_snr_asymptotic(target, cfg.eps).to_dict(), args)
        return
    model = _require_model(cfg, what)
    K = cfg.K_list[0]
    if what == "beta_star":
        out = analytic.beta_thresholds(model).beta_star
    elif what == "beta":
        bt = analytic.beta_thresholds(model)
        out = {"beta_c": bt.beta_c, "beta_star": bt.beta_star}
    elif what == "baseline_multicast":
        out = analytic.baseline_multicast_rate(model).to_dict()
    elif what == "baseline_outage":
        out = analytic.baseline_outage_rate(model, K, cfg.eps).to_dict()
    elif what == "asymptotic_outage_prob":
        out = analytic.asymptotic_outage_prob(model, _need_s(args))
    elif what == "taylor_snr":
        out = analytic.outage_snr_taylor(model, cfg.eps)
    elif what == "phase_limit":
        if args.beta is None:
            raise UsageError("--beta is required for phase_limit")
        out = analytic.phase_limit_mean_success(model, args.beta)
    else:
        if args.beta is None:
            raise UsageError("--beta is required for approx_failure")
        out = analytic.approx_failure_prob(model, args.class_index, args.beta, K)
    _emit(float(out) if isinstance(out, (float, np.floating)) else out, args)


def _cmd_optimize(cfg, args):
    gm = _network(cfg)
    K = gm.K
    est = args.estimator
    s_max = default_s_max(gm.station_gains)
    if est in ("full", "collapsed"):
        obj = lambda s: estimate(gm, [s], cfg.trials, cfg.seed, est, cfg.threads)[0].mean_success
        batch = lambda grid: [e.mean_success for e in estimate(gm, grid, cfg.trials, cfg.seed, est, cfg.threads)]
        ev = maximize_effective_rate(obj, 0.5, s_max, cfg.grid_points, tol=1e-4, source="mc", batch=batch)
    elif est == "baseline":
        if cfg.model is not None:
            ev = analytic.baseline_multicast_rate(cfg.model)
        else:
            ev = maximize_effective_rate(lambda s: analytic.baseline_mean_success_realized(gm, s), 1.0, s_max)
    elif est == "approx":
        model = _require_model(cfg, "approx")
        ev = maximize_effective_rate(lambda s: analytic.approx_mean_success(model, s, K), 0.5, s_max, source="approx")
    else:
        ev = analytic.asymptotic_multicast(_require_model(cfg, "asymptotic"), K)
    _emit(ev.to_dict(), args)


def _cmd_outage(cfg, args):
    gm = _network(cfg)
    est = args.estimator
    if est in ("full", "collapsed"):
        ev = solve_outage_snr_mc(gm, cfg.eps, cfg.trials, cfg.seed, estimator=est, threads=cfg.threads)
    elif est == "baseline":
        if cfg.model is not None:
            ev = analytic.baseline_outage_rate(cfg.model, gm.K, cfg.eps)
        else:
            ev = analytic.baseline_outage_rate_realized(gm, cfg.eps)
    else:
        ev = solve_outage_snr_asymptotic(cfg.model if cfg.model is not None else gm, cfg.eps)
    _emit(ev.to_dict(), args)


def _cmd_sweep(cfg, args):
    if not args.out:
        raise UsageError("sweep requires --out")
    rows = run_scenario(cfg, threads=cfg.threads)
    write_results(rows, args.out, args.format)
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)


def _cmd_validate(cfg, args):
    if cfg.model is None:
        print(f"scenario {cfg.scenario}: geometric cell, configuration valid", file=sys.stderr)
        print(json.dumps({"scenario": cfg.scenario, "valid": True, "two_hop_violations": []}))
        return EXIT_OK
    bad = validate_two_hop(cfg.model)
    print(json.dumps({"scenario": cfg.scenario, "valid": not bad, "two_hop_violations": bad}))
    if bad:
        print(f"two-hop reachability fails for classes {bad}", file=sys.stderr)
        return EXIT_CONFIG
    print("two-hop reachability holds for every class", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "analytic": _cmd_analytic,
    "optimize": _cmd_optimize,
    "outage": _cmd_outage,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load(args)
        code = COMMANDS[args.command](cfg, args)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, TopologyError, analytic.AnalyticError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())
