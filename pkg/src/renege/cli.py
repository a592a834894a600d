"""Command-line front end: one subcommand per experiment.

Every run takes a JSON scenario config (--config), writes summary.json plus
CSV detail files into --out-dir, and exits 0 on success, 2 on config errors,
3 on capability errors (an exact mode without the bound it needs, or no
renovation epoch in range), 4 on contract violations.  Summaries carry the
config hash, seeds, and method tags, and contain nothing run-dependent, so
identical configs replay to bit-identical files regardless of --workers.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cesaro import boundary_mass, cesaro_distribution, invariance_distance, tightness_report
from .des import Scenario, cross_validate_recursion, regeneration_stats, simulate
from .estimation import TruncationError, mc_aggregate
from .fifo_begin import (
    exact_loss_rows,
    loss_probability_begin,
    loss_report_from_rows,
    sample_stationary_w,
)
from .fifo_end import (
    exact_loss_rows_end,
    loss_metrics_end,
    loss_report_from_rows_end,
    sample_stationary_s,
)
from .marks import ConfigError, MarkSource, source_from_config
from .properties import (
    des_inclusion_suite,
    end_case_table_mismatches,
    pointwise_inequality_suite,
    step_monotonicity_violations,
)
from .recursion import (
    D_ONLY,
    SIGMA_PLUS_D,
    CapabilityError,
    DepthExhaustedError,
    RenovationNotFoundError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPABILITY = 3
EXIT_CONTRACT = 4

XVAL_TOLERANCE = 1e-9

EXPERIMENTS = ("sample-w", "sample-s", "loss-begin", "loss-end",
               "regen", "des", "cesaro", "xval", "props")


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _get(cfg: dict, section: str, key: str, default, caster):
    block = cfg.get(section, {})
    if not isinstance(block, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    if key not in block:
        if default is None:
            raise ConfigError(f"config is missing required key {section}.{key}")
        return default
    try:
        return caster(block[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {section}.{key} is invalid: {exc}") from exc


def _build_source(cfg: dict, seed_override: int | None) -> MarkSource:
    if "source" not in cfg:
        raise ConfigError("config is missing the 'source' section")
    scfg = dict(cfg["source"])
    if seed_override is not None:
        scfg["seed"] = seed_override
    return source_from_config(scfg)


def _mode(cfg: dict) -> str:
    mode = _get(cfg, "run", "mode", "exact", str)
    if mode not in ("exact", "approximate"):
        raise ConfigError(f"run.mode must be 'exact' or 'approximate', got {mode!r}")
    return mode


def _require_exact_bound(src: MarkSource, model: str) -> None:
    spec = SIGMA_PLUS_D if model == "begin" else D_ONLY
    if spec.bound_for(src) is None:
        name = "sigma+dpat" if model == "begin" else "dpat"
        raise CapabilityError(
            f"exact mode needs an a.s. alpha_bound on {name}; the configured source is "
            "unbounded (use uniform, truncated-exponential, discrete, or deterministic marginals)")


def _config_sha256(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _plain(obj):
    """Recursively strip numpy scalar types so json round-trips cleanly."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_summary(out_dir: Path, experiment: str, cfg: dict, seeds: dict, results: dict) -> None:
    payload = {
        "tool": "renege",
        "version": __version__,
        "experiment": experiment,
        "config": cfg,
        "config_sha256": _config_sha256(cfg),
        "seeds": seeds,
        "results": _plain(results),
    }
    # serialize first so a failure never leaves a truncated file behind
    blob = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        fh.write(blob)


def _write_csv(path: Path, header: list[str], rows, preamble: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if preamble:
            fh.write(preamble + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(c) for c in row])


def _csv_cell(c):
    if isinstance(c, float):
        return repr(c)
    return "" if c is None else c


def _chunks(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    step = math.ceil(total / parts)
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def _replica_chunk(args):
    """Top-level worker: one chunk of replica-indexed rows (picklable)."""
    kind, source_cfg, params, lo, hi = args
    src = source_from_config(source_cfg)
    if kind == "loss-begin":
        return exact_loss_rows(src, lo, hi, params["max_epochs"], params["max_depth"])
    if kind == "loss-end":
        return exact_loss_rows_end(src, lo, hi, params["max_epochs"], params["max_depth"])
    sampler = sample_stationary_w if kind == "sample-w" else sample_stationary_s
    rows = []
    for r in range(lo, hi):
        rep = src.substream(r) if src.is_iid else src.shift(r * params["replica_spacing"])
        smp = sampler(rep, max_epochs=params["max_epochs"], max_depth=params["max_depth"],
                      mode=params["mode"], warmup=params["warmup"])
        cert_depth = smp.certificate.depth if smp.certificate is not None else None
        rows.append((r, smp.value, smp.method, smp.renovation_epoch, cert_depth))
    return rows


def _parallel_rows(kind: str, source_cfg: dict, params: dict, total: int, workers: int) -> list:
    jobs = [(kind, source_cfg, params, lo, hi) for lo, hi in _chunks(total, workers * 4)]
    if workers <= 1:
        results = [_replica_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replica_chunk, jobs))
    return [row for chunk in results for row in chunk]


def _source_cfg_with_seed(cfg: dict, src: MarkSource) -> dict:
    scfg = dict(cfg["source"])
    scfg["seed"] = src.seed
    return scfg


def _exp_sample(cfg, out_dir, workers, src, model: str) -> int:
    mode = _mode(cfg)
    samples = _get(cfg, "run", "samples", 1000, int)
    params = {
        "mode": mode,
        "max_epochs": _get(cfg, "run", "max_epochs", 10_000, int),
        "max_depth": _get(cfg, "run", "max_depth", 10_000, int),
        "warmup": _get(cfg, "run", "warmup", 100_000, int),
    }
    params["replica_spacing"] = max(2 * params["max_depth"], params["warmup"])
    if mode == "exact":
        _require_exact_bound(src, model)
    kind = "sample-w" if model == "begin" else "sample-s"
    rows = _parallel_rows(kind, _source_cfg_with_seed(cfg, src), params, samples, workers)
    values = [r[1] for r in rows]
    est = mc_aggregate(values, kind="real") if len(values) > 1 else None
    results = {
        "model": model,
        "method": rows[0][2] if rows else None,
        "samples": samples,
        "mean": (est.as_dict() if est is not None else
                 {"point": values[0], "low": None, "high": None, "n": 1, "kind": "single"}),
        "zero_fraction": sum(1 for v in values if v == 0.0) / samples,
        "max_value": max(values),
    }
    _write_csv(out_dir / "detail.csv",
               ["replica", "value", "method", "renovation_epoch", "certificate_depth"], rows)
    _write_summary(out_dir, kind, cfg,
                   {"seed": src.seed, "stream": src.stream, "replica_streams": [0, samples]},
                   results)
    return EXIT_OK


def _exp_loss(cfg, out_dir, workers, src, model: str) -> int:
    mode = _mode(cfg)
    samples = _get(cfg, "run", "samples", 1000, int)
    max_epochs = _get(cfg, "run", "max_epochs", 10_000, int)
    max_depth = _get(cfg, "run", "max_depth", 10_000, int)
    warmup = _get(cfg, "run", "warmup", 100_000, int)
    kind = "loss-begin" if model == "begin" else "loss-end"
    if mode == "exact":
        _require_exact_bound(src, model)
        params = {"max_epochs": max_epochs, "max_depth": max_depth}
        rows = _parallel_rows(kind, _source_cfg_with_seed(cfg, src), params, samples, workers)
        if model == "begin":
            report = loss_report_from_rows(src, rows)
            _write_csv(out_dir / "detail.csv",
                       ["replica", "y_min", "w", "y_plus", "dpat"], rows)
        else:
            report = loss_report_from_rows_end(src, rows)
            _write_csv(out_dir / "detail.csv",
                       ["replica", "y_min", "s", "y_dpat", "sigma", "dpat"], rows)
    else:
        if model == "begin":
            report = loss_probability_begin(src, samples, mode="approximate", warmup=warmup)
        else:
            report = loss_metrics_end(src, samples, mode="approximate", warmup=warmup)
    results = {
        "model": report.model,
        "method": report.method,
        "pi_hat": report.pi_hat.as_dict(),
        "lower_bound": report.lower_bound.as_dict(),
        "upper_bound": report.upper_bound.as_dict(),
        "bracket_ok": report.bracket_ok,
        "replicas": report.replicas,
    }
    if report.pi_never_reach is not None:
        results["pi_never_reach"] = report.pi_never_reach.as_dict()
    _write_summary(out_dir, kind, cfg,
                   {"seed": src.seed, "stream": src.stream}, results)
    if not report.bracket_ok:
        print("contract violation: loss estimate escapes its bounds", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


def _scenario(cfg, src) -> Scenario:
    servers = _get(cfg, "model", "servers", 1, int)
    impatience = _get(cfg, "model", "impatience", "begin", str)
    customers = _get(cfg, "run", "customers", 10_000, int)
    try:
        return Scenario(servers=servers, impatience=impatience, source=src,
                        horizon_customers=customers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _path_stats_results(stats) -> dict:
    return {
        "arrivals": stats.arrivals,
        "outcomes": dict(stats.outcome_counts),
        "empty_epoch_count": stats.empty_epoch_count,
        "inclusion_violations": stats.inclusion_violations,
        "sojourn_violations": stats.sojourn_violations,
        "time_average_congestion": stats.time_average_congestion,
        "horizon_time": stats.horizon_time,
        "l_zero_arrival_freq": stats.l_zero_arrival_freq,
        "m_zero_arrival_freq": stats.m_zero_arrival_freq,
    }


def _exp_regen(cfg, out_dir, workers, src) -> int:
    scn = _scenario(cfg, src)
    replicas = _get(cfg, "run", "replicas", 200, int)
    max_depth = _get(cfg, "run", "max_depth", 10_000, int)
    sim = simulate(scn)
    report = regeneration_stats(scn, sim, replicas=replicas, max_depth=max_depth)
    results = _path_stats_results(report.stats)
    results.update({
        "sufficient_alpha": report.sufficient_alpha,
        "p_zero_sufficient": {**report.p_zero_sufficient.estimate.as_dict(),
                              "exact": report.p_zero_sufficient.exact},
        "p_zero_necessary": {**report.p_zero_necessary.estimate.as_dict(),
                             "exact": report.p_zero_necessary.exact},
    })
    stats = report.stats
    _write_csv(out_dir / "detail.csv",
               ["index", "l_before", "m_before", "x_before"],
               zip(range(stats.arrivals), stats.l_before.tolist(),
                   stats.m_before.tolist(), stats.x_before.tolist()))
    _write_summary(out_dir, "regen", cfg, {"seed": src.seed, "stream": src.stream}, results)
    if stats.inclusion_violations or stats.sojourn_violations:
        print("contract violation: inclusion or sojourn bounds broken", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


def _exp_des(cfg, out_dir, workers, src) -> int:
    scn = _scenario(cfg, src)
    records, stats = simulate(scn)
    _write_csv(out_dir / "customers.csv",
               ["index", "arrival", "sigma", "dpat", "service_start", "departure", "outcome"],
               ((r.index, r.arrival, r.sigma, r.dpat, r.service_start, r.departure, r.outcome)
                for r in records))
    _write_summary(out_dir, "des", cfg, {"seed": src.seed, "stream": src.stream},
                   _path_stats_results(stats))
    if stats.inclusion_violations or stats.sojourn_violations:
        print("contract violation: inclusion or sojourn bounds broken", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


def _exp_cesaro(cfg, out_dir, workers, src) -> int:
    model = _get(cfg, "model", "impatience", "begin", str)
    if model not in ("begin", "end"):
        raise ConfigError(f"model.impatience must be 'begin' or 'end', got {model!r}")
    n = _get(cfg, "run", "steps", 10_000, int)
    p = _get(cfg, "run", "boundary_p", 10, int)
    levels = _get(cfg, "run", "quantiles", [0.5, 0.9, 0.99, 0.999],
                  lambda xs: [float(x) for x in xs])
    mu = cesaro_distribution(src, n, model)
    inv = invariance_distance(mu, src, model)
    bmass = boundary_mass(src, n, p, model)
    tight = tightness_report(src, n, tuple(levels))
    results = {
        "model": model,
        "mode": "trajectory",
        "steps": n,
        "invariance_distance": inv,
        "boundary_p": p,
        "boundary_mass": bmass,
        "tightness": {
            "levels": list(tight.levels),
            "w_quantiles": list(tight.w_quantiles),
            "l_quantiles": list(tight.l_quantiles),
            "ordered_ok": tight.ordered_ok,
        },
    }
    preamble = f"# n_steps={mu.n_steps} model={mu.model} seed={src.seed} stream={src.stream}"
    _write_csv(out_dir / "detail.csv", ["value", "weight"],
               zip(mu.values.tolist(), mu.weights.tolist()), preamble=preamble)
    _write_summary(out_dir, "cesaro", cfg, {"seed": src.seed, "stream": src.stream}, results)
    return EXIT_OK


def _exp_xval(cfg, out_dir, workers, src) -> int:
    scn = _scenario(cfg, src)
    disc = cross_validate_recursion(scn)
    ok = disc <= XVAL_TOLERANCE
    _write_summary(out_dir, "xval", cfg, {"seed": src.seed, "stream": src.stream},
                   {"model": scn.impatience, "customers": scn.horizon_customers,
                    "max_discrepancy": disc, "tolerance": XVAL_TOLERANCE, "contract_ok": ok})
    if not ok:
        print(f"contract violation: DES/recursion discrepancy {disc:g} > {XVAL_TOLERANCE:g}",
              file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


def _exp_props(cfg, out_dir, workers, src) -> int:
    count = _get(cfg, "run", "tuples", 100_000, int)
    seed = _get(cfg, "run", "prop_seed", 20240811, int)
    suite = pointwise_inequality_suite(count, seed)
    suite["step_monotonicity"] = step_monotonicity_violations(count, seed + 1)
    suite["end_case_table"] = end_case_table_mismatches(count, seed + 2)
    suite.update(des_inclusion_suite(seed + 3))
    total = sum(suite.values())
    _write_summary(out_dir, "props", cfg, {"seed": src.seed, "stream": src.stream},
                   {"violations": suite, "total_violations": total, "tuples": count})
    for name, bad in suite.items():
        print(f"{name}: {'ok' if bad == 0 else f'{bad} violations'}")
    if total:
        print("contract violation: property suite found violations", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


def run_scenario(cfg: dict, experiment: str, out_dir: str | Path, workers: int = 1,
                 seed_override: int | None = None) -> int:
    """Execute one experiment; returns the process exit status."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    declared = cfg.get("experiment")
    if declared is not None and declared != experiment:
        raise ConfigError(f"config declares experiment {declared!r} but {experiment!r} was invoked")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    src = _build_source(cfg, seed_override)
    if experiment == "sample-w":
        return _exp_sample(cfg, out, workers, src, "begin")
    if experiment == "sample-s":
        return _exp_sample(cfg, out, workers, src, "end")
    if experiment == "loss-begin":
        return _exp_loss(cfg, out, workers, src, "begin")
    if experiment == "loss-end":
        return _exp_loss(cfg, out, workers, src, "end")
    if experiment == "regen":
        return _exp_regen(cfg, out, workers, src)
    if experiment == "des":
        return _exp_des(cfg, out, workers, src)
    if experiment == "cesaro":
        return _exp_cesaro(cfg, out, workers, src)
    if experiment == "xval":
        return _exp_xval(cfg, out, workers, src)
    return _exp_props(cfg, out, workers, src)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="renege",
        description="Queues with impatient customers: exact stationary sampling, "
                    "loss bounds, event simulation, and property suites.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario config (JSON)")
        p.add_argument("--out-dir", default="renege-out", help="report directory")
        p.add_argument("--workers", type=int, default=1, help="replica-level parallelism")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace the source seed from the config")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return run_scenario(cfg, args.experiment, args.out_dir,
                            workers=args.workers, seed_override=args.seed_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapabilityError, RenovationNotFoundError, DepthExhaustedError,
            TruncationError) as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY


if __name__ == "__main__":
    sys.exit(main())
