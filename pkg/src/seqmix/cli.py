"""Command-line front end.

Usage::

    seqmix <command> --config run.yaml [--seed N] [--out DIR]

Each run writes ``DIR/<command>.csv``, a ``#``-prefixed metadata header
followed by plot-ready rows, and ``DIR/<command>.jsonl`` with one JSON summary
line. Only the CSV header carries a timestamp, so two runs with the same
config and seed produce identical bodies.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml
from scipy import linalg

from . import __version__
from .applications import changepoint_test, half_distorted_sample, selfnorm_ci
from .empirical import (EvaluationGrid, default_grid, eval_sequential, modulus_of_continuity,
                        regular_grid, sup_norm)
from .generators import DomainError, ParameterError, SequenceSpec, generate
from .limit import (NumericalError, apply_functional, estimate_gamma, gamma_analytic_iid,
                    simulate_limit_array, weak_convergence_diagnostic)
from .ottaviani import (FiniteModel, PartialSumFamily, blocking_plan, verify_inequality_exact_grid,
                        verify_inequality_grid)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = ("simulate", "evaluate", "limit", "ottaviani", "diagnose", "changepoint", "ci")


class ConfigError(ValueError):
    pass


_ANY = object()

# key -> (accepted types, default); _ANY defaults mean "required"
COMMON = {"seed": ((int,), 0), "workers": ((int, type(None)), None)}
SCHEMAS = {
    "simulate": {"generator": ((dict,), {}), "n": ((int,), _ANY)},
    "evaluate": {
        "generator": ((dict,), {}), "n": ((int,), _ANY), "centering": ((str,), "true"),
        "m_s": ((int, type(None)), None), "m_u": ((int, type(None)), None), "delta": ((float, int), 0.1),
    },
    "limit": {
        "generator": ((dict,), {}), "kernel": ((str,), "analytic"), "pilot_n": ((int,), 10000),
        "bandwidth": ((int, type(None)), None), "m_s": ((int,), 16), "m_u": ((int,), 16),
        "reps": ((int,), 1000),
    },
    "ottaviani": {
        "mode": ((str,), "mc"), "n": ((int,), _ANY), "ell": ((int, str), 1), "eta": ((float, int), 0.8),
        "epsilons": ((list,), _ANY),
        # mc
        "generator": ((dict,), {}), "family": ((str,), "singletons"), "m_u": ((int,), 16),
        "delta": ((float, int), 0.1), "reps": ((int,), 2000), "independent_inner": ((bool,), False),
        # exact
        "values": ((list,), None), "probs": ((list, type(None)), None), "transition": ((list, type(None)), None),
    },
    "diagnose": {
        "generator": ((dict,), {}), "functional": ((str,), "sup"), "n_list": ((list,), [128, 2048]),
        "reps": ((int,), 2000), "m_s": ((int,), 64), "m_u": ((int, type(None)), None),
    },
    "changepoint": {
        "generator": ((dict,), {}), "n": ((int,), _ANY), "level": ((float,), 0.05), "reps": ((int,), 500),
        "bandwidth": ((int, type(None)), None), "alternative": ((str,), "none"),
        "replications": ((int,), 1), "m_s": ((int,), 128), "m_u": ((int,), 16),
    },
    "ci": {
        "generator": ((dict,), {}), "n": ((int,), _ANY), "level": ((float,), 0.05),
        "replications": ((int,), 1), "theta": ((float, type(None)), None),
    },
}
GENERATOR_KEYS = {"family", "dim", "m", "phi", "rho"}


def resolve_config(command: str, raw: dict | None, seed: int | None = None) -> dict:
    """Validate ``raw`` against the command schema and fill defaults."""
    raw = dict(raw or {})
    schema = {**COMMON, **SCHEMAS[command]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {command!r}: {unknown}")
    out = {}
    for key, (types, default) in schema.items():
        if key in raw:
            value = raw[key]
            if isinstance(value, bool) and bool not in types:
                raise ConfigError(f"{key}: expected {[t.__name__ for t in types]}, got bool")
            if float in types and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, types):
                raise ConfigError(f"{key}: expected {[t.__name__ for t in types]}, got {type(value).__name__}")
            out[key] = value
        elif default is _ANY:
            raise ConfigError(f"missing required key {key!r} for {command!r}")
        else:
            out[key] = default
    if seed is not None:
        out["seed"] = seed
    if not 0 <= out["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if "generator" in out:
        bad = sorted(set(out["generator"]) - GENERATOR_KEYS)
        if bad:
            raise ConfigError(f"unknown generator keys: {bad}")
        out["generator"] = spec_from_config(out["generator"]).to_dict()
    if out["workers"] is None:
        out["workers"] = os.cpu_count() or 1
    return out


def spec_from_config(cfg: dict) -> SequenceSpec:
    try:
        return SequenceSpec(**cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


class Report:
    """CSV body plus a JSON summary line."""

    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []
        self.summary = {}

    def add(self, row):
        if isinstance(row, dict):
            row = [row[c] for c in self.columns]
        self.rows.append([_fmt(v) for v in row])

    def body(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _grid_for(sample, cfg) -> EvaluationGrid:
    if cfg.get("m_s") is None and cfg.get("m_u") is None:
        return default_grid(sample)
    m_s = cfg.get("m_s") or sample.n
    m_u = cfg.get("m_u") or 16
    return regular_grid(m_s, m_u, sample.dim)


def cmd_simulate(cfg):
    spec = SequenceSpec(**cfg["generator"])
    sample = generate(spec, cfg["n"], cfg["seed"])
    rep = Report(["i"] + [f"u{j + 1}" for j in range(spec.dim)])
    for i, row in enumerate(sample.data, start=1):
        rep.add([i, *row])
    rep.summary = {"n": sample.n, "dim": sample.dim, "column_means": sample.data.mean(axis=0).tolist()}
    return rep


def cmd_evaluate(cfg):
    spec = SequenceSpec(**cfg["generator"])
    sample = generate(spec, cfg["n"], cfg["seed"])
    grid = _grid_for(sample, cfg)
    fld = eval_sequential(sample, cfg["centering"], grid)
    lattice = grid.lattice()
    rep = Report(["s", "k"] + [f"u{j + 1}" for j in range(spec.dim)] + ["value"])
    for a, (s, k) in enumerate(zip(grid.s_points, fld.k_points)):
        for q in range(lattice.shape[0]):
            rep.add([s, k, *lattice[q], fld.values[a, q]])
    rep.summary = {"sup_norm": sup_norm(fld), "modulus": modulus_of_continuity(fld, cfg["delta"]),
                   "delta": cfg["delta"]}
    return rep


def cmd_limit(cfg):
    spec = SequenceSpec(**cfg["generator"])
    grid = regular_grid(cfg["m_s"], cfg["m_u"], spec.dim)
    if cfg["kernel"] == "analytic":
        kernel = gamma_analytic_iid(grid.u_points, spec)
    elif cfg["kernel"] in ("bartlett", "truncated"):
        pilot = generate(spec, cfg["pilot_n"], cfg["seed"], rep=(1,))
        kernel = estimate_gamma(pilot, grid.u_points, cfg["bandwidth"], cfg["kernel"])
    else:
        raise ConfigError("kernel must be 'analytic', 'bartlett' or 'truncated'")
    sims = simulate_limit_array(kernel, grid.s_points, cfg["reps"], cfg["seed"])
    sup = apply_functional(sims, "sup")
    cvm = apply_functional(sims, "cvm")
    rep = Report(["rep", "sup", "cvm"])
    for r in range(cfg["reps"]):
        rep.add([r, sup[r], cvm[r]])
    var_end = sims[:, -1, :].var(axis=0, ddof=1)
    target = np.diag(kernel.gamma)
    rep.summary = {"sup_mean": float(sup.mean()), "sup_se": float(sup.std(ddof=1) / np.sqrt(sup.size)),
                   "max_abs_var_error_at_s1": float(np.max(np.abs(var_end - target))),
                   "bandwidth": kernel.bandwidth, "kernel": kernel.kernel}
    return rep


REPORT_COLUMNS = ["epsilon", "n", "ell", "reps", "lhs", "lhs_se", "max_exceed", "denominator",
                  "rhs_sup", "rhs_block", "rhs_mixing", "rhs", "rhs_se", "margin", "passed", "exact"]


def cmd_ottaviani(cfg):
    n = cfg["n"]
    ell = cfg["ell"]
    if ell == "plan":
        ell = blocking_plan(n, cfg["eta"]).ell
    elif isinstance(ell, str):
        raise ConfigError("ell must be an integer or 'plan'")
    if cfg["mode"] == "exact":
        if cfg["values"] is None:
            raise ConfigError("exact mode needs 'values'")
        eps = [Fraction(str(e)) for e in cfg["epsilons"]]
        try:
            model = FiniteModel(values=[[Fraction(str(v)) for v in row] for row in cfg["values"]],
                                probs=None if cfg["probs"] is None else [Fraction(str(p)) for p in cfg["probs"]],
                                transition=None if cfg["transition"] is None else
                                [[Fraction(str(p)) for p in row] for row in cfg["transition"]])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        reports = verify_inequality_exact_grid(model, n, ell, eps)
    elif cfg["mode"] == "mc":
        spec = SequenceSpec(**cfg["generator"])
        family = PartialSumFamily(cfg["family"], [np.arange(cfg["m_u"] + 1) / cfg["m_u"]] * spec.dim, cfg["delta"])
        reports = verify_inequality_grid(spec, family, n, ell, [float(e) for e in cfg["epsilons"]],
                                         cfg["reps"], cfg["seed"], cfg["independent_inner"])
    else:
        raise ConfigError("mode must be 'exact' or 'mc'")
    rep = Report(REPORT_COLUMNS)
    for r in reports:
        rep.add(asdict(r))  # exact reports keep their fractions in the CSV
    rep.summary = {"ell": ell, "cells": len(reports), "all_passed": all(r.passed for r in reports)}
    return rep


def cmd_diagnose(cfg):
    spec = SequenceSpec(**cfg["generator"])
    res = weak_convergence_diagnostic(spec, cfg["functional"], cfg["n_list"], cfg["reps"], cfg["seed"],
                                      cfg["m_s"], cfg["m_u"])
    rep = Report(["n", "ks", "ks_pvalue", "process_mean", "limit_mean"])
    for row in res.rows():
        rep.add(row)
    rep.summary = {"decreasing": res.decreasing, "ks": res.ks, "grid": res.grid}
    return rep


def cmd_changepoint(cfg):
    spec = SequenceSpec(**cfg["generator"])
    if cfg["alternative"] not in ("none", "half_distorted"):
        raise ConfigError("alternative must be 'none' or 'half_distorted'")

    def one(r):
        if cfg["alternative"] == "half_distorted":
            sample = half_distorted_sample(cfg["n"], cfg["seed"], rep=(r,))
        else:
            sample = generate(spec, cfg["n"], cfg["seed"], rep=(r,))
        return changepoint_test(sample, cfg["level"], cfg["reps"], cfg["seed"] + r, cfg["bandwidth"],
                                cfg["m_s"], cfg["m_u"])

    results = _pmap(one, range(cfg["replications"]), cfg["workers"])
    rep = Report(["replication", "statistic", "critical_value", "p_value", "reject", "bandwidth"])
    for r, t in enumerate(results):
        rep.add([r, t.statistic, t.critical_value, t.p_value, t.reject, t.calibration["bandwidth"]])
    rate = float(np.mean([t.reject for t in results]))
    rep.summary = {"rejection_rate": rate,
                   "rejection_rate_se": float(np.sqrt(rate * (1 - rate) / len(results))),
                   "level": cfg["level"]}
    return rep


def cmd_ci(cfg):
    spec = SequenceSpec(**cfg["generator"])
    theta = cfg["theta"]
    if theta is None and spec.independent_coordinates:
        theta = 0.5 ** spec.dim

    def one(r):
        return selfnorm_ci(generate(spec, cfg["n"], cfg["seed"], rep=(r,)), cfg["level"])

    results = _pmap(one, range(cfg["replications"]), cfg["workers"])
    rep = Report(["replication", "theta_hat", "lo", "hi", "normalizer", "covers", "degenerate"])
    for r, ci in enumerate(results):
        rep.add([r, ci.theta_hat, ci.interval[0], ci.interval[1], ci.normalizer,
                 None if theta is None else ci.covers(theta), ci.degenerate])
    summary = {"critical_value": results[0].critical_value, "theta": theta}
    if theta is not None:
        cov = float(np.mean([ci.covers(theta) for ci in results]))
        summary.update(coverage=cov, coverage_se=float(np.sqrt(cov * (1 - cov) / len(results))))
    rep.summary = summary
    return rep


HANDLERS = {
    "simulate": cmd_simulate, "evaluate": cmd_evaluate, "limit": cmd_limit, "ottaviani": cmd_ottaviani,
    "diagnose": cmd_diagnose, "changepoint": cmd_changepoint, "ci": cmd_ci,
}


def header(command: str, cfg: dict) -> str:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    lines = [f"tool: seqmix {__version__}", f"command: {command}", f"seed: {cfg['seed']}",
             f"created: {stamp}", "config: " + json.dumps(cfg, sort_keys=True)]
    return "".join(f"# {line}\n" for line in lines)


def run(command: str, cfg: dict, out_dir: Path) -> dict:
    rep = HANDLERS[command](cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}.csv").write_text(header(command, cfg) + rep.body())
    summary = {"tool": f"seqmix {__version__}", "command": command, "config": cfg, **rep.summary}
    (out_dir / f"{command}.jsonl").write_text(json.dumps(_jsonable(summary), sort_keys=True) + "\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seqmix", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    args = parser.parse_args(argv)
    try:
        raw = yaml.safe_load(args.config.read_text()) if args.config else {}
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        cfg = resolve_config(args.command, raw, args.seed)
        summary = run(args.command, cfg, args.out)
    except (ConfigError, ParameterError, DomainError, yaml.YAMLError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(_jsonable({k: v for k, v in summary.items() if k != "config"}), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
