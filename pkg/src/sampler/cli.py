"""Command line front end.

    sampler design|evaluate|compare|simulate --config cfg.json [--scenario fig1]
            [--seed N] [--threads N] [--out DIR] [--beta B] [--weights FILE]
    sampler --dump-preset fig1

Exit codes: 0 success, 1 usage or config error, 2 infeasible or singular
problem, 3 internal numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .bench import PRESETS, Report, Scenario, compare_methods, preset_config, run_scenario
from .designer import threshold
from .errors import (
    AllSingularError,
    ConfigError,
    InfeasibleError,
    MaxIterationsError,
    SingularFimError,
    TooLargeError,
)
from .fisher import crlb_table

__all__ = ["main", "CONFIG_SCHEMA", "load_config"]

log = logging.getLogger("sampler")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_cap = {"type": "array", "items": {"anyOf": [_pos, {"type": "null"}]}, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "notes": {"type": "string"},
        "model": _obj({"kind": {"enum": ["damped_1d", "damped_2d", "chirp_1d"]},
                       "K": {"type": "integer", "minimum": 1}}, ["kind"]),
        "theta": _vec,
        "theta_grid": _obj({"param": {"anyOf": [{"type": "integer", "minimum": 0}, {"type": "string"}]},
                            "lower": _num, "delta": _pos, "count": {"type": "integer", "minimum": 1}},
                           ["param", "lower", "delta", "count"]),
        "grid": _obj({"dims": {"enum": [1, 2]},
                      "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                "minItems": 1, "maxItems": 2},
                      "start": _num}, ["sizes"]),
        "noise": _obj({"variance": {"type": "number", "minimum": 0}}, ["variance"]),
        "design": _obj({
            "gamma": _pos,
            "gamma_sweep": {"type": "array", "items": _pos, "minItems": 1},
            "psi": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            "weightings": {"type": "object", "minProperties": 1,
                           "additionalProperties": {"type": "array", "items": {"type": "number", "minimum": 0}}},
            "caps": _cap,
            "group_budgets": {"type": "array", "items": {"anyOf": [_pos, {"type": "null"}]},
                              "minItems": 2, "maxItems": 2},
            "reweight": _obj({"enabled": {"type": "boolean"}, "max_iter": {"type": "integer", "minimum": 1},
                              "epsilon": _pos, "tol": _pos}),
            "rounding": _obj({"rule": {"enum": ["topm", "cutoff"]}, "M": {"type": "integer", "minimum": 0},
                              "xi": _num}),
        }),
        "eval": _obj({
            "trials": {"type": "integer", "minimum": 0},
            "seed": {"type": "integer", "minimum": 0},
            "baseline_trials": {"type": "integer", "minimum": 0},
            "uniform": {"type": "boolean"},
            "estimation_grid": _obj({"width": _pos, "points": {"type": "integer", "minimum": 1},
                                     "refine": {"type": "boolean"},
                                     "max_evals": {"type": "integer", "minimum": 0},
                                     "values": {"type": "array", "items": _vec}}),
            "subsets": {"type": "object", "additionalProperties": {
                "type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}},
        }),
        "output": _obj({"path": {"type": "string"}}),
    },
    ["model", "theta", "grid", "noise", "design"],
)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def validate_config(cfg) -> dict:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  {'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors[:10]]
        raise ConfigError("invalid config:\n" + "\n".join(lines))
    return cfg


def load_config(path=None, scenario=None, beta=None) -> dict:
    """Read and validate a config; a file is merged over a preset when both are given."""
    if path is None and scenario is None:
        raise ConfigError("give --config and/or --scenario")
    cfg = preset_config(scenario, beta) if scenario else {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg = _merge(cfg, user)
    elif beta is not None and scenario is None:
        raise ConfigError("--beta only applies to a --scenario preset")
    return validate_config(cfg)


# ----------------------------------------------------------------------
# writers


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(rows)


def _coord_names(s: Scenario):
    return ["t"] if s.grid.dim == 1 else [f"t{d + 1}" for d in range(s.grid.dim)]


def _weights_table(s: Scenario, designs):
    multi = len(designs) > 1
    header = (["weighting", "gamma"] if multi else []) + ["index"] + _coord_names(s) + ["w", "selected"]
    rows = []
    for label, gamma, _, w, sel in designs:
        mask = np.zeros(s.grid.size, dtype=int)
        mask[sel] = 1
        for n in range(s.grid.size):
            rows.append(([label, _fmt(gamma)] if multi else []) + [str(n)]
                        + [_fmt(x) for x in s.grid.points[n]] + [_fmt(w[n]), str(mask[n])])
    return header, rows


def _crlb_table(s: Scenario, banks, designs):
    multi = len(designs) > 1
    header = (["weighting", "gamma"] if multi else []) + ["param", "psi", "mu", "crlb_best", "crlb_worst"]
    rows = []
    names = s.model.param_names
    for label, gamma, psi, w, sel in designs:
        mu = crlb_table(w, banks).max(axis=0) * s.crlb_scale
        mask = np.zeros(s.grid.size)
        mask[sel] = 1.0
        table = crlb_table(mask, banks) * s.crlb_scale
        for p, n in enumerate(names):
            rows.append(([label, _fmt(gamma)] if multi else [])
                        + [n, _fmt(psi[p]), _fmt(mu[p]), _fmt(table[:, p].min()), _fmt(table[:, p].max())])
    return header, rows


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("output", {}).get("path", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(report: Report, out: Path):
    report.write_csv(out / "report.csv")
    timings = Report(report.scenario, [], [{}] * len(report.rows), report.timings)
    timings.write_csv(out / "timings.csv", include_timings=True)


# ----------------------------------------------------------------------
# commands


def cmd_design(args, cfg) -> int:
    s = Scenario.from_config(cfg)
    report = run_scenario(s, simulate=False, baseline=False, uniform=False)
    designs = [(label, gamma, psi, res.w, res.selected) for label, gamma, psi, res in report.designs]
    out = _out_dir(args, cfg)
    _write_rows(out / "weights.csv", *_weights_table(s, designs))
    _write_rows(out / "crlb.csv", *_crlb_table(s, s.banks(), designs))
    _write_report(report, out)
    print(report.summary(["weighting", "gamma", "M", "objective", "relaxed_objective", "solver_status"]))
    for label, gamma, _, res in report.designs:
        print(f"  {label} gamma={gamma:g}: selected {' '.join(map(str, res.selected))}")
    print(f"wrote {out / 'weights.csv'}, {out / 'crlb.csv'}, {out / 'report.csv'}")
    return EXIT_OK


def _read_weights(path, s: Scenario):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read weights file {path}: {exc.strerror or exc}") from exc
    if not rows or "w" not in rows[0]:
        raise ConfigError(f"weights file {path} needs a header with a 'w' column")
    groups = {}
    for r in rows:
        key = (r.get("weighting"), r.get("gamma"))
        groups.setdefault(key, []).append(r)
    out = []
    for (label, gamma), grp in groups.items():
        try:
            w = np.array([float(r["w"]) for r in grp])
        except ValueError as exc:
            raise ConfigError(f"weights file {path}: {exc}") from exc
        if w.size != s.grid.size:
            raise ConfigError(f"weights file {path} has {w.size} weights but the grid has {s.grid.size} candidates")
        if np.any(w < 0) or np.any(w > 1) or not np.all(np.isfinite(w)):
            raise ConfigError(f"weights in {path} must lie in [0, 1]")
        if "index" in grp[0]:
            order = np.argsort([int(r["index"]) for r in grp])
            w = w[order]
            grp = [grp[i] for i in order]
        if label is None:
            label = next(iter(s.weightings)) if len(s.weightings) == 1 else None
            if label is None:
                raise ConfigError("config has several weightings; the weights file needs a weighting column")
        if label not in s.weightings:
            raise ConfigError(f"weighting {label!r} not in the config")
        if gamma is None:
            if len(s.budgets) != 1:
                raise ConfigError("config sweeps gamma; the weights file needs a gamma column")
            gamma = s.budgets[0]
        gamma = float(gamma)
        if "selected" in grp[0]:
            sel = np.flatnonzero([int(r["selected"]) for r in grp])
        else:
            sel = threshold(w, s.rule_for(gamma))
        out.append((label, gamma, s.weightings[label], w, sel))
    return out


def cmd_evaluate(args, cfg) -> int:
    if not args.weights:
        raise ConfigError("evaluate needs --weights FILE")
    s = Scenario.from_config(cfg)
    designs = _read_weights(args.weights, s)
    banks = s.banks()
    header, rows = _crlb_table(s, banks, designs)
    out = _out_dir(args, cfg)
    _write_rows(out / "crlb.csv", header, rows)
    for label, gamma, psi, w, sel in designs:
        relaxed = float(psi @ crlb_table(w, banks).max(axis=0)) * s.crlb_scale
        mask = np.zeros(s.grid.size)
        mask[sel] = 1.0
        chosen = float(psi @ crlb_table(mask, banks).max(axis=0)) * s.crlb_scale
        print(f"{label} gamma={gamma:g}: sum w={w.sum():.6g} worst-case objective {relaxed:.6g}; "
              f"{sel.size} selected samples give {chosen:.6g}")
    print(f"wrote {out / 'crlb.csv'}")
    return EXIT_OK


def cmd_compare(args, cfg) -> int:
    s = Scenario.from_config(cfg)
    if "baseline_trials" not in cfg.get("eval", {}):
        s.baseline_trials = 10000
    report = compare_methods(s)
    out = _out_dir(args, cfg)
    _write_report(report, out)
    print(report.summary())
    print(f"wrote {out / 'report.csv'}")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    ev = cfg.get("eval", {})
    if "estimation_grid" not in ev:
        raise ConfigError("simulate needs eval.estimation_grid")
    if ev.get("trials", 0) < 1:
        raise ConfigError("simulate needs eval.trials >= 1")
    s = Scenario.from_config(cfg)
    report = run_scenario(s, simulate=True, baseline=False, uniform=False)
    out = _out_dir(args, cfg)
    _write_report(report, out)
    cols = ["weighting", "gamma", "M"] + [c for c in report.columns if c.startswith(("rmse_", "root_crlb_worst_"))]
    print(report.summary(cols))
    print(f"wrote {out / 'report.csv'}")
    return EXIT_OK


COMMANDS = {"design": cmd_design, "evaluate": cmd_evaluate, "compare": cmd_compare, "simulate": cmd_simulate}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sampler", description="Optimal non-uniform sampling design.")
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--scenario", choices=sorted(PRESETS), help="start from a built-in preset")
    p.add_argument("--seed", type=int, help="override eval.seed")
    p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    p.add_argument("--out", help="output directory (default: output.path or .)")
    p.add_argument("--dump-preset", metavar="NAME", help="print a preset config as JSON and exit")
    p.add_argument("--beta", type=float, help="override the damping of a preset")
    p.add_argument("--weights", help="weights CSV for evaluate")
    return p


def _setup_logging():
    level = os.environ.get("SAMPLER_LOG", "warning").lower()
    levels = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if level not in levels:
        log.warning("unknown SAMPLER_LOG=%r; using warning", level)


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    _setup_logging()
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.dump_preset:
            print(json.dumps(preset_config(args.dump_preset, args.beta), indent=2))
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("sampler: a command is required", file=sys.stderr)
            return EXIT_CONFIG
        cfg = load_config(args.config, args.scenario, args.beta)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.setdefault("eval", {})["seed"] = args.seed
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args, cfg)
    except (ConfigError, TooLargeError) as exc:
        print(f"sampler: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"sampler: infeasible: {exc}", file=sys.stderr)
        for k, v in sorted(exc.certificate.items()):
            print(f"  certificate {k} = {v}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SingularFimError, AllSingularError) as exc:
        print(f"sampler: singular: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (MaxIterationsError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"sampler: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the exit-code contract
        log.debug("unexpected failure", exc_info=True)
        print(f"sampler: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
