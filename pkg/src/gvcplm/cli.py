"""Command-line interface: fit, select, test, bandwidth and simulate.

A run is described by an INI file whose values can be overridden by flags.
Every run writes ``result.json`` (with the resolved configuration and seed
embedded), ``report.txt`` and command-specific CSV files into the output
directory.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import select_bandwidth_cv
from .data import read_csv, read_role_map, validate_roles
from .errors import ConfigError, DataValidationError, GVCPLMError, NumericalError
from .estimator import SCALINGS, backfit
from .families import get_family
from .glrt import glrt, glrt_bootstrap
from .kernels import KERNELS, make_kernel
from .penalties import KINDS, PenaltySpec
from .simulation import (METHODS, PRESETS, get_scenario, run_power_study, run_rase_study,
                         run_table1_study, run_timing_study)
from .smoother import DEFAULT_GRID, undersmooth
from .subset import best_subset, write_trace_csv

log = logging.getLogger(__name__)

COMMANDS = ("fit", "select", "test", "bandwidth", "simulate")
DATA_COMMANDS = ("fit", "select", "test", "bandwidth")
STUDIES = ("table1", "timing", "power", "rase")
FAMILIES = ("gaussian", "poisson", "bernoulli")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _list(conv):
    def parse(text):
        items = [s.strip() for s in text.replace(";", ",").split(",") if s.strip()]
        if not items:
            raise ValueError("expected a nonempty comma-separated list")
        return tuple(conv(s) for s in items)
    return parse


def _lambda(text):
    t = text.strip().lower()
    if t == "gcv":
        return "gcv"
    v = float(t)
    if not v >= 0 or math.isinf(v):
        raise ValueError("lambda must be 'gcv' or a finite nonnegative number")
    return v


# section -> key -> (parser, default); a default of None means "no default"
SCHEMA = {
    "run": {"command": (str, None), "seed": (int, None), "output": (str, None),
            "threads": (int, 1)},
    "data": {"path": (str, None), "roles": (str, None), "intercept": (_bool, True)},
    "model": {"family": (str, None), "kernel": (str, "epanechnikov"), "h": (float, None),
              "undersmooth": (_bool, False), "n_grid": (int, DEFAULT_GRID),
              "exact": (_bool, False)},
    "penalty": {"kind": (str, "scad"), "lambda": (_lambda, "gcv"), "a": (float, 3.7),
                "q": (float, 0.5), "scaling": (str, "information")},
    "select": {"criterion": (str, "BIC"), "max_d": (int, 20)},
    "test": {"null_x": (_list(int), None), "bootstrap": (int, 200)},
    "bandwidth": {"h_grid": (_list(float), None), "folds": (int, 10)},
    "simulate": {"scenario": (str, None), "study": (str, "table1"),
                 "methods": (_list(str), ("scad", "l1", "oracle")), "reps": (int, 100),
                 "n": (int, None), "h": (float, None),
                 "d_values": (_list(int), (8, 9, 10)),
                 "deltas": (_list(float), (0.0, 0.4, 0.8, 1.2, 1.6, 2.0)),
                 "levels": (_list(float), (0.25, 0.1, 0.05, 0.01)),
                 "bootstrap": (int, 200), "null_x": (_list(int), (2,))},
}

# flag dest -> (section, key)
FLAG_MAP = {
    "seed": ("run", "seed"), "out": ("run", "output"), "threads": ("run", "threads"),
    "data": ("data", "path"), "roles": ("data", "roles"), "family": ("model", "family"),
    "kernel": ("model", "kernel"), "bandwidth": ("model", "h"),
    "undersmooth": ("model", "undersmooth"), "n_grid": ("model", "n_grid"),
    "penalty": ("penalty", "kind"), "lam": ("penalty", "lambda"),
    "scaling": ("penalty", "scaling"), "criterion": ("select", "criterion"),
    "null_x": ("test", "null_x"), "bootstrap": ("test", "bootstrap"),
    "h_grid": ("bandwidth", "h_grid"), "folds": ("bandwidth", "folds"),
    "scenario": ("simulate", "scenario"), "study": ("simulate", "study"),
    "methods": ("simulate", "methods"), "reps": ("simulate", "reps"),
}


@dataclass
class RunConfig:
    """A fully resolved and validated run."""

    command: str
    seed: int | None
    output: str
    threads: int
    values: dict = field(default_factory=dict)
    roles: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]

    def to_dict(self):
        out = {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
               for s, kv in self.values.items()}
        if self.roles:
            out["roles"] = dict(self.roles)
        return out


def read_config_file(path) -> tuple[dict, list]:
    """Raw string values per section, plus parse errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        return {}, [f"cannot read config {path}: {exc.strerror}"]
    except configparser.Error as exc:
        return {}, [f"cannot parse config {path}: {exc}"]
    return {s: dict(parser.items(s)) for s in parser.sections()}, []


def _stochastic(command, values):
    if command == "test":
        return (values["test"].get("bootstrap") or 0) > 0
    return command in ("bandwidth", "simulate")


def resolve_config(raw: dict, command=None) -> RunConfig:
    """Check every field of a raw configuration and collect all problems.

    ``raw`` maps section to key to string (or already typed) values.  The
    command may come from ``raw['run']['command']`` or the argument.
    """
    errors = []
    values = {}
    roles = {}
    for section, kv in raw.items():
        if section == "roles":
            roles = {k: str(v).strip().lower() for k, v in kv.items()}
            continue
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        for key in kv:
            if key not in SCHEMA[section]:
                errors.append(f"[{section}] unknown key {key!r}")
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = raw.get(section, {})
        for key, (conv, default) in keys.items():
            if key in given and given[key] is not None and given[key] != "":
                v = given[key]
                try:
                    values[section][key] = conv(v) if isinstance(v, str) else v
                except ValueError as exc:
                    errors.append(f"[{section}] {key}: invalid value {v!r} ({exc})")
                    values[section][key] = None
            else:
                values[section][key] = default

    def need(section, key, why=""):
        if values[section][key] is None and not any(
                e.startswith(f"[{section}] {key}:") for e in errors):
            errors.append(f"[{section}] {key} is required{why}")

    command = command or values["run"]["command"]
    values["run"]["command"] = command
    need("run", "command")
    need("run", "output")
    if command is not None and command not in COMMANDS:
        errors.append(f"[run] command: unknown command {command!r}; expected one of "
                      f"{list(COMMANDS)}")
    if command is None:
        # without a command, name the fields each command would need
        for cmds, section, key in ((DATA_COMMANDS, "data", "path"),
                                   (DATA_COMMANDS, "data", "roles"),
                                   (DATA_COMMANDS, "model", "family"),
                                   (("fit", "select", "test"), "model", "h"),
                                   (("bandwidth",), "bandwidth", "h_grid"),
                                   (("test",), "test", "null_x"),
                                   (("simulate",), "simulate", "scenario"),
                                   (("test", "bandwidth", "simulate"), "run", "seed")):
            need(section, key, f" for the command{'s' * (len(cmds) > 1)} "
                               f"{', '.join(cmds)}")
    threads = values["run"]["threads"]
    if threads is not None and threads < 1:
        errors.append("[run] threads must be at least 1")

    if command in DATA_COMMANDS:
        need("data", "path")
        path = values["data"]["path"]
        if path is not None and not Path(path).is_file():
            errors.append(f"[data] path: file {path!r} does not exist")
        role_path = values["data"]["roles"]
        if role_path is None and not roles:
            errors.append("[data] roles is required (a role-map file) unless the config "
                          "has a [roles] section")
        elif role_path is not None:
            if not Path(role_path).is_file():
                errors.append(f"[data] roles: file {role_path!r} does not exist")
            else:
                try:
                    roles = read_role_map(role_path)
                except DataValidationError as exc:
                    errors.append(f"[data] roles: {exc}")
        if roles:
            errors += [f"[roles] {e}" for e in validate_roles(roles)]
        need("model", "family")
        if command != "bandwidth":
            need("model", "h")
        else:
            need("bandwidth", "h_grid")
    if command == "test":
        need("test", "null_x")
    if command == "simulate":
        need("simulate", "scenario")
        name = values["simulate"]["scenario"]
        if name is not None and name not in PRESETS:
            errors.append(f"[simulate] scenario: unknown preset {name!r}; expected one of "
                          f"{sorted(PRESETS)}")
        study = values["simulate"]["study"]
        if study not in STUDIES:
            errors.append(f"[simulate] study: unknown study {study!r}; expected one of "
                          f"{list(STUDIES)}")
        methods = values["simulate"]["methods"] or ()
        valid = {m.lower() for m in METHODS}
        bad = [m for m in methods if m.lower() not in valid]
        if bad:
            errors.append(f"[simulate] methods: unknown {bad}; expected a subset of "
                          f"{list(METHODS)}")
        for key in ("reps", "bootstrap"):
            if values["simulate"][key] is not None and values["simulate"][key] < 1:
                errors.append(f"[simulate] {key} must be at least 1")
    if command is not None and command in COMMANDS and _stochastic(command, values):
        need("run", "seed", f" for the stochastic command {command!r}")

    fam = values["model"]["family"]
    if fam is not None and fam.lower() not in FAMILIES:
        errors.append(f"[model] family: unknown family {fam!r}; expected one of "
                      f"{list(FAMILIES)}")
    if values["model"]["kernel"] not in KERNELS:
        errors.append(f"[model] kernel: unknown kernel {values['model']['kernel']!r}; "
                      f"expected one of {sorted(KERNELS)}")
    h = values["model"]["h"]
    if h is not None and not h > 0:
        errors.append("[model] h must be positive")
    grid = values["bandwidth"]["h_grid"]
    if grid is not None and any(not g > 0 for g in grid):
        errors.append("[bandwidth] h_grid values must be positive")
    if values["penalty"]["kind"] not in KINDS or values["penalty"]["kind"] == "l0":
        errors.append(f"[penalty] kind: {values['penalty']['kind']!r} is not one of "
                      f"{[k for k in KINDS if k != 'l0']} (use the select command for L0)")
    if values["penalty"]["scaling"] not in SCALINGS:
        errors.append(f"[penalty] scaling: expected one of {list(SCALINGS)}")
    if values["select"]["criterion"] is not None and \
            values["select"]["criterion"].upper() not in ("AIC", "BIC", "RIC"):
        errors.append("[select] criterion: expected AIC, BIC or RIC")
    if values["test"]["null_x"] is not None and min(values["test"]["null_x"]) < 1:
        errors.append("[test] null_x: indices are 1-based")
    if values["test"]["bootstrap"] is not None and values["test"]["bootstrap"] < 0:
        errors.append("[test] bootstrap must be nonnegative")
    if values["bandwidth"]["folds"] is not None and values["bandwidth"]["folds"] < 2:
        errors.append("[bandwidth] folds must be at least 2")

    if errors:
        raise ConfigError(errors)
    return RunConfig(command, values["run"]["seed"], values["run"]["output"],
                     values["run"]["threads"], values, roles)


def validate_config(path) -> RunConfig:
    """Parse and validate a config file; raises :class:`ConfigError` listing
    every problem found."""
    raw, errors = read_config_file(path)
    if errors:
        raise ConfigError(errors)
    return resolve_config(raw)


def scenario_for(cfg: RunConfig):
    spec = get_scenario(cfg.get("simulate", "scenario"))
    changes = {k: cfg.get("simulate", k) for k in ("n", "h")
               if cfg.get("simulate", k) is not None}
    return dataclasses.replace(spec, **changes) if changes else spec


# ----------------------------------------------------------------- output


def _plain(obj):
    """Convert to JSON-safe builtins; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, cfg: RunConfig, result: dict):
    doc = {"format": "gvcplm-result", "version": __version__, "command": cfg.command,
           "seed": cfg.seed, "config": cfg.to_dict(), "result": result}
    with open(path, "w") as fh:
        json.dump(_plain(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _config_lines(cfg: RunConfig):
    lines = ["resolved configuration:"]
    for section, kv in cfg.to_dict().items():
        lines.append(f"  [{section}]")
        lines += [f"    {k} = {v}" for k, v in kv.items() if v is not None]
    return lines


# ----------------------------------------------------------------- commands


def _load(cfg):
    roles = cfg.roles or read_role_map(cfg.get("data", "roles"))
    return read_csv(cfg.get("data", "path"), roles, cfg.get("data", "intercept"))


def _bandwidth_used(cfg, n):
    h = cfg.get("model", "h")
    if cfg.get("model", "undersmooth"):
        h_used = undersmooth(h, n)
        return h_used, (f"bandwidth h = {h_used:.6g} (undersmoothed from {h:.6g} "
                        f"by the factor n^(-2/15) with n = {n})")
    return h, (f"bandwidth h = {h:.6g} (used as given; pass --undersmooth to rescale an "
               f"MSE-optimal h by n^(-2/15))")


def _penalty(cfg):
    kind = cfg.get("penalty", "kind")
    if kind == "none":
        return None
    return PenaltySpec(kind, a=cfg.get("penalty", "a"), q=cfg.get("penalty", "q"))


def _coef_lines(names, beta, se, zero):
    lines = [f"{'covariate':<16}{'beta':>14}{'se':>14}{'zero':>6}"]
    for name, b, s, z in zip(names, beta, se, zero):
        se_txt = "-" if not np.isfinite(s) else f"{s:.6g}"
        lines.append(f"{name:<16}{b:>14.6g}{se_txt:>14}{'yes' if z else 'no':>6}")
    return lines


def cmd_fit(cfg, out):
    data = _load(cfg)
    family = get_family(cfg.get("model", "family"))
    h, h_line = _bandwidth_used(cfg, data.n)
    kernel = make_kernel(cfg.get("model", "kernel"), h)
    fit = backfit(data, family, kernel, _penalty(cfg), cfg.get("penalty", "lambda"),
                  scaling=cfg.get("penalty", "scaling"), n_grid=cfg.get("model", "n_grid"),
                  exact=cfg.get("model", "exact"), n_jobs=cfg.threads)
    result = {"n": data.n, "h_used": h, "z_names": list(data.z_names),
              "x_names": list(data.x_names), "beta": fit.beta_hat, "se": fit.se,
              "zero": fit.zero_mask, "lambda": fit.lambda_scalar,
              "lambda_j": fit.lambda_used, "effective_df": fit.effective_df,
              "gcv": fit.gcv, "deviance": fit.deviance, "loglik": fit.loglik,
              "converged": fit.converged}
    if fit.alpha_curves is not None:
        fit.alpha_curves.to_csv(out / "curves.csv", list(data.x_names))
    if fit.lambda_path:
        _write_rows(out / "path.csv", ["lambda", "gcv", "df", "n_zero", "converged"],
                    [(pt.lam, pt.gcv, pt.df, pt.n_zero, pt.converged)
                     for pt in fit.lambda_path])
    lam = "n/a" if fit.lambda_scalar is None else f"{fit.lambda_scalar:.6g}"
    lines = [f"fit: {family.name} model, n = {data.n}, p = {data.p}, d = {data.d}", h_line,
             f"penalty {cfg.get('penalty', 'kind')}, lambda = {lam}, "
             f"effective df = {fit.effective_df:.4f}, GCV = {fit.gcv:.6g}, "
             f"deviance = {fit.deviance:.6g}"]
    lines += _coef_lines(data.z_names, fit.beta_hat, fit.se, fit.zero_mask)
    return result, lines


def cmd_select(cfg, out):
    data = _load(cfg)
    family = get_family(cfg.get("model", "family"))
    h, h_line = _bandwidth_used(cfg, data.n)
    kernel = make_kernel(cfg.get("model", "kernel"), h)
    res = best_subset(data, family, kernel, cfg.get("select", "criterion"),
                      max_d=cfg.get("select", "max_d"), n_grid=cfg.get("model", "n_grid"),
                      exact=cfg.get("model", "exact"), n_jobs=cfg.threads)
    write_trace_csv(res, out / "trace.csv")
    chosen = [data.z_names[j] for j in res.best_subset]
    result = {"n": data.n, "h_used": h, "criterion": res.criterion, "lambda": res.lam,
              "best_subset": [j + 1 for j in res.best_subset], "best_names": chosen,
              "criterion_value": res.criterion_value,
              "subsets_evaluated": res.subsets_evaluated, "n_failed": res.n_failed,
              "beta": res.fit.beta_hat, "z_names": list(data.z_names)}
    lines = [f"best subset by {res.criterion} (lambda = {res.lam:.6g}) over "
             f"{res.subsets_evaluated} subsets", h_line,
             f"selected: {', '.join(chosen) if chosen else '(none)'}",
             f"criterion value {res.criterion_value:.6g}; {res.n_failed} subset fits failed"]
    lines += _coef_lines(data.z_names, res.fit.beta_hat, res.fit.se, res.fit.zero_mask)
    return result, lines


def cmd_test(cfg, out):
    data = _load(cfg)
    family = get_family(cfg.get("model", "family"))
    h, h_line = _bandwidth_used(cfg, data.n)
    kernel = make_kernel(cfg.get("model", "kernel"), h)
    idx = [j - 1 for j in cfg.get("test", "null_x")]
    bad = [j + 1 for j in idx if j >= data.p]
    if bad:
        raise DataValidationError(f"null_x {bad} exceed the {data.p} varying columns "
                                  f"{list(data.x_names)}")
    B = cfg.get("test", "bootstrap")
    penalty = _penalty(cfg)
    lam = cfg.get("penalty", "lambda")
    lam_line = None
    if penalty is not None and lam == "gcv" and data.d > 0:
        # choose lambda once on the observed data; the bootstrap reuses it
        lam = backfit(data, family, kernel, penalty, "gcv",
                      scaling=cfg.get("penalty", "scaling"),
                      n_grid=cfg.get("model", "n_grid"), exact=cfg.get("model", "exact"),
                      n_jobs=cfg.threads).lambda_scalar
        lam_line = f"lambda = {lam:.6g} chosen by GCV on the full model, then held fixed"
    args = (data, family, kernel, idx)
    kw = dict(penalty=penalty, lambda_policy=lam,
              n_grid=cfg.get("model", "n_grid"), exact=cfg.get("model", "exact"))
    if B > 0:
        res = glrt_bootstrap(*args, B, cfg.seed, n_jobs=cfg.threads, **kw)
        _write_rows(out / "bootstrap_stats.csv", ["b", "statistic"],
                    [(b, float(t)) for b, t in enumerate(res.bootstrap_stats)])
    else:
        res = glrt(*args, **kw)
    tested = [data.x_names[j] for j in idx]
    result = {"n": data.n, "h_used": h, "null_x": [j + 1 for j in idx],
              "null_names": tested, "statistic": res.t_glr, "r_h1": res.r_h1,
              "r_h0": res.r_h0, "df_n": res.df_n, "p_asymptotic": res.p_asymptotic,
              "p_bootstrap": res.p_bootstrap, "df_fitted": res.df_fitted, "B": B,
              "n_failed": res.n_failed, "warnings": res.warnings,
              "lambda": None if penalty is None else lam}
    lines = [f"GLRT of alpha = 0 for {', '.join(tested)}", h_line]
    lines += [lam_line] if lam_line else []
    lines += [f"statistic T = {res.t_glr:.6g}, df_n = {res.df_n:.4f}",
              f"asymptotic p-value (chi-square with df_n) = {res.p_asymptotic:.6g}"]
    if res.p_bootstrap is not None:
        lines.append(f"bootstrap p-value (B = {B}, {res.n_failed} failed) = "
                     f"{res.p_bootstrap:.6g}; mean bootstrap statistic = "
                     f"{res.df_fitted:.4f}")
    lines += [f"warning: {w}" for w in res.warnings]
    return result, lines


def cmd_bandwidth(cfg, out):
    data = _load(cfg)
    family = get_family(cfg.get("model", "family"))
    kernel = make_kernel(cfg.get("model", "kernel"), 1.0)
    cv = select_bandwidth_cv(data, family, kernel, cfg.get("bandwidth", "h_grid"),
                             cfg.get("bandwidth", "folds"), cfg.seed,
                             n_grid=cfg.get("model", "n_grid"),
                             exact=cfg.get("model", "exact"), n_jobs=cfg.threads)
    h_under = undersmooth(cv.h_star, data.n)
    _write_rows(out / "cv.csv", ["h", "cv"], zip(cv.h_grid, cv.cv_scores))
    result = {"n": data.n, "h_star": cv.h_star, "h_undersmoothed": h_under,
              "h_grid": cv.h_grid, "cv": cv.cv_scores,
              "folds": cfg.get("bandwidth", "folds")}
    lines = [f"{cfg.get('bandwidth', 'folds')}-fold cross-validation over "
             f"{len(cv.h_grid)} bandwidths",
             f"{'h':>12}{'CV(h)':>16}"]
    lines += [f"{h:>12.6g}{s:>16.6g}" for h, s in zip(cv.h_grid, cv.cv_scores)]
    lines += [f"CV bandwidth h = {cv.h_star:.6g}",
              f"undersmoothed bandwidth for inference h = {h_under:.6g} "
              f"(h * n^(-2/15), n = {data.n})"]
    return result, lines


def cmd_simulate(cfg, out):
    spec = scenario_for(cfg)
    study = cfg.get("simulate", "study")
    R = cfg.get("simulate", "reps")
    methods = cfg.get("simulate", "methods")
    n_grid = cfg.get("model", "n_grid")
    result = {"scenario": spec.to_dict(), "study": study}
    if study == "table1":
        rep = run_table1_study(spec, methods, R, cfg.seed, n_grid=n_grid, n_jobs=cfg.threads)
        (out / "table.csv").write_text(rep.to_csv())
        result.update(rep.to_dict())
        text = rep.to_text()
    elif study == "timing":
        rep = run_timing_study(spec, cfg.get("simulate", "d_values"), methods, R, cfg.seed,
                               n_grid=n_grid)
        (out / "timing.csv").write_text(rep.to_csv())
        result.update(d_values=list(cfg.get("simulate", "d_values")),
                      methods=[r.method for r in rep.rows])
        text = rep.to_text()
    elif study == "power":
        null_x = tuple(j - 1 for j in cfg.get("simulate", "null_x"))
        rep = run_power_study(spec, cfg.get("simulate", "deltas"),
                              cfg.get("simulate", "levels"), R,
                              cfg.get("simulate", "bootstrap"), cfg.seed, null_x=null_x,
                              n_grid=n_grid, n_jobs=cfg.threads)
        (out / "power.csv").write_text(rep.to_csv())
        _write_rows(out / "bootstrap_stats.csv", ["b", "statistic"],
                    enumerate(rep.null_stats.tolist()))
        result.update(deltas=rep.deltas, levels=rep.levels, power=rep.power,
                      df_fitted=rep.df_fitted, R=R, B=rep.B, n_failed=rep.n_failed)
        text = rep.to_text()
    else:
        rep = run_rase_study(spec, R, cfg.seed, n_grid=n_grid, n_jobs=cfg.threads)
        (out / "rase.csv").write_text(rep.to_csv())
        result.update(median_ratio=rep.median_ratio, R=R, n_failed=rep.n_failed)
        text = (f"RASE ratio (backfit / true beta), median over {len(rep.ratio)} "
                f"replications = {rep.median_ratio:.4f}\n")
    lines = [f"simulation study {study}, scenario {spec.name}",
             f"bandwidth h = {spec.h:.6g} (fixed by the scenario)"]
    return result, lines + text.rstrip("\n").split("\n")


HANDLERS = {"fit": cmd_fit, "select": cmd_select, "test": cmd_test,
            "bandwidth": cmd_bandwidth, "simulate": cmd_simulate}


def run(cfg: RunConfig) -> int:
    """Execute a validated run and write its artifacts."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    result, lines = HANDLERS[cfg.command](cfg, out)
    write_json(out / "result.json", cfg, result)
    header = [f"gvcplm {__version__} {cfg.command}, seed = {cfg.seed}"]
    report = "\n".join(header + lines + [""] + _config_lines(cfg)) + "\n"
    (out / "report.txt").write_text(report)
    sys.stdout.write(report)
    return EXIT_OK


# ----------------------------------------------------------------- argv


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="INI configuration file; flags override its values")
    a("--seed", help="top-level random seed")
    a("--out", help="output directory")
    a("--threads", help="worker processes (results do not depend on it)")
    a("--data", help="input CSV")
    a("--roles", help="role map (INI with a [roles] section)")
    a("--family", help="gaussian, poisson or bernoulli")
    a("--kernel", help="kernel name")
    a("--bandwidth", "-H", help="bandwidth h")
    a("--undersmooth", action="store_const", const="true",
      help="rescale h by n^(-2/15)")
    a("--n-grid", help="grid size for the coefficient curves")
    a("--penalty", help="scad, l1, lq or none")
    a("--lambda", dest="lam", help="'gcv' or a number")
    a("--scaling", help=f"penalty multipliers: {', '.join(SCALINGS)}")
    a("--criterion", help="AIC, BIC or RIC")
    a("--null-x", help="1-based varying columns to test, comma separated")
    a("--bootstrap", help="bootstrap replicates")
    a("--h-grid", help="bandwidths for cross-validation, comma separated")
    a("--folds", help="cross-validation folds")
    a("--scenario", help=f"simulation preset: {', '.join(sorted(PRESETS))}")
    a("--study", help=f"simulation study: {', '.join(STUDIES)}")
    a("--methods", help="comma separated methods")
    a("--reps", help="replications")
    a("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="gvcplm", description="Generalized varying-coefficient partially linear "
        "models: fitting, variable selection and likelihood ratio tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("fit", "penalized fit"), ("select", "best-subset selection"),
                       ("test", "likelihood ratio test for coefficient functions"),
                       ("bandwidth", "cross-validated bandwidth"),
                       ("simulate", "simulation studies")):
        sub.add_parser(name, parents=[common], help=text)
    v = sub.add_parser("validate-config", help="check a config file and print it resolved")
    v.add_argument("path")
    return parser


def config_from_args(args) -> RunConfig:
    raw, errors = ({}, []) if args.config is None else read_config_file(args.config)
    if errors:
        raise ConfigError(errors)
    raw.setdefault("run", {})
    given = raw["run"].get("command")
    if given and given != args.command:
        log.info("command %r from the flags overrides %r in the config", args.command, given)
    raw["run"]["command"] = args.command
    for dest, (section, key) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw.setdefault(section, {})[key] = value
    if args.command == "simulate":
        # test and simulate share --bootstrap and --null-x on the command line
        for key in ("bootstrap", "null_x"):
            if key in raw.get("test", {}) and getattr(args, key, None) is not None:
                raw.setdefault("simulate", {})[key] = raw["test"].pop(key)
    return resolve_config(raw)


def _validate_command(path):
    try:
        cfg = validate_config(path)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    doc = {"command": cfg.command, "seed": cfg.seed, "config": cfg.to_dict()}
    if cfg.command == "simulate":
        doc["scenario"] = scenario_for(cfg).to_dict()
    print(json.dumps(_plain(doc), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate-config":
        return _validate_command(args.path)
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GVCPLMError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
