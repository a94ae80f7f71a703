"""Command-line interface, configuration files and result serialisation.

Subcommands: ``simulate``, ``fit``, ``eval-table1``, ``cv``, ``tails`` and
``predict``. Every flag can also be set in a configuration file passed with
``--config``: an INI file with one section per subcommand whose keys are the
long flag names (dashes or underscores)::

    [simulate]
    pattern = band
    p = 20
    n = 500

Precedence is built-in default < config file < environment < flag. Only
``NAVAR_WORKERS`` and ``NAVAR_SEED`` are read from the environment.

Exit codes: 0 success, 2 invalid input, 3 model or precondition failure,
4 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .basis import FourierBasis, IdentityBasis, build_design, default_c0
from .concentration import (
    EnvelopeInfeasible,
    TailExperiment,
    bernstein_envelope,
    clipped_coordinate,
    coordinate,
    fit_envelope,
    hoeffding_check,
    mc_tail,
    n_collapse,
    tail_design,
)
from .estimator import FitConfig, FitResult, fit, predict_one_step
from .evaluation import (
    PAPER_NS,
    PAPER_TABLE1,
    ExperimentPlan,
    fit_linear_var_baseline,
    replicate_table1,
    ts_cross_validate,
)
from .process_sim import (
    NonstationaryError,
    PatternKind,
    TimeSeriesPanel,
    lipschitz_matrix,
    paper_design,
    simulate,
    stability_margin,
)

__all__ = [
    "EXIT_OK",
    "EXIT_INPUT",
    "EXIT_MODEL",
    "EXIT_INTERNAL",
    "InputError",
    "read_panel_csv",
    "write_panel_csv",
    "fit_result_to_json",
    "fit_result_from_json",
    "adjacency_to_dot",
    "load_config",
    "build_parser",
    "main",
]

EXIT_OK, EXIT_INPUT, EXIT_MODEL, EXIT_INTERNAL = 0, 2, 3, 4
ENV_WORKERS = "NAVAR_WORKERS"
ENV_SEED = "NAVAR_SEED"

log = logging.getLogger("navar")


class InputError(ValueError):
    """Malformed user input: bad file, flag or configuration value."""


class ModelError(RuntimeError):
    """The request is well formed but the model cannot honour it."""


# ---------------------------------------------------------------- CSV panels


def read_panel_csv(path) -> TimeSeriesPanel:
    """Parse a numeric CSV with a header row into a panel.

    Errors name the offending 1-based line and column.
    """
    text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(h == "" for h in header):
        raise InputError(f"{path}: line 1: header has an empty column name")
    if len(set(header)) != len(header):
        raise InputError(f"{path}: line 1: duplicate column names")
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: line {i}: expected {len(header)} fields, found {len(row)}")
        vals = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {i}, column {name!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: line {i}, column {name!r}: non-finite value {cell!r}")
            vals.append(v)
        body.append(vals)
    if len(body) < 2:
        raise InputError(f"{path}: need at least two data rows, found {len(body)}")
    return TimeSeriesPanel(np.array(body), tuple(header))


def write_panel_csv(panel: TimeSeriesPanel, path) -> None:
    """Write ``panel`` so that :func:`read_panel_csv` recovers it bit for bit."""
    lines = [",".join(panel.labels)]
    lines += [",".join(repr(float(v)) for v in row) for row in panel.data]
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ------------------------------------------------------------ fit results


def fit_result_to_json(result: FitResult, labels: Sequence[str]) -> dict:
    basis = result.basis
    return {
        "labels": list(labels),
        "lambda": result.lam,
        "basis": {"kind": basis.kind, "L": basis.L, "c0": None if math.isinf(basis.c0) else basis.c0},
        "b_hat": result.b_hat.tolist(),
        "group_norms": result.group_norms.tolist(),
        "adjacency": result.adjacency.tolist(),
        "support": sorted([j, k] for j, k in result.support),
        "objective": result.objective,
        "objective_trace": result.objective_trace.tolist(),
        "sweeps_used": result.sweeps_used,
        "kkt_residual": result.kkt_residual,
        "converged": result.converged,
        "degenerate_grams": sorted(result.degenerate_grams),
    }


def fit_result_from_json(obj: dict):
    """Inverse of :func:`fit_result_to_json`; returns ``(FitResult, labels)``."""
    try:
        b = np.asarray(obj["b_hat"], dtype=float)
        spec = obj["basis"]
        if spec["kind"] == "fourier":
            basis = FourierBasis(int(spec["L"]), float(spec["c0"]))
        elif spec["kind"] == "identity":
            basis = IdentityBasis()
        else:
            raise InputError(f"unknown basis kind {spec['kind']!r}")
        if b.ndim != 3 or b.shape[0] != b.shape[1] or b.shape[2] != basis.L:
            raise InputError(f"b_hat has shape {b.shape}, inconsistent with basis size {basis.L}")
        res = FitResult(b, float(obj["lambda"]), np.asarray(obj["objective_trace"], dtype=float),
                        int(obj["sweeps_used"]), float(obj["kkt_residual"]),
                        np.asarray(obj["group_norms"], dtype=float),
                        frozenset(obj.get("degenerate_grams", ())), bool(obj["converged"]), basis)
        return res, tuple(obj["labels"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed fit-result JSON: {exc}") from None


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def adjacency_to_dot(result: FitResult, labels: Sequence[str], name: str = "navar") -> str:
    """Directed graph with an edge ``k -> j`` for every active block ``(j, k)``."""
    lines = [f"digraph {name} {{"]
    lines += [f"  {_dot_id(lab)};" for lab in labels]
    for j, k in sorted(result.support, key=lambda e: (e[1], e[0])):
        lines.append(f"  {_dot_id(labels[k])} -> {_dot_id(labels[j])} "
                     f"[label=\"{result.group_norms[j, k]:.6g}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ config


def _int_range(lo=None, hi=None):
    def parse(text):
        try:
            v = int(text)
        except (TypeError, ValueError):
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise argparse.ArgumentTypeError(f"{v} outside [{lo}, {hi if hi is not None else 'inf'}]")
        return v
    return parse


def _float_range(lo=None, hi=None, open_lo=False):
    def parse(text):
        try:
            v = float(text)
        except (TypeError, ValueError):
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if not math.isfinite(v):
            raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
        if lo is not None and (v < lo or (open_lo and v == lo)):
            raise argparse.ArgumentTypeError(f"{v} must be {'>' if open_lo else '>='} {lo}")
        if hi is not None and v > hi:
            raise argparse.ArgumentTypeError(f"{v} must be <= {hi}")
        return v
    return parse


def _list_of(item):
    def parse(text):
        parts = [t for t in re.split(r"[,\s]+", str(text).strip()) if t]
        if not parts:
            raise argparse.ArgumentTypeError("empty list")
        return [item(t) for t in parts]
    return parse


def _pattern(text):
    try:
        return PatternKind(str(text).strip().lower())
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown pattern {text!r}; choose random, band or cluster") from None


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


POS_INT = _int_range(1)
NONNEG_INT = _int_range(0)
POS_FLOAT = _float_range(0.0, open_lo=True)
NONNEG_FLOAT = _float_range(0.0)

DEFAULT_L = 6
CV_L_GRID = (2, 3, 4, 6, 8)

# name -> (type, default, help); shared by the parser and the config loader
_COMMON = {
    "seed": (NONNEG_INT, 0, f"master RNG seed (env {ENV_SEED})"),
}
_OPTIONS = {
    "simulate": {
        "pattern": (_pattern, PatternKind.RANDOM, "support pattern: random, band or cluster"),
        "p": (POS_INT, 20, "number of variables"),
        "n": (_int_range(2), 500, "number of time points kept"),
        "burn_in": (NONNEG_INT, 500, "discarded initial steps"),
        "noise_scale": (POS_FLOAT, 0.2, "innovation standard deviation"),
        "out": (str, "-", "output CSV path ('-' for stdout)"),
        "truth_out": (str, None, "optional CSV path for the true adjacency matrix"),
    },
    "fit": {
        "input": (str, None, "panel CSV (header row, numeric body)"),
        "lam": (NONNEG_FLOAT, None, "penalty level; omit with --cv"),
        "cv": (_bool, False, "choose lambda (and L over --L-grid) by rolling-origin CV"),
        "L": (POS_INT, None, "basis functions per component (default 6; chosen by CV with --cv)"),
        "L_grid": (_list_of(POS_INT), None, "candidate L values for --cv (default: --L if given, else 2,3,4,6,8)"),
        "c0": (POS_FLOAT, None, "basis half-width (default: from data)"),
        "baseline": (str, "none", "'linear' fits the linear VAR lasso instead"),
        "folds": (_int_range(3), 5, "CV folds"),
        "n_lambdas": (_int_range(2), 20, "CV lambda grid size"),
        "min_ratio": (_float_range(0.0, 1.0, open_lo=True), 1e-3, "smallest lambda / lambda_max in CV"),
        "max_sweeps": (POS_INT, 1000, "coordinate-descent sweep limit"),
        "tol_objective": (POS_FLOAT, 1e-8, "relative objective decrease tolerance"),
        "tol_kkt": (POS_FLOAT, 1e-6, "KKT certificate tolerance"),
        "out_json": (str, "fit.json", "fit-result JSON path"),
        "out_dot": (str, "fit.dot", "adjacency DOT path"),
    },
    "cv": {
        "input": (str, None, "panel CSV"),
        "L_grid": (_list_of(POS_INT), [6], "candidate L values"),
        "folds": (_int_range(3), 5, "CV folds"),
        "n_lambdas": (_int_range(2), 20, "lambda grid size"),
        "min_ratio": (_float_range(0.0, 1.0, open_lo=True), 1e-3, "smallest lambda / lambda_max"),
        "baseline": (str, "none", "'linear' validates the linear VAR lasso"),
        "out": (str, "-", "CV table JSON path"),
    },
    "eval-table1": {
        "patterns": (_list_of(_pattern), [PatternKind.RANDOM, PatternKind.BAND, PatternKind.CLUSTER],
                     "patterns to run"),
        "p_values": (_list_of(POS_INT), [20, 50, 100], "dimensions"),
        "n_values": (_list_of(_int_range(2)), list(PAPER_NS), "sample sizes"),
        "reps": (POS_INT, 200, "replications per cell"),
        "L": (POS_INT, 6, "basis functions per component"),
        "n_lambdas": (_int_range(2), 50, "lambda path length"),
        "min_ratio": (_float_range(0.0, 1.0, open_lo=True), 1e-3, "smallest lambda / lambda_max"),
        "workers": (POS_INT, 1, f"worker processes (env {ENV_WORKERS})"),
        "checkpoint_dir": (str, None, "per-replication checkpoint directory (enables resume)"),
        "out": (str, "-", "summary CSV path"),
        "per_rep_out": (str, None, "optional CSV with one row per replication"),
    },
    "tails": {
        "rho": (_list_of(_float_range(0.0, 0.999)), [0.0, 0.3, 0.6, 0.9], "Lipschitz row sums of the designs"),
        "n_values": (_list_of(POS_INT), [50, 200, 800], "sum lengths"),
        "reps": (_int_range(10_000), 100_000, "replications per (rho, n)"),
        "u_max": (POS_FLOAT, 4.0, "largest z / sqrt(n)"),
        "z_points": (_int_range(2), 40, "grid points per experiment"),
        "functional": (str, "clip", "'clip' (bounded, clip(x1, -M, M)) or 'coordinate' (unbounded x1)"),
        "M": (POS_FLOAT, 1.0, "clipping level"),
        "noise_scale": (POS_FLOAT, 1.0, "innovation standard deviation"),
        "workers": (POS_INT, 1, f"worker processes (env {ENV_WORKERS})"),
        "out_dir": (str, "tails", "output directory"),
    },
    "predict": {
        "model": (str, None, "fit-result JSON written by 'fit'"),
        "input": (str, None, "panel CSV; row t is used to forecast row t+1"),
        "out": (str, "-", "forecast CSV path"),
    },
}
_REQUIRED = {"fit": ("input",), "cv": ("input",), "predict": ("model", "input")}
_ENV = {"workers": ENV_WORKERS, "seed": ENV_SEED}


def _options(command):
    return {**_COMMON, **_OPTIONS[command]}


def _flag(name):
    return "--" + name.replace("_", "-")


def load_config(path, command: str) -> dict:
    """Typed values from the ``[command]`` section of an INI file.

    Unknown sections or keys, and values that fail validation, raise
    :class:`InputError`.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for section in parser.sections():
        if section not in _OPTIONS:
            raise InputError(f"{path}: unknown section [{section}]")
        opts = _options(section)
        for key in parser[section]:
            if key.replace("-", "_") not in opts:
                raise InputError(f"{path}: [{section}] unknown key {key!r}")
    values = {}
    if parser.has_section(command):
        opts = _options(command)
        for key, raw in parser[command].items():
            name = key.replace("-", "_")
            try:
                values[name] = opts[name][0](raw)
            except argparse.ArgumentTypeError as exc:
                raise InputError(f"{path}: [{command}] {key}: {exc}") from None
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="navar", description="Sparse additive nonlinear VAR toolkit.")
    parser.add_argument("--version", action="version", version=f"navar {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in _OPTIONS:
        sp = sub.add_parser(command, help=f"run {command}")
        sp.add_argument("--config", help="INI configuration file")
        for name, (typ, default, helptext) in _options(command).items():
            shown = default.value if isinstance(default, PatternKind) else default
            sp.add_argument(_flag(name), dest=name, type=typ, default=None,
                            help=f"{helptext} (default: {shown})")
            if name == "lam":
                sp.add_argument("--lambda", dest=name, type=typ, default=None, help=argparse.SUPPRESS)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, environment and flags for ``args.command``."""
    command = args.command
    opts = _options(command)
    values = {name: spec[1] for name, spec in opts.items()}
    if args.config:
        values.update(load_config(args.config, command))
    for name, var in _ENV.items():
        if name in opts and os.environ.get(var, "").strip():
            try:
                values[name] = opts[name][0](os.environ[var])
            except argparse.ArgumentTypeError as exc:
                raise InputError(f"environment {var}: {exc}") from None
    for name in opts:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    for name in _REQUIRED.get(command, ()):
        if values.get(name) is None:
            raise InputError(f"{command}: {_flag(name)} is required")
    return values


# ---------------------------------------------------------------- commands


def _cmd_simulate(cfg):
    try:
        spec = paper_design(cfg["pattern"], cfg["p"], seed=cfg["seed"], noise_scale=cfg["noise_scale"])
    except NonstationaryError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rho = stability_margin(lipschitz_matrix(spec))
    panel = simulate(spec, cfg["n"], burn_in=cfg["burn_in"], seed=cfg["seed"] + 1)
    write_panel_csv(panel, cfg["out"])
    if cfg["truth_out"]:
        A = spec.adjacency()
        _write_text(cfg["truth_out"], "\n".join(",".join(str(int(v)) for v in row) for row in A) + "\n")
    stream = sys.stderr if cfg["out"] == "-" else sys.stdout
    print(f"stability margin: {rho:.6f}", file=stream)


def _baseline_flag(cfg):
    b = str(cfg["baseline"]).strip().lower()
    if b not in ("none", "linear"):
        raise InputError(f"--baseline must be 'none' or 'linear', got {cfg['baseline']!r}")
    return b == "linear"


def _cmd_fit(cfg):
    panel = read_panel_csv(cfg["input"])
    linear = _baseline_flag(cfg)
    if cfg["lam"] is None and not cfg["cv"]:
        raise InputError("fit: give --lambda or --cv")
    config = FitConfig(max_sweeps=cfg["max_sweeps"], tol_objective=cfg["tol_objective"], tol_kkt=cfg["tol_kkt"])
    L = cfg["L"] if cfg["L"] is not None else DEFAULT_L
    lam = cfg["lam"]
    if cfg["cv"]:
        grid = cfg["L_grid"] or ([cfg["L"]] if cfg["L"] is not None else list(CV_L_GRID))
        cvres = ts_cross_validate(panel, L_grid=grid, n_folds=cfg["folds"],
                                  n_lambdas=cfg["n_lambdas"], min_ratio=cfg["min_ratio"], baseline=linear)
        lam, L = (cvres.lam if lam is None else lam), cvres.L
        log.info("cv selected lambda=%.6g L=%d", lam, L)
    if linear:
        result = fit_linear_var_baseline(panel, lam, config)
    else:
        c0 = cfg["c0"] if cfg["c0"] is not None else default_c0(panel.data)
        cache = build_design(panel, FourierBasis(L, c0), ridge_floor=config.ridge_floor)
        result = fit(cache, FitConfig(lam=lam, max_sweeps=config.max_sweeps,
                                      tol_objective=config.tol_objective, tol_kkt=config.tol_kkt))
    _write_text(cfg["out_json"], json.dumps(fit_result_to_json(result, panel.labels), indent=1) + "\n")
    _write_text(cfg["out_dot"], adjacency_to_dot(result, panel.labels))
    print(f"lambda={lam:.6g} L={result.basis.L} edges={len(result.support)} "
          f"kkt={result.kkt_residual:.3g} converged={result.converged}")


def _cmd_cv(cfg):
    panel = read_panel_csv(cfg["input"])
    res = ts_cross_validate(panel, L_grid=cfg["L_grid"], n_folds=cfg["folds"], n_lambdas=cfg["n_lambdas"],
                            min_ratio=cfg["min_ratio"], baseline=_baseline_flag(cfg))
    _write_text(cfg["out"], json.dumps({"lambda": res.lam, "L": res.L, "table": res.table}, indent=1) + "\n")


def _fmt(v):
    return "NA" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _cmd_eval_table1(cfg):
    header = ["pattern", "p", "n", "reps", "mean_auroc", "se_auroc", "mean_aupr", "se_aupr",
              "reference_auroc", "reference_aupr"]
    lines = [",".join(header)]
    per_rep = ["pattern,p,n,rep,auroc,aupr"]
    for pattern in cfg["patterns"]:
        for p in cfg["p_values"]:
            for n in cfg["n_values"]:
                try:
                    plan = ExperimentPlan(pattern, p, n, reps=cfg["reps"], L=cfg["L"], n_lambdas=cfg["n_lambdas"],
                                          min_ratio=cfg["min_ratio"], seed=cfg["seed"])
                except ValueError as exc:
                    raise InputError(str(exc)) from None
                row = replicate_table1(plan, workers=cfg["workers"], checkpoint_dir=cfg["checkpoint_dir"])
                per_rep += [f"{r['pattern']},{r['p']},{r['n']},{r['rep']},{r['auroc']!r},{r['aupr']!r}"
                            for r in row.per_rep]
                ref = PAPER_TABLE1.get((pattern.value, p))
                ra = rp = None
                if ref is not None and n in PAPER_NS:
                    ra, rp = ref[0][PAPER_NS.index(n)], ref[1][PAPER_NS.index(n)]
                lines.append(",".join([pattern.value, str(p), str(n), str(row.reps), _fmt(row.mean_auroc),
                                       _fmt(row.se_auroc), _fmt(row.mean_aupr), _fmt(row.se_aupr),
                                       _fmt(ra), _fmt(rp)]))
                log.info("%s p=%d n=%d auroc=%.4f aupr=%.4f", pattern.value, p, n, row.mean_auroc, row.mean_aupr)
    _write_text(cfg["out"], "\n".join(lines) + "\n")
    if cfg["per_rep_out"]:
        _write_text(cfg["per_rep_out"], "\n".join(per_rep) + "\n")


def _cmd_tails(cfg):
    kind = str(cfg["functional"]).strip().lower()
    if kind not in ("clip", "coordinate"):
        raise InputError(f"--functional must be 'clip' or 'coordinate', got {cfg['functional']!r}")
    if len(set(cfg["n_values"])) < 3:
        raise InputError("tails: need at least 3 distinct --n-values")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = clipped_coordinate(2, 0, M=cfg["M"]) if kind == "clip" else coordinate(2, 0)
    M = g.sup_bound
    u = np.linspace(cfg["u_max"] / cfg["z_points"], cfg["u_max"], cfg["z_points"])
    summary = {"functional": g.name, "tau": g.tau, "M": M, "reps": cfg["reps"], "designs": []}
    for rho in cfg["rho"]:
        spec = tail_design(rho, noise_scale=cfg["noise_scale"], seed=cfg["seed"])
        tails = [mc_tail(TailExperiment(spec, g, n, u * math.sqrt(n), reps=cfg["reps"], seed=cfg["seed"]),
                         workers=cfg["workers"]) for n in cfg["n_values"]]
        env = fit_envelope(tails, g.tau, M)
        collapse_ok, collapse_worst = n_collapse(tails, u)
        entry = {"rho": rho, "c1": env.c1, "c2": env.c2, "dominated_fraction": env.dominated_fraction,
                 "dominates": env.dominated_fraction == 1.0, "n_collapse_ok": collapse_ok,
                 "n_collapse_worst_se": collapse_worst,
                 "mean_estimates": [t.mean_estimate for t in tails]}
        if M is not None and M <= 1:
            h = hoeffding_check(tails, g)
            entry["hoeffding_c1"] = h.c1
            entry["hoeffding_r_squared"] = h.r_squared
        summary["designs"].append(entry)
        for t in tails:
            envelope = bernstein_envelope(g.tau, 1.0 if M is None else M, t.n, t.z, env.c1, env.c2)
            lines = ["z,empirical,wilson_hi,envelope"]
            lines += [f"{z!r},{p!r},{hi!r},{e!r}" for z, p, hi, e in zip(t.z.tolist(), t.prob.tolist(),
                                                                    t.wilson_hi.tolist(), envelope.tolist())]
            _write_text(out / f"tail_rho{rho:g}_n{t.n}.csv", "\n".join(lines) + "\n")
        log.info("rho=%g c1=%.4g c2=%.4g dominated=%.3f", rho, env.c1, env.c2, env.dominated_fraction)
    _write_text(out / "summary.json", json.dumps(summary, indent=1) + "\n")


def _cmd_predict(cfg):
    try:
        obj = json.loads(Path(cfg["model"]).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {cfg['model']}: {exc}") from None
    result, labels = fit_result_from_json(obj)
    panel = read_panel_csv(cfg["input"])
    if panel.p != result.p:
        raise InputError(f"panel has {panel.p} columns, model expects {result.p}")
    forecast = predict_one_step(result, panel.data)
    write_panel_csv(TimeSeriesPanel(forecast, tuple(labels)), cfg["out"])


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "cv": _cmd_cv,
    "eval-table1": _cmd_eval_table1,
    "tails": _cmd_tails,
    "predict": _cmd_predict,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InputError as exc:
        print(f"navar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        _COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"navar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonstationaryError, EnvelopeInfeasible, ModelError, np.linalg.LinAlgError) as exc:
        print(f"navar: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"navar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"navar: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
