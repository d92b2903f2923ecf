"""Command line front end: config ingestion, dispatch, and artifact emission.

Every stochastic subcommand derives replica i's stream from (seed, i) alone,
so the worker count never changes an output byte. Exit codes: 0 ok, 2 bad
configuration, 3 hard predicate failure, 4 reproducibility failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, core
from .errors import (AsymptoticCheck, ConfigError, HeavyTail, PredicateFailure,
                     ReproducibilityError, VoterPamError, ZeroHits)
from .parallel import DEFAULT_CHUNK, ranges
from .rng import child_seed

EXIT_OK, EXIT_CONFIG, EXIT_PREDICATE, EXIT_REPRO = 0, 2, 3, 4


# ------------------------------------------------------------------ tables

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            raise ValueError("NaN in results")
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


def _check_finite(rows):
    for i, row in enumerate(rows):
        for k, v in row.items():
            if isinstance(v, (float, np.floating)) and math.isnan(v):
                raise ValueError(f"NaN in results: row {i}, column {k!r}")


def table_bytes(rows, columns, fmt: str = "csv") -> bytes:
    """Serialise rows (dicts) to CSV or JSON bytes; NaN aborts."""
    rows = list(rows)
    _check_finite(rows)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
        return buf.getvalue().encode()
    if fmt == "json":
        clean = [{c: _jsonable(row.get(c)) for c in columns} for row in rows]
        return (json.dumps(clean, allow_nan=False, indent=1) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")


def emit_table(rows, columns, path: str, fmt: str = "csv") -> str:
    """Write a results table; the extension follows the format."""
    data = table_bytes(rows, columns, fmt)
    base, _ = os.path.splitext(path)
    out = f"{base}.{fmt}"
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(data)
    return out


def read_csv(path: str):
    """Parse a table written by ``emit_table`` back into floats where possible."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        out = []
        for row in rd:
            conv = {}
            for k, v in row.items():
                try:
                    conv[k] = int(v)
                except ValueError:
                    try:
                        conv[k] = float(v)
                    except ValueError:
                        conv[k] = v
            out.append(conv)
    return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            raise ValueError("NaN in results")
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return v


# ---------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    params: dict
    master_seed: int
    replicas: int
    workers: int
    out_dir: str
    fmt: str = "csv"

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def digest(self) -> str:
        blob = json.dumps({"name": self.name, "params": _jsonable(self.params),
                           "seed": self.master_seed, "replicas": self.replicas},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    name: str
    config_hash: str
    code_version: str
    backend: str
    wall_time: float
    master_seed: int
    shard_seeds: list
    warnings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    checksums: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=1, sort_keys=True)


@dataclass
class Outcome:
    """What a subcommand produced: tables, a JSON payload, checks, warnings."""

    payload: dict
    tables: dict = field(default_factory=dict)      # name -> (rows, columns)
    reports: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)


# ------------------------------------------------------------- subcommands

def _ints(text) -> tuple:
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v != "")


def _floats(text) -> tuple:
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v != "")


def _count(text) -> int:
    v = float(text)
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"not a positive count: {text}")
    return int(v)


def parse_points(text: str):
    """'0,0@0;1,0@0.5' -> [((0, 0), 0.0), ((1, 0), 0.5)]."""
    pts = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        site, _, s = part.partition("@")
        pts.append((_ints(site), float(s or 0.0)))
    if not pts:
        raise ConfigError("no points given")
    return pts


def parse_sets(text: str):
    """'0,0.5;2,2.5' -> ((0.0, 0.5), (2.0, 2.5))."""
    return tuple(_floats(p) for p in str(text).split(";") if p.strip())


def _kernel(args):
    from .kernels import Kernel, make_simple_random_walk
    kdesc = getattr(args, "kernel", "srw")
    if kdesc in (None, "srw"):
        return make_simple_random_walk(args.dim)
    if os.path.exists(kdesc):
        with open(kdesc) as fh:
            kdesc = fh.read()
    k = Kernel.from_json(kdesc)
    if k.d != args.dim:
        raise ConfigError("kernel dimension does not match --dim")
    return k


def _voter_cfg(args, warm=None):
    from .kernels import Torus
    from .voter import Bernoulli, VoterConfig, Warmed, default_warm
    tor = Torus(args.L, args.dim)
    T = args.warm if warm is None else warm
    if T is None or T < 0:
        T = default_warm(tor)
    init = Warmed(T) if T > 0 else Bernoulli()
    return VoterConfig(tor, _kernel(args), args.rho, init)


def cmd_greens(args, cfg: ExperimentConfig) -> Outcome:
    from .kernels import green_constants
    k = _kernel(args)
    star = args.dim >= 5 if args.star is None else args.star
    G = green_constants(k, star=star, tol=args.tol)
    row = {"d": args.dim, "g": G.g, "g_star": G.g_star, "error": G.quadrature_error}
    return Outcome(G.as_dict(), {"greens": ([row], ["d", "g", "g_star", "error"])})


def cmd_voter_occupation(args, cfg: ExperimentConfig) -> Outcome:
    from .voter import occupation_samples, occupation_tail
    vc = _voter_cfg(args)
    T = occupation_samples(vc, args.t, cfg.replicas, cfg.master_seed, workers=cfg.workers)
    rows = [{"replica": i, "T_t": float(v)} for i, v in enumerate(T)]
    payload = {"t": args.t, "mean_fraction": float(T.mean() / args.t), "replicas": len(T)}
    counts = {}
    if args.alpha is not None:
        try:
            tail = occupation_tail(vc, args.alpha, args.t, cfg.replicas, cfg.master_seed,
                                   samples=T)
            payload.update({"alpha": args.alpha, "p_hat": tail.p_hat,
                            "ci_low": tail.prob.ci_low, "ci_high": tail.prob.ci_high,
                            "b_t": tail.b_t, "decay": tail.decay})
        except ZeroHits as e:
            counts["ZeroHits"] = 1
            payload.update({"alpha": args.alpha, "p_hat": 0.0, "ci_high": e.upper})
    return Outcome(payload, {"occupation": (rows, ["replica", "T_t"])}, counts=counts)


def cmd_voter_persistence(args, cfg: ExperimentConfig) -> Outcome:
    from .voter import box_sites, persistence_probability
    vc = _voter_cfg(args)
    box = _ints(args.box)
    if len(box) != args.dim:
        raise ConfigError("--box needs one side length per dimension")
    counts = {}
    try:
        res = persistence_probability(vc, box_sites(box), args.t, cfg.replicas,
                                      cfg.master_seed, cfg.workers)
        payload = res.as_dict()
    except ZeroHits as e:
        counts["ZeroHits"] = 1
        payload = {"p_hat": 0.0, "ci_low": 0.0, "ci_high": e.upper, "rate": None}
    row = {k: v for k, v in payload.items()}
    return Outcome(payload, {"persistence": ([row], ["p_hat", "ci_low", "ci_high", "rate"])},
                   counts=counts)


def cmd_duality_check(args, cfg: ExperimentConfig) -> Outcome:
    from .coalescing import correlation_dual
    from .voter import forward_probability
    pts = parse_points(args.points)
    if any(len(x) != args.dim for x, _ in pts):
        raise ConfigError("point dimension does not match --dim")
    k = _kernel(args)
    dd = correlation_dual(k, pts, args.rho, args.T, args.t, cfg.replicas, cfg.master_seed,
                          L=args.L, workers=cfg.workers)
    payload = dd.as_dict()
    row = {"estimate": dd.estimate.mean, "std_error": dd.estimate.std_error,
           "bracket_low": dd.bracket_low, "bracket_high": dd.bracket_high}
    cols = ["estimate", "std_error", "bracket_low", "bracket_high"]
    if args.L > 0 and args.forward:
        vc = _voter_cfg(args, warm=args.T)
        fw = forward_probability(vc, pts, args.t, cfg.replicas, cfg.master_seed + 1,
                                 cfg.workers)
        z = (fw.p_hat - dd.estimate.mean) / max(math.hypot(fw.std_error,
                                                            dd.estimate.std_error), 1e-300)
        payload.update({"forward": fw.p_hat, "forward_se": fw.std_error, "z": z})
        row.update({"forward": fw.p_hat, "forward_se": fw.std_error, "z": z})
        cols += ["forward", "forward_se", "z"]
    return Outcome(payload, {"duality": ([row], cols)})


def _moment(args, cfg, p=None, gamma=None, seed=None):
    from .lyapunov import run_moment
    L = args.L if args.mode == "direct" or args.L > 0 else 0
    return run_moment(args.p if p is None else p, args.kappa,
                      args.gamma if gamma is None else gamma, args.rho, args.dim, args.t,
                      cfg.replicas, cfg.master_seed if seed is None else seed, args.mode,
                      args.T, L, cfg.workers)


def _weight_counts(res) -> dict:
    out = {}
    if res.flagged:
        out["WindowViolation"] = int(res.flagged)
    if res.estimate.heavy_tail:
        out["HeavyTail"] = 1
    return out


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return out


def cmd_moment(args, cfg: ExperimentConfig) -> Outcome:
    from .lyapunov import monotonicity_check, sandwich_check
    res = _moment(args, cfg)
    reports = [sandwich_check(res, args.gamma, args.rho)]
    counts = _weight_counts(res)
    if args.p > 1 and args.check_monotone:
        prev = _moment(args, cfg, p=args.p - 1)
        reports.append(monotonicity_check(prev, res))
        counts = _merge(counts, _weight_counts(prev))
    payload = res.as_dict()
    tables = {}
    if args.emit_csv:
        rows = [{"replica": i, "log_weight": float(w), "flagged": int(f)}
                for i, (w, f) in enumerate(zip(res.log_weights, res.flags))]
        tables["weights"] = (rows, ["replica", "log_weight", "flagged"])
    row = {"mode": res.mode, "p": res.p, "t": res.t, "lambda_hat": res.lam,
           "lambda_se": res.lam_se, "log_mean": res.estimate.log_mean,
           "flagged": res.flagged}
    tables["moment"] = ([row], list(row))
    return Outcome(payload, tables, reports, counts)


def cmd_lyapunov_scan(args, cfg: ExperimentConfig) -> Outcome:
    from .lyapunov import curve_checks, curve_from_results, monotonicity_check, run_moment
    rows, reports, counts, curves = [], [], {}, []
    L = args.L if args.mode == "direct" or args.L > 0 else 0
    for kappa in _floats(args.kappas):
        prev = None
        for p in range(1, args.p_max + 1):
            res = [run_moment(p, kappa, args.gamma, args.rho, args.dim, t, cfg.replicas,
                              cfg.master_seed, args.mode, args.T, L, cfg.workers)
                   for t in _floats(args.t_grid)]
            for r in res:
                counts = _merge(counts, _weight_counts(r))
            curve = curve_from_results(res, kappa, args.gamma, args.rho, args.dim, args.model)
            curves.append(curve)
            rows.extend(curve.rows())
            reports.extend(curve_checks(curve))
            if prev is not None:
                reports.extend(monotonicity_check(a, b) for a, b in zip(prev, res))
            prev = res
    payload = {"curves": [{"kappa": c.kappa, "p": c.p, "lambda_hat": c.lambda_hat,
                           "lambda_se": c.lambda_se, "residual": c.residual,
                           "model": c.fit.model} for c in curves]}
    cols = ["d", "kappa", "p", "t", "lambda_hat", "ci_low", "ci_high"]
    return Outcome(payload, {"lyapunov": (rows, cols)}, reports, counts)


def cmd_dichotomy(args, cfg: ExperimentConfig) -> Outcome:
    from .lyapunov import dichotomy_scan
    tab = dichotomy_scan(_ints(args.dims), _floats(args.kappas), args.p, args.gamma, args.rho,
                         args.t, cfg.replicas, cfg.master_seed, args.T, cfg.workers)
    cols = ["d", "kappa", "p", "t", "lambda_hat", "std_error", "ci_low", "ci_high"]
    return Outcome({"points": len(tab.rows)}, {"dichotomy": (tab.rows, cols)}, tab.checks)


def cmd_polaron(args, cfg: ExperimentConfig) -> Outcome:
    from .polaron import solve_P5
    res = solve_P5(n=args.n, R=args.R, iterations=args.iters)
    prof = res.profile
    rows = [{"r": float(r), "f": float(f)} for r, f in zip(prof.r, prof.f)]
    path = os.path.join(cfg.out_dir, f"polaron_profile.{cfg.fmt}")
    payload = res.as_dict()
    payload["profile_csv_path"] = path
    return Outcome(payload, {"polaron_profile": (rows, ["r", "f"])})


def cmd_conjecture(args, cfg: ExperimentConfig) -> Outcome:
    from .polaron import conjecture_inputs, conjecture_terms
    inp = conjecture_inputs(args.d, args.p, args.rho, args.gamma, args.p5)
    terms = conjecture_terms(inp)
    terms.update({"d": args.d, "p": args.p, "rho": args.rho, "gamma": args.gamma,
                  "g": inp.green.g, "g_star": inp.green.g_star,
                  "p5_lower_bound": inp.p5_lower_bound})
    cols = ["d", "p", "rho", "gamma", "green_term", "polaron_term", "total"]
    return Outcome(terms, {"conjecture": ([terms], cols)})


def cmd_block_check(args, cfg: ExperimentConfig) -> Outcome:
    from .coalescing import (BlockConfig, LatticePath, block_inequality_check,
                             calibrate_C_eps, meeting_decay)
    k = _kernel(args)
    C = args.C_eps
    payload = {}
    if C is None:
        fit = meeting_decay(k, _floats(args.gaps), cfg.replicas, cfg.master_seed + 11,
                            args.K, workers=cfg.workers)
        C = calibrate_C_eps(fit, args.K, args.eps)
        payload.update({"decay_exponent": fit.exponent, "decay_se": fit.exponent_se})
    r_prime = args.r / (args.r - 1.0)
    bc = BlockConfig(LatticePath.constant(args.dim), parse_sets(args.sets), args.rho, args.K,
                     args.r, r_prime, args.eps, C)
    rep = block_inequality_check(k, bc, args.horizon, cfg.replicas, cfg.master_seed,
                                 cfg.workers)
    payload.update({"lhs": rep.lhs.mean, "lhs_se": rep.lhs.std_error, "rhs": rep.rhs,
                    "rhs_se": rep.rhs_se, "C_eps": C, "passes": rep.passes})
    row = {k2: payload[k2] for k2 in ("lhs", "lhs_se", "rhs", "rhs_se", "C_eps", "passes")}
    return Outcome(payload, {"block": ([row], list(row))})


# ------------------------------------------------------------------ parser

def _common(p):
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--replicas", type=_count, default=10_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voterpam", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None, help="master seed (required for runs)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default=".")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--config", default=None, help="INI file with one section per command")
    ap.add_argument("--verify", action="store_true",
                    help="dry-run twice with different worker counts and compare checksums")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("greens")
    p.add_argument("--kernel", default="srw")
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--star", type=lambda s: s.lower() in ("1", "true", "yes"), default=None)
    p.set_defaults(fn=cmd_greens, stochastic=False)

    for name, fn in (("voter-occupation", cmd_voter_occupation),
                     ("voter-persistence", cmd_voter_persistence)):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--kernel", default="srw")
        p.add_argument("--L", type=int, default=16)
        p.add_argument("--t", type=float, default=8.0)
        p.add_argument("--warm", type=float, default=None)
        if name == "voter-occupation":
            p.add_argument("--alpha", type=float, default=None)
        else:
            p.add_argument("--box", default="1,1")
        p.set_defaults(fn=fn, stochastic=True)

    p = sub.add_parser("duality-check")
    _common(p)
    p.add_argument("--kernel", default="srw")
    p.add_argument("--points", default="0,0@0;1,0@0.5")
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--T", type=float, default=8.0)
    p.add_argument("--L", type=int, default=0)
    p.add_argument("--warm", type=float, default=None)
    p.add_argument("--forward", action="store_true", help="also simulate the voter model")
    p.set_defaults(fn=cmd_duality_check, stochastic=True)

    def moment_args(p):
        _common(p)
        p.add_argument("--mode", choices=("direct", "dual"), default="dual")
        p.add_argument("--kappa", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=0.5)
        p.add_argument("--T", type=float, default=8.0)
        p.add_argument("--L", type=int, default=0)

    p = sub.add_parser("moment")
    moment_args(p)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--emit-csv", action="store_true")
    p.add_argument("--check-monotone", action="store_true")
    p.set_defaults(fn=cmd_moment, stochastic=True)

    p = sub.add_parser("lyapunov-scan")
    moment_args(p)
    p.add_argument("--kappas", default="1")
    p.add_argument("--p-max", type=int, default=2)
    p.add_argument("--t-grid", default="1,2,4")
    p.add_argument("--model", choices=("inverse", "log", "auto"), default="inverse")
    p.set_defaults(fn=cmd_lyapunov_scan, stochastic=True)

    p = sub.add_parser("dichotomy")
    _common(p)
    p.add_argument("--dims", default="2,5")
    p.add_argument("--kappas", default="0,1,4,16")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--t", type=float, default=4.0)
    p.add_argument("--T", type=float, default=8.0)
    p.set_defaults(fn=cmd_dichotomy, stochastic=True)

    p = sub.add_parser("polaron")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--R", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=2000)
    p.set_defaults(fn=cmd_polaron, stochastic=False)

    p = sub.add_parser("conjecture")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--rho", type=float, default=0.2)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--p5", type=float, default=None, help="reuse a computed lower bound")
    p.set_defaults(fn=cmd_conjecture, stochastic=False)

    p = sub.add_parser("block-check")
    _common(p)
    p.set_defaults(dim=5)
    p.add_argument("--kernel", default="srw")
    p.add_argument("--sets", default="0;1;3")
    p.add_argument("--K", type=float, default=8.0)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--C-eps", type=float, default=None, help="calibrated when omitted")
    p.add_argument("--gaps", default="1,2,4,8,16")
    p.add_argument("--horizon", type=float, default=50.0)
    p.set_defaults(fn=cmd_block_check, stochastic=True)
    return ap


_GLOBAL = {"seed", "workers", "out_dir", "format", "replicas"}


def _subparser(ap, name):
    for act in ap._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def load_config(path: str, command: str, ap: argparse.ArgumentParser) -> dict:
    """Flat key = value pairs from [experiment] and [<command>]; unknown keys fail."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    sp = _subparser(ap, command)
    known = {a.dest for a in sp._actions} | _GLOBAL
    out = {}
    for sec in cp.sections():
        if sec not in ("experiment", command):
            raise ConfigError(f"unknown section [{sec}]")
        for key, val in cp.items(sec):
            dest = key.strip().replace("-", "_")
            if dest not in known or dest in ("fn", "stochastic", "help"):
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            out[dest] = val
    return out


def _apply_config(ap, argv, ns):
    values = load_config(ns.config, ns.command, ap)
    sp = _subparser(ap, ns.command)
    glob = {k: v for k, v in values.items() if k in ("seed", "workers", "out_dir", "format")}
    local = {k: v for k, v in values.items() if k not in glob}
    ap.set_defaults(**glob)
    sp.set_defaults(**local)
    # explicit flags still win: argparse only falls back to defaults
    return ap.parse_args(argv)


def make_config(ns) -> ExperimentConfig:
    params = {k: v for k, v in vars(ns).items()
              if k not in ("fn", "stochastic", "config", "verify", "seed", "workers", "out_dir",
                           "format", "replicas", "command")}
    if ns.stochastic and ns.seed is None:
        raise ConfigError("--seed is required for stochastic runs")
    return ExperimentConfig(ns.command, params, int(ns.seed or 0),
                            int(getattr(ns, "replicas", 1) or 1), int(ns.workers),
                            ns.out_dir, ns.format)


def _shard_seeds(cfg: ExperimentConfig):
    return [[a, b, child_seed(cfg.master_seed, a)] for a, b in ranges(cfg.replicas,
                                                                       DEFAULT_CHUNK)]


def execute(ns, cfg: ExperimentConfig):
    """Run the subcommand, collecting warnings by category."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = ns.fn(ns, cfg)
    counts = dict(out.counts)
    for w in caught:
        cat = w.category
        name = ("HeavyTail" if issubclass(cat, HeavyTail) else
                "AsymptoticCheck" if issubclass(cat, AsymptoticCheck) else cat.__name__)
        counts[name] = counts.get(name, 0) + 1
    for r in out.reports:
        if not r.passed and not r.hard:
            counts["AsymptoticCheck"] = counts.get("AsymptoticCheck", 0) + 1
    out.counts = counts
    return out


def _render(out: Outcome, fmt: str):
    return {name: table_bytes(rows, cols, fmt) for name, (rows, cols) in out.tables.items()}


def run_experiment(ns, cfg: ExperimentConfig, write: bool = True):
    """Dispatch, write artifacts and manifest; returns (manifest, outcome)."""
    t0 = time.perf_counter()
    out = execute(ns, cfg)
    blobs = _render(out, cfg.fmt)
    man = RunManifest(cfg.name, cfg.digest(), __version__, core.BACKEND,
                      time.perf_counter() - t0, cfg.master_seed,
                      _shard_seeds(cfg) if ns.stochastic else [], out.counts)
    for name, data in blobs.items():
        man.checksums[name] = hashlib.sha256(data).hexdigest()
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        for name, data in blobs.items():
            path = os.path.join(cfg.out_dir, f"{name}.{cfg.fmt}")
            with open(path, "wb") as fh:
                fh.write(data)
            man.artifacts[name] = path
        rep = os.path.join(cfg.out_dir, f"{cfg.name}.report.json")
        with open(rep, "w") as fh:
            json.dump(_jsonable({"result": out.payload,
                                 "predicates": [r.as_dict() for r in out.reports]}),
                      fh, indent=1, allow_nan=False)
            fh.write("\n")
        man.artifacts["report"] = rep
        with open(os.path.join(cfg.out_dir, f"{cfg.name}.manifest.json"), "w") as fh:
            fh.write(man.to_json() + "\n")
    return man, out


def verify(ns, cfg: ExperimentConfig, replicas: int = 512):
    """Dry-run at a small size with 1 and 2+ workers; checksums must agree."""
    from dataclasses import replace
    small = replace(cfg, replicas=min(cfg.replicas, replicas))
    sums = []
    for w in (1, max(2, cfg.workers)):
        man, _ = run_experiment(ns, replace(small, workers=w), write=False)
        sums.append(man.checksums)
    if sums[0] != sums[1]:
        bad = [k for k in sums[0] if sums[0][k] != sums[1].get(k)]
        raise ReproducibilityError(f"checksum mismatch across worker counts: {bad}")
    return sums[0]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
        if ns.config:
            ns = _apply_config(ap, argv, ns)
        cfg = make_config(ns)
        if ns.verify and ns.stochastic:
            verify(ns, cfg)
        man, out = run_experiment(ns, cfg)
        from .lyapunov import enforce
        print(json.dumps(_jsonable(out.payload), indent=1, allow_nan=False))
        if out.counts:
            print(f"warnings: {json.dumps(out.counts, sort_keys=True)}", file=sys.stderr)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AsymptoticCheck)
            enforce(out.reports)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PredicateFailure as e:
        print(f"predicate failure: {e}", file=sys.stderr)
        return EXIT_PREDICATE
    except ReproducibilityError as e:
        print(f"reproducibility error: {e}", file=sys.stderr)
        return EXIT_REPRO
    except VoterPamError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        # parameter validation in the model types
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
