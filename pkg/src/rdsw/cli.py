"""Batch command line: deterministic experiments, strict configs, verify.

Usage: ``rdsw <command> --config <file> [--seed N] [--out DIR] [--threads K]``
with commands stationary, sync, limits, lyapunov, ld, cocycle, ulam, verify,
and gallery. Configs are strict JSON: unknown keys anywhere are rejected
before any computation (exit 2 with a field path). Every run writes its
result files plus ``manifest.json`` (config echo, seed, package versions,
wall time); identical configs produce byte-identical result files, and only
the manifest's ``wall_time_s`` field varies between repeats.

Reals in CSV output carry 17 significant digits so values round-trip exactly.
Guarded failures from the library (enumeration budgets, cocycle overflow,
refused ill-posed requests) exit with status 4 and a one-line structured
message; config and validation problems exit 2; a verify run with failing
cases exits 1.

Atomicity diagnostics (the ``diagnostic`` flag of ``stationary``) use fixed
conventions: ball radius 1e-3, Dirac mass threshold 0.99, and a nonatomic
band of 5 times the uniform ball mass plus three binomial standard errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import case_ids, run_case
from .cocycles import CocycleSpec, cocycle_gallery, cocycle_gallery_ids, estimate_spectrum, verify_lc_rate
from .gallery import gallery, gallery_facts
from .geometry import INTERVAL
from .limit_laws import clt_test, estimate_sigma2, lil_statistic, observable, slln_check
from .lyapunov import distortion_report, estimate_gamma, ld_curve, sync_ld_curve
from .measures import atom_diagnostic, estimate_stationary
from .operators import build_laplace_markov, build_transfer_ulam, leading_eigen, spectral_gap, subleading_decay
from .synchronization import average_sync_sum, fit_sync_rate, paired_orbit
from .systems import SystemSpec, map_from_params
from .util import BudgetExceededError, OverflowGuardError, RefusalError, fmt

__all__ = ["main"]

_SYNC_STREAM = 3 << 16
_COMMANDS = ("stationary", "sync", "limits", "lyapunov", "ld", "cocycle", "ulam", "verify")


class ConfigError(ValueError):
    """A config failed schema validation; the message carries the field path."""


# ---------------------------------------------------------------------------
# strict config handling


def _reject_unknown(obj: dict, allowed, path: str):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        keys = ", ".join(repr(k) for k in unknown)
        raise ConfigError(f"{path}: unknown key(s) {keys}; allowed: {sorted(allowed)}")


def _typed(value, kind: str, path: str):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {value!r}")
        return value
    if kind == "pint":
        v = _typed(value, "int", path)
        if v <= 0:
            raise ConfigError(f"{path}: expected positive integer, got {v}")
        return v
    if kind == "real":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected real number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            raise ConfigError(f"{path}: expected finite real, got {v!r}")
        return v
    if kind == "preal":
        v = _typed(value, "real", path)
        if v <= 0.0:
            raise ConfigError(f"{path}: expected positive real, got {v!r}")
        return v
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected boolean, got {value!r}")
        return value
    if kind == "list[preal]":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected non-empty list of positive reals")
        return [_typed(v, "preal", f"{path}[{i}]") for i, v in enumerate(value)]
    if kind == "list[pint]":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected non-empty list of positive integers")
        return [_typed(v, "pint", f"{path}[{i}]") for i, v in enumerate(value)]
    raise AssertionError(kind)


def _params(config: dict, schema: dict) -> dict:
    raw = config.get("params", {})
    if not isinstance(raw, dict):
        raise ConfigError("params: expected an object")
    _reject_unknown(raw, schema, "params")
    out = {}
    for key, (kind, default, choices) in schema.items():
        if key not in raw:
            out[key] = default
            continue
        value = raw[key]
        if value is None and default is None:
            out[key] = None
            continue
        v = _typed(value, kind, f"params.{key}")
        if choices is not None and v not in choices:
            raise ConfigError(f"params.{key}: expected one of {sorted(choices)}, got {v!r}")
        out[key] = v
    return out


def _load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    try:
        config = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: top level must be an object")
    allowed = {"command", "seed", "output", "format", "threads", "params"}
    allowed.add("cocycle" if command == "cocycle" else "system")
    if command == "verify":
        allowed = {"command", "output", "threads", "case"}
    _reject_unknown(config, allowed, "config")
    stated = config.get("command")
    if stated is not None and stated != command:
        raise ConfigError(f"command: config says {stated!r} but the subcommand is {command!r}")
    return config


def _resolve_system(config: dict) -> SystemSpec:
    spec = config.get("system")
    if spec is None:
        raise ConfigError("system: required (gallery id or inline object)")
    if isinstance(spec, str):
        try:
            return gallery(spec)
        except KeyError as e:
            raise ConfigError(f"system: {e.args[0]}") from e
    if not isinstance(spec, dict):
        raise ConfigError("system: expected gallery id string or object")
    _reject_unknown(spec, {"maps", "probs", "name", "space"}, "system")
    maps_raw = spec.get("maps")
    if not isinstance(maps_raw, list) or not maps_raw:
        raise ConfigError("system.maps: expected non-empty list of map objects")
    maps = []
    for i, m in enumerate(maps_raw):
        if not isinstance(m, dict) or "family" not in m:
            raise ConfigError(f"system.maps[{i}]: expected an object with a 'family' key")
        maps.append(map_from_params(m))
    probs = spec.get("probs")
    if not isinstance(probs, list):
        raise ConfigError("system.probs: expected a list of reals")
    name = spec.get("name", "custom")
    return SystemSpec(maps, [_typed(p, "real", f"system.probs[{i}]") for i, p in enumerate(probs)], name=_typed(name, "str", "system.name"))


def _resolve_cocycle(config: dict) -> CocycleSpec:
    spec = config.get("cocycle")
    if spec is None:
        raise ConfigError("cocycle: required (gallery id or inline object)")
    if isinstance(spec, str):
        try:
            return cocycle_gallery(spec)
        except KeyError as e:
            raise ConfigError(f"cocycle: {e.args[0]}") from e
    if not isinstance(spec, dict):
        raise ConfigError("cocycle: expected gallery id string or object")
    _reject_unknown(spec, {"matrices", "probs", "name"}, "cocycle")
    mats = spec.get("matrices")
    if not isinstance(mats, list) or not mats:
        raise ConfigError("cocycle.matrices: expected non-empty list of square matrices")
    probs = spec.get("probs")
    if not isinstance(probs, list):
        raise ConfigError("cocycle.probs: expected a list of reals")
    name = spec.get("name", "custom")
    return CocycleSpec(
        [np.asarray(m, dtype=float) for m in mats],
        [_typed(p, "real", f"cocycle.probs[{i}]") for i, p in enumerate(probs)],
        name=_typed(name, "str", "cocycle.name"),
    )


# ---------------------------------------------------------------------------
# serialization


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(float(v))
    return str(v)


def _jcell(v):
    if isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return str(v)


class _Run:
    """Collects result tables, then writes them once, single-threaded."""

    def __init__(self, command: str, args, config: dict):
        self.command = command
        self.config = config
        self.seed = args.seed if args.seed is not None else config.get("seed", 0)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < (1 << 64):
            raise ConfigError(f"seed: expected integer in [0, 2^64), got {self.seed!r}")
        self.threads = args.threads if args.threads is not None else config.get("threads", 1)
        if not isinstance(self.threads, int) or isinstance(self.threads, bool) or self.threads <= 0:
            raise ConfigError(f"threads: expected positive integer, got {self.threads!r}")
        self.format = config.get("format", "csv")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: expected 'csv' or 'json', got {self.format!r}")
        out = args.out if args.out is not None else config.get("output")
        self.out = Path(out) if out is not None else Path("rdsw_out") / command
        self.tables: list[tuple[str, list[str], list[tuple]]] = []
        self.blobs: list[tuple[str, bytes]] = []
        self.t0 = time.perf_counter()

    def table(self, name: str, header: list[str], rows: list[tuple]):
        self.tables.append((name, header, rows))

    def blob(self, name: str, data: bytes):
        self.blobs.append((name, data))

    def write(self, resolved: dict) -> list[str]:
        self.out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, header, rows in self.tables:
            if self.format == "csv":
                path = self.out / f"{name}.csv"
                lines = [",".join(header)]
                lines += [",".join(_cell(c) for c in row) for row in rows]
                path.write_text("\n".join(lines) + "\n")
            else:
                path = self.out / f"{name}.json"
                payload = [dict(zip(header, (_jcell(c) for c in row))) for row in rows]
                path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            written.append(path.name)
        for name, data in self.blobs:
            (self.out / name).write_bytes(data)
            written.append(name)
        manifest = {
            "command": self.command,
            "config": self.config,
            "resolved": resolved,
            "seed": self.seed,
            "threads": self.threads,
            "format": self.format,
            "versions": {
                "rdsw": __version__,
                "numpy": np.__version__,
                "scipy": __import__("scipy").__version__,
                "python": ".".join(str(v) for v in sys.version_info[:3]),
            },
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        written.append("manifest.json")
        return written


def _finish(run: _Run, resolved: dict) -> int:
    written = run.write(resolved)
    print(f"{run.command}: wrote {', '.join(written)} in {run.out}")
    return 0


# ---------------------------------------------------------------------------
# commands


def _cmd_stationary(args) -> int:
    config = _load_config(args.config, "stationary")
    p = _params(
        config,
        {
            "burn_in": ("pint", 1000, None),
            "samples": ("pint", 100_000, None),
            "x0": ("real", None, None),
            "shards": ("pint", 1, None),
            "diagnostic": ("bool", False, None),
        },
    )
    run = _Run("stationary", args, config)
    sys_ = _resolve_system(config)
    m = estimate_stationary(
        sys_,
        burn_in=p["burn_in"],
        samples=p["samples"],
        seed=run.seed,
        x0=p["x0"],
        shards=p["shards"],
        threads=run.threads,
    )
    atoms = np.atleast_2d(m.atoms.T).T
    header = ["weight"] + [f"x{i}" for i in range(atoms.shape[1])]
    rows = [tuple([w] + list(a)) for w, a in zip(m.weights, atoms)]
    run.table("atoms", header, rows)
    if p["diagnostic"]:
        d = atom_diagnostic(sys_, m)
        run.table(
            "diagnostic",
            ["verdict", "max_ball_mass", "ball_threshold", "effective_sample", "common_fixed_points"],
            [(d.verdict, d.max_ball_mass, d.ball_threshold, d.effective_sample, ";".join(fmt(x) for x in d.common_fixed_points))],
        )
    return _finish(run, {"system": sys_.params(), "params": p})


def _cmd_sync(args) -> int:
    config = _load_config(args.config, "sync")
    p = _params(
        config,
        {
            "mode": ("str", "rate", {"rate", "average"}),
            "x": ("real", 0.2, None),
            "y": ("real", 0.7, None),
            "n": ("pint", 60, None),
            "alpha": ("preal", 1.0, None),
            "replicas": ("pint", 10_000, None),
        },
    )
    run = _Run("sync", args, config)
    sys_ = _resolve_system(config)
    if p["mode"] == "rate":
        trace = paired_orbit(sys_, p["x"], p["y"], sys_.word_stream(run.seed, _SYNC_STREAM), p["n"])
        f = fit_sync_rate(trace)
        run.table("trace", ["step", "distance"], list(enumerate(trace.distances)))
        run.table(
            "fit",
            ["rate", "intercept", "r2", "censored_at"],
            [(f.rate, f.intercept, f.r2, -1 if f.censored_at is None else f.censored_at)],
        )
    else:
        r = average_sync_sum(sys_, p["x"], p["y"], alpha=p["alpha"], n=p["n"], replicas=p["replicas"], seed=run.seed)
        run.table("partial_sums", ["step", "partial_sum"], list(enumerate(r.partial_sums)))
        run.table(
            "average_summary",
            ["alpha", "final_sum", "bounded", "tail_fraction"],
            [(r.alpha, r.partial_sums[-1], r.bounded, r.tail_fraction)],
        )
    return _finish(run, {"system": sys_.params(), "params": p})


def _cmd_limits(args) -> int:
    config = _load_config(args.config, "limits")
    p = _params(
        config,
        {
            "law": ("str", None, {"slln", "sigma2", "clt", "lil"}),
            "observable": ("str", "coordinate", {"coordinate", "cos2pi", "sin2pi"}),
            "x0": ("real", 0.5, None),
            "n": ("pint", None, None),
            "replicas": ("pint", None, None),
        },
    )
    if p["law"] is None:
        raise ConfigError("params.law: required; one of ['clt', 'lil', 'sigma2', 'slln']")
    run = _Run("limits", args, config)
    sys_ = _resolve_system(config)
    h = observable(p["observable"], sys_.space)
    law = p["law"]
    if law == "slln":
        n = p["n"] or 1_000_000
        r = slln_check(sys_, h, p["x0"], n, seed=run.seed)
        run.table(
            "slln",
            ["checkpoint", "mean", "gap"],
            list(zip(r.checkpoints, r.means, r.gaps)),
        )
        run.table(
            "slln_summary",
            ["nu_hat", "sigma2_hat", "threshold", "verdict"],
            [(r.nu_hat, r.sigma2_hat, r.threshold, r.verdict)],
        )
    elif law == "sigma2":
        r = estimate_sigma2(sys_, h, n=p["n"] or 10_000, replicas=p["replicas"] or 10_000, seed=run.seed)
        run.table(
            "sigma2",
            ["sigma2", "stderr", "nu_hat", "batch_sigma2", "batch_stderr", "flagged"],
            [(r.sigma2, r.stderr, r.nu_hat, r.batch_sigma2, r.batch_stderr, r.flagged)],
        )
    elif law == "clt":
        r = clt_test(sys_, h, p["x0"], n=p["n"] or 10_000, replicas=p["replicas"] or 10_000, seed=run.seed)
        run.table(
            "clt",
            ["ks_stat", "threshold", "passed", "verdict", "nu_hat", "sigma2_hat"],
            [(r.ks_stat, r.threshold, r.passed, r.verdict, r.nu_hat, r.sigma2_hat)],
        )
    else:
        r = lil_statistic(sys_, h, p["x0"], n_max=p["n"] or 1_000_000, seed=run.seed, replicas=p["replicas"] or 256)
        run.table("lil", ["replica", "stat"], list(enumerate(r.stats)))
        run.table(
            "lil_summary",
            ["median", "verdict", "nu_hat", "sigma2_hat"],
            [(r.median, r.verdict, r.nu_hat, r.sigma2_hat)],
        )
    return _finish(run, {"system": sys_.params(), "params": p})


def _cmd_lyapunov(args) -> int:
    config = _load_config(args.config, "lyapunov")
    p = _params(
        config,
        {
            "n": ("pint", 1000, None),
            "replicas": ("pint", 100, None),
            "x0": ("real", 0.5, None),
            "distortion": ("bool", False, None),
            "y": ("real", None, None),
        },
    )
    run = _Run("lyapunov", args, config)
    sys_ = _resolve_system(config)
    g = estimate_gamma(sys_, n=p["n"], replicas=p["replicas"], x0=p["x0"], seed=run.seed)
    run.table(
        "gamma",
        ["gamma_hat", "stderr", "one_step", "one_step_stderr", "consistent"],
        [(g.gamma_hat, g.stderr, g.one_step, g.one_step_stderr, g.consistent)],
    )
    if p["distortion"]:
        if sys_.space != INTERVAL and p["y"] is None:
            raise ConfigError("params.y: required for the distortion report on the circle")
        y = p["y"] if p["y"] is not None else min(1.0, p["x0"] + 0.25)
        d = distortion_report(sys_, p["x0"], y, n=p["n"], replicas=min(p["replicas"], 256), seed=run.seed)
        run.table(
            "distortion",
            ["delta", "omega"],
            list(zip(d.deltas, d.omega_grid)),
        )
        run.table(
            "distortion_summary",
            ["tempered", "rate", "final_max_ratio"],
            [(d.tempered, d.final_log_mean_ratio_rate, d.max_ratio_per_n[-1])],
        )
    return _finish(run, {"system": sys_.params(), "params": p})


def _cmd_ld(args) -> int:
    config = _load_config(args.config, "ld")
    p = _params(
        config,
        {
            "x0": ("real", 0.5, None),
            "y": ("real", None, None),
            "epsilons": ("list[preal]", None, None),
            "horizons": ("list[pint]", None, None),
            "replicas": ("pint", 100_000, None),
            "exact_budget": ("pint", None, None),
        },
    )
    run = _Run("ld", args, config)
    sys_ = _resolve_system(config)
    kv = dict(
        epsilons=p["epsilons"],
        horizons=None if p["horizons"] is None else tuple(p["horizons"]),
        replicas=p["replicas"],
        seed=run.seed,
    )
    if p["exact_budget"] is not None:
        kv["exact_budget"] = p["exact_budget"]
    if p["y"] is None:
        curve = ld_curve(sys_, x0=p["x0"], **kv)
    else:
        curve = sync_ld_curve(sys_, p["x0"], p["y"], **kv)
    run.blob("ld.csv", curve.to_csv().encode())
    flagged = [int(n) for n, f in zip(curve.horizons, curve.flagged_horizons) if f]
    run.table(
        "ld_summary",
        ["h_hat", "h_r2", "gamma_hat", "replicas", "max_censored_fraction", "gamma_gap", "flagged_horizons"],
        [
            (
                curve.h_hat,
                curve.h_r2,
                curve.gamma_hat,
                curve.replicas,
                float(curve.censored_fraction.max()),
                curve.gamma_gap,
                ";".join(str(n) for n in flagged) or "none",
            )
        ],
    )
    return _finish(run, {"system": sys_.params(), "params": p})


def _cmd_cocycle(args) -> int:
    config = _load_config(args.config, "cocycle")
    p = _params(
        config,
        {
            "mode": ("str", "spectrum", {"spectrum", "verify_lc"}),
            "n": ("pint", 2000, None),
            "replicas": ("pint", 100, None),
            "radius": ("preal", 1e-3, None),
        },
    )
    run = _Run("cocycle", args, config)
    c = _resolve_cocycle(config)
    if p["mode"] == "spectrum":
        e = estimate_spectrum(c, n=p["n"], replicas=p["replicas"], seed=run.seed)
        run.table("spectrum", ["index", "chi", "stderr"], [(i, x, s) for i, (x, s) in enumerate(zip(e.chis, e.stderr))])
        run.table(
            "spectrum_summary",
            ["gap_top", "q_lc", "n", "replicas", "expected_log_det_gap"],
            [(e.gap_top, e.q_lc, e.n, e.replicas, abs(float(e.chis.sum()) - c.expected_log_det()))],
        )
    else:
        v = verify_lc_rate(c, radius=p["radius"], n=p["n"], replicas=p["replicas"], seed=run.seed)
        run.table(
            "lc",
            ["fraction", "q_target", "radius", "n", "replicas"],
            [(v.fraction, v.q_target, v.radius, v.n, v.replicas)],
        )
    return _finish(run, {"cocycle": c.name or "inline", "params": p})


def _cmd_ulam(args) -> int:
    config = _load_config(args.config, "ulam")
    p = _params(
        config,
        {
            "k_cells": ("pint", 256, None),
            "kind": ("str", "transfer", {"transfer", "laplace"}),
            "export_matrix": ("bool", False, None),
            "m_eigs": ("pint", 6, None),
            "probe_decay": ("bool", False, None),
        },
    )
    run = _Run("ulam", args, config)
    sys_ = _resolve_system(config)
    op = build_transfer_ulam(sys_, p["k_cells"]) if p["kind"] == "transfer" else build_laplace_markov(sys_, p["k_cells"])
    le = leading_eigen(op)
    run.table("eigen", ["index", "weight"], list(enumerate(le.weights)))
    summary_header = ["k_cells", "kind", "size", "residual", "iterations", "converged"]
    summary_row = [p["k_cells"], p["kind"], op.size, le.residual, le.iterations, le.converged]
    gap = spectral_gap(op, m_eigs=p["m_eigs"])
    run.table("moduli", ["rank", "modulus"], list(enumerate(gap.moduli)))
    summary_header += ["gap", "gap_method"]
    summary_row += [gap.gap, gap.method]
    if p["probe_decay"]:
        dec = subleading_decay(op)
        summary_header.append("probe_decay_rate")
        summary_row.append(dec.rate)
    run.table("ulam_summary", summary_header, [tuple(summary_row)])
    if p["export_matrix"]:
        run.blob("operator_coo.txt", op.to_coo_text().encode())
    return _finish(run, {"system": sys_.params(), "params": p})


def _cmd_verify(args) -> int:
    config = _load_config(args.config, "verify")
    case = args.case if args.case is not None else config.get("case")
    threads = args.threads if args.threads is not None else config.get("threads", 1)
    out = args.out if args.out is not None else config.get("output")
    out_dir = Path(out) if out is not None else Path("rdsw_out") / "verify"
    ids = [case] if case is not None else list(case_ids())
    results = []
    for cid in ids:
        r = run_case(cid, threads=threads)
        results.append(r)
        print(f"{'PASS' if r.passed else 'FAIL'} {r.case_id:20s} {r.elapsed:8.2f}s  {r.summary}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        case_dir = out_dir / r.case_id
        case_dir.mkdir(parents=True, exist_ok=True)
        for name, data in r.files.items():
            (case_dir / name).write_bytes(data)
    lines = ["case,passed"] + [f"{r.case_id},{int(r.passed)}" for r in results]
    (out_dir / "report.csv").write_text("\n".join(lines) + "\n")
    n_pass = sum(r.passed for r in results)
    print(f"verify: {n_pass}/{len(results)} cases passed; artifacts in {out_dir}")
    return 0 if n_pass == len(results) else 1


def _cmd_gallery(args) -> int:
    print("systems:")
    for entry in gallery_facts():
        print(f"  {entry['id']}")
        print(f"    construction: {entry['system']}")
        print(f"    facts: {entry['facts']}")
    print("cocycles:")
    notes = {
        "diag_rot": "diag(2, 1/2) and the 45-degree rotation, p = (1/2, 1/2); "
        "sum of exponents exactly 0; top exponent 0.1707 (golden value)",
        "single_hyperbolic": "one triangular matrix [[2, 1], [0, 1/2]]; "
        "exponents exactly +/- log 2",
        "rotation_only": "one irrational rotation matrix; both exponents 0, "
        "no projective contraction (rate verification refuses)",
    }
    for cid in cocycle_gallery_ids():
        print(f"  {cid}")
        print(f"    facts: {notes[cid]}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdsw",
        description="Deterministic random-dynamical-systems experiments.",
        epilog="Config files are strict JSON; see the package README for schemas.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "stationary": (_cmd_stationary, "Estimate a stationary measure; write its atoms"),
        "sync": (_cmd_sync, "Pair-distance trace and rate fit, or averaged sync sums"),
        "limits": (_cmd_limits, "SLLN, variance, CLT, or LIL checks for an observable"),
        "lyapunov": (_cmd_lyapunov, "Fiber Lyapunov exponent, optional distortion report"),
        "ld": (_cmd_ld, "Large-deviation curve (orbit or pair-distance deviations)"),
        "cocycle": (_cmd_cocycle, "Matrix cocycle spectrum or local-contraction check"),
        "ulam": (_cmd_ulam, "Ulam transfer or Laplace-Markov operator and its spectrum"),
        "verify": (_cmd_verify, "Run the acceptance battery (all cases or --case ID)"),
        "gallery": (_cmd_gallery, "List built-in systems and cocycles with known facts"),
    }
    for name, (fn, help_text) in handlers.items():
        q = sub.add_parser(name, help=help_text)
        q.set_defaults(func=fn)
        if name == "gallery":
            continue
        q.add_argument("--config", default=None, help="JSON config file (strict schema)")
        q.add_argument("--seed", type=int, default=None, help="seed override (64-bit)")
        q.add_argument("--out", default=None, help="output directory")
        q.add_argument("--threads", type=int, default=None, help="worker threads (results are independent of this)")
        if name == "verify":
            q.add_argument("--case", default=None, help=f"one case id from: {', '.join(case_ids())}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BudgetExceededError, OverflowGuardError, RefusalError) as e:
        print(f"error [{type(e).__name__}]: {e}", file=sys.stderr)
        return 4
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as e:
        msg = e.args[0] if e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
