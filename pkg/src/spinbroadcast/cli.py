"""Command-line experiment runner.

Usage::

    spinbroadcast run --scenario oracle_check --seed 7 --out results/
    spinbroadcast dfs_scan --config scan.json --check

A JSON config may set ``scenario``, ``seed``, ``output_path``, ``threads``,
``check`` and a scenario-specific ``inputs`` object; config values override
flags.  The output directory defaults to ``$SPINBROADCAST_OUT`` or ``.``.
Each run writes its data file(s) with deterministic contents plus
``<scenario>.meta.json`` holding the resolved config and a timestamp.

Exit codes: 0 success, 1 invariant violation (``--check``), 2 usage or
config error, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import datetime
import io
import json
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import factors, geometry, oracle, scenarios, stats, structure
from .model import CouplingMatrix, EnvSpin, Partition, RegisterLabel, make_partition

SCENARIOS = (
    "factors_sweep",
    "oracle_check",
    "lln_ensemble",
    "time_average",
    "dfs_scan",
    "geometry_gen",
    "sbs_bound_check",
)
OUT_ENV = "SPINBROADCAST_OUT"

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


CAP_ERRORS = (
    oracle.ResourceCapError,
    structure.PairCapError,
    geometry.SubsetSearchCapError,
    stats.DiscrepancyCapError,
)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file; its values override flags")
    p.add_argument("--seed", type=int, default=None, help="64-bit seed (default 0)")
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--t-max", type=float, default=None, dest="t_max")
    p.add_argument("--samples", type=int, default=None, help="ensemble size / number of configurations")
    p.add_argument("--check", action="store_true", help="exit 1 on any invariant violation")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinbroadcast", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a named scenario")
    run.add_argument("--scenario", choices=SCENARIOS)
    _add_common(run)
    for name in SCENARIOS:
        _add_common(sub.add_parser(name, help=f"run the {name} scenario"))
    return parser


def _load_config(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not text.strip():
        raise ConfigError(f"config {path} is empty")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - {"scenario", "seed", "output_path", "threads", "check", "inputs"}
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")
    if "inputs" in cfg and not isinstance(cfg["inputs"], dict):
        raise ConfigError(f"{path}: field 'inputs' must be an object")
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags and config into the fully resolved run description."""
    cfg = _load_config(args.config) if args.config else {}
    scenario = cfg.get("scenario") or (args.command if args.command != "run" else args.scenario)
    if scenario not in SCENARIOS:
        raise ConfigError(f"field 'scenario': expected one of {list(SCENARIOS)}, got {scenario!r}")
    if args.command not in ("run", scenario):
        raise ConfigError(f"config scenario {scenario!r} conflicts with subcommand {args.command!r}")
    seed = cfg.get("seed", args.seed if args.seed is not None else 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"field 'seed': expected a 64-bit unsigned integer, got {seed!r}")
    inputs = dict(cfg.get("inputs", {}))
    if args.t_max is not None:
        inputs.setdefault("t_max", args.t_max)
    if args.samples is not None:
        inputs.setdefault("samples", args.samples)
    out = cfg.get("output_path") or (str(args.out) if args.out else os.environ.get(OUT_ENV, "."))
    threads = cfg.get("threads", args.threads)
    return {
        "scenario": scenario,
        "seed": seed,
        "inputs": inputs,
        "output_path": out,
        "threads": threads,
        "check": bool(cfg.get("check", args.check)),
    }


def _get(inputs: dict, key: str, default, kind=None):
    if default is not None:
        inputs.setdefault(key, default)  # defaults end up in the recorded config
    value = inputs.get(key, default)
    if kind is not None:
        try:
            value = kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field 'inputs.{key}': {exc}") from exc
    return value


# --- scenarios: each returns {filename: text} and a list of violations ---


def _factors_sweep(cfg):
    inp = cfg["inputs"]
    rng = stats.member_rng(cfg["seed"], 0)
    if "spins" in inp:
        spins = [EnvSpin.from_dict(d) for d in inp["spins"]]
    else:
        spins = stats.sample_env_spins(rng, _get(inp, "n_spins", 6, int))
    omegas = np.asarray(inp["omegas"], dtype=float) if "omegas" in inp else rng.random(len(spins))
    kind = _get(inp, "kind", "overlap")
    t = np.linspace(0.0, _get(inp, "t_max", 10.0, float), _get(inp, "samples", 201, int))
    series = factors.factor_sweep(kind, spins, omegas, t)
    bad = []
    if cfg["check"]:
        mags = np.abs(series.values)
        if np.any(mags > 1 + 1e-12):
            bad.append("factor modulus exceeds 1")
        if abs(series.values[0] - 1) > 1e-12:
            bad.append("factor differs from 1 at t=0")
    return {"factors_sweep.csv": series.to_csv()}, bad


def _oracle_check(cfg):
    inp = cfg["inputs"]
    K, N = _get(inp, "K", 1, int), _get(inp, "N", 6, int)
    n_cfg = _get(inp, "samples", 10, int)
    times = np.linspace(0.0, _get(inp, "t_max", 10.0, float), _get(inp, "n_times", 20, int))
    worst = {"max_overlap_error": 0.0, "max_decoherence_error": 0.0, "max_block_error": 0.0}
    for c in range(n_cfg):
        setup = scenarios.random_setup(stats.member_rng(cfg["seed"], c), K, N)
        res = scenarios.oracle_equivalence(setup, times)
        worst = {k: max(worst[k], res[k]) for k in worst}
    report = {"K": K, "N": N, "configurations": n_cfg, "n_times": len(times), **worst}
    report["max_error"] = max(worst.values())
    bad = [f"closed form deviates from oracle by {report['max_error']:.3g}"] if report["max_error"] >= 1e-10 else []
    return {"oracle_check.json": json.dumps(report, indent=2, sort_keys=True) + "\n"}, bad if cfg["check"] else []


def _lln_ensemble(cfg):
    inp = cfg["inputs"]
    spec = stats.EnsembleSpec(
        _get(inp, "coupling_dist", "uniform01"),
        cfg["seed"],
        _get(inp, "low", 0.0, float),
        _get(inp, "high", 1.0, float),
        inp.get("moment2"),
    )
    if "t" in inp:
        t = np.atleast_1d(np.asarray(inp["t"], dtype=float))
    else:
        t = np.array([_get(inp, "t_max", 0.1, float)])
    rows = stats.run_lln_ensemble(
        spec,
        _get(inp, "N_mac", 1000, int),
        _get(inp, "N_dis", 1000, int),
        t,
        _get(inp, "samples", 1000, int),
        _get(inp, "regime", "short"),
        cfg["threads"],
    )
    bad = []
    if cfg["check"]:
        for r in rows:
            if r.log_B > -r.half_kappa_sum + 1e-12 or r.log_gamma_abs2 > -r.chi_sum + 1e-12:
                bad.append(f"logarithmic chain violated for member {r.member} at t={r.t}")
                break
    return {"lln_ensemble.csv": stats.ensemble_csv(rows)}, bad


def _time_average(cfg):
    inp = cfg["inputs"]
    T = _get(inp, "t_max", 2000.0, float)
    n_cfg = _get(inp, "samples", 5, int)
    lo, hi = _get(inp, "min_spins", 3, int), _get(inp, "max_spins", 5, int)
    buf = io.StringIO()
    buf.write("config,n_spins,closed_overlap_sq,numeric_overlap_sq,closed_gamma_sq,numeric_gamma_sq,remainder_bound\n")
    bad = []
    for c in range(n_cfg):
        rng = stats.member_rng(cfg["seed"], c)
        n = int(rng.integers(lo, hi + 1))
        spins, g, _ = scenarios.impartitionable_spins(rng, n, T)
        r = scenarios.time_average_case(spins, g, T, _get(inp, "steps", 200_000, int))
        buf.write(
            f"{c},{n},{r['closed_overlap_sq']:.17g},{r['numeric_overlap_sq']:.17g},"
            f"{r['closed_gamma_sq']:.17g},{r['numeric_gamma_sq']:.17g},{r['remainder_bound']:.17g}\n"
        )
        for a, b in (("numeric_overlap_sq", "closed_overlap_sq"), ("numeric_gamma_sq", "closed_gamma_sq")):
            if abs(r[a] / r[b] - 1) > 0.01:
                bad.append(f"config {c}: {a} off by more than 1%")
    return {"time_average.csv": buf.getvalue()}, bad if cfg["check"] else []


def _coupling_from_inputs(inp: dict, seed: int) -> CouplingMatrix:
    kind = _get(inp, "geometry", "cylindrical")
    if kind == "cylindrical":
        spec = geometry.CylinderSpec(
            _get(inp, "K", 7, int),
            _get(inp, "L", 1, int),
            _get(inp, "g0", 1.0, float),
            _get(inp, "r0", 100.0, float),
            _get(inp, "d0", 1.0, float),
            bool(inp.get("allow_wide", False)),
        )
        return geometry.cylindrical_coupling(spec, bool(inp.get("exact", False)))
    if kind == "collective":
        gs = inp.get("gs") or stats.member_rng(seed, 0).random(_get(inp, "N", 6, int)).tolist()
        return geometry.collective_coupling(_get(inp, "K", 2, int), gs)
    if kind == "saw_pulse":
        return geometry.saw_pulse_coupling(_get(inp, "K", 4, int), _get(inp, "N", 40, int), _get(inp, "sigma", 8.0, float))
    if kind == "random_cloud":
        cloud = geometry.CloudSpec(_get(inp, "g0", 1.0, float), _get(inp, "d0", 1.0, float), cutoff=inp.get("cutoff"))
        return geometry.random_cloud_coupling(_get(inp, "K", 3, int), _get(inp, "N", 10, int), cloud, stats.member_rng(seed, 0))
    if kind == "matrix":
        return CouplingMatrix(np.asarray(inp["entries"], dtype=float))
    raise ConfigError(f"field 'inputs.geometry': unknown geometry {kind!r}")


def _partition_from_inputs(inp: dict, N: int) -> Partition:
    if "macrofractions" in inp:
        return Partition.from_sets(N, inp["macrofractions"])
    if "mac_sizes" in inp:
        return make_partition(N, inp["mac_sizes"])
    return Partition(N, (tuple(range(N)),))


def _dfs_scan(cfg):
    inp = cfg["inputs"]
    G = _coupling_from_inputs(inp, cfg["seed"])
    part = _partition_from_inputs(inp, G.N)
    report = structure.scan_report(G, part, tol=_get(inp, "tol", structure.DEFAULT_TOL, float))
    bad = []
    if cfg["check"]:
        rng = stats.member_rng(cfg["seed"], 1)
        spins = stats.sample_env_spins(rng, G.N)
        times = 100 * rng.random(50)
        for e in report["pairs"]:
            e1, e2 = (RegisterLabel(tuple(1 if c == "+" else -1 for c in e[key])) for key in ("e1", "e2"))
            if "dfs" in e["found_by"]:
                g = [factors.pair_decoherence(G, part, spins, e1, e2, t) for t in times]
                if np.max(np.abs(np.array(g) - 1)) > 1e-10:
                    bad.append(f"DFS pair {e['e1']}/{e['e2']} decoheres")
            if "ofs" in e["found_by"]:
                for k in range(part.f_times_M):
                    b = [factors.pair_overlap(G, part, spins, e1, e2, k, t) for t in times]
                    if np.max(np.abs(np.array(b) - 1)) > 1e-10:
                        bad.append(f"OFS pair {e['e1']}/{e['e2']} orthogonalizes in macrofraction {k}")
    return {"dfs_scan.json": json.dumps(report, indent=2, sort_keys=True) + "\n"}, bad


def _geometry_gen(cfg):
    inp = cfg["inputs"]
    G = _coupling_from_inputs(inp, cfg["seed"])
    doc = {"type": "CouplingMatrix", "geometry": _get(inp, "geometry", "cylindrical"), **G.to_dict()}
    bad = []
    if cfg["check"] and doc["geometry"] == "saw_pulse":
        K, N, sigma = G.K, G.N, _get(inp, "sigma", 8.0, float)
        if sigma / 2 < N / K and geometry.rational_rank(geometry.saw_pulse_fractions(K, N, sigma)) != K:
            bad.append("saw-pulse matrix is not of full row rank")
    return {
        "geometry_gen.csv": G.to_csv(),
        "geometry_gen.json": json.dumps(doc, indent=2) + "\n",
    }, bad


def _sbs_bound_check(cfg):
    inp = cfg["inputs"]
    N = _get(inp, "N", 6, int)
    sizes = inp.get("mac_sizes", [2, 2])
    times = np.linspace(0.0, _get(inp, "t_max", 20.0, float), _get(inp, "n_times", 11, int))
    slack = _get(inp, "slack", 1e-9, float)
    buf = io.StringIO()
    buf.write("instance,t,distance,bound,within_bound\n")
    bad = []
    for c in range(_get(inp, "samples", 20, int)):
        setup = scenarios.random_setup(stats.member_rng(cfg["seed"], c), 1, N, make_partition(N, sizes))
        for r in scenarios.sbs_bound_rows(setup, times):
            ok = r["distance"] <= r["bound"] + slack
            buf.write(f"{c},{r['t']:.17g},{r['distance']:.17g},{r['bound']:.17g},{int(ok)}\n")
            if not ok:
                bad.append(f"instance {c} t={r['t']}: distance {r['distance']:.6g} > bound {r['bound']:.6g}")
    return {"sbs_bound_check.csv": buf.getvalue()}, bad if cfg["check"] else []


RUNNERS: dict[str, Callable] = {
    "factors_sweep": _factors_sweep,
    "oracle_check": _oracle_check,
    "lln_ensemble": _lln_ensemble,
    "time_average": _time_average,
    "dfs_scan": _dfs_scan,
    "geometry_gen": _geometry_gen,
    "sbs_bound_check": _sbs_bound_check,
}


def execute(cfg: dict) -> tuple[dict[str, str], list[str]]:
    """Run a resolved config; returns the file contents and any invariant violations."""
    try:
        return RUNNERS[cfg["scenario"]](cfg)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CAP_ERRORS):
            raise
        raise ConfigError(f"scenario {cfg['scenario']}: {exc}") from exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = resolve(args)
        files, violations = execute(cfg)
    except ConfigError as exc:
        print(f"spinbroadcast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CAP_ERRORS as exc:
        print(f"spinbroadcast: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    out = Path(cfg["output_path"])
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    meta = {
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg,
        "files": sorted(files),
        "violations": violations,
    }
    (out / f"{cfg['scenario']}.meta.json").write_text(json.dumps(meta, indent=2, default=str) + "\n")
    for v in violations:
        print(f"spinbroadcast: invariant violated: {v}", file=sys.stderr)
    if violations:
        return EXIT_INVARIANT
    print(f"{cfg['scenario']}: wrote {', '.join(sorted(files))} to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
