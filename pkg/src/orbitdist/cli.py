"""Command-line front end.

Usage::

    orbitdist <command> [--config PATH | --preset NAME] [--seed N] [--out PATH]
                        [--solver NAME] [--n N] [--tol X] [--csv PATH]

Precedence: built-in command defaults < preset < config file < flags.
Exit codes: 0 success, 1 probe or property failure (with a witness in the
report), 2 configuration error, 3 precision or solver exhaustion.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from .analysis import (AtomicSampler, LebesgueSampler, OrbitTailSampler, PointMassSampler,
                       ergodicity_probe, physical_probe, ta_continuity_scan,
                       unique_ergodicity_probe, wme_scan)
from .dynsys import PrecisionExhausted, SpacePoint, make_system, orbit_segment, random_point
from .estimator import (FAILS, LIMIT_TOL, MEMBERSHIP_TOL, OBSERVABLES, f_sequence_segments,
                        generic_probe, geometric_schedule, limit_estimate, nf_membership)
from .matching import SOLVERS, CostMatrix, SolverDidNotConverge, match_segments
from .reporting import SCHEMA_VERSION, csv_text, dumps, write_atomic
from .suites import SUITES

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_EXHAUSTED = 0, 1, 2, 3
COMMANDS = ("orbit", "fdist", "fseq", "scan-wme", "probe", "check-props", "bench")
PROBES = ("unique-ergodicity", "ergodicity", "physical", "generic", "ta-continuity")


class ConfigError(ValueError):
    pass


_COMMON = {"command": None, "system": {"family": "identity"}, "seed": 0, "solver": "auto",
           "out": None, "csv": None}

DEFAULTS = {
    "orbit": {"x": 0, "n": 16, "start_index": 1},
    "fdist": {"x": "random", "y": "random", "n": 1024, "exact_threshold": 512},
    "fseq": {"x": "random", "y": "random", "schedule": {"lo_exp": 6, "hi_exp": 12},
             "tail_fraction": 0.5, "limit_tol": LIMIT_TOL, "tol": MEMBERSHIP_TOL},
    "scan-wme": {"grid_size": 8, "deltas": [0.1, 0.05, 0.01, 0.001, 0.0001], "n": 2048,
                 "random_pairs": 0},
    "probe": {"probe": "unique-ergodicity", "schedule": {"lo_exp": 6, "hi_exp": 12},
              "tol": MEMBERSHIP_TOL, "limit_tol": LIMIT_TOL, "num_pairs": 20, "num_points": 40,
              "sampler": {"kind": "lebesgue"}, "mass_threshold": 0.05, "generic_tol": None,
              "observable": "coordinate", "grid_size": 8, "deltas": [0.1, 0.05, 0.01],
              "flag_tol": MEMBERSHIP_TOL, "x": "random"},
    "check-props": {"suites": list(SUITES), "suite_params": {}, "inject_fault": None},
    "bench": {"sizes_1d": [1 << k for k in range(6, 17)], "sizes_exact": [1 << k for k in range(6, 10)],
              "sizes_entropic": [64, 128, 256], "large_n": 1_000_000, "cyclic_scan_max": 4096,
              "backends": None},
}


def _system(family, param=None):
    s = {"family": family}
    if param is not None:
        s["param"] = param
    return s


_GEOM_6_12 = {"lo_exp": 6, "hi_exp": 12}

PRESETS = {
    "oracle": {"command": "check-props", "suites": ["oracle"]},
    "one-d": {"command": "check-props", "suites": ["one-d"]},
    "finite-identities": {"command": "check-props", "suites": ["symmetry-triangle"]},
    "shift-bound": {"command": "check-props", "suites": ["shift-bound"]},
    "partition-bound": {"command": "check-props", "suites": ["partition-bound"]},
    "corrupted-costs": {"command": "check-props", "suites": ["symmetry-triangle"],
                        "suite_params": {"symmetry-triangle": {"triples": 5,
                                                               "families": ["rotation"]}},
                        "inject_fault": {"kind": "cost-scale", "magnitude": 0.1}},
    "ue-rotation": {"command": "probe", "probe": "unique-ergodicity",
                    "system": _system("rotation", "golden"), "num_pairs": 20, "schedule": _GEOM_6_12},
    "ue-doubling": {"command": "probe", "probe": "unique-ergodicity",
                    "system": _system("doubling"), "num_pairs": 4, "schedule": _GEOM_6_12},
    "ue-identity": {"command": "probe", "probe": "unique-ergodicity",
                    "system": _system("identity"), "num_pairs": 4, "schedule": _GEOM_6_12},
    "wme-quad-circle": {"command": "scan-wme", "system": _system("quad-circle"), "n": 2048,
                        "random_pairs": 20},
    "wme-identity": {"command": "scan-wme", "system": _system("identity"), "n": 256,
                     "deltas": [0.1, 0.05, 0.01]},
    "wme-doubling": {"command": "scan-wme", "system": _system("doubling"), "n": 2048,
                     "grid_size": 4, "deltas": [0.1, 0.01, 0.001]},
    "ta-scan-quad-circle": {"command": "probe", "probe": "ta-continuity",
                            "system": _system("quad-circle"), "observable": "coordinate"},
    "ta-scan-doubling": {"command": "probe", "probe": "ta-continuity",
                         "system": _system("doubling"), "observable": "coordinate"},
    "ergodicity-two-atoms": {"command": "probe", "probe": "ergodicity",
                             "system": _system("identity"), "num_pairs": 400,
                             "sampler": {"kind": "atoms", "atoms": ["1/5", "7/10"]},
                             "schedule": [64, 128]},
    "ergodicity-doubling": {"command": "probe", "probe": "ergodicity",
                            "system": _system("doubling"), "num_pairs": 40,
                            "schedule": {"lo_exp": 9, "hi_exp": 14}},
    "physical-quad-circle": {"command": "probe", "probe": "physical",
                             "system": _system("quad-circle"), "num_points": 40},
    "fdist-rotation": {"command": "fdist", "system": _system("rotation", "golden"), "n": 4096},
    "bench": {"command": "bench"},
}


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = copy.deepcopy(v)
    return out


def resolve_config(command: str | None, preset: str | None = None, config: dict | None = None,
                   overrides: dict | None = None) -> dict:
    """Merge defaults, preset, config document and flag overrides; validate keys."""
    layers = []
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; see `orbitdist presets`")
        layers.append(PRESETS[preset])
    if config:
        layers.append(config)
    if overrides:
        layers.append({k: v for k, v in overrides.items() if v is not None})
    cmd = command or next((l["command"] for l in layers if l.get("command")), None)
    if cmd is None:
        raise ConfigError("no command given")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    for layer in layers:
        if layer.get("command") not in (None, cmd):
            raise ConfigError(f"config is for command {layer['command']!r}, not {cmd!r}")
    cfg = _deep_merge(_COMMON, DEFAULTS[cmd])
    for layer in layers:
        unknown = set(layer) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg = _deep_merge(cfg, layer)
    cfg["command"] = cmd
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    sysc = cfg["system"]
    if not isinstance(sysc, dict) or "family" not in sysc:
        raise ConfigError("system must be an object with a 'family' key")
    try:
        _make_spec(sysc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad system: {exc}") from None
    if cfg["solver"] not in SOLVERS:
        raise ConfigError(f"unknown solver {cfg['solver']!r}; choose from {list(SOLVERS)}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if "n" in cfg and (not isinstance(cfg["n"], int) or cfg["n"] < 1):
        raise ConfigError("n must be a positive integer")
    if cfg["command"] == "probe" and cfg["probe"] not in PROBES:
        raise ConfigError(f"unknown probe {cfg['probe']!r}; choose from {list(PROBES)}")
    if cfg["command"] == "check-props":
        bad = [s for s in cfg["suites"] if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown suites {bad}")
    if "schedule" in cfg:
        _schedule(cfg["schedule"])
    if cfg["command"] == "probe" and cfg["probe"] == "ta-continuity" and cfg["observable"] not in OBSERVABLES:
        raise ConfigError(f"unknown observable {cfg['observable']!r}")


def _make_spec(sysc: dict):
    extra = {k: v for k, v in sysc.items() if k not in ("family", "param")}
    return make_system(sysc["family"], sysc.get("param"), **extra)


def _schedule(obj) -> tuple[int, ...]:
    if isinstance(obj, dict):
        try:
            return geometric_schedule(int(obj["lo_exp"]), int(obj["hi_exp"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad schedule {obj!r}: {exc}") from None
    if isinstance(obj, list) and obj and all(isinstance(m, int) and m >= 1 for m in obj) \
            and list(obj) == sorted(set(obj)):
        return tuple(obj)
    raise ConfigError(f"bad schedule {obj!r}: need increasing positive integers or {{lo_exp, hi_exp}}")


def _point(spec, obj, rng, horizon) -> SpacePoint:
    if obj == "random":
        return random_point(spec, rng, horizon)
    try:
        return SpacePoint.from_json(obj)
    except (ValueError, TypeError, KeyError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad point {obj!r}: {exc}") from None


def _sampler(obj):
    kind = obj.get("kind") if isinstance(obj, dict) else None
    if kind == "lebesgue":
        return LebesgueSampler()
    if kind == "atoms":
        return AtomicSampler([SpacePoint.from_json(a) for a in obj["atoms"]], obj.get("weights"))
    if kind == "point":
        return PointMassSampler(SpacePoint.from_json(obj["point"]))
    if kind == "orbit-tail":
        return OrbitTailSampler(SpacePoint.from_json(obj["point"]), obj.get("burn_in", 1000),
                                obj.get("span", 4096))
    raise ConfigError(f"bad sampler {obj!r}")


# ---------------------------------------------------------------------------
# commands: each returns (results, exit_code, tables)
# ---------------------------------------------------------------------------

def cmd_orbit(cfg):
    spec = _make_spec(cfg["system"])
    rng = np.random.default_rng(cfg["seed"])
    x = _point(spec, cfg["x"], rng, cfg["n"] + cfg["start_index"])
    seg = orbit_segment(spec, x, cfg["n"], cfg["start_index"])
    rows = [(seg.start_index + j, float(c)) for j, c in enumerate(seg.coords)]
    results = {"base": x.to_json(), "start_index": seg.start_index, "length": seg.length,
               "precision_bits": seg.precision_bits, "error_bound": seg.error_bound}
    return results, EXIT_OK, ("orbit", rows)


def cmd_fdist(cfg):
    spec = _make_spec(cfg["system"])
    rng = np.random.default_rng(cfg["seed"])
    n = cfg["n"]
    x = _point(spec, cfg["x"], rng, n)
    y = _point(spec, cfg["y"], rng, n)
    ox, oy = orbit_segment(spec, x, n), orbit_segment(spec, y, n)
    res = match_segments(spec.space, ox, oy, cfg["solver"], cfg["exact_threshold"])
    results = {"x": x.to_json(), "y": y.to_json(), "n": n, "f_n": res.mean_cost,
               "total_cost": res.total_cost, "solver": res.solver,
               "certified_optimal": res.certified_optimal, "gap_bound": res.gap_bound,
               "status": res.status, "iterations": res.iterations,
               "orbit_error_bound": max(ox.error_bound, oy.error_bound)}
    return results, EXIT_OK, None


def cmd_fseq(cfg):
    spec = _make_spec(cfg["system"])
    rng = np.random.default_rng(cfg["seed"])
    schedule = _schedule(cfg["schedule"])
    H = schedule[-1]
    x = _point(spec, cfg["x"], rng, H)
    y = _point(spec, cfg["y"], rng, H)
    seq = f_sequence_segments(spec, orbit_segment(spec, x, H), orbit_segment(spec, y, H),
                              schedule, cfg["solver"])
    est = limit_estimate(seq, cfg["tail_fraction"], cfg["limit_tol"])
    verdict = nf_membership(spec, x, y, schedule, cfg["tol"], cfg["solver"],
                            limit_tol=cfg["limit_tol"], seq=seq)
    results = {"x": x.to_json(), "y": y.to_json(), "sequence": seq.to_dict(),
               "estimate": est.to_dict(), "membership": verdict.to_dict()}
    return results, EXIT_OK, None


def cmd_scan_wme(cfg):
    spec = _make_spec(cfg["system"])
    scan = wme_scan(spec, cfg["grid_size"], cfg["deltas"], cfg["n"], cfg["solver"], cfg["seed"])
    results = {"scan": scan.to_dict()}
    if cfg["random_pairs"]:
        rng = np.random.default_rng([cfg["seed"], 1])
        vals = []
        for _ in range(cfg["random_pairs"]):
            x, y = random_point(spec, rng, cfg["n"]), random_point(spec, rng, cfg["n"])
            vals.append(match_segments(spec.space, orbit_segment(spec, x, cfg["n"]),
                                       orbit_segment(spec, y, cfg["n"]), cfg["solver"]).mean_cost)
        results["random_pairs"] = {"count": len(vals), "max_f_n": max(vals), "values": vals}
    return results, EXIT_OK, ("wme", scan.rows())


def cmd_probe(cfg):
    spec = _make_spec(cfg["system"])
    kind = cfg["probe"]
    schedule = _schedule(cfg["schedule"])
    common = {"schedule": schedule, "tol": cfg["tol"], "seed": cfg["seed"]}
    if kind == "unique-ergodicity":
        v = unique_ergodicity_probe(spec, cfg["num_pairs"], solver=cfg["solver"],
                                    limit_tol=cfg["limit_tol"], **common)
        return {"probe": kind, "verdict": v.to_dict()}, EXIT_FAILURE if v.fails else EXIT_OK, None
    if kind == "ergodicity":
        r = ergodicity_probe(spec, _sampler(cfg["sampler"]), cfg["num_pairs"], solver=cfg["solver"],
                             limit_tol=cfg["limit_tol"], **common)
        return {"probe": kind, "report": r.to_dict()}, EXIT_OK if r.consistent else EXIT_FAILURE, None
    if kind == "physical":
        r = physical_probe(spec, _sampler(cfg["sampler"]), cfg["num_points"],
                           mass_threshold=cfg["mass_threshold"], solver=cfg["solver"],
                           limit_tol=cfg["limit_tol"], generic_tol=cfg["generic_tol"], **common)
        return {"probe": kind, "report": r.to_dict()}, EXIT_OK if r.consistent else EXIT_FAILURE, None
    if kind == "generic":
        rng = np.random.default_rng(cfg["seed"])
        x = _point(spec, cfg["x"], rng, schedule[-1])
        kw = {} if cfg["generic_tol"] is None else {"tol": cfg["generic_tol"]}
        v = generic_probe(spec, x, schedule=schedule, **kw)
        return ({"probe": kind, "x": x.to_json(), "verdict": v.to_dict()},
                EXIT_FAILURE if v.fails else EXIT_OK, None)
    scan = ta_continuity_scan(spec, OBSERVABLES[cfg["observable"]], cfg["grid_size"], cfg["deltas"],
                              schedule, cfg["seed"], cfg["flag_tol"])
    return ({"probe": kind, "scan": scan.to_dict()},
            EXIT_FAILURE if scan.discontinuity_flagged else EXIT_OK, None)


def _fault(spec_obj):
    if spec_obj is None:
        return None
    if spec_obj.get("kind") != "cost-scale":
        raise ConfigError(f"unknown fault {spec_obj!r}; supported: cost-scale")
    factor = 1.0 + float(spec_obj.get("magnitude", 0.1))
    # a corrupted builder need not respect the diameter, so the copy drops it
    return lambda C: CostMatrix(C.entries * factor)


def cmd_check_props(cfg):
    perturb = _fault(cfg["inject_fault"])
    out, code = [], EXIT_OK
    for name in cfg["suites"]:
        params = dict(cfg["suite_params"].get(name, {}))
        params.setdefault("seed", cfg["seed"])
        if perturb is not None and name == "symmetry-triangle":
            params["perturb"] = perturb
        try:
            res = SUITES[name](**params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for suite {name}: {exc}") from None
        out.append(res.to_dict())
        if not res.passed:
            code = EXIT_FAILURE
    violated = sorted({v for r in out for v in _violated_identities(r)})
    return {"suites": out, "violated_identities": violated}, code, None


def _violated_identities(r: dict):
    if r["passed"]:
        return []
    by = r.get("violations_by_identity")
    if by:
        return [k for k, c in by.items() if c]
    return [r["identity"]]


def cmd_bench(cfg):
    from .bench import run_bench
    rows = run_bench(cfg, seed=cfg["seed"])
    floors = {}
    for r in rows:
        if r["solver"] == "sorted" and r["n"] == cfg["large_n"]:
            floors["sorted_large_seconds"] = r["seconds"]
        if r["solver"] == "exact" and r["n"] == 512 and r["backend"] == "default":
            floors["exact_512_seconds"] = r["seconds"]
    ent = [r for r in rows if r["solver"] == "entropic"]
    results = {"rows": rows, "entropic_gap_within_bound": all(r["gap"] <= r["gap_bound"] + 1e-12 for r in ent),
               "floors": floors}
    table = [(r["solver"], r["backend"], r["n"], r["seconds"], r["mean_cost"], r["gap"], r["gap_bound"])
             for r in rows]
    return results, EXIT_OK, ("bench", table)


HANDLERS = {"orbit": cmd_orbit, "fdist": cmd_fdist, "fseq": cmd_fseq, "scan-wme": cmd_scan_wme,
            "probe": cmd_probe, "check-props": cmd_check_props, "bench": cmd_bench}


def run(cfg: dict) -> tuple[dict, int, tuple | None]:
    """Execute a resolved config; returns (report, exit code, table)."""
    t0 = time.perf_counter()
    results, code, table = HANDLERS[cfg["command"]](cfg)
    report = {"schema": SCHEMA_VERSION, "artifact_version": __version__, "command": cfg["command"],
              "config": cfg, "exit_code": code, "results": results,
              "wall_time": time.perf_counter() - t0}
    return report, code, table


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbitdist", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run config")
        s.add_argument("--preset", help="named built-in config")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="report path (CSV for orbit); stdout if omitted")
        s.add_argument("--csv", help="table path for scan-wme and bench")
        s.add_argument("--solver", choices=SOLVERS)
        s.add_argument("--n", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("--family", help="system family (shortcut for system.family)")
        s.add_argument("--param", help="system parameter, e.g. golden or 0.25")
        s.add_argument("--x", help="base point, e.g. 1/3")
        s.add_argument("--y", help="partner point")
        if name == "probe":
            s.add_argument("--probe", choices=PROBES)
    sub.add_parser("presets", help="list named presets")
    return p


def _param(text):
    if text is None or text == "golden":
        return text
    try:
        return str(Fraction(text))
    except ValueError:
        raise ConfigError(f"bad --param {text!r}") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "presets":
        for name, cfg in PRESETS.items():
            print(f"{name}\t{cfg['command']}")
        return EXIT_OK
    try:
        config = None
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    config = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            if not isinstance(config, dict):
                raise ConfigError("config must be a JSON object")
        overrides = {"seed": args.seed, "out": args.out, "csv": args.csv, "solver": args.solver,
                     "n": args.n, "tol": args.tol, "x": args.x, "y": args.y,
                     "probe": getattr(args, "probe", None)}
        base = {}
        if args.preset:
            base = PRESETS.get(args.preset, {})
        if config:
            base = _deep_merge(base, config)
        if args.family is not None or args.param is not None:
            system = dict(base.get("system", {"family": "identity"}))
            if args.family is not None:
                system = {"family": args.family}
            if args.param is not None:
                system["param"] = _param(args.param)
            overrides["system"] = system
        known = set(_COMMON) | set(DEFAULTS.get(args.command, {}))
        for key in [k for k, v in overrides.items() if v is not None and k not in known]:
            raise ConfigError(f"--{key} does not apply to {args.command}")
        cfg = resolve_config(args.command, args.preset, config, overrides)
        report, code, table = run(cfg)
    except ConfigError as exc:
        print(f"orbitdist: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrecisionExhausted, SolverDidNotConverge) as exc:
        print(f"orbitdist: resource exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED

    if cfg["command"] == "orbit":
        text = csv_text("orbit", table[1])
        _emit(cfg["out"], text)
        return code
    _emit(cfg["out"], dumps(report) + "\n")
    if table is not None and cfg["csv"]:
        write_atomic(cfg["csv"], csv_text(*table))
    if code == EXIT_FAILURE:
        print(f"orbitdist: {cfg['command']} reported a failure; witness in the report",
              file=sys.stderr)
    return code


def _emit(path, text):
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
