"""Command-line front end.

Subcommands map onto the named experiments (field, converge,
stencil-compare, invariant, exp-moment), direct solver runs (solve), and
report inspection/re-verification (report).  Options resolve in the order
command-line flag > ROUGHPDE_* environment variable > config file > built-in
default, and every run persists its materialized config next to its outputs.
"""

import argparse
import os
import sys

import numpy as np

from . import experiments as ex
from .gaussfield import FieldSpec, StationaryFieldSampler
from .grid import Grid
from .measures import build_drift, default_potentials
from .serial import read_json, save_array, write_csv, write_json
from .smoothmap import SmoothMap
from .solver import (BlowUp, MollifiedNoise, ProblemSpec, solve_fixed_point,
                     solve_stepping)

ENV_PREFIX = "ROUGHPDE_"

_SUBCOMMAND_KINDS = {
    "field": ("linear_covariance",),
    "converge": ("mollifier_convergence", "hyperviscosity_convergence"),
    "stencil-compare": ("stencil_compare", "area_shift"),
    "invariant": ("invariant_reversibility",),
    "exp-moment": ("exp_moment",),
}

_SOLVE_DEFAULTS = {
    "problem": "sine-transport",      # sine-transport | damped-heat | reversible-pair
    "m": 256,
    "n_modes": 127,
    "sigma": 1.0,
    "horizon": 0.25,
    "g_offset": 1.5,
    "moll_eps": 0.0,
    "method": "fixed_point",          # fixed_point | stepping
    "dt": 2.0 ** -10,
    "frames": 6,
}


def _env(name, cast=str):
    raw = os.environ.get(ENV_PREFIX + name)
    return None if raw is None else cast(raw)


def _pick(flag, env_name, file_value, fallback, cast=str):
    if flag is not None:
        return flag
    env = _env(env_name, cast)
    if env is not None:
        return env
    if file_value is not None:
        return file_value
    return fallback


def _load_config_file(args):
    path = _pick(args.config, "CONFIG", None, None)
    return read_json(path) if path else {}


def _experiment_config(args, allowed):
    data = _load_config_file(args)
    kind = getattr(args, "kind", None) or data.get("kind") or allowed[0]
    if kind not in allowed:
        raise ex.ConfigError(
            f"kind: {kind!r} not valid here (expected one of "
            f"{', '.join(allowed)})")
    data = dict(data)
    data["kind"] = kind
    data["seed"] = _pick(args.seed, "SEED", data.get("seed"), None, int)
    data["threads"] = _pick(args.threads, "THREADS",
                            data.get("threads"), 1, int)
    if data["seed"] is None:
        del data["seed"]
    return ex.ExperimentConfig.from_dict(data)


def _out_dir(args, default_name):
    return _pick(args.out, "OUT", None, os.path.join("runs", default_name))


def _cmd_experiment(args, command):
    allowed = _SUBCOMMAND_KINDS[command]
    config = _experiment_config(args, allowed)
    report = ex.run(config)
    out = _out_dir(args, config.kind)
    files = ex.emit(report, config, out)
    for line in report.summary_lines():
        print(line)
    print(f"wrote {len(files)} files under {out}")
    return 0 if report.passed else 1


def _solve_config(args):
    data = _load_config_file(args)
    cfg = dict(_SOLVE_DEFAULTS)
    for key, value in data.items():
        if key in ("seed", "threads"):
            continue
        if key not in cfg:
            raise ex.ConfigError(f"unknown key: {key}")
        cfg[key] = value
    cfg["seed"] = _pick(args.seed, "SEED", data.get("seed"), 0, int)
    return cfg


def _build_problem(cfg):
    m, horizon = cfg["m"], cfg["horizon"]
    grid = Grid(m)
    name = cfg["problem"]
    if name == "sine-transport":
        offset = cfg["g_offset"]
        g = SmoothMap.scalar_transport(lambda u: offset + np.sin(u),
                                       np.cos, lambda u: -np.sin(u))
        f = SmoothMap(lambda y, x: np.zeros(y.shape),
                      lambda y, x: np.zeros(y.shape + (1,)),
                      in_dim=1, out_shape=(1,), name="zero")
        u0 = np.sin(grid.nodes)[None, :]
    elif name == "damped-heat":
        f = SmoothMap.linear(np.array([[-1.0]]))
        g = SmoothMap(lambda y, x: np.zeros(y.shape[:-1] + (1, 1)),
                      lambda y, x: np.zeros(y.shape[:-1] + (1, 1, 1)),
                      in_dim=1, out_shape=(1, 1), name="zero")
        u0 = np.sin(grid.nodes)[None, :]
    elif name == "reversible-pair":
        f, g = build_drift(default_potentials())
        u0 = np.stack([np.sin(grid.nodes), np.cos(grid.nodes)])
    else:
        raise ex.ConfigError(f"problem: unknown preset {name!r}")
    return ProblemSpec(f, g, u0, horizon=horizon)


def _cmd_solve(args):
    cfg = _solve_config(args)
    spec = _build_problem(cfg)
    field = FieldSpec(dim=spec.dim, n_modes=cfg["n_modes"],
                      sigma=cfg["sigma"])
    noise = StationaryFieldSampler(field, horizon=max(1.0, cfg["horizon"]),
                                   seed=cfg["seed"])
    if cfg["moll_eps"] > 0:
        noise = MollifiedNoise(noise, cfg["moll_eps"])
    times = np.linspace(0.0, cfg["horizon"], cfg["frames"])
    out = _out_dir(args, "solve")
    os.makedirs(out, exist_ok=True)
    try:
        if cfg["method"] == "stepping":
            state = solve_stepping(spec, noise, cfg["dt"], times=times)
            contraction = float("nan")
        elif cfg["method"] == "fixed_point":
            state = solve_fixed_point(spec, noise, times=times)
            contraction = max(state.info["contraction"])
        else:
            raise ex.ConfigError(f"method: unknown {cfg['method']!r}")
    except BlowUp as blow:
        print(f"blow-up at t = {blow.time:.6g}: |v|_C1 = {blow.norm:.6g} "
              f"exceeded radius {blow.radius:.6g}", file=sys.stderr)
        return 1
    save_array(os.path.join(out, "frames.bin"), state.u)
    rows = [(float(t), float(c1), contraction, float(state.psi_bracket))
            for t, c1 in zip(state.times, state.v_c1)]
    write_csv(os.path.join(out, "diagnostics.csv"),
              ("time", "v_c1", "contraction", "psi_bracket"), rows)
    write_json(os.path.join(out, "manifest.json"), {
        "schema": ex.SCHEMA_VERSION, "config": cfg,
        "times": [float(t) for t in state.times],
        "grid_m": spec.grid.m, "dim": spec.dim,
        "arrays": {"frames": "frames.bin"},
        "info": {k: ex._jsonable(v) if not isinstance(v, (list, dict))
                 else v for k, v in state.info.items()
                 if k in ("method", "dt", "steps", "intervals")},
    })
    print(f"{cfg['problem']} ({cfg['method']}): {len(state.times)} frames, "
          f"max |v|_C1 = {float(max(state.v_c1)):.6g}, "
          f"noise bracket {float(state.psi_bracket):.6g}")
    print(f"wrote frames.bin, diagnostics.csv, manifest.json under {out}")
    return 0


def _cmd_report(args):
    out = _pick(args.out, "OUT", None, None)
    if out is None:
        print("report: --out DIR (or ROUGHPDE_OUT) is required",
              file=sys.stderr)
        return 2
    report = ex.read_report(out)
    for line in report.summary_lines():
        print(line)
    status = 0 if report.passed else 1
    if args.verify:
        config = ex.ExperimentConfig.load(os.path.join(out, "config.json"))
        fresh = ex.run(config)
        if fresh.canonical_dict() == report.canonical_dict():
            print("verify: re-run is bitwise identical")
        else:
            stored, redone = report.canonical_dict(), fresh.canonical_dict()
            diffs = [k for k in stored if stored[k] != redone.get(k)]
            print(f"verify: MISMATCH in {', '.join(diffs)}", file=sys.stderr)
            status = 1
    return status


def build_parser():
    parser = argparse.ArgumentParser(
        prog="roughpde",
        description="Rough-path driven SPDEs on the circle: experiments, "
                    "solver runs, and report verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="RNG seed override")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help="worker threads")
        return sp

    common(sub.add_parser(
        "field", help="stationary field covariance vs the closed form"))
    sp = common(sub.add_parser(
        "converge", help="solution convergence under regularized noise"))
    sp.add_argument("--kind", choices=_SUBCOMMAND_KINDS["converge"])
    sp = common(sub.add_parser(
        "stencil-compare",
        help="discretization sensitivity: stencil gaps / area shifts"))
    sp.add_argument("--kind", choices=_SUBCOMMAND_KINDS["stencil-compare"])
    common(sub.add_parser(
        "invariant", help="Gibbs sampling, invariance and reversibility"))
    common(sub.add_parser(
        "exp-moment", help="exponential moments under smoothed references"))
    common(sub.add_parser("solve", help="run one solve and store frames"))
    sp = common(sub.add_parser(
        "report", help="print a stored report; --verify re-runs its config"))
    sp.add_argument("--verify", action="store_true",
                    help="re-run the persisted config and compare")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command in _SUBCOMMAND_KINDS:
            return _cmd_experiment(args, args.command)
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_report(args)
    except ex.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
