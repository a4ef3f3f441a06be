"""Named experiments behind the CLI: config schema with materialized
defaults, the dispatch table, log-log rate fitting, and report persistence.

Every experiment is fully determined by (kind, seed, params, thresholds);
re-running a persisted config reproduces the report bit for bit.  Wall-clock
and environment info live in a separate meta record so the canonical report
stays comparable across runs.
"""

import math
import time

import numpy as np
from scipy.stats import linregress

from .gaussfield import (FieldSpec, StationaryFieldSampler, covariance_exact,
                         evaluate_field_dense)
from .grid import Grid
from .measures import (GaussianReference, build_drift, default_potentials,
                       exp_moment_estimate, sample_mu_ensemble,
                       sine_potential, _evolve_ensemble)
from .rng import stream
from .serial import read_json, write_csv, write_json
from .smoothmap import SmoothMap
from .solver import (MollifiedNoise, ProblemSpec, classical_solve,
                     perturbation_response, solve_fixed_point)
from .norms import sup_norm

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    "linear_covariance",
    "mollifier_convergence",
    "hyperviscosity_convergence",
    "stencil_compare",
    "area_shift",
    "invariant_reversibility",
    "exp_moment",
)

_DEFAULTS = {
    "linear_covariance": {
        "seed": 21,
        "params": {"n_modes": 512, "n_samples": 10_000, "n_lags": 16,
                   "sigma": 1.0},
        "thresholds": {"max_abs_z": 3.0},
    },
    "mollifier_convergence": {
        "seed": 11,
        "params": {"m": 256, "n_modes": 127, "sigma": 1.0, "horizon": 0.25,
                   "g_offset": 1.5, "eps_list": [0.2, 0.1, 0.05]},
        "thresholds": {"shrink": 0.95},
    },
    "hyperviscosity_convergence": {
        "seed": 11,
        "params": {"m": 256, "n_modes": 127, "sigma": 1.0, "horizon": 0.25,
                   "g_offset": 1.5, "eps_list": [0.2, 0.1, 0.05]},
        "thresholds": {"shrink": 0.95},
    },
    "stencil_compare": {
        "seed": 17,
        "params": {"m_coarse": 8, "m_fine": 16, "dt_coarse": 2.0 ** -13,
                   "dt_fine": 2.0 ** -14, "n_modes": 127, "moll_eps": 0.05,
                   "sigma": 1.0, "horizon": 0.25, "g_offset": 1.5},
        "thresholds": {"min_self_ratio": 10.0, "refine_band": 0.3},
    },
    "area_shift": {
        "seed": 7,
        "params": {"m": 128, "n_modes": 31, "sigma": 0.5, "horizon": 0.3,
                   "shift_scale": 0.1, "times": [0.05, 0.25]},
        "thresholds": {"min_area": 0.1, "min_response": 1e-3},
    },
    "invariant_reversibility": {
        "seed": 4,
        "params": {"m": 128, "n_modes": 63, "ensemble": 512, "lag": 0.1,
                   "dt": 2.0 ** -8, "pcn_step": 0.8, "burn_in": 400,
                   "thin": 16, "checkpoints": [0.05, 0.1]},
        "thresholds": {"max_abs_z": 3.0},
    },
    "exp_moment": {
        "seed": 6,
        "params": {"m": 128, "n_modes": 63,
                   "eps_list": [0.2, 0.1, 0.05, 0.025],
                   "n_samples": 10_000, "window": "half", "n_boot": 200},
        "thresholds": {"max_ratio": 3.0},
    },
}

_TOP_KEYS = {"schema", "kind", "seed", "threads", "params", "thresholds"}


class ConfigError(ValueError):
    """Schema violation; the message names the offending key."""


class ExperimentConfig:
    """One experiment, fully materialized: defaults are merged in on
    construction so the persisted copy alone reproduces the run."""

    def __init__(self, kind, seed=None, threads=1, params=None,
                 thresholds=None):
        if kind not in _DEFAULTS:
            raise ConfigError(f"unknown experiment kind: {kind!r} "
                              f"(expected one of {', '.join(EXPERIMENT_KINDS)})")
        base = _DEFAULTS[kind]
        self.kind = kind
        self.seed = int(base["seed"] if seed is None else seed)
        self.threads = int(threads)
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        self.params = dict(base["params"])
        self.thresholds = dict(base["thresholds"])
        for section, overrides in (("params", params),
                                   ("thresholds", thresholds)):
            target = getattr(self, section)
            for key, value in (overrides or {}).items():
                if key not in target:
                    raise ConfigError(f"unknown key: {section}.{key}")
                target[key] = value

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown key: {sorted(unknown)[0]}")
        schema = data.get("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"schema: version {schema} not supported "
                              f"(this build reads {SCHEMA_VERSION})")
        if "kind" not in data:
            raise ConfigError("kind: required")
        return cls(data["kind"], seed=data.get("seed"),
                   threads=data.get("threads", 1),
                   params=data.get("params"),
                   thresholds=data.get("thresholds"))

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))

    def to_dict(self):
        return {"schema": SCHEMA_VERSION, "kind": self.kind,
                "seed": self.seed, "threads": self.threads,
                "params": dict(self.params),
                "thresholds": dict(self.thresholds)}


def fit_rate(pairs):
    """Least-squares slope of log(error) against log(parameter).

    Needs at least three pairs, all strictly positive; returns a dict with
    slope, intercept (in log space), and r2.
    """
    pts = [(float(x), float(y)) for x, y in pairs]
    if len(pts) < 3:
        raise ValueError(f"rate fit needs >= 3 pairs, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("rate fit needs positive parameters and errors")
    xs, ys = zip(*pts)
    fit = linregress(np.log(xs), np.log(ys))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "r2": float(fit.rvalue ** 2)}


class RunReport:
    """Tables, fitted rates, and pass/fail checks of one experiment run.

    tables: name -> {"columns": [...], "rows": [[...], ...]}
    rates:  name -> fit_rate dict
    checks: name -> {"passed": bool, "value": float, "threshold": float}
    meta (wall-clock etc.) is excluded from the canonical form.
    """

    def __init__(self, kind, seed, tables, rates, checks, meta=None):
        self.kind = kind
        self.seed = int(seed)
        self.tables = tables
        self.rates = rates
        self.checks = checks
        self.meta = dict(meta or {})

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def canonical_dict(self):
        return {"schema": SCHEMA_VERSION, "kind": self.kind,
                "seed": self.seed, "passed": self.passed,
                "tables": self.tables, "rates": self.rates,
                "checks": self.checks}

    @classmethod
    def from_dict(cls, data):
        report = cls(data["kind"], data["seed"], data["tables"],
                     data["rates"], data["checks"])
        return report

    def summary_lines(self):
        lines = [f"{self.kind} (seed {self.seed})"]
        for name, rate in sorted(self.rates.items()):
            lines.append(f"  rate {name}: slope {rate['slope']:+.3f} "
                         f"(r2 {rate['r2']:.4f})")
        for name, check in sorted(self.checks.items()):
            word = "PASS" if check["passed"] else "FAIL"
            lines.append(f"  {word} {name}: value {check['value']:.6g} "
                         f"vs threshold {check['threshold']:.6g}")
        lines.append(f"  overall: {'PASS' if self.passed else 'FAIL'}")
        return lines


def _check(value, threshold, ok):
    return {"passed": bool(ok), "value": float(value),
            "threshold": float(threshold)}


def _table(columns, rows):
    return {"columns": list(columns),
            "rows": [[_jsonable(v) for v in row] for row in rows]}


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return str(v)


# ---------------------------------------------------------------------------
# shared problem builders


def _zero_drift(dim=1):
    return SmoothMap(lambda y, x: np.zeros(y.shape),
                     lambda y, x: np.zeros(y.shape + (dim,)),
                     in_dim=dim, out_shape=(dim,), name="zero")


def _transport_problem(m, horizon, offset):
    """Scalar problem u0 = sin x with transport speed offset + sin u."""
    grid = Grid(m)
    g = SmoothMap.scalar_transport(lambda u: offset + np.sin(u), np.cos,
                                   lambda u: -np.sin(u))
    return ProblemSpec(_zero_drift(), g, np.sin(grid.nodes)[None, :],
                       horizon=horizon)


def _cross_transport():
    """g(u) = [[0, sin u1], [sin u2, 0]]: the off-diagonal dependence that
    exposes antisymmetric area perturbations to the solver."""
    def apply(y, x):
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 1] = np.sin(y[..., 0])
        out[..., 1, 0] = np.sin(y[..., 1])
        return out

    def jac(y, x):
        out = np.zeros(y.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 0] = np.cos(y[..., 0])
        out[..., 1, 0, 1] = np.cos(y[..., 1])
        return out

    return SmoothMap(apply, jac, in_dim=2, out_shape=(2, 2), name="cross")


def _ou_noise(n_modes, sigma, seed, dim=1, hyper_eps=0.0):
    spec = FieldSpec(dim=dim, n_modes=n_modes, sigma=sigma,
                     hyper_eps=hyper_eps)
    return StationaryFieldSampler(spec, horizon=1.0, seed=seed)


# ---------------------------------------------------------------------------
# runners


def _run_linear_covariance(config):
    p = config.params
    spec = FieldSpec(dim=1, n_modes=p["n_modes"], sigma=p["sigma"])
    rng = stream(config.seed)
    n = p["n_samples"]
    std = spec.mode_std()
    z = rng.standard_normal((n, spec.n_modes + 1, 2))
    coefs = z[..., 0] * std[:, 0] + 1j * z[..., 1] * std[:, 1]
    lags = np.pi * np.arange(p["n_lags"]) / p["n_lags"]
    vals = evaluate_field_dense(coefs, lags)          # (n, n_lags)
    prods = vals[:, :1] * vals
    emp = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(n)
    exact = covariance_exact(lags, sigma=p["sigma"])
    zs = (emp - exact) / se
    rows = [(float(lag), float(e), float(t), float(s), float(zv))
            for lag, e, t, s, zv in zip(lags, emp, exact, se, zs)]
    worst = float(np.max(np.abs(zs)))
    checks = {"covariance_z": _check(worst, config.thresholds["max_abs_z"],
                                     worst <= config.thresholds["max_abs_z"])}
    tables = {"covariance": _table(
        ("lag", "empirical", "exact", "se", "z"), rows)}
    return tables, {}, checks


def _mollified_family_gaps(config, make_noise):
    """Sup-norm gaps between the rough solution and solutions driven by a
    regularized family, one row per regularization level."""
    p = config.params
    spec = _transport_problem(p["m"], p["horizon"], p["g_offset"])
    base = _ou_noise(p["n_modes"], p["sigma"], config.seed)
    ref = solve_fixed_point(spec, base, times=[p["horizon"]])
    rows = []
    gaps = []
    for eps in p["eps_list"]:
        sol = solve_fixed_point(spec, make_noise(base, eps),
                                times=[p["horizon"]])
        gap = float(sup_norm(sol.u[-1] - ref.u[-1]))
        gaps.append(gap)
        rows.append((float(eps), gap))
    shrink = config.thresholds["shrink"]
    ratios = [b / a for a, b in zip(gaps, gaps[1:])]
    worst = max(ratios) if ratios else 0.0
    checks = {"monotone_shrink": _check(worst, shrink, worst < shrink)}
    rates = {"gap_vs_eps": fit_rate(zip(p["eps_list"], gaps))}
    tables = {"gaps": _table(("eps", "sup_gap"), rows)}
    return tables, rates, checks


def _run_mollifier(config):
    return _mollified_family_gaps(
        config, lambda base, eps: MollifiedNoise(base, eps))


def _run_hyperviscosity(config):
    p = config.params

    def make_noise(base, eps):
        # same seed => same underlying increments, only the mode rates move
        return _ou_noise(p["n_modes"], p["sigma"], config.seed,
                         hyper_eps=eps)

    return _mollified_family_gaps(config, make_noise)


def _run_stencil_compare(config):
    p = config.params
    horizon = p["horizon"]
    rows = []
    gaps = []
    for m, dt in ((p["m_coarse"], p["dt_coarse"]),
                  (p["m_fine"], p["dt_fine"])):
        spec = _transport_problem(m, horizon, p["g_offset"])
        noise = MollifiedNoise(_ou_noise(p["n_modes"], p["sigma"],
                                         config.seed), p["moll_eps"])
        sols = {st: classical_solve(spec, noise, dt, stencil=st,
                                    times=[horizon]).u[-1]
                for st in ("forward", "backward", "centered")}
        fine = classical_solve(spec, noise, dt / 2.0, stencil="forward",
                               times=[horizon]).u[-1]
        rough = solve_fixed_point(spec, noise, times=[horizon]).u[-1]
        gap = float(sup_norm(sols["forward"] - sols["backward"]))
        self_err = float(sup_norm(sols["forward"] - fine))
        cen_vs_rough = float(sup_norm(sols["centered"] - rough))
        gaps.append(gap)
        rows.append((int(m), float(dt), gap, self_err, gap / self_err,
                     cen_vs_rough))
    ratio = gaps[1] / gaps[0]
    t = config.thresholds
    checks = {
        "self_ratio_coarse": _check(rows[0][4], t["min_self_ratio"],
                                    rows[0][4] >= t["min_self_ratio"]),
        "self_ratio_fine": _check(rows[1][4], t["min_self_ratio"],
                                  rows[1][4] >= t["min_self_ratio"]),
        "gap_refinement_stable": _check(abs(ratio - 1.0), t["refine_band"],
                                        abs(ratio - 1.0) <= t["refine_band"]),
    }
    tables = {"stencil": _table(
        ("m", "dt", "fw_bw_gap", "self_error", "gap_over_self",
         "centered_vs_rough"), rows)}
    return tables, {}, checks


def _run_area_shift(config):
    p = config.params
    grid = Grid(p["m"])
    u0 = np.stack([np.sin(grid.nodes), np.cos(grid.nodes)])
    antisym = np.array([[0.0, 1.0], [-1.0, 0.0]])
    shift = p["shift_scale"] * grid.nodes[:, None, None] * antisym
    noise = _ou_noise(p["n_modes"], p["sigma"], config.seed, dim=2)
    f0 = _zero_drift(2)
    plain = ProblemSpec(f0, _cross_transport(), u0, horizon=p["horizon"])
    shifted = ProblemSpec(f0, _cross_transport(), u0, horizon=p["horizon"],
                          area_shift=shift)
    rep = perturbation_response(plain, noise, shifted, noise,
                                times=list(p["times"]))
    t = config.thresholds
    checks = {
        "level1_identical": _check(rep["level1"], 1e-12,
                                   rep["level1"] <= 1e-12),
        "area_moved": _check(rep["area"], t["min_area"],
                             rep["area"] >= t["min_area"]),
        "response_visible": _check(rep["delta_out"], t["min_response"],
                                   rep["delta_out"] >= t["min_response"]),
        "response_bounded": _check(rep["delta_out"], rep["delta_in"],
                                   rep["delta_out"] < rep["delta_in"]),
    }
    tables = {"response": _table(
        ("delta_in", "initial", "level1", "area", "delta_out"),
        [(rep["delta_in"], rep["initial"], rep["level1"], rep["area"],
          rep["delta_out"])])}
    return tables, {}, checks


def _probe_sin0(u):
    return float(np.mean(np.sin(u[0, :-1])))


def _probe_cos1(u):
    return float(np.mean(np.cos(u[1, :-1])))


def _probe_cross(u):
    return float(np.mean(u[0, :-1] * u[1, :-1]))


_PROBES = (("mean_sin_u1", _probe_sin0), ("mean_cos_u2", _probe_cos1),
           ("mean_u1_u2", _probe_cross))


def _run_invariant(config):
    p = config.params
    pair = default_potentials()
    grid = Grid(p["m"])
    ref = GaussianReference(grid, p["n_modes"], dim=2)
    members, acceptance, diag = sample_mu_ensemble(
        ref, pair, p["ensemble"], config.seed, pcn_step=p["pcn_step"],
        burn_in=p["burn_in"], thin=p["thin"])
    checkpoints = sorted(float(t) for t in p["checkpoints"])
    lag = float(p["lag"])
    if lag not in checkpoints:
        raise ConfigError("params.lag: must be one of params.checkpoints")
    f, g = build_drift(pair)
    finals, dropped = _evolve_ensemble(
        f, g, members, checkpoints, p["n_modes"], p["dt"], config.seed,
        config.threads, 0.45, 0.47)
    kept = sorted(finals)
    times = [0.0] + checkpoints
    max_z = config.thresholds["max_abs_z"]

    chain_rows = [(int(i), float(xi), int(okflag)) for i, (xi, okflag)
                  in enumerate(zip(diag["xi_trace"], diag["accept_trace"]))]
    tables = {"chain": _table(("step", "xi", "accepted"), chain_rows)}

    inv_rows = []
    checks = {}
    for name, probe in _PROBES:
        series = np.array([[probe(members[i].w) if t == 0
                            else probe(finals[i][t - 1]) for i in kept]
                           for t in range(len(times))])
        means = series.mean(axis=1)
        ses = series.std(axis=1, ddof=1) / math.sqrt(len(kept))
        for t, tv in enumerate(times):
            zv = (0.0 if t == 0 else
                  abs(means[t] - means[0]) / math.hypot(ses[t], ses[0]))
            inv_rows.append((name, float(tv), float(means[t]),
                             float(ses[t]), float(zv)))
        worst = max(abs(means[t] - means[0]) / math.hypot(ses[t], ses[0])
                    for t in range(1, len(times)))
        checks[f"invariance_{name}"] = _check(worst, max_z, worst <= max_z)
    tables["invariance"] = _table(
        ("probe", "time", "mean", "se", "z_vs_t0"), inv_rows)

    lag_idx = checkpoints.index(lag)
    a0 = np.array([_probe_sin0(members[i].w) for i in kept])
    b0 = np.array([_probe_cos1(members[i].w) for i in kept])
    at = np.array([_probe_sin0(finals[i][lag_idx]) for i in kept])
    bt = np.array([_probe_cos1(finals[i][lag_idx]) for i in kept])
    fw, bw = a0 * bt, b0 * at
    forward = math.fsum(fw) / len(kept)
    backward = math.fsum(bw) / len(kept)
    se = math.sqrt(fw.var(ddof=1) / len(kept) + bw.var(ddof=1) / len(kept))
    rev_z = abs(forward - backward) / se
    checks["reversibility"] = _check(rev_z, max_z, rev_z <= max_z)
    tables["reversibility"] = _table(
        ("lag", "forward", "backward", "difference", "se", "z"),
        [(lag, forward, backward, forward - backward, se, rev_z)])
    tables["sampler"] = _table(
        ("acceptance", "ess", "geweke_z", "members", "dropped"),
        [(float(acceptance), float(diag["ess"]), float(diag["geweke_z"]),
          len(kept), int(dropped))])
    return tables, {}, checks


def _run_exp_moment(config):
    p = config.params
    res = exp_moment_estimate(sine_potential(), p["eps_list"],
                              p["n_samples"], stream(config.seed),
                              grid=Grid(p["m"]), n_modes=p["n_modes"],
                              window=p["window"], n_boot=p["n_boot"])
    rows = [(r["eps"], r["estimate"], r["ci_low"], r["ci_high"])
            for r in res]
    ests = [r["estimate"] for r in res]
    ratio = max(ests) / min(ests)
    max_ratio = config.thresholds["max_ratio"]
    checks = {"bounded_ratio": _check(ratio, max_ratio, ratio <= max_ratio)}
    tables = {"moments": _table(
        ("eps", "estimate", "ci_low", "ci_high"), rows)}
    return tables, {}, checks


_RUNNERS = {
    "linear_covariance": _run_linear_covariance,
    "mollifier_convergence": _run_mollifier,
    "hyperviscosity_convergence": _run_hyperviscosity,
    "stencil_compare": _run_stencil_compare,
    "area_shift": _run_area_shift,
    "invariant_reversibility": _run_invariant,
    "exp_moment": _run_exp_moment,
}


def run(config):
    """Dispatch one experiment and return its RunReport."""
    started = time.time()
    tables, rates, checks = _RUNNERS[config.kind](config)
    meta = {"wall_clock_s": time.time() - started,
            "threads": config.threads}
    return RunReport(config.kind, config.seed, tables, rates, checks,
                     meta=meta)


def emit(report, config, out_dir):
    """Persist config, canonical report, meta, and one CSV per table.

    Returns the list of files written.  Table CSVs keep their column order;
    re-reading them recovers the table values exactly.
    """
    import os
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def _path(name):
        written.append(os.path.join(out_dir, name))
        return written[-1]

    write_json(_path("config.json"), config.to_dict())
    write_json(_path("report.json"), report.canonical_dict())
    write_json(_path("meta.json"), report.meta)
    for name in sorted(report.tables):
        table = report.tables[name]
        write_csv(_path(f"{name}.csv"), table["columns"], table["rows"])
    return written


def read_report(out_dir):
    """Load the canonical report persisted by emit."""
    import os
    data = read_json(os.path.join(out_dir, "report.json"))
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"report schema {data.get('schema')} not supported")
    return RunReport.from_dict(data)
