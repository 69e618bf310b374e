"""Command-line front end.

Every command reads one JSON config. Values are resolved in increasing
precedence: built-in defaults, the config file, ``--set key.path=value``
overrides, then dedicated flags such as ``--output`` or ``--seed``. The
resolved config is validated (unknown keys are errors) and written to the
output directory as ``config.resolved.json``.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from .artifact import load_artifact, save_artifact
from .closure import fadeout_check, integrate_forward
from .emulator import (CovEmulator, DesignSpace, ForwardRunner, MeanEmulator, build_emulators,
                       cross_validate, latin_hypercube)
from .exceptions import (CholeskyError, IntegrationError, InvalidArgumentError, OutOfDesignWarning,
                         UndefinedStatisticError, UnsupportedFormatError)
from .inference import MCMCConfig, ObservedData, discrepancy, gelman_rubin, run_mcmc
from .io import read_long_csv, write_json, write_long_csv, write_matrix_long, write_rows
from .lattice import Lattice, ParameterMap, build_grid_lattice, read_covariate_csv
from .ssa import gillespie_run, sample_observations

THREADS_ENV = "SPATIAL_SIR_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DEFAULTS = {
    "lattice": {"grid": {"rows": 5, "cols": 5, "population": 100000}},
    "model": {"beta": 0.043, "phi": 0.025, "eta": 0.019, "s0": 12, "y0": 100, "t0": 0.0},
    "times": {"start": 60, "stop": 140, "step": 1},
    "solver": {"rtol": 1e-6, "atol": 1e-6},
    "observation": {"p": 1.0, "nu": 3.2},
    "seeds": {"simulate": 1, "observe": 2, "design": 3, "cv": 4, "mcmc": 5},
    "design": {"ranges": {"beta": [0.0215, 0.0645], "phi": [0.0125, 0.0375]},
               "s0_candidates": [12], "K": 500},
    "emulator": {"J_s": 20, "J_t": 10, "L_s": 10, "L_t": 10,
                 "n_neighbors_mean": 10, "n_neighbors_cov": 10,
                 "zeta_mean": None, "zeta_cov": None, "cv_folds": 0,
                 "fadeout_slack": 0.0, "cache_dir": None},
    "mcmc": {"n_iter": 20000, "burn_in": 5000, "thin": 10, "n_chains": 1, "n_splines": 10,
             "mean_only": False, "update_s0": False, "prior_var": 1e6, "scale2": 0.25,
             "init": {}},
    "paths": {"output": "out", "design": None, "artifact": None, "observations": None,
              "fit_dir": None},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int0 = {"type": "integer", "minimum": 0}
_path = {"type": ["string", "null"]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


SCHEMA = _obj({
    "lattice": {
        "type": "object",
        "properties": {
            "grid": _obj({"rows": {"type": "integer", "minimum": 1},
                          "cols": {"type": "integer", "minimum": 1},
                          "population": _pos}, ["rows", "cols", "population"]),
            "file": {"type": "string"},
        },
        "additionalProperties": False,
        "minProperties": 1, "maxProperties": 1,
    },
    "covariate": _obj({"file": {"type": "string"}}, ["file"]),
    "model": _obj({"beta": _num, "beta0": _num, "beta1": _num, "phi": _num, "eta": _num,
                   "s0": _int0, "y0": {"type": "integer", "minimum": 1}, "t0": _num}),
    "times": _obj({"start": _num, "stop": _num, "step": _pos}, ["start", "stop", "step"]),
    "solver": _obj({"rtol": _pos, "atol": _pos}),
    "observation": _obj({"p": _pos, "nu": _num}),
    "seeds": _obj({k: _int0 for k in ("simulate", "observe", "design", "cv", "mcmc")}),
    "design": _obj({
        "ranges": {"type": "object",
                   "additionalProperties": {"type": "array", "items": _num,
                                            "minItems": 2, "maxItems": 2}},
        "s0_candidates": {"type": "array", "items": _int0, "minItems": 1},
        "K": {"type": "integer", "minimum": 2},
    }),
    "emulator": _obj({
        "J_s": {"type": "integer", "minimum": 1}, "J_t": {"type": "integer", "minimum": 1},
        "L_s": {"type": "integer", "minimum": 1}, "L_t": {"type": "integer", "minimum": 1},
        "n_neighbors_mean": {"type": "integer", "minimum": 1},
        "n_neighbors_cov": {"type": "integer", "minimum": 1},
        "zeta_mean": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "zeta_cov": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "cv_folds": {"type": "integer", "minimum": 0},
        "fadeout_slack": {"type": "number", "minimum": 0},
        "cache_dir": _path,
    }),
    "mcmc": _obj({
        "n_iter": _int0, "burn_in": _int0, "thin": {"type": "integer", "minimum": 1},
        "n_chains": {"type": "integer", "minimum": 1},
        "n_splines": {"type": "integer", "minimum": 1},
        "mean_only": {"type": "boolean"}, "update_s0": {"type": "boolean"},
        "prior_var": _pos, "scale2": _pos,
        "init": {"type": "object", "additionalProperties": _num},
    }),
    "paths": _obj({k: _path for k in ("output", "design", "artifact", "observations", "fit_dir")}),
})


class ConfigError(Exception):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("ranges", "init"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _apply_set(cfg, item):
    if "=" not in item:
        raise ConfigError(f"--set expects key.path=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a section")
    node[parts[-1]] = value


def resolve_config(path=None, sets=(), flags=None):
    """Merge defaults, config file, ``--set`` items and flag overrides, then validate."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        # a user-supplied model or lattice replaces the default one wholesale
        for section in ("lattice", "model"):
            if section in user:
                cfg[section] = {}
        cfg = _merge(cfg, user)
    for item in sets:
        _apply_set(cfg, item)
    for key, value in (flags or {}).items():
        if value is not None:
            _apply_set(cfg, f"{key}={json.dumps(value)}")
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


# ---------------------------------------------------------------------------
# config -> objects


def _lattice(cfg) -> Lattice:
    spec = cfg["lattice"]
    if "file" in spec:
        return Lattice.from_json(spec["file"])
    g = spec["grid"]
    return build_grid_lattice(g["rows"], g["cols"], g["population"])


def _covariate(cfg, lattice):
    if "covariate" not in cfg:
        return None
    return read_covariate_csv(cfg["covariate"]["file"], lattice.n_sites)


def _times(cfg):
    t = cfg["times"]
    n = int(round((t["stop"] - t["start"]) / t["step"])) + 1
    if n < 2:
        raise ConfigError("times must hold at least two points")
    return t["start"] + t["step"] * np.arange(n)


def _param_map(cfg, lattice):
    m = cfg["model"]
    if "eta" not in m:
        raise ConfigError("model.eta is required")
    return ParameterMap(eta=m["eta"], y0=m.get("y0", 1), t0=m.get("t0", 0.0),
                        covariate=_covariate(cfg, lattice))


def _model_coords(cfg, pm: ParameterMap):
    m = cfg["model"]
    missing = [n for n in pm.names if n not in m]
    if missing:
        raise ConfigError(f"model is missing {missing}")
    if "s0" not in m:
        raise ConfigError("model.s0 is required")
    return np.array([m[n] for n in pm.names], dtype=float), int(m["s0"])


def _theta(cfg, lattice):
    pm = _param_map(cfg, lattice)
    coords, s0 = _model_coords(cfg, pm)
    return pm.to_theta(coords, s0).for_lattice(lattice), pm


def _design_space(cfg, pm):
    d = cfg["design"]
    if set(d["ranges"]) != set(pm.names):
        raise ConfigError(f"design.ranges must cover exactly {list(pm.names)}")
    return DesignSpace(pm.names, [d["ranges"][n][0] for n in pm.names],
                       [d["ranges"][n][1] for n in pm.names], d["s0_candidates"])


def _outdir(cfg):
    out = Path(cfg["paths"]["output"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.resolved.json", cfg)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg):
    lattice = _lattice(cfg)
    theta, _ = _theta(cfg, lattice)
    times = _times(cfg)
    if times[0] < theta.t0:
        raise ConfigError("times start before the outbreak")
    out = _outdir(cfg)
    seeds = cfg["seeds"]
    traj = gillespie_run(theta, lattice, None, float(times[-1]), times, seeds["simulate"])
    write_long_csv(out / "trajectory_x.csv", traj.x, times, "x")
    write_long_csv(out / "trajectory_y.csv", traj.y, times, "y")
    obs_cfg = cfg["observation"]
    obs = sample_observations(traj, obs_cfg["p"], obs_cfg["nu"], seeds["observe"])
    write_long_csv(out / "observations.csv", obs.counts, obs.times, "count")
    write_json(out / "metadata.json", {
        "seeds": {"simulate": seeds["simulate"], "observe": seeds["observe"]},
        "n_sites": lattice.n_sites, "n_times": len(times),
        "observation_shape": list(obs.counts.shape), "p": obs.p, "nu": obs.nu,
    })
    print(f"simulated {lattice.n_sites} sites over {len(times)} times; "
          f"observations {obs.counts.shape[0]}x{obs.counts.shape[1]} -> {out}")


def cmd_moments(cfg):
    lattice = _lattice(cfg)
    theta, _ = _theta(cfg, lattice)
    times = _times(cfg)
    out = _outdir(cfg)
    tr = integrate_forward(theta, lattice, times, rtol=cfg["solver"]["rtol"],
                           atol=cfg["solver"]["atol"])
    write_long_csv(out / "mu_x.csv", tr.mu_x, times, "mu_x")
    write_long_csv(out / "mu_y.csv", tr.mu_y, times, "mu_y")
    write_matrix_long(out / "sigma_xx.csv", tr.s_xx, times)
    write_matrix_long(out / "sigma_xy.csv", tr.s_xy, times)
    write_matrix_long(out / "sigma_yy.csv", tr.s_yy, times)
    rep = fadeout_check(tr)
    verdict = {"verdict": "pass" if rep.passed else "fail", "site": rep.site, "time": rep.time,
               "psd_violation_times": [float(times[j]) for j in tr.psd_violations()]}
    write_json(out / "fadeout.json", verdict)
    if rep.passed:
        print("fadeout check: pass")
    else:
        print(f"fadeout check: fail at site {rep.site}, time {rep.time:g}")


def _write_design(path, X, names):
    write_rows(path, [*names, "s0"], [[*row[:-1], int(row[-1])] for row in X])


def _read_design(path, names):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != [*names, "s0"]:
            raise ConfigError(f"design file columns {header} do not match {[*names, 's0']}")
        return np.array([[float(v) for v in row] for row in reader])


def cmd_design(cfg):
    lattice = _lattice(cfg)
    pm = _param_map(cfg, lattice)
    space = _design_space(cfg, pm)
    out = _outdir(cfg)
    X = latin_hypercube(space, cfg["design"]["K"], cfg["seeds"]["design"])
    _write_design(out / "design.csv", X, pm.names)
    print(f"wrote {len(X)} design points -> {out / 'design.csv'}")


def cmd_build_emulator(cfg):
    lattice = _lattice(cfg)
    pm = _param_map(cfg, lattice)
    space = _design_space(cfg, pm)
    out = _outdir(cfg)
    if cfg["paths"]["design"]:
        X = _read_design(cfg["paths"]["design"], pm.names)
    else:
        X = latin_hypercube(space, cfg["design"]["K"], cfg["seeds"]["design"])
        _write_design(out / "design.csv", X, pm.names)
    e = cfg["emulator"]
    times = _times(cfg)
    runner = ForwardRunner(lattice, pm, times, cfg["solver"]["rtol"], cfg["solver"]["atol"],
                           cache_dir=e["cache_dir"])
    mean_params = dict(n_spatial=e["J_s"], n_temporal=e["J_t"], n_neighbors=e["n_neighbors_mean"],
                       length_scale=e["zeta_mean"], space=space)
    cov_params = dict(n_spatial=e["L_s"], n_temporal=e["L_t"], n_neighbors=e["n_neighbors_cov"],
                      length_scale=e["zeta_cov"], space=space)
    mean, cov = MeanEmulator(**mean_params), CovEmulator(**cov_params)
    keep = build_emulators(X, mean=mean, cov=cov, runner=runner, fadeout_slack=e["fadeout_slack"])
    artifact = Path(cfg["paths"]["artifact"] or out / "emulator.mcem")
    save_artifact(artifact, mean, cov)
    report = {
        "K": len(X), "K_used": int(len(keep)),
        "excluded": mean.excluded_.tolist(),
        "variance_explained": {"mean": mean.variance_explained_, "cov": cov.variance_explained_},
        "jitter_events": cov.jitter_events_,
        "zeta": {"mean": mean.length_scale_, "cov": cov.length_scale_},
        "artifact": str(artifact),
    }
    if mean.excluded_.size:
        print(f"excluded {len(mean.excluded_)} design points that failed the fadeout check")
    if e["cv_folds"] >= 2:
        folds = cross_validate(X[keep], runner, mean_params, cov_params, e["cv_folds"],
                               cfg["seeds"]["cv"])
        report["cv"] = [f.as_dict() for f in folds]
        write_rows(out / "cv.csv", ["fold", "design_index", "mean_rel_error", "cov_rel_error"],
                   [(f.fold, k, f.mean_rel_errors[k], f.cov_rel_errors[k])
                    for f in folds for k in range(len(f.mean_rel_errors))])
    write_json(out / "build_report.json", report)
    print(f"variance explained: mean {mean.variance_explained_:.6f}, "
          f"cov {cov.variance_explained_:.6f}; artifact -> {artifact}")


def _need(cfg, key):
    value = cfg["paths"][key]
    if not value:
        raise ConfigError(f"paths.{key} is required for this command")
    return value


def cmd_predict(cfg):
    mean, cov = load_artifact(_need(cfg, "artifact"))
    lattice = _lattice(cfg)
    pm = _param_map(cfg, lattice)
    coords, s0 = _model_coords(cfg, pm)
    x = np.append(coords, s0)
    out = _outdir(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OutOfDesignWarning)
        mu = mean.predict_one(x)
        phi = cov.predict_factor(x)
    times = mean.times_ if mean.times_ is not None else np.arange(mu.shape[1])
    sigma = np.einsum("tia,tja->ijt", phi, phi)
    write_long_csv(out / "mu_x.csv", mu, times, "mu_x")
    write_matrix_long(out / "sigma_xx.csv", sigma, times)
    write_json(out / "predict.json", {"coords": coords, "s0": s0,
                                      "in_design": bool(mean.in_design(x))})
    if caught:
        print("warning: query lies outside the emulator design box")
    print(f"predicted moments for {dict(zip(pm.names, coords.tolist()))}, s0={s0} -> {out}")


def _fit_one(data, mean, cov, init, mc, seed):
    cfg = MCMCConfig(n_iter=mc["n_iter"], burn_in=mc["burn_in"], thin=mc["thin"], seed=seed,
                     n_splines=mc["n_splines"], mean_only=mc["mean_only"],
                     update_s0=mc["update_s0"], prior_var=mc["prior_var"], scale2=mc["scale2"])
    return run_mcmc(data, mean, cov, init, cfg)


def cmd_fit(cfg):
    mean, cov = load_artifact(_need(cfg, "artifact"))
    counts, times = read_long_csv(_need(cfg, "observations"))
    data = ObservedData(counts, times, cfg["observation"]["p"])
    mc = cfg["mcmc"]
    space = mean.space_
    init_cfg = dict(mc["init"])
    unknown = set(init_cfg) - set(space.names) - {"nu", "s0"}
    if unknown:
        raise ConfigError(f"mcmc.init has unknown entries {sorted(unknown)}")
    mid = 0.5 * (space.lower + space.upper)
    init = {"coords": [init_cfg.get(n, mid[j]) for j, n in enumerate(space.names)],
            "s0": int(init_cfg.get("s0", cfg["model"].get("s0", space.s0_candidates[0]))),
            "nu": init_cfg.get("nu", 3.0)}
    out = _outdir(cfg)
    results = [_fit_one(data, mean, cov, init, mc, cfg["seeds"]["mcmc"] + c)
               for c in range(mc["n_chains"])]
    params = (*results[0].names, "nu", "s0")
    for c, res in enumerate(results):
        prefix = "chain" if len(results) == 1 else f"chain{c}"
        for name in params:
            write_rows(out / f"{prefix}_{name}.csv", ["iteration", "value"],
                       zip(res.iterations, res.samples[name]))
        if "a" in res.samples:
            a = res.samples["a"]
            write_rows(out / f"{prefix}_alpha.csv", ["iteration", "l", "j", "value"],
                       ((it, l, j, a[r, l, j]) for r, it in enumerate(res.iterations)
                        for l in range(a.shape[1]) for j in range(a.shape[2])))
    # pool chains for the summary
    pooled = {n: np.concatenate([r.posterior(n) for r in results]) for n in params}
    summary = {"parameters": {}, "acceptance": [r.acceptance for r in results],
               "out_of_design": [r.out_of_design for r in results],
               "n_chains": len(results), "mean_only": mc["mean_only"]}
    for n in params:
        d = pooled[n]
        lo, hi = np.percentile(d, [2.5, 97.5])
        entry = {"mean": float(d.mean()), "lower": float(lo), "upper": float(hi),
                 "formatted": f"{d.mean():.4g} ({lo:.4g}, {hi:.4g})"}
        if len(results) > 1 and n != "s0":
            lengths = {len(r.posterior(n)) for r in results}
            if lengths.pop() >= 2:
                entry["rhat"] = gelman_rubin([r.posterior(n) for r in results])
        summary["parameters"][n] = entry
    fitted = np.mean([r.fitted_lambda for r in results], axis=0)
    latent = np.mean([r.latent_mean for r in results], axis=0)
    try:
        disc = discrepancy(counts, fitted)
        summary["discrepancy"] = disc.tolist()
    except UndefinedStatisticError as exc:
        summary["discrepancy"] = None
        summary["discrepancy_error"] = str(exc)
    write_json(out / "summary.json", summary)
    write_rows(out / "fitted.csv", ["site", "time", "observed", "fitted"],
               ((s, times[j], counts[s, j], fitted[s, j])
                for s in range(counts.shape[0]) for j in range(counts.shape[1])))
    lat_times = mean.times_ if mean.times_ is not None else np.arange(latent.shape[1])
    write_long_csv(out / "latent_x.csv", latent, lat_times, "x")
    for n in results[0].names + ("nu",):
        print(f"{n}: {summary['parameters'][n]['formatted']}")


def cmd_diagnose(cfg):
    fit_dir = Path(_need(cfg, "fit_dir"))
    fitted_path = fit_dir / "fitted.csv"
    if not fitted_path.exists():
        raise FileNotFoundError(f"{fitted_path} not found; run fit first")
    sites, obs, fit = [], {}, {}
    with open(fitted_path, newline="") as fh:
        try:
            for row in csv.DictReader(fh):
                s = int(row["site"])
                obs.setdefault(s, []).append(float(row["observed"]))
                fit.setdefault(s, []).append(float(row["fitted"]))
        except (KeyError, TypeError, ValueError):
            raise UnsupportedFormatError(f"{fitted_path}: expected site,time,observed,fitted") from None
    sites = sorted(obs)
    out = _outdir(cfg)
    y = np.array([obs[s] for s in sites])
    lam = np.array([fit[s] for s in sites])
    norms = np.linalg.norm(y, axis=1)
    rows = []
    for i, s in enumerate(sites):
        if norms[i] == 0:
            rows.append((s, "nan"))
        else:
            rows.append((s, float(discrepancy(y[i:i + 1], lam[i:i + 1])[0])))
    write_rows(out / "discrepancy.csv", ["site", "discrepancy"], rows)
    n_traces = 0
    for path in sorted(fit_dir.glob("chain*_*.csv")):
        name = path.stem
        if name.endswith("_alpha"):
            continue
        with open(path, newline="") as fh:
            data = [(int(float(r["iteration"])), float(r["value"])) for r in csv.DictReader(fh)]
        if not data:
            continue
        it, v = map(np.array, zip(*data))
        running = np.cumsum(v) / np.arange(1, len(v) + 1)
        write_rows(out / f"trace_{name.split('_', 1)[1]}{_chain_suffix(name)}.csv",
                   ["iteration", "value", "running_mean"], zip(it, v, running))
        n_traces += 1
    print(f"discrepancy for {len(sites)} sites, {n_traces} trace files -> {out}")


def _chain_suffix(stem):
    prefix = stem.split("_", 1)[0]
    return "" if prefix == "chain" else "_" + prefix[len("chain"):]


COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "design": cmd_design,
    "build-emulator": cmd_build_emulator,
    "predict": cmd_predict,
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="spatial-sir", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="JSON config file (defaults are used if omitted)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. model.beta=0.05")
        p.add_argument("-o", "--output", help="output directory (paths.output)")
        p.add_argument("--threads", type=int,
                       help=f"worker cap for numeric libraries (default ${THREADS_ENV})")
        if name in ("simulate", "design", "fit"):
            p.add_argument("--seed", type=int, help="seed for this command's random stream")
        if name in ("predict", "fit"):
            p.add_argument("--artifact", help="emulator artifact (paths.artifact)")
        if name == "fit":
            p.add_argument("--observations", help="observation CSV (paths.observations)")
            p.add_argument("--iters", type=int, help="MCMC iterations (mcmc.n_iter)")
            p.add_argument("--mean-only", action="store_true", default=None,
                           help="fit the mean-only model")
        if name == "diagnose":
            p.add_argument("--fit-dir", help="directory written by fit (paths.fit_dir)")
    return parser


_SEED_KEY = {"simulate": "seeds.simulate", "design": "seeds.design", "fit": "seeds.mcmc"}


def _flag_overrides(args):
    flags = {"paths.output": args.output}
    if getattr(args, "seed", None) is not None:
        flags[_SEED_KEY[args.command]] = args.seed
    for attr, key in (("artifact", "paths.artifact"), ("observations", "paths.observations"),
                      ("iters", "mcmc.n_iter"), ("mean_only", "mcmc.mean_only"),
                      ("fit_dir", "paths.fit_dir")):
        flags[key] = getattr(args, attr, None)
    return flags


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.set, _flag_overrides(args))
        threads = _threads(args)
        with threadpool_limits(limits=threads):
            COMMANDS[args.command](cfg)
    except (ConfigError, InvalidArgumentError, UnsupportedFormatError) as exc:
        kind = "format" if isinstance(exc, UnsupportedFormatError) else "config"
        print(f"error ({kind}): {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, UnsupportedFormatError) else EXIT_CONFIG
    except (IntegrationError, CholeskyError, UndefinedStatisticError, np.linalg.LinAlgError) as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
