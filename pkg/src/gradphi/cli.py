"""Command-line experiment runner.

Usage:
    gradphi run <config.ini> [section.key=value ...]
    gradphi plan <config.ini> [section.key=value ...]

Configs are flat INI key-value files, one experiment per file; any value
can be overridden on the command line as ``section.key=value``.  Outputs
(results.csv, results.json) are deterministic for a fixed (config, seed,
workers=1); manifest.json additionally records the wall time and is
written last.  Exit codes: 0 success, 1 runtime failure, 2 invalid
config.  The environment variable GRADPHI_OUTPUT_ROOT sets the default
root for relative output directories.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time

import numpy as np

from . import couplings as cpl
from . import diagnostics as diag
from . import dynamics as dyn
from . import exact_gaussian
from . import hs
from . import observables as obs
from . import potentials
from . import reporting
from . import solvers

KINDS = ("sample", "surface-tension", "hessian", "diffusivity", "couple",
         "verify", "subadditivity", "clt", "decay")


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


# ---------------------------------------------------------------------------
# config parsing


def parse_config(path: str, overrides=()) -> dict:
    """Read an INI config into a flat {"section.key": str} mapping and
    apply ``section.key=value`` overrides."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    cfg = {}
    for sec in cp.sections():
        for key, val in cp.items(sec):
            cfg[f"{sec}.{key}"] = val
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not of the form key=value")
        key, val = ov.split("=", 1)
        if "." not in key:
            raise ConfigError(f"override key {key!r} must be section.key")
        cfg[key.strip()] = val.strip()
    return cfg


def _get(cfg, key, cast=str, default=None, required=False):
    if key not in cfg or cfg[key] == "":
        if required:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        if cast is bool:
            return cfg[key].strip().lower() in ("1", "true", "yes", "on")
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from exc


def _get_floats(cfg, key, default=None):
    raw = _get(cfg, key)
    if raw is None:
        return default
    try:
        return np.array([float(t) for t in raw.replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def _get_ints(cfg, key, default=None):
    vals = _get_floats(cfg, key)
    if vals is None:
        return default
    out = [int(round(v)) for v in vals]
    if any(abs(v - w) > 1e-9 for v, w in zip(vals, out)):
        raise ConfigError(f"{key!r} must be a list of integers")
    return out


def make_potential(cfg) -> potentials.Potential:
    name = _get(cfg, "potential.name", required=True)
    param = _get(cfg, "potential.param", float, required=True)
    if name == "quadratic":
        return potentials.quadratic(param)
    if name == "logcosh_perturbed":
        return potentials.logcosh_perturbed(param)
    raise ConfigError(f"unknown potential {name!r}")


def experiment_params(cfg) -> dict:
    """Validate the shared keys and return the decoded parameters."""
    kind = _get(cfg, "experiment.kind", required=True)
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; "
                          f"choose from {', '.join(KINDS)}")
    seed = _get(cfg, "experiment.seed", int, default=0)
    workers = _get(cfg, "experiment.workers", int, default=1)
    if workers < 1:
        raise ConfigError("experiment.workers must be >= 1")
    d = _get(cfg, "lattice.d", int, default=2)
    if d < 1:
        raise ConfigError("lattice.d must be >= 1")
    L = _get(cfg, "lattice.l", int)
    scales = _get_ints(cfg, "lattice.scales")
    l_values = _get_ints(cfg, "lattice.l_values")
    if L is not None and L < 2:
        raise ConfigError("lattice.l must be >= 2")
    bc = _get(cfg, "lattice.bc", default="dirichlet")
    bc_names = {"dirichlet": dyn.DIRICHLET, dyn.DIRICHLET: dyn.DIRICHLET,
                "periodic": dyn.PERIODIC, dyn.PERIODIC: dyn.PERIODIC}
    if bc not in bc_names:
        raise ConfigError(f"unknown boundary condition {bc!r}")
    bc = bc_names[bc]
    pot = make_potential(cfg)
    xi = _get_floats(cfg, "tilt.xi", default=np.zeros(d))
    if len(xi) != d:
        raise ConfigError("tilt.xi must have lattice.d components")
    samples = _get(cfg, "sampler.samples", int, default=100)
    if samples < 0:
        raise ConfigError("sampler.samples must be >= 0")
    return {
        "kind": kind, "seed": seed, "workers": workers, "d": d, "L": L,
        "scales": scales, "l_values": l_values, "bc": bc, "pot": pot,
        "xi": xi, "samples": samples,
        "stride": _get(cfg, "sampler.stride", int, default=10),
        "batch": _get(cfg, "sampler.batch", int, default=4),
        "dt": _get(cfg, "sampler.dt", float),
        "burn": _get(cfg, "sampler.burn", float),
        "t_max": _get(cfg, "sampler.t_max", float),
        "horizon": _get(cfg, "sampler.horizon", float),
    }


# ---------------------------------------------------------------------------
# experiment runners: each returns (results, payload, flags)


def _require_L(p):
    if p["L"] is None:
        raise ConfigError("lattice.l is required for this experiment")
    return p["L"]


def _run_sample(p):
    L = _require_L(p)
    env = hs.LangevinEnvironment(L, p["d"], p["pot"], p["xi"], bc=p["bc"],
                                 seed=p["seed"], dt=p["dt"])
    sq, grads = [], []
    for _ in range(p["samples"]):
        env.advance(p["stride"])
        sq.append(float(np.mean(env.phi ** 2)))
        grads.append([float(np.mean(np.diff(env.phi, axis=ax)))
                      for ax in range(p["d"])])
    sq = np.asarray(sq)
    grads = np.asarray(grads)
    n = len(sq)
    results = [
        reporting.EstimatorResult(
            "mean_phi_sq", float(sq.mean()),
            float(sq.std() / np.sqrt(max(n - 1, 1))), n, seed=p["seed"]),
        reporting.EstimatorResult(
            "mean_gradient", grads.mean(axis=0),
            grads.std(axis=0) / np.sqrt(max(n - 1, 1)), n, seed=p["seed"]),
    ]
    return results, {"results": results}, []


def _run_surface_tension(p):
    L = _require_L(p)
    kw = dict(n_samples=p["samples"], stride=p["stride"], seed=p["seed"],
              batch=p["batch"])
    sig = obs.sigma_by_integration(L, p["d"], p["pot"], p["xi"], **kw)
    grad = obs.grad_sigma(L, p["d"], p["pot"], p["xi"], **kw)
    results = [sig, grad]
    flags = list(sig.meta.get("flags", []))
    if p["pot"].name == "quadratic":
        c = p["pot"].params[0]
        results.append(reporting.EstimatorResult(
            "sigma_oracle",
            exact_gaussian.exact_sigma(L, p["d"], c, p["xi"]), 0.0, 0))
        results.append(reporting.EstimatorResult(
            "grad_sigma_oracle",
            exact_gaussian.exact_grad_sigma(L, p["d"], c, p["xi"]), 0.0, 0))
    return results, {"results": results}, flags


def _run_hessian(p):
    L = _require_L(p)
    hess = obs.hessian_sigma(L, p["d"], p["pot"], p["xi"],
                             n_samples=p["samples"], stride=p["stride"],
                             seed=p["seed"], batch=p["batch"])
    results = [hess]
    if p["pot"].name == "quadratic":
        c = p["pot"].params[0]
        results.append(reporting.EstimatorResult(
            "hessian_oracle",
            exact_gaussian.exact_hessian(L, p["d"], c), 0.0, 0))
    return results, {"results": results}, list(hess.meta.get("flags", []))


def _run_diffusivity(p):
    L = _require_L(p)
    horizon = p["horizon"] if p["horizon"] is not None else 40.0
    est = hs.effective_diffusivity(p["pot"], p["xi"], L, p["d"],
                                   horizon=horizon,
                                   n_env=max(p["batch"], 2),
                                   n_walks=max(p["samples"], 8),
                                   seed=p["seed"])
    res = reporting.EstimatorResult("effective_diffusivity", est.value,
                                    est.stderr, est.n_samples,
                                    seed=p["seed"], meta=est.meta)
    return [res], {"results": [res]}, list(est.flags)


def _run_couple(p):
    L = _require_L(p)
    curve = cpl.contraction_curve(L, p["d"], p["pot"], p["xi"],
                                  n_steps=max(p["samples"], 100),
                                  dt=p["dt"], seed=p["seed"])
    rep = cpl.couple_dirichlet_periodic(
        L, p["d"], p["pot"], p["xi"], A=1.0,
        n_samples=max(p["batch"], 2), seed=p["seed"], dt=p["dt"])
    results = [
        reporting.EstimatorResult(
            "contraction_fitted_rate", curve["fitted_rate"], 0.0,
            len(curve["diffs"]), seed=p["seed"],
            meta={"predicted_rate": curve["predicted_rate"],
                  "monotone": curve["monotone"]}),
        reporting.EstimatorResult(
            "dirichlet_periodic_sup", rep.sup_diff, rep.sup_diff_err,
            max(p["batch"], 2), seed=p["seed"]),
    ]
    flags = [] if curve["monotone"] else ["contraction not monotone"]
    payload = {"results": results, "coupling_report": rep,
               "contraction": {k: curve[k] for k in
                               ("fitted_rate", "predicted_rate", "monotone")}}
    return results, payload, flags


def _run_verify(p):
    if p["samples"] <= 0:
        raise ConfigError("verify requires sampler.samples > 0")
    L = _require_L(p)
    suite = diag.standard_suite(L, p["d"], seed=p["seed"])
    reports = [diag.brascamp_lieb_check(suite[2], L, p["d"], p["pot"],
                                        p["xi"], n_samples=p["samples"],
                                        stride=p["stride"], seed=p["seed"]),
               diag.spectral_gap_check(suite[2], L, p["d"], p["pot"],
                                       p["xi"], n_samples=p["samples"],
                                       stride=p["stride"], seed=p["seed"]),
               diag.multiscale_poincare_check(2, d=p["d"], n_draws=20,
                                              seed=p["seed"])]
    results = []
    flags = []
    for rep in reports:
        results.append(reporting.EstimatorResult(
            rep.name, [rep.lhs, rep.rhs], [rep.lhs_err, rep.rhs_err],
            p["samples"], seed=p["seed"],
            meta={"status": rep.status, "margin": rep.margin}))
        if rep.status != "pass":
            flags.append(f"{rep.name}: {rep.status}")
    return results, {"results": results, "reports": reports}, flags


def _run_subadditivity(p):
    scales = p["scales"] if p["scales"] is not None else [1, 2]
    recs = obs.subadditivity_defect(scales, p["pot"], p["xi"], d=p["d"],
                                    n_samples=max(p["batch"], 2),
                                    seed=p["seed"])
    results = [reporting.EstimatorResult(
        f"defect_scale_{r.m}", r.tau, r.tau_err, max(p["batch"], 2),
        seed=p["seed"], meta={"flags": r.flags}) for r in recs]
    flags = sorted({f for r in recs for f in r.flags})
    return results, {"results": results, "records": recs}, flags


def _run_clt(p):
    L = _require_L(p)
    R_values = p["scales"] if p["scales"] is not None else [4, 8]
    reps = obs.clt_check(R_values, L, p["d"], p["pot"],
                         n_samples=p["samples"], seed=p["seed"])
    results = [reporting.EstimatorResult(
        f"clt_R_{rep.R}", rep.variance, rep.variance_err, p["samples"],
        seed=p["seed"],
        meta={"kurtosis": rep.kurtosis, "skewness": rep.skewness,
              "predicted_variance": rep.prediction})
        for rep in reps]
    flags = sorted({f for rep in reps for f in rep.flags})
    return results, {"results": results, "reports": reps}, flags


def _run_decay(p):
    L = _require_L(p)
    d = p["d"]
    horizon = p["horizon"] if p["horizon"] is not None else 10.0 * L * L
    lam, Lam = p["pot"].lam, p["pot"].Lam
    dt = p["dt"] if p["dt"] is not None else \
        0.5 * solvers.parabolic_stability_dt(2.0 * Lam, d)
    rng = np.random.default_rng(p["seed"])
    f = [rng.standard_normal(s) for s in
         [tuple(2 * L + 1 - (ax == i) for ax in range(d)) for i in range(d)]]
    const = solvers.constant_conductance(2 * L + 1, d, lam + Lam)

    def random_cond(t):
        r = np.random.default_rng(p["seed"] + 17 + int(t))
        return [lam + (Lam - lam) * r.random(a.shape) for a in const]

    out_const = solvers.decay_envelope_check(L, d, f, lambda t: const,
                                             horizon, dt)
    out_rand = solvers.decay_envelope_check(L, d, f, random_cond,
                                            horizon, dt)
    results = [
        reporting.EstimatorResult("decay_constant_env_C", out_const["C"],
                                  0.0, len(out_const["times"])),
        reporting.EstimatorResult("decay_random_env_C", out_rand["C"],
                                  0.0, len(out_rand["times"])),
    ]
    flags = [k for k, out in (("constant", out_const), ("random", out_rand))
             if not out["passed"]]
    flags = [f"decay envelope unbounded ({k})" for k in flags]
    return results, {"results": results}, flags


RUNNERS = {
    "sample": _run_sample,
    "surface-tension": _run_surface_tension,
    "hessian": _run_hessian,
    "diffusivity": _run_diffusivity,
    "couple": _run_couple,
    "verify": _run_verify,
    "subadditivity": _run_subadditivity,
    "clt": _run_clt,
    "decay": _run_decay,
}


# ---------------------------------------------------------------------------
# plan: dry-run cost estimate


def plan_report(cfg) -> dict:
    p = experiment_params(cfg)
    d = p["d"]
    sides = []
    if p["L"] is not None:
        sides.append(2 * p["L"] + 1)
    for m in (p["scales"] or []):
        sides.append(2 * 3 ** (m + 1) + 2)
    for L in (p["l_values"] or []):
        sides.append(2 * L + 1)
    if not sides:
        sides = [1]
    side = max(sides)
    n_vertices = side ** d
    dt = p["dt"] if p["dt"] is not None else dyn.default_dt(p["pot"], d)
    per_sample = max(p["stride"], 1)
    chains = max(p["batch"], 1)
    est_steps = p["samples"] * per_sample * chains
    est_vertex_updates = est_steps * n_vertices
    mem_bytes = 8 * n_vertices * (chains + 4)
    disk_bytes = 4096 + 128 * p["samples"]
    return {
        "kind": p["kind"],
        "lattice_side": side,
        "vertices": n_vertices,
        "dt": dt,
        "estimated_steps": est_steps,
        "estimated_vertex_updates": est_vertex_updates,
        "estimated_memory_bytes": mem_bytes,
        "estimated_disk_bytes": disk_bytes,
    }


# ---------------------------------------------------------------------------
# entry points


def _outdir(cfg) -> str:
    out = _get(cfg, "experiment.outdir", default="out")
    root = os.environ.get("GRADPHI_OUTPUT_ROOT", "")
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def run_experiment(cfg) -> int:
    p = experiment_params(cfg)
    outdir = _outdir(cfg)
    os.makedirs(outdir, exist_ok=True)
    t0 = time.monotonic()
    results, payload, flags = RUNNERS[p["kind"]](p)
    csv_path = os.path.join(outdir, "results.csv")
    json_path = os.path.join(outdir, "results.json")
    reporting.write_csv(csv_path, results)
    reporting.write_json(json_path, payload)
    manifest = {
        "config_hash": reporting.config_hash(cfg),
        "kind": p["kind"],
        "seed": p["seed"],
        "version": _version(),
        "wall_time_s": round(time.monotonic() - t0, 3),
        "flags": flags,
        "outputs": ["results.csv", "results.json"],
    }
    # manifest written last so its presence marks a completed run
    reporting.write_json(os.path.join(outdir, "manifest.json"), manifest)
    for line in _summary_lines(results, flags):
        print(line)
    return 0


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("gradphi")
    except Exception:
        return "unknown"


def _summary_lines(results, flags):
    lines = []
    for r in results:
        val = np.atleast_1d(np.asarray(r.value, dtype=float))
        head = np.array2string(val.ravel()[:4], precision=6)
        lines.append(f"{r.name}: {head} (n={r.n_samples})")
    if flags:
        lines.append("flags: " + "; ".join(flags))
    return lines


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gradphi",
        description="Lattice interface model experiment runner")
    sub = parser.add_subparsers(dest="command")
    for cmd in ("run", "plan"):
        sp = sub.add_parser(cmd)
        sp.add_argument("config")
        sp.add_argument("overrides", nargs="*", metavar="key=value")
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config, args.overrides)
        if args.command == "plan":
            report = plan_report(cfg)
            for key, val in report.items():
                print(f"{key}: {val}")
            return 0
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
