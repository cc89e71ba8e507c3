"""Config-driven experiment runners behind the command line.

A configuration is a nested mapping with the sections of :data:`DEFAULTS`.
Named presets override the defaults; a YAML file given on the command line
overrides the preset.  Every run directory receives a copy of the merged
configuration, the seed, a version string and the CSV outputs.
"""

from __future__ import annotations

import copy
import csv
import os
import subprocess
from dataclasses import fields as dc_fields

import numpy as np
import yaml

from . import __version__
from . import autodiff as ad
from .analytic import LossWeights, mean_field_2d, mean_field_2d_derivs, normalizer_g, \
    solution_1d, weight_criteria
from .exceptions import ConfigError, MissingDependencyError
from .fd_reference import darcy_face_velocities, solve_ade_fd, solve_darcy_fd
from .fields import FieldGrid, ProblemSpec, darcy_velocity, grf_sample, load_field, save_field, \
    uniform_grid
from .metrics import plume_diagnostics, rel_l2_at_time, rel_l2_time_avg, write_metrics_csv
from .pinn import (DarcyNetCoeffs, FieldRegressor, InversePINN, MeasurementSet, TransportPINN,
                   TransportProblem, UniformFlowCoeffs, write_history_csv)
from .sampling import build_darcy_plan, dump_plan

_PROBLEM_DEFAULTS = {f.name: f.default for f in dc_fields(ProblemSpec)}

DEFAULTS = {
    "seed": 0,
    "problem": _PROBLEM_DEFAULTS,
    "grid": {"nx1": 64, "nx2": 32},
    "field": {"kind": "grf", "value": 1.0},
    "ade": {"velocity": "darcy", "nt_save": 11, "advection": "corrected",
            "dispersion_mode": "standard", "safety": 0.9},
    "pinn": {
        "oracle": "analytic",
        "formulation": "normalized",
        "sampling": "adaptive_time",
        "weights": "criteria",
        "lambda": {"ic": None, "bcd": None, "bcn": None, "res": 1.0, "data": None},
        "delta_x_tilde": 1.0 / 64.0,
        "hidden_layers": [40, 40, 40, 40],
        "output_activation": "identity",
        "n_res": 8000,
        "n_ic": None,
        "ic_fraction": 0.75,
        "n_bcd_x": 16,
        "n_bcn_x": 48,
        "n_t": 20,
        "adaptive_ratio": 0.5,
        "adam_lr": 1e-3,
        "adam_epochs": 20000,
        "batch_size": 1000,
        "lbfgs_memory": 10,
        "lbfgs_tol": 1e-7,
        "lbfgs_max_iters": 5000,
        "log_every": 100,
        "verbose": False,
    },
    "fit": {"hidden_layers": [40, 40, 40], "adam_lr": 1e-3, "adam_epochs": 3000,
            "batch_size": 1000, "lbfgs_max_iters": 500},
    "inverse": {"n_k": 10, "n_h": 10, "n_x": 20, "n_t_obs": 5, "n_res_darcy": 2000,
                "n_bc_darcy": 32, "k_hidden_layers": [40, 40, 40],
                "h_hidden_layers": [40, 40, 40]},
    "eval": {"nt": 11},
    "approx1d": {"epsilon": 0.025, "x0": 0.25, "D": 0.093, "v": 3.15, "x_max": 4.0,
                 "t_max": 1.0, "nx": 101, "nt": 51, "seeds": [0, 1, 2],
                 "hidden_layers": [40, 40, 40, 40], "adam_lr": 1e-3, "adam_epochs": 10000,
                 "batch_size": 1000, "lbfgs_max_iters": 1000},
    "sweep": {"key": None, "values": []},
}

_SMOKE = {
    "grid": {"nx1": 16, "nx2": 8},
    "ade": {"nt_save": 3},
    "pinn": {"hidden_layers": [8, 8], "n_res": 200, "n_bcd_x": 4, "n_bcn_x": 8, "n_t": 4,
             "adam_epochs": 30, "batch_size": 100, "lbfgs_max_iters": 10, "log_every": 10},
    "fit": {"hidden_layers": [8, 8], "adam_epochs": 30, "lbfgs_max_iters": 10},
    "inverse": {"n_k": 4, "n_h": 4, "n_x": 4, "n_t_obs": 2, "n_res_darcy": 100, "n_bc_darcy": 4,
                "k_hidden_layers": [8, 8], "h_hidden_layers": [8, 8]},
    "eval": {"nt": 3},
    "approx1d": {"nx": 21, "nt": 11, "seeds": [0], "hidden_layers": [8, 8], "adam_epochs": 50,
                 "lbfgs_max_iters": 10},
}

PRESETS = {
    "default": {},
    "approx1d": {},
    "reference": {},
    "reference-uniform": {"field": {"kind": "constant"}, "ade": {"velocity": "uniform"}},
    "forward-normalized": {},
    "forward-baseline": {"pinn": {"formulation": "raw", "sampling": "lhs", "weights": "manual",
                                  "lambda": {"ic": 10.0, "bcd": 10.0, "bcn": 10.0, "res": 1.0}}},
    "forward-weight-sweep": {"sweep": {"key": "pinn.lambda.ic",
                                       "values": [5.0, 24.0, 126.0, 10000.0]}},
    "forward-heterogeneous": {"pinn": {"oracle": "fd"}},
    "backward-sigmoid": {"problem": {"T": 0.2},
                         "pinn": {"output_activation": "sigmoid", "lbfgs_max_iters": 2000}},
    "backward-identity": {"problem": {"T": 0.2},
                          "pinn": {"output_activation": "identity", "lbfgs_max_iters": 2000}},
    "inverse": {"pinn": {"oracle": "fd", "adam_epochs": 10000, "lbfgs_max_iters": 1000}},
    "inverse-sweep": {"pinn": {"oracle": "fd", "adam_epochs": 10000, "lbfgs_max_iters": 1000},
                      "sweep": {"key": "inverse.n_x", "values": [0, 10, 30, 60]}},
    "smoke": _SMOKE,
    "smoke-backward": _SMOKE | {"problem": {"T": 0.2}},
}

COMMAND_PRESETS = {
    "approx1d": "approx1d",
    "gen-field": "reference",
    "solve-darcy": "reference",
    "solve-ade": "reference",
    "train-forward": "forward-normalized",
    "train-backward": "backward-sigmoid",
    "train-inverse": "inverse",
}


# -- configuration ----------------------------------------------------------

def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config field {where!r} must be a section")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = _coerce(base[key], val, where)
    return out


def _coerce(default, val, where):
    if val is None or default is None:
        return val
    try:
        if isinstance(default, bool):
            if not isinstance(val, bool):
                raise TypeError
            return val
        if isinstance(default, int):
            if float(val) != int(val):
                raise TypeError
            return int(val)
        if isinstance(default, float):
            return float(val)
        if isinstance(default, list):
            return list(val)
        if isinstance(default, str):
            return str(val)
    except (TypeError, ValueError):
        raise ConfigError(f"config field {where!r}: cannot use {val!r} "
                          f"as {type(default).__name__}") from None
    return val


def load_config(preset="default", path=None, seed=None):
    """Defaults, then the preset, then the YAML file at ``path``, then ``seed``."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = _merge(DEFAULTS, PRESETS[preset])
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    choices = {
        "field.kind": ("grf", "constant"),
        "ade.velocity": ("darcy", "uniform"),
        "ade.advection": ("corrected", "upwind"),
        "ade.dispersion_mode": ("standard", "as-written"),
        "pinn.oracle": ("analytic", "fd"),
        "pinn.formulation": ("normalized", "raw"),
        "pinn.sampling": ("adaptive_time", "lhs"),
        "pinn.weights": ("criteria", "manual"),
        "pinn.output_activation": ("identity", "sigmoid", "softplus"),
    }
    for key, allowed in choices.items():
        val = get_path(cfg, key)
        if val not in allowed:
            raise ConfigError(f"config field {key!r} must be one of {allowed}, got {val!r}")
    if cfg["pinn"]["weights"] == "manual":
        for name in ("ic", "bcd", "bcn", "res"):
            if cfg["pinn"]["lambda"][name] is None:
                raise ConfigError(f"config field 'pinn.lambda.{name}' is required "
                                  "with manual weights")
    for key in ("grid.nx1", "grid.nx2", "ade.nt_save", "eval.nt"):
        if get_path(cfg, key) < 1:
            raise ConfigError(f"config field {key!r} must be positive")
    for key in ("pinn.n_res", "pinn.n_bcd_x", "pinn.n_bcn_x", "pinn.n_t", "pinn.adam_epochs",
                "pinn.lbfgs_max_iters", "fit.adam_epochs", "fit.lbfgs_max_iters"):
        if get_path(cfg, key) < 0:
            raise ConfigError(f"config field {key!r} must be non-negative")
    for key in ("pinn.adam_lr", "pinn.batch_size"):
        if get_path(cfg, key) <= 0:
            raise ConfigError(f"config field {key!r} must be positive")
    try:
        make_spec(cfg)
    except ValueError as exc:
        raise ConfigError(f"config section 'problem': {exc}") from None


def get_path(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    return node


def set_path(cfg, dotted, value):
    parts = dotted.split(".")
    over = value
    for part in reversed(parts):
        over = {part: over}
    return _merge(cfg, over)


def make_spec(cfg):
    return ProblemSpec(**cfg["problem"])


def version_string():
    """Package version with the short commit hash when run from a checkout."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=here,
                             capture_output=True, text=True, timeout=10).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{__version__}+g{sha}" if sha else __version__


def prepare_run_dir(out, cfg, command):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"config.{command}.yaml"), "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
    with open(os.path.join(out, "seed.txt"), "w") as fh:
        fh.write(f"{cfg['seed']}\n")
    with open(os.path.join(out, "version.txt"), "w") as fh:
        fh.write(version_string() + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_summary(path, summary):
    _write_rows(path, ["key", "value"], summary.items())


def _require(out, name, producer):
    path = os.path.join(out, name)
    if not os.path.exists(path):
        raise MissingDependencyError(f"{path} not found; run `{producer}` with --out {out} first")
    return path


def _add_manifest(out, entries):
    path = os.path.join(out, "manifest.txt")
    old = {}
    if os.path.exists(path):
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    name, desc = line.rstrip("\n").split(" ", 1)
                    old[name] = desc
    old.update(entries)
    with open(path, "w") as fh:
        for name in sorted(old):
            fh.write(f"{name} {old[name]}\n")


# -- 1-D approximation demo -------------------------------------------------

def run_approx1d(cfg, out):
    """Raw versus amplitude-normalized regression of the 1-D pulse."""
    a = cfg["approx1d"]
    x = np.linspace(0.0, a["x_max"], a["nx"])
    t = np.linspace(0.0, a["t_max"], a["nt"])
    X, Tt = np.meshgrid(x, t, indexing="ij")
    u = solution_1d(X, Tt, a["epsilon"], a["x0"], a["D"], a["v"])
    u_max = 1.0 / np.sqrt(2.0 * np.pi * (a["epsilon"] ** 2 + 2.0 * a["D"] * Tt))
    inputs = np.column_stack([X.ravel() / a["x_max"] - 0.5, Tt.ravel() / a["t_max"] - 0.5])

    rows, curves = [], {"raw": [], "normalized": []}
    for seed in a["seeds"]:
        for target, y, scale in (("raw", u, 1.0), ("normalized", u / u_max, u_max)):
            reg = FieldRegressor(hidden_layers=tuple(a["hidden_layers"]), adam_lr=a["adam_lr"],
                                 adam_epochs=a["adam_epochs"], batch_size=a["batch_size"],
                                 lbfgs_max_iters=a["lbfgs_max_iters"], random_state=seed)
            reg.fit(inputs, y.ravel())
            pred = reg.predict(inputs).reshape(X.shape) * scale
            err = np.linalg.norm(pred - u, axis=0) / np.linalg.norm(u, axis=0)
            curves[target].append(err)
            rows += [(seed, target, ti, e) for ti, e in zip(t, err)]
    _write_rows(os.path.join(out, "approx1d_errors.csv"), ["seed", "target", "t", "rel_l2"], rows)

    summary = {}
    for target, errs in curves.items():
        mean = np.mean(errs, axis=0)
        summary[f"{target}_error_t0"] = float(mean[0])
        summary[f"{target}_error_tend"] = float(mean[-1])
        summary[f"{target}_ratio"] = float(mean[-1] / mean[0])
    _write_summary(os.path.join(out, "approx1d_summary.csv"), summary)
    return summary


# -- reference pipeline -----------------------------------------------------

def run_gen_field(cfg, out):
    spec = make_spec(cfg)
    dims, spacing = uniform_grid(spec, cfg["grid"]["nx1"], cfg["grid"]["nx2"])
    if cfg["field"]["kind"] == "constant":
        K = FieldGrid(*dims, spacing, np.full(dims, float(cfg["field"]["value"])), "conductivity")
    else:
        K = grf_sample(dims, spacing, spec.mean_Y, spec.sigma_Y, spec.lambda_corr, cfg["seed"])
    save_field(os.path.join(out, "K.field"), K)
    logk = np.log(K.values)
    summary = {"kind": cfg["field"]["kind"], "mean_logK": float(logk.mean()),
               "var_logK": float(logk.var()), "K_min": float(K.values.min()),
               "K_max": float(K.values.max())}
    _write_summary(os.path.join(out, "field_summary.csv"), summary)
    _add_manifest(out, {"K.field": "conductivity"})
    return summary


def run_solve_darcy(cfg, out):
    spec = make_spec(cfg)
    K = load_field(_require(out, "K.field", "gen-field"))
    h = solve_darcy_fd(K, spec.H, spec.q)
    v1, v2 = darcy_velocity(K, h, spec.phi)
    for name, grid in (("h.field", h), ("v1.field", v1), ("v2.field", v2)):
        save_field(os.path.join(out, name), grid)
    w1, _ = darcy_face_velocities(K, h, spec.H, spec.q, spec.phi)
    flux = w1.sum(axis=1) * K.spacing[1] * spec.phi
    x_faces = np.arange(K.nx1 + 1) * K.spacing[0]
    _write_rows(os.path.join(out, "darcy_fluxes.csv"), ["x1", "flux"], zip(x_faces, flux))
    target = spec.q * spec.L2
    summary = {"h_min": float(h.values.min()), "h_max": float(h.values.max()),
               "flux_rel_error": float(np.abs(flux - target).max() / target)}
    _write_summary(os.path.join(out, "darcy_summary.csv"), summary)
    _add_manifest(out, {"h.field": "head", "v1.field": "velocity_x1",
                        "v2.field": "velocity_x2", "darcy_fluxes.csv": "cross-section fluxes"})
    return summary


def _uniform_velocity(spec, cfg):
    dims, spacing = uniform_grid(spec, cfg["grid"]["nx1"], cfg["grid"]["nx2"])
    v1 = FieldGrid(*dims, spacing, np.full(dims, spec.mean_velocity), "velocity_x1")
    v2 = FieldGrid(*dims, spacing, np.zeros(dims), "velocity_x2")
    return v1, v2


def run_solve_ade(cfg, out):
    spec = make_spec(cfg)
    a = cfg["ade"]
    if a["velocity"] == "uniform":
        v1, v2 = _uniform_velocity(spec, cfg)
        sol = solve_ade_fd(v1, v2, spec, a["nt_save"], dispersion=(spec.Dx1, spec.Dx2, 0.0),
                           safety=a["safety"], advection=a["advection"])
    else:
        K = load_field(_require(out, "K.field", "gen-field"))
        h = load_field(_require(out, "h.field", "solve-darcy"))
        v1 = load_field(_require(out, "v1.field", "solve-darcy"))
        v2 = load_field(_require(out, "v2.field", "solve-darcy"))
        faces = darcy_face_velocities(K, h, spec.H, spec.q, spec.phi)
        sol = solve_ade_fd(v1, v2, spec, a["nt_save"], face_velocities=faces,
                           dispersion_mode=a["dispersion_mode"], safety=a["safety"],
                           advection=a["advection"])
    entries, rows = {}, []
    with open(os.path.join(out, "snapshots.txt"), "w") as fh:
        for k, (t, snap) in enumerate(zip(sol.times, sol)):
            name = f"u_{k:03d}.field"
            save_field(os.path.join(out, name), snap)
            fh.write(f"{k} {float(t)!r} {name}\n")
            entries[name] = f"concentration t={float(t)!r}"
            d = plume_diagnostics(snap.values, snap.spacing,
                                  (0.5 * snap.spacing[0], 0.5 * snap.spacing[1]))
            rows.append((t, snap.values.sum() * snap.spacing[0] * snap.spacing[1],
                         d.x1c, d.x2c, snap.values.min()))
    _write_rows(os.path.join(out, "ade_mass.csv"), ["time", "mass", "x1c", "x2c", "u_min"], rows)
    entries["snapshots.txt"] = "snapshot times"
    _add_manifest(out, entries)
    mass = sol.mass()
    return {"mass_initial": float(mass[0]), "mass_final": float(mass[-1]),
            "u_min": float(min(s.values.min() for s in sol))}


def load_snapshots(out):
    path = _require(out, "snapshots.txt", "solve-ade")
    times, snaps = [], []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                _, t, name = line.split()
                times.append(float(t))
                snaps.append(load_field(_require(out, name, "solve-ade")))
    return np.array(times), snaps


# -- PINN runs --------------------------------------------------------------

def _weights(cfg, normalizer):
    pc = cfg["pinn"]
    lam = pc["lambda"]
    if pc["weights"] == "manual":
        data = lam["data"] if lam["data"] is not None else lam["ic"]
        return LossWeights(lam["ic"], lam["bcd"], lam["bcn"], lam["res"], data)
    w = weight_criteria(normalizer, pc["delta_x_tilde"])
    ic = w.lambda_ic if lam["ic"] is None else lam["ic"]
    bcd = ic if lam["bcd"] is None else lam["bcd"]
    bcn = pc["delta_x_tilde"] ** 2 * ic if lam["bcn"] is None else lam["bcn"]
    data = ic if lam["data"] is None else lam["data"]
    return LossWeights(ic, bcd, bcn, lam["res"], data)


def _estimator_kwargs(cfg, weights):
    pc = cfg["pinn"]
    return dict(
        formulation=pc["formulation"], sampling=pc["sampling"], weights=weights,
        hidden_layers=tuple(pc["hidden_layers"]), output_activation=pc["output_activation"],
        n_res=pc["n_res"], n_ic=pc["n_ic"], ic_fraction=pc["ic_fraction"],
        n_bcd_x=pc["n_bcd_x"], n_bcn_x=pc["n_bcn_x"], n_t=pc["n_t"],
        adaptive_ratio=pc["adaptive_ratio"], adam_lr=pc["adam_lr"],
        adam_epochs=pc["adam_epochs"], batch_size=pc["batch_size"],
        lbfgs_memory=pc["lbfgs_memory"], lbfgs_tol=pc["lbfgs_tol"],
        lbfgs_max_iters=pc["lbfgs_max_iters"], random_state=cfg["seed"],
        log_every=pc["log_every"], verbose=pc["verbose"])


def _analytic_grid(spec, cfg, t, p):
    dims, spacing = uniform_grid(spec, cfg["grid"]["nx1"], cfg["grid"]["nx2"])
    grid = FieldGrid(*dims, spacing, np.zeros(dims), "concentration")
    c1, c2 = grid.centers()
    return grid.like(mean_field_2d(c1, c2, t, p))


def _analytic_boundary(p):
    def boundary(x1, x2, t):
        d = mean_field_2d_derivs(x1, x2, t, p)
        return d["u"], d["u1"], d["u2"]
    return boundary


def _fit_coefficient_nets(cfg, K, h, h_max):
    """Regression fits of K / K_max and h / h_max on the reference grids."""
    f = cfg["fit"]
    c1, c2 = K.centers()
    L1, L2 = K.lengths
    X = np.column_stack([c1.ravel() / L1 - 0.5, c2.ravel() / L2 - 0.5])
    K_max = float(K.values.max())
    common = dict(hidden_layers=tuple(f["hidden_layers"]), adam_lr=f["adam_lr"],
                  adam_epochs=f["adam_epochs"], batch_size=f["batch_size"],
                  lbfgs_max_iters=f["lbfgs_max_iters"], random_state=cfg["seed"])
    rk = FieldRegressor(output_activation="softplus", **common).fit(X, K.values.ravel() / K_max)
    rh = FieldRegressor(**common).fit(X, h.values.ravel() / h_max)
    err_k = rel_l2_at_time(rk.predict(X) * K_max, K.values.ravel())
    err_h = rel_l2_at_time(rh.predict(X) * h_max, h.values.ravel())
    return rk.params_, rh.params_, K_max, err_k, err_h


def _build_problem(cfg, out, backward):
    """Spec, coefficients, problem and reference snapshots for transport runs."""
    spec = make_spec(cfg)
    p = spec.mean_field()
    extras = {}
    if cfg["pinn"]["oracle"] == "analytic":
        coeffs = UniformFlowCoeffs(spec, p, p.V, p.Dx1, p.Dx2, 0.0)
        times = np.linspace(0.0, spec.T, cfg["eval"]["nt"])
        refs = [_analytic_grid(spec, cfg, t, p) for t in times]
        anchor = refs[-1] if backward else refs[0]
        problem = TransportProblem(spec, coeffs, condition_grid=anchor,
                                   boundary=_analytic_boundary(p))
        return spec, problem, times, refs, extras
    K = load_field(_require(out, "K.field", "gen-field"))
    h = load_field(_require(out, "h.field", "solve-darcy"))
    times, refs = load_snapshots(out)
    if not np.isclose(times[-1], spec.T):
        raise ConfigError(f"reference snapshots end at t={times[-1]} but problem.T={spec.T}; "
                          "rerun solve-ade with the same config")
    h_max = float(h.values.max())
    pk, ph, K_max, err_k, err_h = _fit_coefficient_nets(cfg, K, h, h_max)
    extras.update(fit_error_K=err_k, fit_error_h=err_h)
    coeffs = DarcyNetCoeffs(spec, p, K_max, h_max, dispersion_mode=cfg["ade"]["dispersion_mode"])
    anchor = refs[-1] if backward else refs[0]
    problem = TransportProblem(spec, coeffs, condition_grid=anchor, nets=(pk, ph))
    return spec, problem, times, refs, extras


def _grid_points(grid, t):
    c1, c2 = grid.centers()
    return np.column_stack([c1.ravel(), c2.ravel(), np.full(c1.size, float(t))])


def evaluate_transport(est, spec, times, refs):
    """Per-snapshot metrics and the pooled time-averaged error of ``u / g``."""
    p = spec.mean_field(est.coeffs_.T)
    rows, pairs, preds = [], [], []
    for t, ref in zip(times, refs):
        X = _grid_points(ref, t)
        u_hat = est.predict(X).reshape(ref.shape)
        g = normalizer_g(t, p)
        pairs.append((u_hat / g, ref.values / g))
        preds.append(u_hat)
        d = plume_diagnostics(u_hat, ref.spacing, (0.5 * ref.spacing[0], 0.5 * ref.spacing[1]))
        rows.append((t, rel_l2_at_time(u_hat, ref.values), d.mass, d.x1c, d.x2c))
    return rows, rel_l2_time_avg(pairs), preds


def _save_training(out, est, prefix):
    write_history_csv(os.path.join(out, f"{prefix}history.csv"), est.history_,
                      os.path.join(out, f"{prefix}timings.csv"))
    ad.save_params(os.path.join(out, f"{prefix}params_u.txt"), est.params_)
    dump_plan(os.path.join(out, f"{prefix}plan.txt"), est.plan_)


def run_train_forward(cfg, out):
    spec, problem, times, refs, extras = _build_problem(cfg, out, backward=False)
    weights = _weights(cfg, problem.coeffs.normalizer)
    est = TransportPINN(direction="forward", **_estimator_kwargs(cfg, weights)).fit(problem)
    _save_training(out, est, "forward_")
    rows, avg, _ = evaluate_transport(est, spec, times, refs)
    write_metrics_csv(os.path.join(out, "forward_metrics.csv"), rows)
    summary = {"formulation": est.formulation, "sampling": est.sampling,
               "lambda_ic": weights.lambda_ic, "lambda_bcd": weights.lambda_bcd,
               "lambda_bcn": weights.lambda_bcn, "lambda_res": weights.lambda_res,
               "rel_l2_time_avg": avg, "final_loss": est.loss_,
               "stop_reason": est.stop_reason_, **extras}
    _write_summary(os.path.join(out, "forward_summary.csv"), summary)
    return summary


def run_train_backward(cfg, out):
    spec, problem, times, refs, extras = _build_problem(cfg, out, backward=True)
    weights = _weights(cfg, problem.coeffs.normalizer)
    est = TransportPINN(direction="backward", **_estimator_kwargs(cfg, weights)).fit(problem)
    _save_training(out, est, "backward_")
    rows, avg, preds = evaluate_transport(est, spec, times, refs)
    u_min = [float(u.min()) for u in preds]
    write_metrics_csv(os.path.join(out, "backward_metrics.csv"), rows)
    _write_rows(os.path.join(out, "backward_minimum.csv"), ["time", "u_min"], zip(times, u_min))
    _, _, mass0, x1c, x2c = rows[0]
    summary = {"output_activation": est.output_activation, "rel_l2_time_avg": avg,
               "u_min": min(u_min), "mass_t0": mass0, "x1c_t0": x1c, "x2c_t0": x2c,
               "center_error_t0": float(np.hypot(x1c - spec.x1_star, x2c - spec.x2_star)),
               "mass_error_t0": float(abs(mass0 - spec.M) / spec.M),
               "final_loss": est.loss_, "stop_reason": est.stop_reason_, **extras}
    _write_summary(os.path.join(out, "backward_summary.csv"), summary)
    return summary


def sample_measurements(cfg, spec, K, h, times, snaps, K_max, h_max, seed):
    """Seeded point measurements of K, h and u on the reference grids."""
    inv = cfg["inverse"]
    rng = np.random.default_rng(seed)
    c1, c2 = K.centers()
    xt = np.column_stack([c1.ravel() / spec.L1 - 0.5, c2.ravel() / spec.L2 - 0.5])
    n_cells = K.nx1 * K.nx2

    def pick(n):
        return np.sort(rng.choice(n_cells, size=n, replace=False)) if n else np.zeros(0, int)

    ik, ih, iu = pick(inv["n_k"]), pick(inv["n_h"]), pick(inv["n_x"])
    k_obs = np.column_stack([xt[ik], K.values.ravel()[ik] / K_max])
    h_obs = np.column_stack([xt[ih], h.values.ravel()[ih] / h_max])
    p = spec.mean_field()
    obs_idx = np.unique(np.linspace(0, len(times) - 1, inv["n_t_obs"] + 1).round().astype(int)[1:])
    u_rows = []
    for k in obs_idx:
        t = times[k]
        g = normalizer_g(t, p)
        tt = np.full(len(iu), t / spec.T - 0.5)
        u_rows.append(np.column_stack([xt[iu], tt, snaps[k].values.ravel()[iu] / g]))
    u_obs = np.concatenate(u_rows) if u_rows else np.zeros((0, 4))
    counts = {"N_x": inv["n_x"], "N_t": len(obs_idx), "N_k": inv["n_k"], "N_h": inv["n_h"]}
    return MeasurementSet(u_obs, k_obs, h_obs, K_max, h_max, counts)


def run_train_inverse(cfg, out):
    spec = make_spec(cfg)
    inv = cfg["inverse"]
    K = load_field(_require(out, "K.field", "gen-field"))
    h = load_field(_require(out, "h.field", "solve-darcy"))
    times, snaps = load_snapshots(out)
    if not np.isclose(times[-1], spec.T):
        raise ConfigError(f"reference snapshots end at t={times[-1]} but problem.T={spec.T}")
    rng = np.random.default_rng(cfg["seed"] + 1000)
    # K_max from the K measurements, h_max from the geometric mean of K
    probe = np.sort(rng.choice(K.nx1 * K.nx2, size=inv["n_k"], replace=False)) \
        if inv["n_k"] else np.zeros(0, int)
    k_meas = K.values.ravel()[probe]
    K_max = float(k_meas.max()) if len(k_meas) else float(np.exp(spec.mean_Y))
    k_bar = float(np.exp(np.log(k_meas).mean())) if len(k_meas) else float(np.exp(spec.mean_Y))
    h_max = spec.h_max(k_bar)
    data = sample_measurements(cfg, spec, K, h, times, snaps, K_max, h_max, cfg["seed"] + 1000)

    p = spec.mean_field()
    coeffs = DarcyNetCoeffs(spec, p, K_max, h_max, dispersion_mode=cfg["ade"]["dispersion_mode"])
    problem = TransportProblem(spec, coeffs, condition_grid=snaps[0])
    weights = _weights(cfg, p)
    dplan = build_darcy_plan(spec, inv["n_res_darcy"], inv["n_bc_darcy"], cfg["seed"] + 2000)
    kw = _estimator_kwargs(cfg, weights)
    kw["formulation"] = "normalized"
    est = InversePINN(k_hidden_layers=tuple(inv["k_hidden_layers"]),
                      h_hidden_layers=tuple(inv["h_hidden_layers"]), direction="forward", **kw)
    est.fit(problem, dplan, data)
    _save_training(out, est, "inverse_")
    ad.save_params(os.path.join(out, "inverse_params_k.txt"), est.params_k_)
    ad.save_params(os.path.join(out, "inverse_params_h.txt"), est.params_h_)

    rows, avg, _ = evaluate_transport(est, spec, times, snaps)
    write_metrics_csv(os.path.join(out, "inverse_metrics.csv"), rows)
    c1, c2 = K.centers()
    X2 = np.column_stack([c1.ravel(), c2.ravel()])
    err_k = rel_l2_at_time(est.predict_conductivity(X2), K.values.ravel())
    err_h = rel_l2_at_time(est.predict_head(X2), h.values.ravel())
    summary = {**data.counts, "K_max": K_max, "h_max": h_max, "u_error_time_avg": avg,
               "K_error": err_k, "h_error": err_h, "final_loss": est.loss_,
               "stop_reason": est.stop_reason_}
    _write_summary(os.path.join(out, "inverse_summary.csv"), summary)
    return summary


RUNNERS = {
    "approx1d": run_approx1d,
    "gen-field": run_gen_field,
    "solve-darcy": run_solve_darcy,
    "solve-ade": run_solve_ade,
    "train-forward": run_train_forward,
    "train-backward": run_train_backward,
    "train-inverse": run_train_inverse,
}


def run(command, cfg, out, deterministic=False):
    """Run ``command`` into directory ``out``; sweeps go to numbered subdirectories.

    With ``deterministic`` the BLAS pools are limited to one thread so that
    reductions happen in a fixed order.
    """
    if command not in RUNNERS:
        raise ConfigError(f"unknown subcommand {command!r}")
    if deterministic:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=1):
            return _run(command, cfg, out)
    return _run(command, cfg, out)


def _run(command, cfg, out):
    key = cfg["sweep"]["key"]
    if not key:
        prepare_run_dir(out, cfg, command)
        return RUNNERS[command](cfg, out)
    results, rows = [], []
    base = copy.deepcopy(cfg)
    base["sweep"] = {"key": None, "values": []}
    prepare_run_dir(out, cfg, command)
    for i, value in enumerate(cfg["sweep"]["values"]):
        sub = set_path(base, key, value)
        validate_config(sub)
        sub_out = os.path.join(out, f"sweep_{i:02d}")
        os.makedirs(sub_out, exist_ok=True)
        # reference files live in the parent directory
        for name in os.listdir(out):
            if name.endswith(".field") or name == "snapshots.txt":
                dst = os.path.join(sub_out, name)
                if not os.path.exists(dst):
                    os.symlink(os.path.abspath(os.path.join(out, name)), dst)
        prepare_run_dir(sub_out, sub, command)
        summary = RUNNERS[command](sub, sub_out)
        results.append(summary)
        rows.append((i, value, *(summary[k] for k in sorted(summary))))
    if results:
        _write_rows(os.path.join(out, "sweep_summary.csv"),
                    ["index", key] + sorted(results[0]), rows)
    return results
