"""Command-line driver.

::

    tracephase run CONFIG [--full] [--out DIR] [--seed N]
    tracephase validate CONFIG [--levels 2..4]
    tracephase sweep CONFIG [--beta 0,0.1,1]

Exit status: 0 on success, 2 for configuration errors, 3 when a solve fails
or the state goes non-finite (the last good state is dumped to
``final_state.npz``), 4 for file-system errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .diagnostics import DiagnosticsWriter, error_norms, l2_error, lyapunov_energy, record
from .errors import ConfigError, IoError, NonFiniteState, SolverFailure, TracePhaseError
from .fem import TraceSpace
from .manufactured import (
    exact_chemical_potential, exact_solution, manufactured_forcing_ac, manufactured_forcing_ch,
)
from .models import make_stepper
from .vtk import surface_snapshot

log = logging.getLogger("tracephase")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


# -- wiring ---------------------------------------------------------------
def build_space(cfg, level=None):
    return TraceSpace(
        cfg.surface(), cfg["mesh.level"] if level is None else level, tuple(cfg.cells()),
        surface_order=cfg["mesh.surface_order"], volume_order=cfg["mesh.volume_order"],
        max_tets=cfg["mesh.max_tets"],
    )


def initial_state(cfg, space, params=None):
    kind, arg = cfgmod.parse_initial_condition(cfg["initial_condition"])
    if kind == "random":
        return space.random_field(cfg["seed"] if arg is None else arg)
    if kind == "constant":
        return np.full(space.n_dofs, arg)
    if kind == "linear_x3_plus_half":
        return space.interpolate(lambda x, t: x[..., 2] + 0.5)
    if kind == "manufactured":
        return space.interpolate(exact_solution)
    return space.interpolate(arg)


def manufactured_forcing(model, params):
    if model == "allen_cahn":
        return lambda x, t: manufactured_forcing_ac(x, t, params)
    return lambda x, t: manufactured_forcing_ch(x, t, params)[0]


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {path}: {exc}") from exc


def _dump_state(stepper, path):
    s = stepper.state
    if s is None:
        return
    np.savez(path, u=s.u_k, u_prev=s.u_km1 if s.u_km1 is not None else np.empty(0),
             mu=s.mu_k if s.mu_k is not None else np.empty(0), t=s.t, step=s.run)


def _snapshot(stepper, step, out_dir):
    s = stepper.state
    fields = {"eta": s.u_k} if stepper.model == "allen_cahn" else {"c": s.u_k, "mu": s.mu_k}
    surface_snapshot(stepper.space, fields, os.path.join(out_dir, f"snap_{step:06d}.vtk"),
                     title=f"{stepper.model} t={s.t!r}")


# -- run ------------------------------------------------------------------
def simulate(cfg, out_dir, steps=None, params=None, space=None, stop=None):
    """Time-step one configuration, writing ``diagnostics.csv`` and snapshots.

    ``stop(record)`` may return a reason string to end the run early.
    Returns a summary dict; solver failures propagate after the state dump.
    """
    _ensure_dir(out_dir)
    params = params or cfg.params()
    space = space or build_space(cfg)
    steps = cfg.schedule() if steps is None else steps
    stepper = make_stepper(cfg.model, space, params, cfg.solver())
    stepper.start(initial_state(cfg, space))
    vtk_every, csv_every = cfg["output.vtk_every"], cfg["output.csv_every"]
    t0 = time.perf_counter()
    log.info("%s: %d dofs, h=%.4g, %d steps", cfg.experiment, space.n_dofs, space.h, len(steps))
    summary = {"steps": 0, "t": 0.0, "status": "completed", "reason": ""}
    try:
        with DiagnosticsWriter(os.path.join(out_dir, "diagnostics.csv")) as out:
            rec = record(space, stepper.state.u_k, params, 0.0, cfg.model)
            out.write(rec)
            summary["E0"] = rec.lyapunov_energy
            if vtk_every:
                _snapshot(stepper, 0, out_dir)
            for k, dt in enumerate(steps, 1):
                prev = stepper.state.u_k
                res = stepper.step(dt)
                summary.update(steps=k, t=stepper.state.t)
                last = k == len(steps)
                if k % csv_every == 0 or last or stop is not None:
                    rec = record(space, res.u, params, stepper.state.t, cfg.model, prev, res.iters)
                    out.write(rec)
                    summary["E"] = rec.lyapunov_energy
                    reason = stop(rec) if stop is not None else None
                    if reason:
                        summary.update(status="stopped", reason=reason)
                        _dump_state(stepper, os.path.join(out_dir, "final_state.npz"))
                        break
                if vtk_every and (k % vtk_every == 0 or last):
                    _snapshot(stepper, k, out_dir)
    except (SolverFailure, NonFiniteState):
        _dump_state(stepper, os.path.join(out_dir, "final_state.npz"))
        raise
    except OSError as exc:
        raise IoError(f"writing to {out_dir}: {exc}") from exc
    summary["seconds"] = time.perf_counter() - t0
    return summary


# -- validation -------------------------------------------------------------
def validation_dt(level):
    return 2.0 ** (-(1 + level))


def convergence_run(cfg, level, t_end=None):
    """Manufactured-solution errors on one level: ``{'u': (Linf, L2), 'mu': ...}``."""
    t_end = cfg.get("validation.t_end") if t_end is None else t_end
    dt = validation_dt(level)
    params = cfg.params(dt=dt)
    space = build_space(cfg, level)
    stepper = make_stepper(cfg.model, space, params, cfg.solver(), manufactured_forcing(cfg.model, params))
    stepper.start(space.interpolate(exact_solution))
    n = int(round(t_end / dt))
    eu, emu = [], []
    exact_mu = lambda x, t: exact_chemical_potential(x, t, params)  # noqa: E731
    for _ in range(n):
        res = stepper.step(dt)
        t = stepper.state.t
        eu.append(l2_error(space, res.u, exact_solution, t))
        if res.mu is not None:
            emu.append(l2_error(space, res.mu, exact_mu, t))
    out = {"h": space.h, "dt": dt, "dofs": space.n_dofs, "u": error_norms(eu, [dt] * n)}
    if emu:
        out["mu"] = error_norms(emu, [dt] * n)
    return out


def rates(errors):
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]


CONV_HEADER = ("level", "h", "dt", "dofs", "u_LinfL2", "u_L2L2", "mu_LinfL2", "mu_L2L2",
               "rate_u_LinfL2", "rate_u_L2L2", "rate_mu_LinfL2", "rate_mu_L2L2")


def validate_levels(cfg, levels, out_dir):
    _ensure_dir(out_dir)
    rows = []
    for lev in levels:
        t0 = time.perf_counter()
        r = convergence_run(cfg, lev)
        log.info("level %d: u errors %.3e %.3e (%.1fs)", lev, *r["u"], time.perf_counter() - t0)
        rows.append(r)
    cols = {"u_LinfL2": [r["u"][0] for r in rows], "u_L2L2": [r["u"][1] for r in rows]}
    has_mu = "mu" in rows[0]
    if has_mu:
        cols["mu_LinfL2"] = [r["mu"][0] for r in rows]
        cols["mu_L2L2"] = [r["mu"][1] for r in rows]
    rate = {k: [math.nan] + rates(v) for k, v in cols.items()}
    path = os.path.join(out_dir, "convergence.csv")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CONV_HEADER)
            for i, (lev, r) in enumerate(zip(levels, rows)):
                vals = [lev, r["h"], r["dt"], r["dofs"]]
                for k in ("u_LinfL2", "u_L2L2", "mu_LinfL2", "mu_L2L2"):
                    vals.append(cols[k][i] if k in cols else math.nan)
                for k in ("u_LinfL2", "u_L2L2", "mu_LinfL2", "mu_L2L2"):
                    vals.append(rate[k][i] if k in rate else math.nan)
                w.writerow([v if isinstance(v, int) else repr(float(v)) for v in vals])
    except OSError as exc:
        raise IoError(f"writing {path}: {exc}") from exc
    return {"levels": list(levels), "errors": cols, "rates": {k: v[1:] for k, v in rate.items()}}


# -- beta sweep -------------------------------------------------------------
SWEEP_HEADER = ("beta_s", "status", "steps", "t_final", "E0", "E_final", "max_rel_increase")


def _sweep_one(args):
    values, beta, out_dir = args
    cfg = cfgmod.RunConfig(values)
    dt = cfg["sweep.dt"]
    t_end = cfg["model.t_end"]
    n = int(round(t_end / dt))
    params = cfg.params(dt=dt, beta_s=beta)
    factor = cfg["sweep.blowup_factor"]
    energies = []

    def stop(rec):
        energies.append(rec.lyapunov_energy)
        if not math.isfinite(rec.lyapunov_energy) or rec.lyapunov_energy > factor * abs(energies_0[0]):
            return "energy blow-up"
        return None

    space = build_space(cfg)
    u0 = initial_state(cfg, space)
    energies_0 = [lyapunov_energy(space, u0, params)]
    try:
        s = simulate(cfg, out_dir, steps=[dt] * n, params=params, space=space, stop=stop)
        status = "divergent" if s["status"] == "stopped" else "stable"
        steps, t_final = s["steps"], s["t"]
    except (SolverFailure, NonFiniteState) as exc:
        status, steps, t_final = "divergent", len(energies), len(energies) * dt
        log.info("beta_s=%g: %s", beta, exc)
    e = np.array(energies_0 + energies)
    # increases after the first two steps, relative to the current energy
    d = (e[3:] - e[2:-1]) / np.abs(e[2:-1]) if len(e) > 3 else np.zeros(1)
    return {"beta_s": beta, "status": status, "steps": steps, "t_final": t_final,
            "E0": e[0], "E_final": e[-1], "max_rel_increase": float(np.max(d))}


def sweep(cfg, betas, out_dir, workers=None):
    _ensure_dir(out_dir)
    jobs = [(cfg.values, b, os.path.join(out_dir, f"beta_{b:g}")) for b in betas]
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    path = os.path.join(out_dir, "sweep_summary.csv")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            for r in results:
                w.writerow([r["beta_s"], r["status"], r["steps"], repr(float(r["t_final"])),
                            repr(float(r["E0"])), repr(float(r["E_final"])),
                            repr(float(r["max_rel_increase"]))])
    except OSError as exc:
        raise IoError(f"writing {path}: {exc}") from exc
    return results


# -- argument handling ---------------------------------------------------------
def parse_levels(text):
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..")
            lv = list(range(int(a), int(b) + 1))
        else:
            lv = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--levels expects 'a..b' or a comma list, got {text!r}") from None
    if not lv or min(lv) < 0:
        raise ConfigError(f"--levels gives no valid levels: {text!r}")
    return lv


def parse_betas(text):
    try:
        out = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--beta expects a comma list of numbers, got {text!r}") from None
    if not out or any(not math.isfinite(b) or b < 0 for b in out):
        raise ConfigError(f"--beta values must be finite and >= 0: {text!r}")
    return out


def make_parser():
    p = argparse.ArgumentParser(prog="tracephase", description="Phase-field simulations on implicit surfaces.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="configuration file")
        sp.add_argument("--full", action="store_true", help="long, fine-mesh variant of the preset (slow)")
        sp.add_argument("--out", help="output directory (overrides output.out_dir)")
        sp.add_argument("--seed", type=int, help="random seed (overrides seed)")

    common(sub.add_parser("run", help="run one simulation"))
    sp = sub.add_parser("validate", help="manufactured-solution convergence study")
    common(sp)
    sp.add_argument("--levels", help="refinement levels, e.g. 2..4")
    sp = sub.add_parser("sweep", help="stabilization-parameter sweep")
    common(sp)
    sp.add_argument("--beta", help="comma-separated beta_s values")
    sp.add_argument("--workers", type=int, help="worker processes")
    return p


def load_config(args):
    overrides = {}
    if args.out:
        overrides["output.out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfgmod.resolve(cfgmod.load_file(args.config), full=args.full, overrides=overrides)


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
        if args.full:
            log.warning("--full runs take hours to days of CPU time")
        if args.command == "run":
            s = simulate(cfg, cfg.out_dir)
            print(f"{s['status']}: {s['steps']} steps to t={s['t']:g} in {s['seconds']:.1f}s")
        elif args.command == "validate":
            levels = parse_levels(args.levels) if args.levels else cfg.get("validation.levels")
            if not levels:
                raise ConfigError("no levels: pass --levels or set validation.levels")
            if cfg.get("validation.t_end") is None:
                raise ConfigError("validation.t_end is required")
            res = validate_levels(cfg, levels, cfg.out_dir)
            for k, v in res["rates"].items():
                print(f"rates {k}: " + " ".join(f"{r:.2f}" for r in v))
        else:
            betas = parse_betas(args.beta) if args.beta else cfg.get("sweep.betas")
            if not betas or cfg.get("sweep.dt") is None or cfg.get("model.t_end") is None:
                raise ConfigError("sweep needs sweep.betas (or --beta), sweep.dt and model.t_end")
            for r in sweep(cfg, betas, cfg.out_dir, args.workers):
                print(f"beta_s={r['beta_s']:g}: {r['status']} after {r['steps']} steps, "
                      f"max relative energy increase {r['max_rel_increase']:.2e}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, NonFiniteState) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TracePhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
