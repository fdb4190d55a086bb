"""End-to-end acceptance runs.

Each test prints a single ``CRITERION n: PASS|FAIL`` line and the same lines are
repeated in the terminal summary. These runs take minutes; deselect them with
``-m "not slow"`` during development.
"""
import math
import time

import numpy as np
import pytest

from tracephase import cli
from tracephase.config import CELL_AC_SCHEDULE, SPHERE_AC_SCHEDULE, resolve
from tracephase.diagnostics import phase_area_fraction, read_diagnostics
from tracephase.fem import TraceSpace
from tracephase.geometry import ImplicitSurface
from tracephase.models import AllenCahn, CahnHilliard, ModelParams, step_sizes

pytestmark = pytest.mark.slow


def fmt(xs):
    return "[" + ", ".join(f"{x:.3g}" for x in xs) + "]"


def test_ac_manufactured_convergence(tmp_path, verdict):
    cfg = resolve(overrides={"experiment": "ac_validation"})
    t0 = time.perf_counter()
    res = cli.validate_levels(cfg, [2, 3, 4], str(tmp_path))
    r_inf, r_2 = res["rates"]["u_LinfL2"], res["rates"]["u_L2L2"]
    ok = min(r_inf + r_2) >= 1.8
    verdict(1, ok, f"rates LinfL2 {fmt(r_inf)} L2L2 {fmt(r_2)} (need >= 1.8), "
                   f"{time.perf_counter() - t0:.0f}s")


def test_ch_manufactured_convergence(tmp_path, verdict):
    cfg = resolve(overrides={"experiment": "ch_validation"})
    t0 = time.perf_counter()
    r = cli.validate_levels(cfg, [2, 3, 4], str(tmp_path))["rates"]
    ok = (min(r["u_LinfL2"] + r["u_L2L2"] + r["mu_L2L2"]) >= 1.8
          and all(0.7 <= x <= 1.5 for x in r["mu_LinfL2"]))
    verdict(2, ok, f"c LinfL2 {fmt(r['u_LinfL2'])} c L2L2 {fmt(r['u_L2L2'])} "
                   f"mu L2L2 {fmt(r['mu_L2L2'])} (need >= 1.8), "
                   f"mu LinfL2 {fmt(r['mu_LinfL2'])} (need 0.7..1.5), {time.perf_counter() - t0:.0f}s")


def test_ch_mass_conservation(tmp_path, verdict):
    cfg = resolve(overrides={"experiment": "sphere_ch", "mesh.level": 4, "model.epsilon": 0.02, "seed": 3,
                             "model.t_end": 200.0})
    steps = cfg.schedule()[:200]
    assert len(steps) == 200
    cli.simulate(cfg, str(tmp_path), steps=steps)
    m = read_diagnostics(tmp_path / "diagnostics.csv")["mass"]
    drift = np.max(np.abs(m - m[0])) / abs(m[0])
    verdict(3, drift <= 1e-8, f"relative mass drift {drift:.2e} over 200 steps (need <= 1e-8)")


def _sweep(tmp_path, model, dt, betas):
    cfg = resolve(overrides={"experiment": "beta_sweep", "model": model, "model.epsilon": 0.01,
                             "mesh.level": 4, "sweep.dt": dt, "model.t_end": 500.0})
    return {r["beta_s"]: r for r in cli.sweep(cfg, betas, str(tmp_path / model), workers=1)}


def test_energy_stability_sweep(tmp_path, verdict):
    ac = _sweep(tmp_path, "allen_cahn", 10.0, [0.0, 1.0])
    ch = _sweep(tmp_path, "cahn_hilliard", 1.0, [0.0, 1.0])
    parts = []
    ok = True
    for name, res, n in (("AC", ac, 50), ("CH", ch, 500)):
        bad, good = res[0.0], res[1.0]
        ok_bad = bad["status"] == "divergent"
        ok_good = (good["status"] == "stable" and good["steps"] == n
                   and good["max_rel_increase"] <= 1e-8)
        ok = ok and ok_bad and ok_good
        parts.append(f"{name} beta=0 {bad['status']} at step {bad['steps']}, beta=1 {good['status']} "
                     f"max rel increase {good['max_rel_increase']:.2e}")
    verdict(4, ok, "; ".join(parts) + " (need divergent / non-increasing within 1e-8)")


def test_interface_width_scaling(tmp_path, verdict):
    base = {"experiment": "custom", "model": "allen_cahn", "mesh.level": 6, "domain.cells": [3, 3, 3],
            "initial_condition": "linear_x3_plus_half"}
    space = None
    width = {}
    for eps, t_end in ((0.02, 30.0), (0.01, 60.0)):
        cfg = resolve(overrides=dict(base, **{"model.epsilon": eps, "model.dt_schedule": [[t_end, 0.25]],
                                              "model.t_end": t_end, "output.csv_every": 40}))
        space = space or cli.build_space(cfg)
        cli.simulate(cfg, str(tmp_path / f"eps{eps}"), space=space)
        width[eps] = read_diagnostics(tmp_path / f"eps{eps}" / "diagnostics.csv")["iface_width"][-1]
    ratio = width[0.02] / width[0.01]
    across = width[0.01] / space.h
    ok = 1.7 <= ratio <= 2.3 and across >= 4
    verdict(5, ok, f"widths {width[0.02]:.4f} / {width[0.01]:.4f}, ratio {ratio:.3f} (need 1.7..2.3), "
                   f"{across:.2f} elements across (need >= 4)")


def _sphere_ac_coarsening(seed=0):
    space = TraceSpace(ImplicitSurface.sphere(), 4)
    ac = AllenCahn(space, ModelParams(epsilon=0.05, dt=1.0))
    ac.start(space.random_field(seed))
    frac, t = [], []
    for dt in step_sizes(SPHERE_AC_SCHEDULE, 22560.0):
        frac.append(phase_area_fraction(space, ac.step(dt).u))
        t.append(ac.state.t)
        if min(frac[-1], 1 - frac[-1]) < 0.02:
            break
    major = np.maximum(frac, 1 - np.asarray(frac))
    onset = int(np.argmax(major > 0.6)) if np.any(major > 0.6) else len(major)
    tail = major[onset:]
    drawdown = float(np.max(np.maximum.accumulate(tail) - tail)) if len(tail) else math.inf
    return 1 - major[-1], t[-1], t[min(onset, len(t) - 1)], drawdown


def _cell_ac_equilibrium(seed=1):
    space = TraceSpace(ImplicitSurface.cell(), 4, (3, 2, 2))
    ac = AllenCahn(space, ModelParams(epsilon=0.05, dt=1.0))
    ac.start(space.random_field(seed))
    frac, rate = [], math.inf
    for dt in step_sizes(CELL_AC_SCHEDULE, 23000.0):
        prev = ac.state.u_k
        u = ac.step(dt).u
        frac.append(phase_area_fraction(space, u))
        rate = space.l2_norm(space.eval_surface(u - prev)) / dt
        if rate < 1e-6:
            break
    spread = float(np.ptp(frac[-50:]))
    return frac[-1], rate, ac.state.t, spread


def _sphere_ch_spinodal(seed=0):
    space = TraceSpace(ImplicitSurface.sphere(), 4)
    ch = CahnHilliard(space, ModelParams(epsilon=0.02, dt=0.01))
    ch.start(space.random_field(seed))
    ranges = {}
    for _ in range(100):
        u = ch.step(0.01).u
        v = space.triangle_vertex_values(u)
        ranges[round(ch.state.t, 2)] = (v.min(), v.max())
    return ranges[0.05], ranges[1.0], phase_area_fraction(space, u)


def test_qualitative_phase_behaviour(verdict):
    minority, t_end, t_onset, drawdown = _sphere_ac_coarsening()
    ok_a = minority < 0.02 and drawdown <= 5e-3
    early, late, frac = _sphere_ch_spinodal()
    ok_c = (late[0] <= 0.02 and late[1] >= 0.98 and late[1] - late[0] > early[1] - early[0]
            and 0.3 <= frac <= 0.7)
    pinned, rate, t_eq, spread = _cell_ac_equilibrium()
    ok_b = rate < 1e-6 and 0.02 < pinned < 0.98 and spread <= 1e-3
    verdict(6, ok_a and ok_b and ok_c,
            f"(a) minority {minority:.4f} at t={t_end:g}, onset t={t_onset:g}, drawdown {drawdown:.1e}; "
            f"(b) fraction {pinned:.4f} with rate {rate:.1e} at t={t_eq:g}; "
            f"(c) range t=0.05 [{early[0]:.3f}, {early[1]:.3f}] -> t=1 [{late[0]:.3f}, {late[1]:.3f}], "
            f"fraction {frac:.3f}")


def test_sphere_area_order(verdict):
    err = [abs(TraceSpace(ImplicitSurface.sphere(), lev).gamma.area - 4 * math.pi) for lev in (3, 4, 5)]
    r = cli.rates(err)
    verdict(7, min(r) >= 1.8, f"area errors {fmt(err)}, orders {fmt(r)} (need >= 1.8)")


def test_preset_determinism(tmp_path, verdict):
    cfg = resolve(overrides={"experiment": "sphere_ac", "seed": 11})
    for name in ("a", "b"):
        cli.simulate(cfg, str(tmp_path / name))
    same = (tmp_path / "a/diagnostics.csv").read_bytes() == (tmp_path / "b/diagnostics.csv").read_bytes()
    verdict(8, same, "sphere_ac preset rerun diagnostics.csv bit-identical" if same else "diagnostics differ")
