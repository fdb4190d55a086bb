"""Energies, norms and phase observables of discrete fields on ``Gamma_h``."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import NoInterface
from .models import f0

CSV_HEADER = ("t", "E_lyap", "E_num", "mass", "phase_frac", "min_u", "max_u", "iface_width", "solver_iters")


def lyapunov_energy(space, u, params, nodal=False):
    """``int f0(u_h) + eps^2/2 |grad_Gamma u_h|^2 ds``.

    ``f0(u_h)`` is evaluated at the surface quadrature points; with ``nodal``
    the nodal interpolant of ``f0(u)`` is integrated instead.
    """
    if nodal:
        bulk = float(np.sum(space.mass() @ f0(u, params.xi)))
    else:
        bulk = space.integrate(f0(space.eval_surface(u), params.xi))
    return bulk + 0.5 * params.epsilon**2 * space.gradient_energy(u)


def numerical_energy_ac(space, eta_k, eta_km1, params):
    """Energy of the stabilized Allen-Cahn scheme, including the ``beta_s`` increment term."""
    d = space.eval_surface(eta_k - eta_km1)
    bulk = lyapunov_energy(space, eta_k, params) + params.beta_s * space.integrate(d * d)
    return params.alpha * bulk + params.epsilon**2 * space.h * space.normal_gradient_energy(eta_k)


def total_mass(space, c):
    return float(np.sum(space.mass() @ c))


def l2_error(space, u, exact, t):
    """``||u_h - u*(t)||`` on ``Gamma_h`` with ``exact(x, t)`` sampled at quadrature points."""
    return space.l2_norm(space.eval_surface(u) - exact(space.gamma.qx, t))


def error_norms(errors, dts):
    """Discrete ``L_inf(L2)`` and ``L2(L2)`` norms of per-step errors.

    ``errors[k]`` is the L2 error after step ``k`` (taken with step ``dts[k]``).
    """
    e = np.asarray(errors, dtype=float)
    dt = np.broadcast_to(np.asarray(dts, dtype=float), e.shape)
    return float(e.max()), float(np.sqrt(np.sum(dt * e**2) / np.sum(dt)))


def _superlevel_fraction(v, thr):
    """Fraction of each triangle where the linear interpolant of ``v`` exceeds ``thr``."""
    v = np.sort(v, axis=1)
    v0, v1, v2 = v[:, 0], v[:, 1], v[:, 2]
    out = np.zeros(len(v))
    out[v0 > thr] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        one = (v2 > thr) & (v1 <= thr)
        out[one] = ((v2 - thr) ** 2 / ((v2 - v0) * (v2 - v1)))[one]
        two = (v1 > thr) & (v0 <= thr)
        out[two] = (1.0 - (thr - v0) ** 2 / ((v1 - v0) * (v2 - v0)))[two]
    return out


def phase_area_fraction(space, u, threshold=0.5):
    """Share of ``Gamma_h`` where the P1 field ``u`` exceeds ``threshold``."""
    vals = space.triangle_vertex_values(u)
    areas = space.gamma.areas
    return float(np.sum(areas * _superlevel_fraction(vals, threshold)) / np.sum(areas))


def contour_length(space, u, level=0.5):
    """Length of the ``u = level`` polyline on ``Gamma_h`` (marching triangles)."""
    vals = space.triangle_vertex_values(u) - level
    # values within rounding of the level sit exactly on it, so an edge lying
    # on the curve is counted once (by the triangle on the positive side)
    vals[np.abs(vals) <= 1e-12 * max(1.0, float(np.abs(vals).max()))] = 0.0
    tris = space.gamma.triangles
    above = vals > 0
    cut = above.sum(axis=1) % 3 != 0
    if not np.any(cut):
        return 0.0
    v, p, a = vals[cut], tris[cut], above[cut]
    # the lone vertex is the one whose side differs from the other two
    lone = np.where(a.sum(axis=1) == 1, np.argmax(a, axis=1), np.argmin(a, axis=1))
    r = np.arange(len(v))
    i, j, k = lone, (lone + 1) % 3, (lone + 2) % 3
    pi, vi = p[r, i], v[r, i]

    def cross(m):
        s = vi / (vi - v[r, m])
        return pi + s[:, None] * (p[r, m] - pi)

    return float(np.sum(np.linalg.norm(cross(j) - cross(k), axis=1)))


def interface_width_estimate(space, u, low=0.05, high=0.95, level=0.5):
    """Transition area ``{low < u < high}`` divided by the length of ``{u = level}``.

    Raises
    ------
    NoInterface
        If the transition band or the level curve is empty.
    """
    vals = space.triangle_vertex_values(u)
    areas = space.gamma.areas
    band = float(np.sum(areas * (_superlevel_fraction(vals, low) - _superlevel_fraction(vals, high))))
    length = contour_length(space, u, level)
    if band <= 0.0 or length <= 0.0:
        raise NoInterface("no transition region between the phases")
    return band / length


@dataclass
class TimeSeriesRecord:
    t: float
    lyapunov_energy: float
    numerical_energy: float = math.nan
    total_mass: float = math.nan
    phase_area_fraction: float = math.nan
    min_u: float = math.nan
    max_u: float = math.nan
    interface_width_estimate: float = math.nan
    solver_iters: int = 0

    def row(self):
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def record(space, u, params, t, model, u_prev=None, iters=0):
    """Collect one diagnostics record for the state ``u`` at time ``t``."""
    rec = TimeSeriesRecord(t, lyapunov_energy(space, u, params), solver_iters=iters)
    if model == "allen_cahn" and u_prev is not None:
        rec.numerical_energy = numerical_energy_ac(space, u, u_prev, params)
    if model == "cahn_hilliard":
        rec.total_mass = total_mass(space, u)
    rec.phase_area_fraction = phase_area_fraction(space, u)
    # extremes of u_h on Gamma_h; nodal values off the surface carry no physics
    vals = space.triangle_vertex_values(u)
    rec.min_u, rec.max_u = float(vals.min()), float(vals.max())
    try:
        rec.interface_width_estimate = interface_width_estimate(space, u)
    except NoInterface:
        pass
    return rec


class DiagnosticsWriter:
    """Append-only CSV writer with a fixed header."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(CSV_HEADER)
        self._last_t = -math.inf

    def write(self, rec: TimeSeriesRecord):
        if not rec.t > self._last_t:
            raise ValueError(f"records must have increasing t ({rec.t} after {self._last_t})")
        self._last_t = rec.t
        self._csv.writerow(rec.row())
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path):
    """Load a diagnostics CSV into a dict of float arrays keyed by column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"unexpected header {rows[0]}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(CSV_HEADER))
    return {name: data[:, i] for i, name in enumerate(CSV_HEADER)}
