"""Allen-Cahn and Cahn-Hilliard time steppers on a trace space.

Both models use the double-well ``f0(u) = xi/4 u^2 (1-u)^2`` with wells at
0 and 1.  Time stepping is BDF2 with a linearly extrapolated nonlinearity
and the ``beta_s`` second-difference stabilization.  The first step, and
the first step after any change of the time step, is backward Euler with
constant extrapolation and the first-order stabilizer
``beta_s M (u^1 - u^0)``.

The nonlinear term ``int f0'(u_h) v ds`` is by default integrated with the
surface quadrature (exact composition).  ``nonlinearity="nodal"`` uses
``M f0'(u)`` with nodal values instead, ``"lumped"`` the row-summed mass.

Allen-Cahn, ``k >= 2``::

    [(3/(2dt) + beta_s) M + alpha eps^2 A + eps^2 h S] eta^k
        = M[(4 eta^{k-1} - eta^{k-2})/(2dt) + beta_s (2 eta^{k-1} - eta^{k-2})
            - alpha (2 f0'(eta^{k-1}) - f0'(eta^{k-2}))] + b_g

Cahn-Hilliard, unknowns ``(c^k, mu^k)``::

    3 rho/(2dt) M c + (A_w + h S) mu          = rho/(2dt) M (4c^{k-1} - c^{k-2}) + b_g
    -(beta_s M + eps^2 A + eps^2 h S) c + M mu = M f~0'  - beta_s M (2c^{k-1} - c^{k-2})

with ``A_w`` the stiffness weighted by the mobility at the extrapolated
concentration ``2c^{k-1} - c^{k-2}``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NonFiniteState
from .solvers import AC_DEFAULT, CH_DEFAULT, LinearSolver, SolverConfig, solve_block_2x2

MODELS = ("allen_cahn", "cahn_hilliard")
NONLINEARITY = ("quadrature", "nodal", "lumped")


@dataclass(frozen=True)
class ModelParams:
    epsilon: float
    alpha: float = 1.0
    rho: float = 1.0
    xi: float = 1.0
    beta_s: float = 1.0
    dt: float = 1.0
    nonlinearity: str = "quadrature"

    def __post_init__(self):
        for name in ("epsilon", "alpha", "rho", "xi", "dt"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.beta_s) and self.beta_s >= 0):
            raise ConfigError(f"beta_s must be >= 0, got {self.beta_s}")
        if self.nonlinearity not in NONLINEARITY:
            raise ConfigError(f"nonlinearity must be one of {NONLINEARITY}, got {self.nonlinearity!r}")


def f0(u, xi=1.0):
    u = np.asarray(u, dtype=float)
    return 0.25 * xi * u**2 * (1.0 - u) ** 2


def f0_prime(u, xi=1.0):
    u = np.asarray(u, dtype=float)
    return 0.5 * xi * u * (1.0 - u) * (1.0 - 2.0 * u)


def f0_second(u, xi=1.0):
    u = np.asarray(u, dtype=float)
    return 0.5 * xi * (1.0 - 6.0 * u + 6.0 * u**2)


def mobility(c):
    """Degenerate mobility ``c (1 - c)`` with ``c`` clipped to ``[0, 1]``."""
    c = np.clip(np.asarray(c, dtype=float), 0.0, 1.0)
    return c * (1.0 - c)


def bdf2_time_derivative(u_k, u_km1, u_km2, dt):
    return (3.0 * u_k - 4.0 * u_km1 + u_km2) / (2.0 * dt)


def extrapolate(u_km1, u_km2):
    return 2.0 * u_km1 - u_km2


@dataclass
class StepperState:
    """Solution history; ``mu`` entries are only used by Cahn-Hilliard."""

    u_k: np.ndarray
    u_km1: Optional[np.ndarray] = None
    u_km2: Optional[np.ndarray] = None
    mu_k: Optional[np.ndarray] = None
    mu_km1: Optional[np.ndarray] = None
    k: int = 0
    t: float = 0.0
    # steps taken with the current time step since the last restart
    run: int = 0
    dt: Optional[float] = None
    # time at which the current run of equal steps began
    t_run: float = 0.0

    def push(self, u, dt, mu=None):
        self.u_km2, self.u_km1, self.u_k = self.u_km1, self.u_k, u
        if mu is not None:
            self.mu_km1, self.mu_k = self.mu_k, mu
        if dt != self.dt:
            self.run, self.t_run = 0, self.t
        self.run += 1
        self.dt = dt
        self.k += 1
        # t_run + run * dt rather than repeated addition keeps 100 * 0.01 == 1
        self.t = self.t_run + self.run * dt

    def next_time(self, dt):
        if dt == self.dt:
            return self.t_run + (self.run + 1) * dt
        return self.t + dt


@dataclass
class StepResult:
    u: np.ndarray
    mu: Optional[np.ndarray]
    iters: int
    residual: float
    bdf2: bool


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"{what} contains non-finite values")


class _Base:
    model = ""

    def __init__(self, space, params: ModelParams, solver: SolverConfig = None, forcing=None):
        self.space = space
        self.params = params
        self.forcing = forcing
        self.solver = LinearSolver(solver or self.default_solver)
        self.M = space.mass()
        self.A = space.stiffness()
        self.S = space.stabilization()
        self.h = space.h
        self.state: Optional[StepperState] = None
        self._mass_op = self.M
        if params.nonlinearity == "lumped":
            self._mass_op = sp.diags(np.asarray(self.M.sum(axis=1)).ravel())

    def _nonlinear(self, u):
        xi = self.params.xi
        if self.params.nonlinearity == "quadrature":
            return self.space.integrate_against_basis(f0_prime(self.space.eval_surface(u), xi))
        return self._mass_op @ f0_prime(u, xi)

    def _load(self, t):
        if self.forcing is None:
            return 0.0
        return self.space.load(self.forcing, t)

    def use_bdf2(self, dt):
        s = self.state
        return s.dt == dt and s.run >= 1 and s.u_km1 is not None

    def step(self, dt=None):
        dt = self.params.dt if dt is None else dt
        if not dt > 0:
            raise ConfigError(f"time step must be positive, got {dt}")
        res = self._step(dt, self.use_bdf2(dt))
        self.state.push(res.u, dt, res.mu)
        return res

    def run(self, schedule, t_end=None, callback=None):
        for dt in step_sizes(schedule, t_end):
            res = self.step(dt)
            if callback is not None and callback(self, res) is False:
                break
        return self.state


class AllenCahn(_Base):
    model = "allen_cahn"
    default_solver = AC_DEFAULT

    def __init__(self, space, params, solver=None, forcing=None):
        super().__init__(space, params, solver, forcing)
        self._K = {}

    def start(self, eta0, t0=0.0):
        eta0 = np.asarray(eta0, dtype=float).copy()
        _check_finite(eta0, "initial state")
        if eta0.shape != (self.space.n_dofs,):
            raise ValueError(f"initial state has {eta0.shape} entries, expected {self.space.n_dofs}")
        self.state = StepperState(eta0, t=t0, t_run=t0)
        return self.state

    def system_matrix(self, dt, bdf2):
        key = (dt, bdf2)
        if key not in self._K:
            p = self.params
            a = (1.5 if bdf2 else 1.0) / dt + p.beta_s
            K = a * self.M + p.alpha * p.epsilon**2 * self.A + p.epsilon**2 * self.h * self.S
            # keep at most the matrices of the current step size
            self._K = {k: v for k, v in self._K.items() if k[0] == dt}
            self._K[key] = K.tocsr()
        return self._K[key]

    def _step(self, dt, bdf2):
        p, s = self.params, self.state
        t = s.next_time(dt)
        if bdf2:
            e1, e2 = s.u_k, s.u_km1
            rhs = self.M @ ((4.0 * e1 - e2) / (2.0 * dt) + p.beta_s * extrapolate(e1, e2))
            rhs -= p.alpha * (2.0 * self._nonlinear(e1) - self._nonlinear(e2))
        else:
            rhs = self.M @ (s.u_k / dt + p.beta_s * s.u_k) - p.alpha * self._nonlinear(s.u_k)
        rhs = rhs + self._load(t)
        _check_finite(rhs, f"right-hand side at t={t:g}")
        x, stats = self.solver.solve(self.system_matrix(dt, bdf2), rhs, symmetric=True, x0=s.u_k)
        _check_finite(x, f"eta at t={t:g}")
        return StepResult(x, None, stats.iters, stats.final_residual, bdf2)


class CahnHilliard(_Base):
    model = "cahn_hilliard"
    default_solver = CH_DEFAULT

    def __init__(self, space, params, solver=None, forcing=None, mobility_fn: Callable = mobility):
        super().__init__(space, params, solver, forcing)
        self.mobility_fn = mobility_fn

    def start(self, c0, t0=0.0, mu0=None):
        c0 = np.asarray(c0, dtype=float).copy()
        _check_finite(c0, "initial state")
        if c0.shape != (self.space.n_dofs,):
            raise ValueError(f"initial state has {c0.shape} entries, expected {self.space.n_dofs}")
        if mu0 is None:
            mu0 = self.chemical_potential(c0)
        self.state = StepperState(c0, mu_k=np.asarray(mu0, dtype=float), t=t0, t_run=t0)
        return self.state

    def chemical_potential(self, c):
        """Discrete ``mu`` of a given ``c`` from the second equation without history terms."""
        p = self.params
        L = self.M + self.h * self.S
        rhs = self._nonlinear(c) + p.epsilon**2 * (self.A @ c + self.h * (self.S @ c))
        x, _ = LinearSolver(SolverConfig("cg", rel_tol=1e-12)).solve(L, rhs, symmetric=True)
        return x

    def _step(self, dt, bdf2):
        p, s = self.params, self.state
        t = s.next_time(dt)
        eps2 = p.epsilon**2
        if bdf2:
            c1, c2 = s.u_k, s.u_km1
            c_hat = extrapolate(c1, c2)
            K11 = (1.5 * p.rho / dt) * self.M
            b1 = (0.5 * p.rho / dt) * (self.M @ (4.0 * c1 - c2))
            K21 = -(p.beta_s * self.M + eps2 * self.A + eps2 * self.h * self.S)
            b2 = 2.0 * self._nonlinear(c1) - self._nonlinear(c2) - p.beta_s * (self.M @ c_hat)
        else:
            c_hat = s.u_k
            K11 = (p.rho / dt) * self.M
            b1 = (p.rho / dt) * (self.M @ s.u_k)
            K21 = -(p.beta_s * self.M + eps2 * self.A + eps2 * self.h * self.S)
            b2 = self._nonlinear(s.u_k) - p.beta_s * (self.M @ s.u_k)
        Aw = self.space.mobility_stiffness(c_hat, self.mobility_fn)
        K12 = Aw + self.h * self.S
        b1 = b1 + self._load(t)
        _check_finite(b1, f"right-hand side at t={t:g}")
        _check_finite(b2, f"right-hand side at t={t:g}")
        x0 = np.concatenate([s.u_k, s.mu_k]) if s.mu_k is not None else None
        c, mu, stats = solve_block_2x2(K11, K12, K21, self.M, b1, b2, solver=self.solver, x0=x0)
        _check_finite(c, f"c at t={t:g}")
        _check_finite(mu, f"mu at t={t:g}")
        return StepResult(c, mu, stats.iters, stats.final_residual, bdf2)


def make_stepper(model, space, params, solver=None, forcing=None):
    if model == "allen_cahn":
        return AllenCahn(space, params, solver, forcing)
    if model == "cahn_hilliard":
        return CahnHilliard(space, params, solver, forcing)
    raise ConfigError(f"model must be one of {MODELS}, got {model!r}")


def step_sizes(schedule, t_end=None):
    """Expand a piecewise-constant schedule ``[[t_end_i, dt_i], ...]`` into steps.

    Interval ``i`` runs from the previous end time to ``t_end_i``; its length
    must be a whole multiple of ``dt_i`` (to a relative ``1e-9``).  With
    ``t_end`` the expansion stops there, which must fall on a step boundary.
    """
    t0 = 0.0
    out = []
    for t1, dt in schedule:
        if dt <= 0 or t1 <= t0:
            raise ConfigError(f"bad schedule interval ({t0}, {t1}] with dt={dt}")
        n = (t1 - t0) / dt
        m = int(round(n))
        if abs(n - m) > 1e-9 * max(1.0, n):
            raise ConfigError(f"interval ({t0}, {t1}] is not a multiple of dt={dt}")
        out += [dt] * m
        t0 = t1
    if t_end is not None:
        times = np.cumsum(out)
        if t_end > times[-1] * (1 + 1e-12):
            raise ConfigError(f"t_end={t_end} beyond schedule end {times[-1]}")
        n = int(np.searchsorted(times, t_end * (1 - 1e-12)) + 1)
        if abs(times[n - 1] - t_end) > 1e-9 * max(1.0, t_end):
            raise ConfigError(f"t_end={t_end} does not fall on a step of the schedule")
        out = out[:n]
    return out


def with_dt(params: ModelParams, dt):
    return replace(params, dt=dt)
