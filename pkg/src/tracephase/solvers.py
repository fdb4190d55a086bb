"""Sparse linear solves with a checked residual contract.

Every solve recomputes ``||A x - b||`` with a fresh mat-vec and compares
it with ``max(rel_tol ||b||, abs_tol)``; Krylov methods are restarted from
the current iterate until the contract holds or ``max_iter`` is spent.
Preconditioners and factorizations are cached per matrix object, so
passing the same matrix again (the Allen-Cahn system for a fixed time
step) costs only the iterations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BreakdownError, ConfigError, NoConvergence

METHODS = ("cg", "bicgstab", "gmres", "direct")
PRECONDITIONERS = ("jacobi", "ilu", "none")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "cg"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int = 5000
    preconditioner: str = "jacobi"
    restart: int = 50
    ilu_drop_tol: float = 1e-8
    ilu_fill_factor: float = 30.0
    # keep the preconditioner of an earlier matrix of the same shape while
    # solves stay under this many iterations; 0 rebuilds it for every new matrix
    refresh_iters: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"solver.method must be one of {METHODS}, got {self.method!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(
                f"solver.preconditioner must be one of {PRECONDITIONERS}, got {self.preconditioner!r}"
            )
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("solver tolerances must be positive")
        if self.refresh_iters < 0:
            raise ConfigError("solver.refresh_iters must be >= 0")
        if self.max_iter < 1 or self.restart < 1:
            raise ConfigError("solver.max_iter and solver.restart must be >= 1")


AC_DEFAULT = SolverConfig("cg", preconditioner="jacobi")
CH_DEFAULT = SolverConfig("gmres", preconditioner="ilu", refresh_iters=25)


@dataclass(frozen=True)
class SolveStats:
    iters: int
    final_residual: float
    target: float


class LinearSolver:
    """Stateful front end that caches the preconditioner of the last matrix."""

    def __init__(self, config: SolverConfig = AC_DEFAULT):
        self.config = config
        self._matrix = None
        self._prec = None

    def solve(self, A, b, symmetric=False, x0=None):
        cfg = self.config
        A = A if sp.issparse(A) else sp.csr_matrix(A)
        b = np.asarray(b, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or b.shape != (n,):
            raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
        if cfg.method == "cg" and not symmetric:
            raise ConfigError("conjugate gradients requested for a matrix not flagged symmetric")
        bnorm = np.linalg.norm(b)
        if not np.isfinite(bnorm):
            raise BreakdownError("right-hand side is not finite")
        target = max(cfg.rel_tol * bnorm, cfg.abs_tol)
        if bnorm == 0.0:
            return np.zeros(n), SolveStats(0, 0.0, target)

        stale = (
            cfg.refresh_iters > 0 and cfg.method != "direct" and self._matrix is not None
            and A is not self._matrix and self._matrix.shape == A.shape
        )
        if stale:
            try:
                x, stats = self._iterate(A, b, self._prec, x0, target, cfg.refresh_iters)
                return x, stats
            except (NoConvergence, BreakdownError):
                pass
        prec = self._preconditioner(A)
        if cfg.method == "direct":
            x = prec(b)
            res = _residual(A, x, b)
            # one step of iterative refinement guards against mild ill-conditioning
            if res > target:
                x = x + prec(b - A @ x)
                res = _residual(A, x, b)
            if res > target:
                raise NoConvergence(
                    f"direct solve residual {res:.3e} above target {target:.3e}",
                    x=x, residual=res, iterations=1,
                )
            return x, SolveStats(1, res, target)

        return self._iterate(A, b, prec, x0, target, cfg.max_iter)

    def _iterate(self, A, b, prec, x0, target, max_iter):
        cfg = self.config
        n = A.shape[0]
        x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        M = None if prec is None else spla.LinearOperator((n, n), matvec=prec, dtype=float)
        iters = 0
        best_x, best_res = x, _residual(A, x, b)
        while iters < max_iter:
            count = [0]

            def cb(_):
                count[0] += 1

            budget = max_iter - iters
            # the scipy stopping test is on the (possibly preconditioned) recursive
            # residual, so aim a little lower and verify afterwards
            rtol = 0.5 * target / np.linalg.norm(b)
            if cfg.method == "cg":
                x, info = spla.cg(A, b, x0=x, rtol=rtol, atol=0.0, maxiter=budget, M=M, callback=cb)
            elif cfg.method == "bicgstab":
                x, info = spla.bicgstab(A, b, x0=x, rtol=rtol, atol=0.0, maxiter=budget, M=M, callback=cb)
            else:
                x, info = spla.gmres(
                    A, b, x0=x, rtol=rtol, atol=0.0, restart=cfg.restart,
                    maxiter=max(1, budget // cfg.restart), M=M, callback=cb, callback_type="pr_norm",
                )
            iters += max(count[0], 1)
            if info < 0:
                raise BreakdownError(f"{cfg.method} breakdown (info={info})")
            if not np.all(np.isfinite(x)):
                raise BreakdownError(f"{cfg.method} produced non-finite iterates")
            res = _residual(A, x, b)
            if res < best_res:
                best_x, best_res = x, res
            if res <= target:
                return x, SolveStats(iters, res, target)
        raise NoConvergence(
            f"{cfg.method} did not reach residual {target:.3e} in {iters} iterations "
            f"(best {best_res:.3e})",
            x=best_x, residual=best_res, iterations=iters,
        )

    def _preconditioner(self, A):
        if A is self._matrix:
            return self._prec
        cfg = self.config
        if cfg.method == "direct":
            lu = spla.splu(A.tocsc())
            prec = lu.solve
        elif cfg.preconditioner == "jacobi":
            d = A.diagonal()
            if np.any(d == 0):
                raise BreakdownError("zero diagonal entry, Jacobi preconditioner undefined")
            inv = 1.0 / d
            prec = lambda r: inv * r  # noqa: E731
        elif cfg.preconditioner == "ilu":
            ilu = spla.spilu(A.tocsc(), drop_tol=cfg.ilu_drop_tol, fill_factor=cfg.ilu_fill_factor)
            prec = ilu.solve
        else:
            prec = None
        self._matrix, self._prec = A, prec
        return prec


def _residual(A, x, b):
    return float(np.linalg.norm(A @ x - b))


def solve(A, b, config: SolverConfig = AC_DEFAULT, symmetric=False, x0=None):
    """One-shot solve; returns ``(x, stats)``."""
    return LinearSolver(config).solve(A, b, symmetric=symmetric, x0=x0)


def block_matrix(K11, K12, K21, K22):
    return sp.bmat([[K11, K12], [K21, K22]], format="csc")


def solve_block_2x2(K11, K12, K21, K22, b1, b2, config: SolverConfig = CH_DEFAULT, solver=None,
                    x0=None):
    """Solve the monolithic two-field system and split the result."""
    n = K11.shape[0]
    K = block_matrix(K11, K12, K21, K22)
    solver = solver or LinearSolver(config)
    x, stats = solver.solve(K, np.concatenate([b1, b2]), x0=x0)
    return x[:n], x[n:], stats
