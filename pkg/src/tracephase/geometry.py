"""Implicitly defined closed surfaces.

A surface is the zero level set of a scalar function ``phi`` on an
axis-aligned bounding box.  All evaluators are vectorized over the
leading axes of an ``(..., 3)`` array of points.

Built-in shapes
---------------
``sphere``
    ``phi(x) = |x - center| - radius``.
``spindle``
    ``16 (x2^2 + x3^2) - cos^2(pi x1 / 10)`` for ``x1 <= 5`` and ``25``
    beyond.  Maximum radius 0.25, tips at ``x1 = +-5``.
``cell``
    ``x1^2/4 + x2^2 + 4 x3^2 / (1 + sin(pi x1)/2)^2 - 1``.

All built-ins are negative inside and positive outside.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateGradient, NoConvergence

# default boxes, [xmin, xmax, ymin, ymax, zmin, zmax]
SPHERE_BOX = (-5 / 3, 5 / 3, -5 / 3, 5 / 3, -5 / 3, 5 / 3)
SPINDLE_BOX = (-5.0, 5.0, -4 / 3, 4 / 3, -4 / 3, 4 / 3)
CELL_BOX = (-2.0, 2.0, -4 / 3, 4 / 3, -4 / 3, 4 / 3)

DEFAULT_C0 = 1e-3


def _sphere_phi(x, radius, center):
    return np.linalg.norm(x - center, axis=-1) - radius


def _sphere_grad(x, radius, center):
    d = x - center
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(r > 0, d / np.where(r > 0, r, 1.0), 0.0)
    return g


def _spindle_phi(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    inner = 16.0 * (x2**2 + x3**2) - np.cos(np.pi * x1 / 10) ** 2
    return np.where(x1 <= 5.0, inner, 25.0)


def _spindle_grad(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    g = np.stack(
        [np.pi / 10 * np.sin(np.pi * x1 / 5), 32.0 * x2, 32.0 * x3], axis=-1
    )
    return np.where((x1 <= 5.0)[..., None], g, 0.0)


def _cell_phi(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    s = 1.0 + 0.5 * np.sin(np.pi * x1)
    return 0.25 * x1**2 + x2**2 + 4.0 * x3**2 / s**2 - 1.0


def _cell_grad(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    s = 1.0 + 0.5 * np.sin(np.pi * x1)
    d1 = 0.5 * x1 - 4.0 * np.pi * x3**2 * np.cos(np.pi * x1) / s**3
    return np.stack([d1, 2.0 * x2, 8.0 * x3 / s**2], axis=-1)


@dataclass(frozen=True)
class SurfacePoint:
    x: np.ndarray
    n: np.ndarray


@dataclass(frozen=True)
class ImplicitSurface:
    """Level-set description of a closed surface.

    Use the constructors :meth:`sphere`, :meth:`spindle`, :meth:`cell`
    or :meth:`custom` rather than building one directly.
    """

    kind: str
    box: tuple
    phi_fn: Callable = field(repr=False)
    grad_fn: Callable = field(repr=False)
    radius: Optional[float] = None
    center: Optional[tuple] = None
    c0: float = DEFAULT_C0

    # -- constructors -------------------------------------------------
    @classmethod
    def sphere(cls, radius=1.0, center=(0.0, 0.0, 0.0), box=SPHERE_BOX, c0=DEFAULT_C0):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        c = np.asarray(center, dtype=float)
        return cls(
            "sphere",
            _check_box(box),
            lambda x: _sphere_phi(x, radius, c),
            lambda x: _sphere_grad(x, radius, c),
            radius=float(radius),
            center=tuple(float(v) for v in c),
            c0=c0,
        )

    @classmethod
    def spindle(cls, box=SPINDLE_BOX, c0=DEFAULT_C0):
        return cls("spindle", _check_box(box), _spindle_phi, _spindle_grad, c0=c0)

    @classmethod
    def cell(cls, box=CELL_BOX, c0=DEFAULT_C0):
        return cls("cell", _check_box(box), _cell_phi, _cell_grad, c0=c0)

    @classmethod
    def custom(cls, phi, grad_phi, box, c0=DEFAULT_C0):
        return cls("custom", _check_box(box), phi, grad_phi, c0=c0)

    @classmethod
    def from_kind(cls, kind, box=None, radius=1.0, center=(0.0, 0.0, 0.0)):
        if kind == "sphere":
            return cls.sphere(radius, center, box=box or SPHERE_BOX)
        if kind == "spindle":
            return cls.spindle(box=box or SPINDLE_BOX)
        if kind == "cell":
            return cls.cell(box=box or CELL_BOX)
        raise ValueError(f"unknown surface kind {kind!r}")

    # -- evaluation ---------------------------------------------------
    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return self.phi_fn(self._clamp(x))

    def grad_phi(self, x):
        """Analytic gradient; the zero vector at removable singular points."""
        x = np.asarray(x, dtype=float)
        return np.asarray(self.grad_fn(self._clamp(x)), dtype=float)

    def is_degenerate(self, x):
        return np.linalg.norm(self.grad_phi(x), axis=-1) < self.c0

    def normal(self, x):
        """Normalized gradient ``grad phi / |grad phi|``.

        Raises
        ------
        DegenerateGradient
            If ``|grad phi| < c0`` at any of the points.
        """
        g = self.grad_phi(x)
        nrm = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(nrm < self.c0):
            raise DegenerateGradient(
                f"|grad phi| below c0={self.c0} at {int(np.sum(nrm < self.c0))} point(s)"
            )
        return g / nrm

    def project(self, x, max_iter=50, tol=1e-12):
        """Quasi-normal projection onto the zero level set.

        Iterates ``p <- p - phi(p) grad phi(p) / |grad phi(p)|^2`` with step
        halving whenever ``|phi|`` does not decrease.  Works on a single
        point or an ``(n, 3)`` array.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        p = np.atleast_2d(x).copy()
        val = self.phi(p)
        active = np.abs(val) > tol
        it = 0
        while np.any(active):
            if it >= max_iter:
                raise NoConvergence(
                    f"projection did not reach |phi| <= {tol} in {max_iter} iterations",
                    x=p[0] if single else p,
                    residual=float(np.max(np.abs(val))),
                    iterations=it,
                )
            idx = np.flatnonzero(active)
            q, v = p[idx], val[idx]
            g = self.grad_phi(q)
            g2 = np.einsum("ij,ij->i", g, g)
            if np.any(g2 < self.c0**2):
                raise DegenerateGradient("projection hit a degenerate gradient")
            step = (v / g2)[:, None] * g
            damp = np.ones(len(idx))
            for _ in range(30):
                trial = q - damp[:, None] * step
                tv = self.phi(trial)
                bad = np.abs(tv) >= np.abs(v)
                if not np.any(bad):
                    break
                damp[bad] *= 0.5
            p[idx] = trial
            val[idx] = tv
            active = np.abs(val) > tol
            it += 1
        return p[0] if single else p

    def closest_point(self, x, max_iter=50, tol=1e-12) -> SurfacePoint:
        p = self.project(x, max_iter=max_iter, tol=tol)
        return SurfacePoint(p, self.normal(p))

    # -- checks -------------------------------------------------------
    def check_gradient_bound(self, n_samples=10_000, width=None, seed=0):
        """Sample points near the surface and return the minimum ``|grad phi|``.

        Points come from a scrambled Sobol sequence on the box and are kept
        when ``|phi| <= width``.
        """
        from scipy.stats import qmc

        lo, hi = self.lower, self.upper
        width = width if width is not None else 0.05 * float(np.min(hi - lo))
        pts = qmc.Sobol(3, seed=seed).random(2 ** int(np.ceil(np.log2(n_samples * 8))))
        pts = lo + pts * (hi - lo)
        near = pts[np.abs(self.phi(pts)) <= width]
        return float(np.min(np.linalg.norm(self.grad_phi(near), axis=-1)))

    def check_box_clearance(self, n_per_edge=41, tol=1e-12):
        """True when ``phi >= -tol`` on the whole box boundary (sampled).

        The spindle tips touch the faces ``x1 = +-5`` of the default box,
        so touching within ``tol`` is accepted; crossing is not.
        """
        lo, hi = self.lower, self.upper
        s = np.linspace(0.0, 1.0, n_per_edge)
        u, v = np.meshgrid(s, s, indexing="ij")
        u, v = u.ravel(), v.ravel()
        faces = []
        for axis in range(3):
            a, b = [k for k in range(3) if k != axis]
            for side in (lo[axis], hi[axis]):
                p = np.empty((u.size, 3))
                p[:, axis] = side
                p[:, a] = lo[a] + u * (hi[a] - lo[a])
                p[:, b] = lo[b] + v * (hi[b] - lo[b])
                faces.append(p)
        return bool(np.all(self.phi(np.concatenate(faces)) >= -tol))

    @property
    def lower(self):
        return np.array(self.box[0::2])

    @property
    def upper(self):
        return np.array(self.box[1::2])

    def _clamp(self, x):
        return np.clip(x, self.lower, self.upper)


def _check_box(box):
    box = tuple(float(v) for v in box)
    if len(box) != 6 or not all(box[2 * i] < box[2 * i + 1] for i in range(3)):
        raise ValueError(f"invalid box {box}")
    return box
