"""Trace finite element space: bulk P1 functions on the band, traced on ``Gamma_h``.

All surface integrals use the quadrature stored in
:class:`~tracephase.cutsurface.DiscreteSurface`; the normal-gradient
stabilization is a volume integral over whole band tetrahedra.
Assembly first reduces quadrature contributions to 4x4 element
matrices per band tet and then scatters them into a fixed CSR pattern,
so repeated assembly (the mobility-weighted stiffness) is cheap and the
summation order never changes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cutsurface import DiscreteSurface, TetGeometry, build_surface
from .errors import NegativeWeight
from .mesh import BackgroundMesh, Band, band_for_surface, build_initial_mesh, refine_toward_surface
from .quadrature import tet_rule

_A, _B = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
_A, _B = _A.ravel(), _B.ravel()


@dataclass(frozen=True)
class DofMap:
    vertex_ids: np.ndarray
    global_of_vertex: np.ndarray  # -1 off the band
    tet_dofs: np.ndarray  # (n_band, 4)

    @property
    def n_dofs(self):
        return len(self.vertex_ids)


def make_dofmap(mesh: BackgroundMesh, band: Band):
    g = np.full(mesh.n_vertices, -1, dtype=np.int64)
    g[band.vertex_ids] = np.arange(len(band.vertex_ids))
    return DofMap(band.vertex_ids, g, g[mesh.tets[band.tet_ids]])


class TraceSpace:
    """P1 trace space on a refined background mesh.

    Parameters
    ----------
    surface : ImplicitSurface
    level : int
        Refinement level toward the surface.
    cells : tuple of int
        Initial grid cells per axis (each split into six tetrahedra).
    surface_order, volume_order : int
        Quadrature orders on cut triangles and on band tetrahedra.
    """

    def __init__(self, surface, level, cells=(2, 2, 2), surface_order=2, volume_order=2,
                 max_tets=5_000_000):
        self.surface = surface
        self.level = level
        self.mesh = refine_toward_surface(
            build_initial_mesh(surface.box, cells), surface, level, max_tets=max_tets
        )
        self.band = band_for_surface(self.mesh, surface)
        self.h = self.band.h
        self.geom = TetGeometry(self.mesh, self.band)
        self.gamma: DiscreteSurface = build_surface(self.mesh, self.band, self.geom, surface_order)
        self.dofs = make_dofmap(self.mesh, self.band)
        self.volume_order = volume_order
        self._pattern()
        self._cache = {}

    @property
    def n_dofs(self):
        return self.dofs.n_dofs

    @property
    def nodes(self):
        return self.mesh.vertices[self.dofs.vertex_ids]

    # -- sparse pattern -------------------------------------------------
    def _pattern(self):
        td = self.dofs.tet_dofs
        n = self.n_dofs
        rows = td[:, _A].ravel()
        cols = td[:, _B].ravel()
        keys = rows * n + cols
        ukeys, inv = np.unique(keys, return_inverse=True)
        r, c = ukeys // n, ukeys % n
        self._inv = inv
        self._nnz = len(ukeys)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
        self._indices = c

    def _scatter(self, local):
        """CSR matrix from element matrices ``(n_band, 4, 4)``."""
        data = np.bincount(self._inv, weights=local.reshape(-1), minlength=self._nnz)
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()),
                             shape=(self.n_dofs, self.n_dofs))

    def _reduce(self, per_q, qtet):
        """Sum per-quadrature-point 4x4 blocks into element blocks."""
        nb = len(self.band.tet_ids)
        out = np.empty((nb, 16))
        flat = per_q.reshape(len(qtet), 16)
        for k in range(16):
            out[:, k] = np.bincount(qtet, weights=flat[:, k], minlength=nb)
        return out.reshape(nb, 4, 4)

    # -- surface data ---------------------------------------------------
    def _tangential_grads(self):
        if "tgrad" not in self._cache:
            g = self.gamma
            gl = self.geom.grad_lam[g.qtet]  # (nq, 4, 3)
            ndot = np.einsum("qak,qk->qa", gl, g.qn)
            self._cache["tgrad"] = gl - ndot[:, :, None] * g.qn[:, None, :]
        return self._cache["tgrad"]

    def _stiffness_blocks(self, keep):
        if "kq" in self._cache:
            return self._cache["kq"]
        tg = self._tangential_grads()
        kq = np.einsum("qak,qbk->qab", tg, tg)
        if keep:
            self._cache["kq"] = kq
        return kq

    # -- operators ------------------------------------------------------
    def mass(self):
        """``M_ij = int_{Gamma_h} psi_i psi_j ds``."""
        if "M" not in self._cache:
            g = self.gamma
            per_q = g.qw[:, None, None] * g.qlam[:, :, None] * g.qlam[:, None, :]
            self._cache["M"] = self._scatter(self._reduce(per_q, g.qtet))
        return self._cache["M"]

    def stiffness(self, weight=None):
        """Tangential stiffness, optionally weighted at quadrature points.

        ``weight`` is either ``None`` or an array with one value per surface
        quadrature point.
        """
        if weight is None and "A" in self._cache:
            return self._cache["A"]
        g = self.gamma
        w = g.qw
        if weight is not None:
            weight = np.asarray(weight, dtype=float)
            if np.any(weight < -1e-12):
                raise NegativeWeight(f"stiffness weight down to {weight.min():.3e}")
            w = w * weight
        kq = self._stiffness_blocks(keep=weight is not None)
        A = self._scatter(self._reduce(w[:, None, None] * kq, g.qtet))
        if weight is None:
            self._cache["A"] = A
        return A

    def mobility_stiffness(self, c_hat, mobility):
        """Stiffness weighted with ``mobility(c_hat)`` evaluated at quadrature points."""
        return self.stiffness(mobility(self.eval_surface(c_hat)))

    def _normal_derivatives(self):
        """Volume quadrature of the band: ``(tet, weights, n . grad psi_a)``."""
        if "nd" not in self._cache:
            bary, wref = tet_rule(self.volume_order)
            nb = len(self.band.tet_ids)
            tet = np.repeat(np.arange(nb), len(wref))
            n = self.geom.normal(np.tile(bary, (nb, 1)), tet)
            nd = np.einsum("qak,qk->qa", self.geom.grad_lam[tet], n)
            w = (self.geom.volume[:, None] * wref[None, :]).ravel()
            self._cache["nd"] = (tet, w, nd)
        return self._cache["nd"]

    def stabilization(self):
        """Normal-gradient volume term over whole band tetrahedra."""
        if "S" not in self._cache:
            tet, w, nd = self._normal_derivatives()
            per_q = w[:, None, None] * nd[:, :, None] * nd[:, None, :]
            self._cache["S"] = self._scatter(self._reduce(per_q, tet))
        return self._cache["S"]

    def gradient_energy(self, u):
        """``int_{Gamma_h} |grad_Gamma u_h|^2``, summed as nonnegative quadrature terms."""
        g = np.einsum("qak,qa->qk", self._tangential_grads(), u[self.dofs.tet_dofs[self.gamma.qtet]])
        return float(np.sum(self.gamma.qw * np.einsum("qk,qk->q", g, g)))

    def normal_gradient_energy(self, u):
        """``u^T S u`` computed pointwise, so it is never negative."""
        tet, w, nd = self._normal_derivatives()
        d = np.einsum("qa,qa->q", nd, u[self.dofs.tet_dofs[tet]])
        return float(np.sum(w * d * d))

    def load(self, g, t=0.0):
        """``b_i = int_{Gamma_h} g(x, t) psi_i ds``."""
        gam = self.gamma
        gv = np.broadcast_to(np.asarray(g(gam.qx, t), dtype=float), gam.qw.shape)
        return self.integrate_against_basis(gv)

    def integrate_against_basis(self, values_q):
        gam = self.gamma
        contrib = (gam.qw * values_q)[:, None] * gam.qlam
        rows = self.dofs.tet_dofs[gam.qtet]
        return np.bincount(rows.ravel(), weights=contrib.ravel(), minlength=self.n_dofs)

    # -- fields ---------------------------------------------------------
    def eval_surface(self, u):
        """P1 values of nodal vector ``u`` at the surface quadrature points."""
        gam = self.gamma
        return np.einsum("qa,qa->q", gam.qlam, u[self.dofs.tet_dofs[gam.qtet]])

    def interpolate(self, u, t=0.0, project=True):
        """Nodal interpolant of ``u(x, t)``.

        With ``project`` the function is extended off the surface as
        constant along quasi-normals: nodes are first projected onto the
        zero level set.
        """
        x = self.projected_nodes() if project else self.nodes
        return np.broadcast_to(np.asarray(u(x, t), dtype=float), (self.n_dofs,)).copy()

    def projected_nodes(self):
        if "proj" not in self._cache:
            self._cache["proj"] = self.surface.project(self.nodes)
        return self._cache["proj"]

    def random_field(self, seed, low=0.0, high=1.0):
        """i.i.d. uniform nodal values from a seeded PCG64 generator."""
        return np.random.Generator(np.random.PCG64(seed)).uniform(low, high, self.n_dofs)

    def l2_norm(self, values_q):
        return float(np.sqrt(np.sum(self.gamma.qw * values_q**2)))

    def integrate(self, values_q):
        return float(np.sum(self.gamma.qw * values_q))

    def triangle_vertex_values(self, u):
        """P1 values of ``u`` at the three vertices of every ``Gamma_h`` triangle."""
        if "tlam" not in self._cache:
            g = self.gamma
            x = g.triangles.reshape(-1, 3)
            tet = np.repeat(g.parent, 3)
            self._cache["tlam"] = (self.geom.barycentric(x, tet), tet)
        lam, tet = self._cache["tlam"]
        vals = np.einsum("qa,qa->q", lam, u[self.dofs.tet_dofs[tet]])
        return vals.reshape(-1, 3)
