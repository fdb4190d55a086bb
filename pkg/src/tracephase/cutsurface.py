"""Discrete surface ``Gamma_h`` and its quadrature.

``Gamma_h`` is the zero set of the piecewise linear interpolant of the
level set on the once (red) refined band: every band tetrahedron is split
into eight children through its edge midpoints and each child is cut by
marching tetrahedra.  The discrete normal ``n_h`` is the normalized
gradient of the quadratic interpolant of the level set on the parent
tetrahedron, which uses the same ten nodal values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradient
from .mesh import TET_EDGES, BackgroundMesh, Band
from .quadrature import triangle_rule

# children of the red refinement, local node numbering 0-3 vertices,
# 4..9 midpoints of edges (01, 02, 03, 12, 13, 23)
_CORNERS = np.array([(0, 4, 5, 6), (1, 4, 7, 8), (2, 5, 7, 9), (3, 6, 8, 9)])
_OCTA = {
    (4, 9): [(4, 9, 5, 6), (4, 9, 6, 8), (4, 9, 8, 7), (4, 9, 7, 5)],
    (5, 8): [(5, 8, 4, 6), (5, 8, 6, 9), (5, 8, 9, 7), (5, 8, 7, 4)],
    (6, 7): [(6, 7, 4, 5), (6, 7, 5, 9), (6, 7, 9, 8), (6, 7, 8, 4)],
}
_DIAGONALS = list(_OCTA)
CHILDREN = np.stack(
    [np.concatenate([_CORNERS, np.array(_OCTA[d])]) for d in _DIAGONALS]
)  # (3, 8, 4)


@dataclass(frozen=True)
class DiscreteSurface:
    """Triangulated ``Gamma_h`` with flattened quadrature data.

    Quadrature arrays are indexed by quadrature point ``q``:
    ``qx`` positions, ``qw`` weights, ``qtet`` band-local parent tet,
    ``qlam`` barycentric coordinates in the parent, ``qn`` the discrete
    normal ``n_h``.
    """

    triangles: np.ndarray  # (nt, 3, 3)
    parent: np.ndarray  # (nt,) band-local parent index
    areas: np.ndarray
    qx: np.ndarray
    qw: np.ndarray
    qtet: np.ndarray
    qlam: np.ndarray
    qn: np.ndarray
    dropped_area: float
    order: int

    @property
    def area(self):
        return float(np.sum(self.areas))

    @property
    def n_triangles(self):
        return len(self.triangles)


def red_children(nodes10):
    """Split tets given by their 10 nodes into 8 children.

    The interior octahedron is cut along its shortest diagonal.  Returns
    the local child connectivity, shape ``(m, 8, 4)``.
    """
    d = np.stack(
        [np.linalg.norm(nodes10[:, a] - nodes10[:, b], axis=1) for a, b in _DIAGONALS], axis=1
    )
    # ties broken toward the first diagonal, independent of rounding noise
    best = np.argmin(np.where(d <= d.min(axis=1, keepdims=True) * (1 + 1e-12), np.arange(3), 9), axis=1)
    return CHILDREN[best]


def extract_cut(points, values):
    """Marching tetrahedra on a batch of tets.

    Parameters
    ----------
    points : (m, 4, 3) array
    values : (m, 4) array
        Nodal values of a linear function; zero counts as negative.

    Returns
    -------
    tris : (k, 3, 3) array
        Triangles of the zero set, oriented so that their normal points
        toward positive values.
    owner : (k,) array
        Index of the tet each triangle came from.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    neg = values <= 0.0
    nneg = neg.sum(axis=1)
    tris, owner = [], []

    # one vertex on its own side
    single = np.flatnonzero((nneg == 1) | (nneg == 3))
    if single.size:
        nb = neg[single]
        lone_is_neg = nneg[single] == 1
        # index of the lone vertex
        lone = np.where(lone_is_neg, np.argmax(nb, axis=1), np.argmin(nb, axis=1))
        others = np.array([[j for j in range(4) if j != i] for i in range(4)])[lone]
        P, F = points[single], values[single]
        r = np.arange(len(single))
        pi, fi = P[r, lone], F[r, lone]
        tri = np.empty((len(single), 3, 3))
        for c in range(3):
            j = others[:, c]
            pj, fj = P[r, j], F[r, j]
            t = fi / (fi - fj)
            tri[:, c] = pi + t[:, None] * (pj - pi)
        tris.append(tri)
        owner.append(single)

    double = np.flatnonzero(nneg == 2)
    if double.size:
        nb = neg[double]
        srt = np.argsort(~nb, axis=1, kind="stable")  # negatives first
        a, b, c, d = srt.T
        P, F = points[double], values[double]
        r = np.arange(len(double))

        def cross(i, j):
            t = F[r, i] / (F[r, i] - F[r, j])
            return P[r, i] + t[:, None] * (P[r, j] - P[r, i])

        pac, pad, pbd, pbc = cross(a, c), cross(a, d), cross(b, d), cross(b, c)
        # quad pac-pad-pbd-pbc, split along the shorter diagonal
        d1 = np.linalg.norm(pac - pbd, axis=1)
        d2 = np.linalg.norm(pad - pbc, axis=1)
        use1 = (d1 <= d2)[:, None]
        t1 = np.where(use1[:, :, None], np.stack([pac, pad, pbd], 1), np.stack([pac, pad, pbc], 1))
        t2 = np.where(use1[:, :, None], np.stack([pac, pbd, pbc], 1), np.stack([pad, pbd, pbc], 1))
        tris += [t1, t2]
        owner += [double, double]

    if not tris:
        return np.empty((0, 3, 3)), np.empty(0, dtype=np.int64)
    tris = np.concatenate(tris)
    owner = np.concatenate(owner)
    # orient toward positive values
    P, F = points[owner], values[owner]
    posw = (F > 0).astype(float)
    negw = 1.0 - posw
    cp = (posw[:, :, None] * P).sum(1) / posw.sum(1, keepdims=True)
    cn = (negw[:, :, None] * P).sum(1) / negw.sum(1, keepdims=True)
    nrm = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    flip = np.einsum("ij,ij->i", nrm, cp - cn) < 0
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    # keep a deterministic order: by owner, then by generation order above
    s = np.argsort(owner, kind="stable")
    return tris[s], owner[s]


def triangle_areas(tris):
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)


def surface_quadrature(tris, order=2):
    """Quadrature points ``(k, nq, 3)`` and weights ``(k, nq)`` on triangles."""
    tris = np.asarray(tris, dtype=float)
    if tris.ndim == 2:
        tris = tris[None]
    bary, w = triangle_rule(order)
    pts = np.einsum("qi,kij->kqj", bary, tris)
    return pts, triangle_areas(tris)[:, None] * w[None, :]


class TetGeometry:
    """Per-tet affine data for a set of band tets."""

    def __init__(self, mesh: BackgroundMesh, band: Band):
        p = mesh.vertices[mesh.tets[band.tet_ids]]
        self.p0 = p[:, 0]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)
        Jinv = np.linalg.inv(J)
        g = np.empty((len(p), 4, 3))
        g[:, 1:] = Jinv
        g[:, 0] = -Jinv.sum(axis=1)
        self.grad_lam = g  # gradients of the barycentric coordinates
        self.jinv = Jinv
        self.volume = np.abs(np.linalg.det(J)) / 6.0
        self.phi10 = band.phi_nodes
        e = p[:, TET_EDGES[:, 1]] - p[:, TET_EDGES[:, 0]]
        longest = np.argmax(np.einsum("ijk,ijk->ij", e, e), axis=1)
        self.longest_edge = e[np.arange(len(p)), longest]
        self.size = band.h

    def barycentric(self, x, tet):
        lam = np.einsum("qij,qj->qi", self.jinv[tet], x - self.p0[tet])
        return np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)

    def p2_gradient(self, lam, tet):
        """Gradient of the quadratic interpolant of the level set."""
        v = self.phi10[tet]
        gl = self.grad_lam[tet]
        g = np.einsum("q,qk->qk", v[:, 0] * (4 * lam[:, 0] - 1), gl[:, 0])
        for i in range(1, 4):
            g += (v[:, i] * (4 * lam[:, i] - 1))[:, None] * gl[:, i]
        for e, (a, b) in enumerate(TET_EDGES):
            g += (4 * v[:, 4 + e])[:, None] * (lam[:, a, None] * gl[:, b] + lam[:, b, None] * gl[:, a])
        return g

    def normal(self, lam, tet, tol=1e-12):
        """Discrete normal at points given by barycentric coordinates.

        Points where the quadratic interpolant has a vanishing gradient are
        nudged by ``1e-10 h`` along the tet's longest edge once.
        """
        g = self.p2_gradient(lam, tet)
        nrm = np.linalg.norm(g, axis=1)
        bad = nrm < tol
        if np.any(bad):
            ib = np.flatnonzero(bad)
            shift = 1e-10 * self.size * self.longest_edge[tet[ib]]
            shift /= np.linalg.norm(self.longest_edge[tet[ib]], axis=1, keepdims=True)
            dlam = np.einsum("qij,qj->qi", self.jinv[tet[ib]], shift)
            lam2 = lam[ib].copy()
            lam2[:, 1:] += dlam
            lam2[:, 0] -= dlam.sum(axis=1)
            g[ib] = self.p2_gradient(lam2, tet[ib])
            nrm[ib] = np.linalg.norm(g[ib], axis=1)
            if np.any(nrm[ib] < tol):
                raise DegenerateGradient("discrete normal undefined: P2 level-set gradient vanishes")
        return g / nrm[:, None]


def build_surface(mesh: BackgroundMesh, band: Band, geom: TetGeometry = None, order=2):
    """Extract ``Gamma_h`` from the band and set up its quadrature."""
    geom = geom or TetGeometry(mesh, band)
    nodes = mesh.nodes10(band.tet_ids)
    local = red_children(nodes)  # (m, 8, 4)
    m = len(nodes)
    r = np.arange(m)[:, None, None]
    cpts = nodes[r, local].reshape(-1, 4, 3)
    cval = band.phi_nodes[r, local].reshape(-1, 4)
    tris, owner = extract_cut(cpts, cval)
    parent = owner // 8
    areas = triangle_areas(tris)
    eps = 1e-14 * band.h**2
    keep = areas >= eps
    dropped = float(np.sum(areas[~keep]))
    tris, parent, areas = tris[keep], parent[keep], areas[keep]

    qx, qw = surface_quadrature(tris, order)
    nq = qx.shape[1]
    qx = qx.reshape(-1, 3)
    qw = qw.ravel()
    qtet = np.repeat(parent, nq)
    qlam = geom.barycentric(qx, qtet)
    qn = geom.normal(qlam, qtet)
    return DiscreteSurface(tris, parent, areas, qx, qw, qtet, qlam, qn, dropped, order)


def surface_area(surface: DiscreteSurface):
    return surface.area
