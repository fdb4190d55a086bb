"""Tetrahedral background mesh of a box, refined toward a surface.

The box is split into a grid of cells, each cell into the six Kuhn
tetrahedra sharing its main diagonal.  Local refinement uses recursive
newest-vertex bisection on the Kuhn ordering; three bisection generations
turn a Kuhn tetrahedron into eight half-size Kuhn tetrahedra, so a
refinement *level* is three generations and all tets cut by the surface
end up congruent to the uniform grid of cell size ``h0 / 2**level``.
Conformity is restored after every pass by bisecting every tetrahedron
that carries a hanging edge midpoint.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBand, ResourceLimit

# local edges of a tetrahedron, in the order used for the 10-node layout
TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])

_KEY = np.int64(1) << 32


@dataclass(frozen=True)
class BackgroundMesh:
    vertices: np.ndarray  # (nv, 3)
    tets: np.ndarray  # (nt, 4), positively oriented
    generation: np.ndarray  # (nt,) bisection generation
    box: tuple
    cell_size: np.ndarray  # initial cell edge lengths, (3,)
    order: np.ndarray  # (nt, 4) bisection ordering
    tag: np.ndarray  # (nt,) bisection tag

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def level(self):
        """Refinement level per tet (three bisections per level)."""
        return self.generation // 3

    def signed_volumes(self, ids=None):
        t = self.tets if ids is None else self.tets[ids]
        p = self.vertices[t]
        return np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p[:, 3] - p[:, 0]) / 6.0

    def diameters(self, ids=None):
        t = self.tets if ids is None else self.tets[ids]
        p = self.vertices[t]
        e = p[:, TET_EDGES[:, 1]] - p[:, TET_EDGES[:, 0]]
        return np.sqrt(np.max(np.einsum("ijk,ijk->ij", e, e), axis=1))

    def box_sizes(self, ids=None):
        """Largest axis-aligned extent of each tet (the cell edge for Kuhn tets)."""
        t = self.tets if ids is None else self.tets[ids]
        p = self.vertices[t]
        return np.max(p.max(axis=1) - p.min(axis=1), axis=1)

    def nodes10(self, ids=None):
        """Coordinates of vertices and edge midpoints, shape ``(m, 10, 3)``."""
        t = self.tets if ids is None else self.tets[ids]
        p = self.vertices[t]
        mid = 0.5 * (p[:, TET_EDGES[:, 0]] + p[:, TET_EDGES[:, 1]])
        return np.concatenate([p, mid], axis=1)


@dataclass(frozen=True)
class Band:
    tet_ids: np.ndarray
    vertex_ids: np.ndarray
    phi_nodes: np.ndarray  # (n_band, 10) level-set values at vertices + edge midpoints
    h: float


def build_initial_mesh(box, cells=(2, 2, 2), mirrored=False):
    """Kuhn tessellation of ``box`` with ``cells`` grid cells per axis.

    Each cell is split into six tetrahedra around one of its diagonals.
    With ``mirrored`` neighbouring cells are reflections of each other;
    otherwise all cells share the diagonal direction ``(1, 1, 1)``.
    """
    box = tuple(float(v) for v in box)
    lo = np.array(box[0::2])
    hi = np.array(box[1::2])
    cells = np.asarray(cells, dtype=int)
    axes = [np.linspace(lo[i], hi[i], cells[i] + 1) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    # exact box corners (linspace already hits them, keep it explicit)
    stride = np.array([(cells[1] + 1) * (cells[2] + 1), cells[2] + 1, 1])

    ci, cj, ck = np.meshgrid(*(np.arange(c) for c in cells), indexing="ij")
    idx = np.stack([ci.ravel(), cj.ravel(), ck.ravel()], axis=1)
    # mirrored Kuhn cells: the diagonal direction flips with the parity of
    # the cell index, so the grid is symmetric about every interior grid plane
    flip = (idx % 2 == 0) if mirrored else np.zeros_like(idx, dtype=bool)
    start = ((idx + flip) * stride).sum(axis=1)
    sgn = np.where(flip, -1, 1) * stride
    order = []
    for perm in itertools.permutations(range(3)):
        step = np.concatenate([np.zeros((len(idx), 1), dtype=np.int64), np.cumsum(sgn[:, perm], axis=1)], axis=1)
        order.append(start[:, None] + step)
    order = np.stack(order, axis=1).reshape(-1, 4)
    return _make_mesh(
        vertices,
        order,
        np.full(len(order), 3, dtype=np.int64),
        np.zeros(len(order), dtype=np.int64),
        box,
        (hi - lo) / cells,
    )


def _make_mesh(vertices, order, tag, gen, box, cell_size):
    tets = order.copy()
    p = vertices[tets]
    vol = np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p[:, 3] - p[:, 0])
    neg = vol < 0
    tets[neg, 2], tets[neg, 3] = order[neg, 3], order[neg, 2]
    return BackgroundMesh(vertices, tets, gen, box, np.asarray(cell_size, dtype=float), order, tag)


class _Refiner:
    """Mutable bisection state; ``freeze`` returns an immutable mesh."""

    def __init__(self, mesh: BackgroundMesh, max_tets):
        self.vertices = [mesh.vertices]
        self.n_vertices = len(mesh.vertices)
        self.order = mesh.order.copy()
        self.tag = mesh.tag.copy()
        self.gen = mesh.generation.copy()
        self.mid_keys = np.empty(0, dtype=np.int64)
        self.mid_ids = np.empty(0, dtype=np.int64)
        self.max_tets = max_tets
        self.mesh = mesh

    def coords(self):
        if len(self.vertices) > 1:
            self.vertices = [np.concatenate(self.vertices)]
        return self.vertices[0]

    def _midpoints(self, a, b):
        """Vertex ids of edge midpoints, creating the missing ones."""
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * _KEY + hi
        ukeys, inv = np.unique(keys, return_inverse=True)
        pos = np.searchsorted(self.mid_keys, ukeys)
        pos_c = np.minimum(pos, max(len(self.mid_keys) - 1, 0))
        found = (pos < len(self.mid_keys)) & (self.mid_keys[pos_c] == ukeys) if len(self.mid_keys) else np.zeros(len(ukeys), bool)
        ids = np.empty(len(ukeys), dtype=np.int64)
        ids[found] = self.mid_ids[pos_c[found]]
        new = ~found
        n_new = int(new.sum())
        if n_new:
            xyz = self.coords()
            nk = ukeys[new]
            va, vb = nk // _KEY, nk % _KEY
            self.vertices.append(0.5 * (xyz[va] + xyz[vb]))
            ids[new] = np.arange(self.n_vertices, self.n_vertices + n_new)
            self.n_vertices += n_new
            allk = np.concatenate([self.mid_keys, nk])
            alli = np.concatenate([self.mid_ids, ids[new]])
            s = np.argsort(allk, kind="stable")
            self.mid_keys, self.mid_ids = allk[s], alli[s]
        return ids[inv]

    def bisect(self, mask):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return
        if self.max_tets is not None and len(self.order) + idx.size > self.max_tets:
            raise ResourceLimit(
                f"refinement would exceed mesh.max_tets={self.max_tets} "
                f"({len(self.order) + idx.size} tets)"
            )
        o = self.order[idx]
        k = self.tag[idx]
        z = self._midpoints(o[:, 0], o[np.arange(len(o)), k])
        c1 = o.copy()
        c2 = o.copy()
        for kk in (1, 2, 3):
            sel = k == kk
            if not np.any(sel):
                continue
            c1[sel, kk] = z[sel]
            c2[sel, :kk] = o[sel, 1 : kk + 1]
            c2[sel, kk] = z[sel]
        newtag = np.where(k > 1, k - 1, 3)
        newgen = self.gen[idx] + 1
        keep = ~mask
        self.order = np.concatenate([self.order[keep], c1, c2])
        self.tag = np.concatenate([self.tag[keep], newtag, newtag])
        self.gen = np.concatenate([self.gen[keep], newgen, newgen])

    def hanging(self):
        if len(self.mid_keys) == 0:
            return np.zeros(len(self.order), dtype=bool)
        o = self.order
        a = o[:, TET_EDGES[:, 0]]
        b = o[:, TET_EDGES[:, 1]]
        keys = np.minimum(a, b) * _KEY + np.maximum(a, b)
        pos = np.searchsorted(self.mid_keys, keys)
        pos = np.minimum(pos, len(self.mid_keys) - 1)
        return np.any(self.mid_keys[pos] == keys, axis=1)

    def close(self):
        while True:
            h = self.hanging()
            if not np.any(h):
                return
            self.bisect(h)

    def freeze(self):
        return _make_mesh(
            self.coords(), self.order, self.tag, self.gen, self.mesh.box, self.mesh.cell_size
        )


def cut_mask(phi10):
    """Sign-change test on the 10 node values (zero counts as negative)."""
    return (phi10.min(axis=1) <= 0.0) & (phi10.max(axis=1) > 0.0)


def refine_toward_surface(mesh: BackgroundMesh, surface, level, max_tets=5_000_000):
    """Bisect every tet cut by ``surface`` until it reaches ``level``.

    A tet counts as cut when the exact level set changes sign among its
    vertices and edge midpoints.  Coarser tets away from the surface are
    bisected only as needed to keep the mesh conforming.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    target = 3 * level
    r = _Refiner(mesh, max_tets)
    while True:
        cand = np.flatnonzero(r.gen < target)
        if cand.size == 0:
            break
        xyz = r.coords()
        p = xyz[r.order[cand]]
        mid = 0.5 * (p[:, TET_EDGES[:, 0]] + p[:, TET_EDGES[:, 1]])
        phi10 = surface.phi(np.concatenate([p, mid], axis=1))
        marked = np.zeros(len(r.order), dtype=bool)
        marked[cand[cut_mask(phi10)]] = True
        if not np.any(marked):
            break
        r.bisect(marked)
        r.close()
    return r.freeze()


def select_band(mesh: BackgroundMesh, phi_nodes):
    """Tets whose once-refined children see a sign change of ``phi_h``.

    ``phi_nodes`` holds level-set values at the 10 nodes of every tet,
    shape ``(n_tets, 10)`` in :meth:`BackgroundMesh.nodes10` order.
    """
    phi_nodes = np.asarray(phi_nodes)
    cut = cut_mask(phi_nodes)
    ids = np.flatnonzero(cut)
    if ids.size == 0:
        raise EmptyBand("no tetrahedron is cut by the zero level set")
    verts = np.unique(mesh.tets[ids])
    h = float(np.mean(mesh.box_sizes(ids)))
    return Band(ids, verts, phi_nodes[ids], h)


def band_for_surface(mesh, surface):
    return select_band(mesh, surface.phi(mesh.nodes10()))


def conformity_defects(mesh: BackgroundMesh, atol=1e-12):
    """Number of faces shared by more than two tets or unmatched in the interior."""
    t = mesh.tets
    faces = np.sort(
        np.concatenate([t[:, [1, 2, 3]], t[:, [0, 2, 3]], t[:, [0, 1, 3]], t[:, [0, 1, 2]]]), axis=1
    )
    uf, counts = np.unique(faces, axis=0, return_counts=True)
    over = int(np.sum(counts > 2))
    single = uf[counts == 1]
    p = mesh.vertices[single]
    lo = np.array(mesh.box[0::2])
    hi = np.array(mesh.box[1::2])
    on_boundary = np.zeros(len(single), dtype=bool)
    for ax in range(3):
        on_boundary |= np.all(np.abs(p[:, :, ax] - lo[ax]) < atol, axis=1)
        on_boundary |= np.all(np.abs(p[:, :, ax] - hi[ax]) < atol, axis=1)
    return over + int(np.sum(~on_boundary))


def write_band_vtk(mesh: BackgroundMesh, band: Band, path):
    """Legacy ASCII VTK dump of the band tetrahedra (debug aid)."""
    verts = band.vertex_ids
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[verts] = np.arange(len(verts))
    cells = local[mesh.tets[band.tet_ids]]
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\nband mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(verts)} double\n")
        np.savetxt(f, mesh.vertices[verts], fmt="%.17g")
        f.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
        np.savetxt(f, np.hstack([np.full((len(cells), 1), 4), cells]), fmt="%d")
        f.write(f"CELL_TYPES {len(cells)}\n")
        np.savetxt(f, np.full(len(cells), 10), fmt="%d")
