"""Triangular meshes of the reference cell, the resolved layer and the macro square.

All meshes come out of one routine, :func:`mesh_between_graphs`, which
triangulates the region between two x-monotone polylines over ``[0, 1]``.
Interior points are laid out as a graded row lattice; scipy's Delaunay is run
on the union of boundary and interior points, interior points that encroach on
a boundary segment are dropped until every boundary segment is a Delaunay
edge, and triangles outside the region are discarded.

The resolved-layer mesh reuses the cell mesh: the fluid part is the union of
``1/eps`` scaled copies of the cell mesh, so every micro fluid vertex and
triangle has a known counterpart in the cell (used by the reconstruction).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshError
from .geometry import CellGeometry, LayerDomain


class Sub(enum.IntEnum):
    FLUID = 0
    SOLID = 1
    BULK = 2


class Tag(enum.IntEnum):
    BOTTOM = 0
    INFLOW = 1
    OUTFLOW = 2
    ROUGH_INTERFACE = 3
    SOLID_OUTER = 4
    CELL_BOTTOM = 5
    CELL_TOP = 6
    LATERAL_PERIODIC = 7


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    edges: np.ndarray          # tagged edges (outer boundary and interfaces)
    edge_tags: np.ndarray
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self, tri=None):
        t = self.triangles if tri is None else self.triangles[tri]
        p = self.vertices
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def area(self, sub=None):
        areas = self.signed_areas()
        if sub is not None:
            areas = areas[self.subdomain == sub]
        return float(areas.sum())

    def edges_with(self, *tags):
        mask = np.isin(self.edge_tags, [int(t) for t in tags])
        return self.edges[mask]

    def edge_length(self, *tags):
        e = self.edges_with(*tags)
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def submesh(self, sub):
        """Triangles of one subdomain with compacted vertex numbering.

        Returns ``(mesh, vertex_map)`` where ``vertex_map[i]`` is the parent
        index of local vertex ``i``.
        """
        keep = self.subdomain == sub
        tri = self.triangles[keep]
        used = np.unique(tri)
        local = -np.ones(self.n_vertices, dtype=int)
        local[used] = np.arange(len(used))
        emask = np.all(local[self.edges] >= 0, axis=1)
        pairs = self.periodic_pairs
        if len(pairs):
            pairs = pairs[np.all(local[pairs] >= 0, axis=1)]
            pairs = local[pairs]
        sm = Mesh(self.vertices[used], local[tri], self.subdomain[keep], local[self.edges[emask]],
                  self.edge_tags[emask], pairs, dict(self.meta))
        return sm, used

    def min_angle_deg(self):
        p = self.vertices
        t = self.triangles
        out = np.inf
        for i in range(3):
            a = p[t[:, i]]
            b = p[t[:, (i + 1) % 3]]
            c = p[t[:, (i + 2) % 3]]
            u, v = b - a, c - a
            cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out = min(out, float(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))).min()))
        return out

    def topological_boundary_edges(self):
        """Edges that belong to exactly one triangle (sorted vertex pairs)."""
        e = np.sort(np.vstack([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                               self.triangles[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        return uniq[counts == 1]

    def check(self, pair_tol=1e-12):
        """Raise :class:`MeshError` when a structural invariant is violated."""
        if np.any(self.signed_areas() <= 0.0):
            raise MeshError("triangle with non-positive signed area")
        bnd = {tuple(e) for e in self.topological_boundary_edges()}
        tagged = [tuple(sorted(e)) for e in self.edges]
        if len(set(tagged)) != len(tagged):
            raise MeshError("edge tagged twice")
        tagged_bnd = {e for e, t in zip(tagged, self.edge_tags) if t != Tag.ROUGH_INTERFACE or e in bnd}
        if tagged_bnd != bnd:
            raise MeshError("boundary tags do not cover the boundary edge set exactly")
        if len(self.periodic_pairs):
            left, right = self.periodic_pairs.T
            if len(np.unique(left)) != len(left) or len(np.unique(right)) != len(right):
                raise MeshError("periodic pairing is not a bijection")
            if np.max(np.abs(self.vertices[left, 1] - self.vertices[right, 1])) > pair_tol:
                raise MeshError("periodic partners at different heights")
        return True

    def write_text(self, path):
        """Plain text dump: ``x y`` per vertex, then ``i j k tag`` per triangle."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_vertices} {self.n_triangles}\n")
            for x, y in self.vertices:
                fh.write(f"{x:.17g} {y:.17g}\n")
            for (i, j, k), s in zip(self.triangles, self.subdomain):
                fh.write(f"{i} {j} {k} {Sub(s).name.lower()}\n")


def read_mesh_text(path):
    with open(path) as fh:
        nv, nt = map(int, fh.readline().split())
        verts = np.array([[float(v) for v in fh.readline().split()] for _ in range(nv)])
        tris, subs = [], []
        for _ in range(nt):
            i, j, k, tag = fh.readline().split()
            tris.append((int(i), int(j), int(k)))
            subs.append(int(Sub[tag.upper()]))
    return verts, np.array(tris, dtype=int), np.array(subs, dtype=int)


# ---------------------------------------------------------------------------
# point sampling helpers

def sample_graph(f, df, breakpoints, x0, x1, h):
    """Nodes on the graph of ``f`` over ``[x0, x1]`` with arclength spacing ~``h``.

    Breakpoints of the piecewise definition are always nodes.
    """
    edges = np.unique(np.concatenate([[x0, x1], [b for b in breakpoints if x0 < b < x1]]))
    xs = [np.array([x0])]
    for a, b in zip(edges[:-1], edges[1:]):
        # arclength table on a fine grid, then invert
        t = np.linspace(a, b, 2001)
        ds = np.sqrt(1.0 + np.asarray(df(t)) ** 2)
        s = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]) * np.diff(t))])
        n = max(1, int(np.ceil(s[-1] / h - 1e-9)))
        target = np.linspace(0.0, s[-1], n + 1)[1:]
        xs.append(np.interp(target, s, t))
    x = np.concatenate(xs)
    x[-1] = x1
    return np.column_stack([x, f(x)])


def graded_levels(y0, y1, size):
    """Increasing levels from ``y0`` to ``y1`` with local spacing ~``size(y)``."""
    levels = [y0]
    y = y0
    while True:
        step = size(y)
        if y + 1.5 * step >= y1:
            break
        y += step
        levels.append(y)
    levels.append(y1)
    levels = np.array(levels)
    # spread the last remainder over the final few gaps
    if len(levels) > 3:
        k = min(len(levels) - 1, 4)
        levels[-k:] = np.linspace(levels[-k], y1, k)
    return levels


def _segment_distance(points, a, b):
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-300)
    t = np.clip(np.sum((points - a) * ab, axis=-1) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(points - proj, axis=-1)


def _distance_to_segments(points, seg_a, seg_b, k=8):
    if len(points) == 0:
        return np.zeros(0)
    mid = 0.5 * (seg_a + seg_b)
    tree = cKDTree(mid)
    k = min(k, len(mid))
    _, idx = tree.query(points, k=k)
    idx = np.atleast_2d(idx.T).T if k == 1 else idx
    d = _segment_distance(points[:, None, :], seg_a[idx], seg_b[idx])
    return d.min(axis=1)


def _diametral_encroachers(points, seg_a, seg_b):
    """Indices of ``points`` strictly inside some segment's diametral circle."""
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(points)
    mid = 0.5 * (seg_a + seg_b)
    rad = 0.5 * np.linalg.norm(seg_b - seg_a, axis=1)
    hits = tree.query_ball_point(mid, rad * (1.0 + 1e-9))
    bad = set()
    for i, lst in enumerate(hits):
        for j in lst:
            # angle at the point larger than 90 degrees <=> inside circle
            if np.dot(seg_a[i] - points[j], seg_b[i] - points[j]) < -1e-14 * rad[i] ** 2:
                bad.add(j)
    return np.array(sorted(bad), dtype=int)


def mesh_between_graphs(lower, upper, left_y, right_y, size, smooth_iters=4):
    """Triangulate ``{(x, y): 0<x<1, lo(x) < y < up(x)}``.

    ``lower``/``upper`` are node arrays of the bounding polylines ordered by
    increasing x from ``x=0`` to ``x=1``; ``left_y``/``right_y`` are the
    interior side node heights (strictly between the polyline end points).
    ``size(y)`` is the target element size.  Returns
    ``(vertices, triangles, boundary)`` where ``boundary`` maps
    ``"lower"|"upper"|"left"|"right"`` to vertex index chains.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if np.any(np.diff(lower[:, 0]) <= 0) or np.any(np.diff(upper[:, 0]) <= 0):
        raise MeshError("bounding polylines must be strictly x-monotone")
    left = np.column_stack([np.zeros(len(left_y)), left_y])
    right = np.column_stack([np.ones(len(right_y)), right_y])

    bnd_pts = np.vstack([lower, upper, left, right])
    nl, nu, nle = len(lower), len(upper), len(left)
    idx_lower = np.arange(nl)
    idx_upper = nl + np.arange(nu)
    idx_left = np.concatenate([[idx_lower[0]], nl + nu + np.arange(nle), [idx_upper[0]]])
    idx_right = np.concatenate([[idx_lower[-1]], nl + nu + nle + np.arange(len(right)), [idx_upper[-1]]])
    chains = {"lower": idx_lower, "upper": idx_upper, "left": idx_left, "right": idx_right}
    segs = np.vstack([np.column_stack([c[:-1], c[1:]]) for c in chains.values()])
    nb = len(bnd_pts)

    def lo(x):
        return np.interp(x, lower[:, 0], lower[:, 1])

    def up(x):
        return np.interp(x, upper[:, 0], upper[:, 1])

    # interior row lattice
    ymin, ymax = lower[:, 1].min(), upper[:, 1].max()
    rows = graded_levels(ymin, ymax, lambda y: 0.5 * np.sqrt(3.0) * size(y))[1:-1]
    cand = []
    for r, y in enumerate(rows):
        hx = size(y)
        n = max(1, int(round(1.0 / hx)))
        xs = (np.arange(n) + (0.5 if r % 2 else 0.0)) / n
        xs = xs[(xs > 0) & (xs < 1)]
        cand.append(np.column_stack([xs, np.full_like(xs, y)]))
    cand = np.vstack(cand) if cand else np.zeros((0, 2))
    if len(cand):
        inside = (cand[:, 1] > lo(cand[:, 0])) & (cand[:, 1] < up(cand[:, 0]))
        cand = cand[inside]
    if len(cand):
        d = _distance_to_segments(cand, bnd_pts[segs[:, 0]], bnd_pts[segs[:, 1]])
        h_loc = np.array([size(y) for y in cand[:, 1]])
        cand = cand[d > 0.55 * h_loc]

    seg_a, seg_b = bnd_pts[segs[:, 0]], bnd_pts[segs[:, 1]]
    interior = cand
    for it in range(smooth_iters + 1):
        bad = _diametral_encroachers(interior, seg_a, seg_b)
        while len(bad):
            interior = np.delete(interior, bad, axis=0)
            bad = _diametral_encroachers(interior, seg_a, seg_b)
        pts = np.vstack([bnd_pts, interior])
        tri = _delaunay_inside(pts, lo, up)
        if it == smooth_iters:
            break
        interior = _laplace_smooth(pts, tri, nb, lo, up)

    _require_segments(tri, segs)
    return pts, tri, chains


def _delaunay_inside(pts, lo, up):
    tri = Delaunay(pts, qhull_options="Qbb Qc Qz Q12").simplices
    c = pts[tri].mean(axis=1)
    keep = (c[:, 1] > lo(c[:, 0])) & (c[:, 1] < up(c[:, 0]))
    tri = tri[keep]
    a, b, cc = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    area = (b[:, 0] - a[:, 0]) * (cc[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (cc[:, 0] - a[:, 0])
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    area = np.abs(area)
    # qhull can leave slivers from collinear boundary nodes
    scale = np.max(np.linalg.norm(pts[tri] - pts[tri].mean(axis=1)[:, None, :], axis=2), axis=1)
    tri = tri[area > 1e-12 * scale**2]
    return tri


def _laplace_smooth(pts, tri, nb, lo, up, relax=0.5):
    n = len(pts)
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e = np.vstack([e, e[:, ::-1]])
    acc = np.zeros((n, 2))
    np.add.at(acc, e[:, 0], pts[e[:, 1]])
    deg = np.bincount(e[:, 0], minlength=n).astype(float)
    new = pts.copy()
    movable = np.arange(nb, n)
    movable = movable[deg[movable] > 0]
    target = acc[movable] / deg[movable, None]
    new[movable] = (1 - relax) * pts[movable] + relax * target
    q = new[nb:]
    ok = (q[:, 1] > lo(q[:, 0])) & (q[:, 1] < up(q[:, 0]))
    q[~ok] = pts[nb:][~ok]
    return q


def _require_segments(tri, segs):
    e = np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    have = {tuple(x) for x in e}
    missing = [tuple(s) for s in np.sort(segs, axis=1) if tuple(s) not in have]
    if missing:
        raise MeshError(f"{len(missing)} boundary segments could not be recovered")


# ---------------------------------------------------------------------------
# concrete meshes

def triangulate_cell(geom: CellGeometry, h: float, smooth_iters: int = 4) -> Mesh:
    """Mesh of the fluid cell ``Z`` with periodic lateral pairing."""
    prof = geom.profile
    if not (0.0 < h < 0.5 * prof.gamma0):
        raise MeshError(f"cell mesh size must satisfy 0 < h < gamma0/2 (h={h}, gamma0={prof.gamma0})")
    n_bottom = max(2, int(np.ceil(1.0 / h)))
    lower = np.column_stack([np.linspace(0.0, 1.0, n_bottom + 1), np.zeros(n_bottom + 1)])
    upper = sample_graph(prof.evaluate, prof.derivative, prof.breakpoints(), 0.0, 1.0, h)
    y_side = prof.evaluate(0.0)
    levels = graded_levels(0.0, y_side, lambda y: 0.5 * np.sqrt(3.0) * h)
    side = levels[1:-1]
    pts, tri, chains = mesh_between_graphs(lower, upper, side, side, lambda y: h, smooth_iters)

    edges, tags = [], []
    for name, tag in (("lower", Tag.CELL_BOTTOM), ("upper", Tag.ROUGH_INTERFACE),
                      ("left", Tag.LATERAL_PERIODIC), ("right", Tag.LATERAL_PERIODIC)):
        c = chains[name]
        edges.append(np.column_stack([c[:-1], c[1:]]))
        tags.append(np.full(len(c) - 1, int(tag)))
    pairs = np.column_stack([chains["left"], chains["right"]])
    m = Mesh(pts, tri, np.full(len(tri), int(Sub.FLUID)), np.vstack(edges), np.concatenate(tags), pairs,
             {"kind": "cell", "h": h, "profile": prof.label,
              "bottom_chain": chains["lower"], "top_chain": chains["upper"],
              "left_chain": chains["left"], "right_chain": chains["right"]})
    m.check()
    return m


def tile_cell_mesh(cell: Mesh, epsilon: float, count: int):
    """Union of ``count`` copies of the cell mesh scaled by ``epsilon``.

    Returns the layer mesh plus ``cell_vertex`` (counterpart of each layer
    vertex in the cell), ``cell_triangle`` and ``copy_index`` per triangle.
    """
    nv = cell.n_vertices
    left = cell.meta["left_chain"]
    right = cell.meta["right_chain"]
    is_right = np.zeros(nv, dtype=bool)
    is_right[right] = True
    own = np.flatnonzero(~is_right)          # vertices each copy introduces
    per_copy = len(own)

    # global index of cell vertex j in copy k
    gidx = np.empty((count, nv), dtype=int)
    for k in range(count):
        gidx[k, own] = k * per_copy + np.arange(per_copy)
    for k in range(count - 1):
        gidx[k, right] = gidx[k + 1, left]
    n_total = count * per_copy + len(right)
    gidx[count - 1, right] = count * per_copy + np.arange(len(right))

    verts = np.empty((n_total, 2))
    cell_vertex = np.empty(n_total, dtype=int)
    for k in range(count):
        verts[gidx[k]] = epsilon * (cell.vertices + np.array([k, 0.0]))
        cell_vertex[gidx[k]] = np.arange(nv)
    # merged vertices map back to the left partner (periodic counterpart)
    for k in range(count - 1):
        cell_vertex[gidx[k, right]] = left
        verts[gidx[k, right]] = epsilon * (cell.vertices[left] + np.array([k + 1, 0.0]))
    tris = np.vstack([gidx[k][cell.triangles] for k in range(count)])
    cell_tri = np.tile(np.arange(cell.n_triangles), count)
    copy = np.repeat(np.arange(count), cell.n_triangles)

    chain = lambda name, k: gidx[k][cell.meta[name]]
    bottom = np.concatenate([chain("bottom_chain", k)[: None if k == count - 1 else -1] for k in range(count)])
    top = np.concatenate([chain("top_chain", k)[: None if k == count - 1 else -1] for k in range(count)])
    inflow = chain("left_chain", 0)
    outflow = chain("right_chain", count - 1)
    return dict(vertices=verts, triangles=tris, cell_vertex=cell_vertex, cell_triangle=cell_tri,
                copy_index=copy, bottom=bottom, top=top, inflow=inflow, outflow=outflow)


def layer_size_function(epsilon, h_layer, h_bulk, grading=0.25):
    """Element size growing linearly with distance above the layer."""
    def size(y):
        return float(min(h_bulk, h_layer + grading * max(0.0, y - epsilon)))
    return size


def triangulate_micro(domain: LayerDomain, h_bulk: float, h_layer: float, grading: float = 0.25,
                      cell_mesh: Mesh | None = None, smooth_iters: int = 4) -> Mesh:
    """Conforming mesh of the unit square: tiled fluid cells plus graded solid.

    ``meta`` carries the cell mesh and the vertex/triangle correspondences.
    """
    eps = domain.epsilon
    if cell_mesh is None:
        cell_mesh = triangulate_cell(domain.cell, h_layer / eps, smooth_iters)
    layer = tile_cell_mesh(cell_mesh, eps, domain.cell_count)
    fv = layer["vertices"]
    interface_chain = layer["top"]
    lower = fv[interface_chain]
    size = layer_size_function(eps, h_layer, h_bulk, grading)
    top_n = max(2, int(np.ceil(1.0 / h_bulk)))
    upper = np.column_stack([np.linspace(0, 1, top_n + 1), np.ones(top_n + 1)])
    side = graded_levels(lower[0, 1], 1.0, size)[1:-1]
    side_r = graded_levels(lower[-1, 1], 1.0, size)[1:-1]
    spts, stri, chains = mesh_between_graphs(lower, upper, side, side_r, size, smooth_iters)

    nf = len(fv)
    # solid points: its lower chain is the fluid interface chain
    smap = np.empty(len(spts), dtype=int)
    smap[chains["lower"]] = interface_chain
    others = np.setdiff1d(np.arange(len(spts)), chains["lower"])
    smap[others] = nf + np.arange(len(others))
    verts = np.vstack([fv, spts[others]])
    tris = np.vstack([layer["triangles"], smap[stri]])
    sub = np.concatenate([np.full(len(layer["triangles"]), int(Sub.FLUID)), np.full(len(stri), int(Sub.SOLID))])

    def chain_edges(c):
        return np.column_stack([c[:-1], c[1:]])

    edges = [chain_edges(layer["bottom"]), chain_edges(layer["inflow"]), chain_edges(layer["outflow"]),
             chain_edges(interface_chain), chain_edges(smap[chains["left"]]), chain_edges(smap[chains["right"]]),
             chain_edges(smap[chains["upper"]])]
    tags = [Tag.BOTTOM, Tag.INFLOW, Tag.OUTFLOW, Tag.ROUGH_INTERFACE, Tag.SOLID_OUTER, Tag.SOLID_OUTER, Tag.SOLID_OUTER]
    etags = np.concatenate([np.full(len(e), int(t)) for e, t in zip(edges, tags)])
    m = Mesh(verts, tris, sub, np.vstack(edges), etags, meta={
        "kind": "micro", "epsilon": eps, "h_bulk": h_bulk, "h_layer": h_layer, "grading": grading,
        "profile": domain.profile.label, "cell_mesh": cell_mesh,
        "n_fluid_vertices": nf, "cell_vertex": layer["cell_vertex"],
        "cell_triangle": layer["cell_triangle"], "copy_index": layer["copy_index"],
        "interface_chain": interface_chain,
    })
    m.check()
    if not np.all(np.isin(m.edges_with(Tag.ROUGH_INTERFACE), np.arange(nf))):
        raise MeshError("interface vertices must belong to the fluid layer")
    return m


@dataclass
class InterfaceMesh1D:
    """Segment mesh of Sigma sharing its vertices with the bulk bottom row."""

    x: np.ndarray
    bulk_vertex: np.ndarray   # trace map: interface vertex i -> bulk vertex

    @property
    def n_vertices(self):
        return len(self.x)

    @property
    def segments(self):
        n = len(self.x)
        return np.column_stack([np.arange(n - 1), np.arange(1, n)])


def triangulate_macro(h: float):
    """Structured mesh of the unit square and its bottom interface mesh."""
    if not (0.0 < h <= 0.5):
        raise MeshError(f"macro mesh size must lie in (0, 0.5], got {h}")
    n = int(np.ceil(1.0 / h - 1e-12))
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (n + 1) + i
    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            # alternate diagonals for a symmetric pattern
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris, dtype=int)
    bottom = np.array([vid(i, 0) for i in range(n + 1)])
    top = np.array([vid(i, n) for i in range(n + 1)])
    left = np.array([vid(0, j) for j in range(n + 1)])
    right = np.array([vid(n, j) for j in range(n + 1)])
    ce = lambda c: np.column_stack([c[:-1], c[1:]])
    edges = np.vstack([ce(bottom), ce(top), ce(left), ce(right)])
    tags = np.concatenate([np.full(n, int(Tag.BOTTOM)), np.full(3 * n, int(Tag.SOLID_OUTER))])
    m = Mesh(verts, tris, np.full(len(tris), int(Sub.BULK)), edges, tags, meta={"kind": "macro", "h": h, "n": n})
    m.check()
    return m, InterfaceMesh1D(xs.copy(), bottom)


class PointLocator:
    """Find the triangle containing each query point (or -1)."""

    def __init__(self, mesh: Mesh, triangles=None):
        self.mesh = mesh
        self.tri_index = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
        t = mesh.triangles[self.tri_index]
        p = mesh.vertices
        self._a = p[t[:, 0]]
        self._T = np.stack([p[t[:, 1]] - self._a, p[t[:, 2]] - self._a], axis=2)  # columns
        self._Tinv = np.linalg.inv(self._T)
        self._tree = cKDTree(p[t].mean(axis=1))

    def locate(self, points, k=12, tol=1e-10):
        points = np.atleast_2d(np.asarray(points, float))
        k = min(k, len(self.tri_index))
        _, cand = self._tree.query(points, k=k)
        cand = cand.reshape(len(points), k)
        found = -np.ones(len(points), dtype=int)
        bary = np.zeros((len(points), 3))
        for j in range(k):
            todo = found < 0
            if not np.any(todo):
                break
            c = cand[todo, j]
            lam = np.einsum("nij,nj->ni", self._Tinv[c], points[todo] - self._a[c])
            l0 = 1.0 - lam.sum(axis=1)
            ok = (lam.min(axis=1) >= -tol) & (l0 >= -tol)
            ids = np.flatnonzero(todo)[ok]
            found[ids] = self.tri_index[c[ok]]
            bary[ids] = np.column_stack([l0[ok], lam[ok]])
        for i in np.flatnonzero(found < 0):
            lam = np.einsum("nij,nj->ni", self._Tinv, points[i] - self._a)
            l0 = 1.0 - lam.sum(axis=1)
            hit = np.flatnonzero((lam.min(axis=1) >= -tol) & (l0 >= -tol))
            if len(hit):
                found[i] = self.tri_index[hit[0]]
                bary[i] = [l0[hit[0]], lam[hit[0], 0], lam[hit[0], 1]]
        return found, bary
