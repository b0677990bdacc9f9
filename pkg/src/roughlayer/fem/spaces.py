"""Lagrange P1/P2 spaces on (parts of) a triangular mesh.

Node numbering on a mesh is global ("raw"): vertices first, then one node per
mesh edge for P2.  A space picks the raw nodes touched by its elements,
identifies periodic partners, and enumerates the remaining masters as degrees
of freedom.  Vector spaces stack components: ``dof = comp * n_scalar + i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AssemblyError
from ..mesh import Mesh
from .quadrature import triangle_rule

_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def mesh_edges(mesh: Mesh):
    """Unique sorted edges and the (n_tri, 3) local-edge -> edge map (cached)."""
    cache = mesh.meta.setdefault("_edge_cache", {})
    if "edges" not in cache:
        e = mesh.triangles[:, _LOCAL_EDGES]            # (nt, 3, 2)
        es = np.sort(e, axis=2).reshape(-1, 2)
        uniq, inv = np.unique(es, axis=0, return_inverse=True)
        cache["edges"] = uniq
        cache["tri_edges"] = inv.reshape(-1, 3)
    return cache["edges"], cache["tri_edges"]


def edge_index(mesh: Mesh, pairs):
    """Indices into :func:`mesh_edges` of the given vertex pairs (-1 if absent)."""
    edges, _ = mesh_edges(mesh)
    pairs = np.sort(np.asarray(pairs, dtype=int).reshape(-1, 2), axis=1)
    n = mesh.n_vertices
    keys = edges[:, 0].astype(np.int64) * n + edges[:, 1]
    q = pairs[:, 0].astype(np.int64) * n + pairs[:, 1]
    pos = np.searchsorted(keys, q)
    pos = np.clip(pos, 0, len(keys) - 1)
    return np.where(keys[pos] == q, pos, -1)


def basis(order, pts):
    """Reference basis values (nq, nloc) and gradients (nq, nloc, 2)."""
    xi, eta = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        val = np.column_stack([l0, l1, l2])
        grad = np.broadcast_to(g, (len(pts), 3, 2)).copy()
        return val, grad
    if order != 2:
        raise AssemblyError(f"unsupported element order {order}")
    lam = [l0, l1, l2]
    val = np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])
    grad = np.zeros((len(pts), 6, 2))
    for i in range(3):
        grad[:, i, :] = (4 * lam[i] - 1)[:, None] * g[i]
    for k, (i, j) in enumerate(_LOCAL_EDGES):
        grad[:, 3 + k, :] = 4 * (lam[i][:, None] * g[j] + lam[j][:, None] * g[i])
    return val, grad


def _frozen(arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


class FunctionSpace:
    """Scalar or 2-vector Lagrange space over a subset of mesh triangles.

    Parameters
    ----------
    mesh : Mesh
    order : 1 or 2
    elements : triangle indices (default: all)
    periodic : identify the mesh's ``periodic_pairs`` (right -> left)
    components : 1 (scalar) or 2 (vector)
    """

    def __init__(self, mesh: Mesh, order=1, elements=None, periodic=False, components=1):
        self.mesh = mesh
        self.order = order
        self.components = components
        self.periodic = periodic
        self.elements = np.arange(mesh.n_triangles) if elements is None else np.asarray(elements, dtype=int)
        nv = mesh.n_vertices
        tri = mesh.triangles[self.elements]
        if order == 1:
            cell_nodes = tri
            self._n_raw = nv
        else:
            edges, tri_edges = mesh_edges(mesh)
            cell_nodes = np.hstack([tri, nv + tri_edges[self.elements]])
            self._n_raw = nv + len(edges)
        self.cell_nodes = cell_nodes

        master = np.arange(self._n_raw)
        if periodic and len(mesh.periodic_pairs):
            left, right = mesh.periodic_pairs.T
            master[right] = left
            if order == 2:
                r_edges = np.column_stack([right[:-1], right[1:]])
                l_edges = np.column_stack([left[:-1], left[1:]])
                ri, li = edge_index(mesh, r_edges), edge_index(mesh, l_edges)
                ok = (ri >= 0) & (li >= 0)
                master[nv + ri[ok]] = nv + li[ok]
        self.master = master
        used = np.unique(master[cell_nodes])
        node_to_dof = -np.ones(self._n_raw, dtype=int)
        node_to_dof[used] = np.arange(len(used))
        node_to_dof = node_to_dof[master]
        # nodes not touched by this space stay -1
        touched = np.zeros(self._n_raw, dtype=bool)
        touched[cell_nodes.ravel()] = True
        node_to_dof[~touched] = -1
        self.node_to_dof = node_to_dof
        self.n_scalar = len(used)
        self.cell_dofs = node_to_dof[cell_nodes]
        self.dof_nodes = used
        self._geometry()

    # -- geometry ---------------------------------------------------------
    def _geometry(self):
        p = self.mesh.vertices
        t = self.mesh.triangles[self.elements]
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        J = np.stack([b - a, c - a], axis=2)          # columns are edge vectors
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            raise AssemblyError("element with non-positive Jacobian")
        self.origin = a
        self.jac = J
        self.det = det
        self.area = 0.5 * det
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        self.jac_inv = inv
        self.diameter = np.max(np.stack([np.linalg.norm(b - a, axis=1), np.linalg.norm(c - b, axis=1),
                                         np.linalg.norm(a - c, axis=1)]), axis=0)

    @property
    def n_dofs(self):
        return self.components * self.n_scalar

    @property
    def n_elements(self):
        return len(self.elements)

    def node_coordinates(self):
        """Coordinates of every raw node (vertices, then edge midpoints)."""
        p = self.mesh.vertices
        if self.order == 1:
            return p
        edges, _ = mesh_edges(self.mesh)
        return np.vstack([p, 0.5 * (p[edges[:, 0]] + p[edges[:, 1]])])

    def dof_coordinates(self):
        return self.node_coordinates()[self.dof_nodes]

    def scalar(self):
        """Scalar space sharing this space's nodes and dof numbering."""
        if self.components == 1:
            return self
        view = object.__new__(FunctionSpace)
        view.__dict__.update(self.__dict__)
        view.components = 1
        return view

    def same_elements(self, other: "FunctionSpace"):
        return other.mesh is self.mesh and np.array_equal(other.elements, self.elements)

    # -- quadrature data --------------------------------------------------
    def quadrature(self, pts=None):
        """Physical points (ne, nq, 2) and weights (ne, nq) for a reference rule."""
        if pts is None:
            cached = self.__dict__.get("_quad_cache")
            if cached is None:
                cached = self._quad_cache = _frozen(self.quadrature(triangle_rule()))
            return cached
        pts, w = pts
        x = self.origin[:, None, :] + np.einsum("eij,qj->eqi", self.jac, pts)
        return x, self.area[:, None] * w[None, :]

    def tabulate(self, pts=None):
        """Basis values (nq, nloc) and physical gradients (ne, nq, nloc, 2)."""
        if pts is None:
            cached = self.__dict__.get("_tab_cache")
            if cached is None:
                cached = self._tab_cache = _frozen(self.tabulate(triangle_rule()[0]))
            return cached
        val, grad = basis(self.order, pts)
        # grad_x phi = J^{-T} grad_ref phi
        pgrad = np.einsum("eji,qkj->eqki", self.jac_inv, grad)
        return val, pgrad

    # -- evaluation -------------------------------------------------------
    def _component_values(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.n_dofs:
            raise AssemblyError(f"coefficient length {coeffs.shape[0]} != space size {self.n_dofs}")
        return coeffs.reshape(self.components, self.n_scalar)

    def evaluate(self, coeffs, pts=None):
        """Values at quadrature points: (ne, nq) or (ne, nq, 2) for vectors."""
        val, _ = self.tabulate(pts)
        cv = self._component_values(coeffs)
        out = np.stack([np.einsum("qk,ek->eq", val, c[self.cell_dofs]) for c in cv], axis=-1)
        return out[..., 0] if self.components == 1 else out

    def gradient(self, coeffs, pts=None):
        """Gradients at quadrature points: (ne, nq, 2) or (ne, nq, 2, 2) [comp, dir]."""
        _, pgrad = self.tabulate(pts)
        cv = self._component_values(coeffs)
        out = np.stack([np.einsum("eqkd,ek->eqd", pgrad, c[self.cell_dofs]) for c in cv], axis=-2)
        return out[..., 0, :] if self.components == 1 else out

    def evaluate_at(self, coeffs, local_elements, bary):
        """Values at points given by (local element index, barycentric coords)."""
        local_elements = np.asarray(local_elements, dtype=int)
        bary = np.atleast_2d(bary)
        ref = bary[:, 1:3]
        lam = [bary[:, 0], bary[:, 1], bary[:, 2]]
        if self.order == 1:
            val = np.column_stack(lam)
        else:
            val = basis(2, ref)[0]
        cv = self._component_values(coeffs)
        out = np.stack([np.sum(val * c[self.cell_dofs[local_elements]], axis=1) for c in cv], axis=-1)
        return out[:, 0] if self.components == 1 else out

    def interpolate(self, f):
        """Nodal interpolant of ``f(x, y)`` (returning scalars or (2, n) arrays)."""
        xy = self.dof_coordinates()
        v = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
        if self.components == 1:
            return np.broadcast_to(v, (self.n_scalar,)).astype(float).copy()
        v = np.broadcast_to(v, (2, self.n_scalar))
        return v.reshape(-1).copy()

    def boundary_dofs(self, *tags, edges=None):
        """Scalar dofs on the tagged mesh edges (vertices and, for P2, midpoints)."""
        e = self.mesh.edges_with(*tags) if edges is None else np.asarray(edges)
        nodes = [e.ravel()]
        if self.order == 2 and len(e):
            idx = edge_index(self.mesh, e)
            if np.any(idx < 0):
                raise AssemblyError("tagged edge not present in mesh")
            nodes.append(self.mesh.n_vertices + idx)
        nodes = np.unique(np.concatenate(nodes))
        dofs = self.node_to_dof[nodes]
        return np.unique(dofs[dofs >= 0])

    def vector_dofs(self, scalar_dofs):
        """Both components' dofs for scalar dof indices (vector spaces)."""
        s = np.asarray(scalar_dofs, dtype=int)
        return np.concatenate([s + c * self.n_scalar for c in range(self.components)])


@dataclass
class DiscreteField:
    space: FunctionSpace
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.space.n_dofs:
            raise AssemblyError("field length does not match its space")
