"""Triangular meshes and P1 finite element assembly in two dimensions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import csr

__all__ = [
    "Mesh2D",
    "boundary_weights",
    "elasticity_matrix",
    "element_stiffness",
    "hooke_plane_strain",
    "lame_parameters",
    "mass_matrix",
    "rectangle",
    "stiffness_matrix",
    "strain_gram",
]


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Triangulation with labelled boundary edges.

    Labels are 1, 2, 3 for the three boundary parts; every boundary edge
    (an edge belonging to exactly one triangle) must be labelled exactly once.
    Triangles must be counter-clockwise with positive area.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_labels: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=int)
        edges = np.asarray(self.boundary_edges, dtype=int).reshape(-1, 2)
        labels = np.asarray(self.edge_labels, dtype=int)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must have shape (T, 3)")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise ValueError("triangle references a missing node")
        if labels.shape != (len(edges),):
            raise ValueError("one label per boundary edge is required")
        if not np.all(np.isin(labels, (1, 2, 3))):
            raise ValueError("boundary labels must be 1, 2 or 3")
        for name, arr in (("nodes", nodes), ("triangles", tris), ("boundary_edges", edges), ("edge_labels", labels)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        area = self.areas
        bad = np.nonzero(area <= 1e-14 * max(area.max(initial=0.0), 1e-300))[0]
        if bad.size:
            raise ValueError(f"degenerate or clockwise triangles: {bad[:5].tolist()}")
        found = {}
        for t in tris:
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                key = (min(a, b), max(a, b))
                found[key] = found.get(key, 0) + 1
        boundary = {k for k, c in found.items() if c == 1}
        labelled = [tuple(sorted(e)) for e in edges.tolist()]
        if len(set(labelled)) != len(labelled):
            raise ValueError("a boundary edge is labelled more than once")
        if set(labelled) != boundary:
            raise ValueError("labelled edges do not coincide with the mesh boundary")

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def h(self):
        """Largest edge length."""
        p = self.nodes[self.triangles]
        lens = [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))]
        return float(np.max(lens))

    def label_nodes(self, label):
        return np.unique(self.boundary_edges[self.edge_labels == label])

    def to_dict(self):
        return {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": self.boundary_edges.tolist(),
            "edge_labels": self.edge_labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["nodes"], dtype=float), np.array(d["triangles"], dtype=int),
                   np.array(d["boundary_edges"], dtype=int), np.array(d["edge_labels"], dtype=int))


def rectangle(nx, ny, width=1.0, height=1.0, labeler=None):
    """Structured mesh of ``[0, width] x [0, height]`` with ``2 nx ny`` right triangles.

    ``labeler(x, y)`` receives the midpoint of a boundary edge and returns its
    label; the default labels every edge 1.
    """
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell in each direction")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[:-1, 1:].ravel()
    n01 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    tris = np.concatenate([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    edges = np.concatenate([
        np.column_stack([idx[0, :-1], idx[0, 1:]]),
        np.column_stack([idx[-1, :-1], idx[-1, 1:]]),
        np.column_stack([idx[:-1, 0], idx[1:, 0]]),
        np.column_stack([idx[:-1, -1], idx[1:, -1]]),
    ])
    labeler = labeler or (lambda x, y: 1)
    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    labels = np.array([labeler(x, y) for x, y in mid], dtype=int)
    return Mesh2D(nodes, tris, edges, labels)


def _gradients(mesh):
    """Gradients of the three barycentric functions on every triangle, shape (T, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    area2 = 2.0 * mesh.areas
    # grad phi_i = rot90(p_k - p_j) / (2 area) for (i, j, k) cyclic
    g = np.empty((len(p), 3, 2))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        e = p[:, k] - p[:, j]
        g[:, i, 0] = -e[:, 1] / area2
        g[:, i, 1] = e[:, 0] / area2
    return g


def element_stiffness(coords):
    """P1 Laplace stiffness of a single triangle with vertex coordinates ``coords``."""
    p = np.asarray(coords, dtype=float)
    d1, d2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    g = np.empty((3, 2))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        e = p[k] - p[j]
        g[i] = (-e[1] / (2 * area), e[0] / (2 * area))
    return area * g @ g.T


def _assemble(mesh, local, ndof_per_node=1):
    T = mesh.triangles
    if ndof_per_node == 1:
        dofs = T
    else:
        dofs = (ndof_per_node * T[:, :, None] + np.arange(ndof_per_node)).reshape(len(T), -1)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = ndof_per_node * mesh.n_nodes
    return csr(local.ravel(), rows, cols, (n, n))


def stiffness_matrix(mesh):
    """``int grad u . grad v`` for P1 functions."""
    g = _gradients(mesh)
    local = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _assemble(mesh, local)


def mass_matrix(mesh):
    """Consistent P1 mass matrix ``int u v``."""
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.areas[:, None, None] * ref[None]
    return _assemble(mesh, local)


def lame_parameters(E, nu):
    """Lame constants ``(lambda, mu)`` from Young's modulus and Poisson ratio."""
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


def hooke_plane_strain(E, nu):
    """Voigt matrix of plane-strain isotropic Hooke's law (engineering shear strain)."""
    lam, mu = lame_parameters(E, nu)
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def _strain_operator(mesh):
    g = _gradients(mesh)
    B = np.zeros((len(g), 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def elasticity_matrix(mesh, D):
    """``int (D eps(u)) . eps(v)`` with interleaved dofs ``(2 i, 2 i + 1)``."""
    B = _strain_operator(mesh)
    local = mesh.areas[:, None, None] * np.einsum("tai,ab,tbj->tij", B, np.asarray(D), B)
    return _assemble(mesh, local, ndof_per_node=2)


def strain_gram(mesh):
    """``int eps(u) . eps(v)`` (full tensor contraction)."""
    return elasticity_matrix(mesh, np.diag([1.0, 1.0, 0.5]))


def boundary_weights(mesh, label):
    """Trapezoidal boundary quadrature weights of the edges carrying ``label``."""
    w = np.zeros(mesh.n_nodes)
    e = mesh.boundary_edges[mesh.edge_labels == label]
    if len(e):
        lens = np.linalg.norm(mesh.nodes[e[:, 0]] - mesh.nodes[e[:, 1]], axis=1)
        np.add.at(w, e[:, 0], 0.5 * lens)
        np.add.at(w, e[:, 1], 0.5 * lens)
    return w


def selection(rows_total, cols):
    """Sparse matrix placing a vector of ``len(cols)`` entries at positions ``cols``."""
    cols = np.asarray(cols, dtype=int)
    return sp.csr_matrix((np.ones(len(cols)), (cols, np.arange(len(cols)))), shape=(rows_total, len(cols)))
