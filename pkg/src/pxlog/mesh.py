"""Structured simplicial meshes of intervals and rectangles.

Meshes are tensor products of 1D coordinate arrays: an interval is split into
segments, a rectangle into grid cells cut into two right triangles each.  The
exact distance to the boundary is stored per node, and ``enlarge_domain``
grows the box by a margin while keeping every original node (and element) in
place, so fields computed on the enlarged mesh restrict to the original one
by index lookup.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidMeshError, MeshMismatchError


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 mesh.

    ``axes`` holds the 1D coordinate arrays the tensor grid was built from and
    ``lower``/``upper`` the corners of the box.  ``parent_nodes`` is set on
    enlarged meshes only: entry ``i`` is the index (in this mesh) of node ``i``
    of the mesh that was enlarged.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    distance: np.ndarray
    axes: tuple
    lower: tuple
    upper: tuple
    delta_prime: float | None = None
    parent_nodes: np.ndarray | None = None
    measures: np.ndarray = field(init=False)
    grads: np.ndarray = field(init=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        elements = np.asarray(self.elements, dtype=np.int64)
        dim = nodes.shape[1]
        if dim not in (1, 2) or elements.shape[1] != dim + 1:
            raise InvalidMeshError(f"unsupported mesh layout: dim={dim}, element width={elements.shape[1]}")
        verts = nodes[elements]                      # (m, dim+1, dim)
        edges = verts[:, 1:, :] - verts[:, :1, :]    # (m, dim, dim)
        det = np.linalg.det(edges)
        measures = np.abs(det) / math.factorial(dim)
        if np.any(measures <= 0):
            raise InvalidMeshError("mesh has an element with non-positive measure")
        g_rest = np.linalg.inv(edges)                # column k-1 is grad(lambda_k)
        grads = np.empty((len(elements), dim, dim + 1))
        grads[:, :, 1:] = g_rest
        grads[:, :, 0] = -g_rest.sum(axis=2)
        if np.setdiff1d(np.arange(len(nodes)), elements.ravel()).size:
            raise InvalidMeshError("element connectivity does not cover all nodes")
        object.__setattr__(self, "nodes", _readonly(nodes))
        object.__setattr__(self, "elements", _readonly(elements))
        object.__setattr__(self, "boundary", _readonly(np.asarray(self.boundary, dtype=np.int64)))
        object.__setattr__(self, "distance", _readonly(np.asarray(self.distance, dtype=float)))
        object.__setattr__(self, "measures", _readonly(measures))
        object.__setattr__(self, "grads", _readonly(grads))
        if self.parent_nodes is not None:
            object.__setattr__(self, "parent_nodes", _readonly(np.asarray(self.parent_nodes, dtype=np.int64)))

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary] = False
        return _readonly(np.flatnonzero(mask))

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary] = True
        return _readonly(mask)

    @property
    def volume(self) -> float:
        return float(self.measures.sum())

    @property
    def inradius(self) -> float:
        return 0.5 * min(u - l for l, u in zip(self.lower, self.upper))

    @cached_property
    def h(self) -> float:
        """Largest grid spacing along any axis."""
        return float(max(np.diff(a).max() for a in self.axes))

    @cached_property
    def barycenters(self) -> np.ndarray:
        return _readonly(self.nodes[self.elements].mean(axis=1))

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Integral of each nodal hat function (nodal quadrature weights)."""
        share = np.repeat(self.measures / (self.dim + 1), self.dim + 1)
        return _readonly(np.bincount(self.elements.ravel(), weights=share, minlength=self.n_nodes))

    @cached_property
    def _pattern(self):
        k = self.dim + 1
        rows = np.repeat(self.elements, k, axis=1).ravel()
        cols = np.tile(self.elements, (1, k)).ravel()
        return rows, cols

    def assemble(self, local: np.ndarray) -> sp.csr_matrix:
        """Sum element matrices of shape (m, d+1, d+1) into a sparse matrix."""
        rows, cols = self._pattern
        mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        return mat.tocsr()

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum element vectors of shape (m, d+1) into a nodal vector."""
        return np.bincount(self.elements.ravel(), weights=local.ravel(), minlength=self.n_nodes)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        local = np.einsum("e,edi,edj->eij", self.measures, self.grads, self.grads)
        return self.assemble(local)

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """Piecewise-constant gradient of a nodal P1 field, shape (m, dim)."""
        return np.einsum("edk,ek->ed", self.grads, np.asarray(values)[self.elements])

    def check_same(self, other: "Mesh") -> None:
        if other is not self:
            raise MeshMismatchError("fields live on different meshes")

    def to_json(self) -> str:
        doc = {
            "dimension": self.dim,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "axes": [a.tolist() for a in self.axes],
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "boundary": self.boundary.tolist(),
            "distance": self.distance.tolist(),
            "delta_prime": self.delta_prime,
            "parent_nodes": None if self.parent_nodes is None else self.parent_nodes.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        doc = json.loads(text)
        return cls(
            nodes=np.array(doc["nodes"], dtype=float),
            elements=np.array(doc["elements"], dtype=np.int64),
            boundary=np.array(doc["boundary"], dtype=np.int64),
            distance=np.array(doc["distance"], dtype=float),
            axes=tuple(_readonly(np.array(a, dtype=float)) for a in doc["axes"]),
            lower=tuple(doc["lower"]),
            upper=tuple(doc["upper"]),
            delta_prime=doc.get("delta_prime"),
            parent_nodes=None if doc.get("parent_nodes") is None else np.array(doc["parent_nodes"]),
        )


def _box_distance(points, lower, upper):
    gaps = [points[:, k] - lower[k] for k in range(len(lower))]
    gaps += [upper[k] - points[:, k] for k in range(len(lower))]
    return np.min(np.stack(gaps, axis=1), axis=1)


def _tensor_mesh(axes, delta_prime=None, parent_nodes=None) -> Mesh:
    axes = tuple(_readonly(np.asarray(a, dtype=float)) for a in axes)
    lower = tuple(float(a[0]) for a in axes)
    upper = tuple(float(a[-1]) for a in axes)
    if len(axes) == 1:
        (xs,) = axes
        nodes = xs[:, None]
        n = len(xs) - 1
        elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        boundary = np.array([0, n])
    else:
        xs, ys = axes
        nx, ny = len(xs) - 1, len(ys) - 1
        # lexicographic: x index major, y index minor
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[:-1, 1:].ravel()
        # two right triangles per cell, cell-major ordering
        elements = np.stack([np.stack([a, b, c], 1), np.stack([a, c, d], 1)], axis=1).reshape(-1, 3)
        on_edge = np.zeros_like(idx, dtype=bool)
        on_edge[0, :] = on_edge[-1, :] = on_edge[:, 0] = on_edge[:, -1] = True
        boundary = idx[on_edge]
        boundary.sort()
    distance = _box_distance(nodes, lower, upper)
    distance[boundary] = 0.0
    return Mesh(nodes=nodes, elements=elements, boundary=boundary, distance=distance,
                axes=axes, lower=lower, upper=upper, delta_prime=delta_prime, parent_nodes=parent_nodes)


def build_interval_mesh(a: float, b: float, n: int) -> Mesh:
    """Uniform mesh of (a, b) with ``n`` elements."""
    if not (a < b) or int(n) != n or n < 2:
        raise InvalidMeshError(f"invalid interval mesh request: a={a}, b={b}, n={n}")
    return _tensor_mesh((np.linspace(a, b, int(n) + 1),))


def build_rectangle_mesh(x_extent, y_extent, nx: int, ny: int) -> Mesh:
    """Structured triangulation of a rectangle.

    Extents are either a length (the box starts at the origin) or a
    ``(lower, upper)`` pair.
    """
    def _span(ext):
        if np.ndim(ext) == 0:
            return 0.0, float(ext)
        lo, hi = ext
        return float(lo), float(hi)

    (x0, x1), (y0, y1) = _span(x_extent), _span(y_extent)
    if not (x1 > x0 and y1 > y0) or nx < 2 or ny < 2 or int(nx) != nx or int(ny) != ny:
        raise InvalidMeshError(f"invalid rectangle mesh request: x=({x0},{x1}), y=({y0},{y1}), n=({nx},{ny})")
    return _tensor_mesh((np.linspace(x0, x1, int(nx) + 1), np.linspace(y0, y1, int(ny) + 1)))


def enlarge_domain(mesh: Mesh, margin: float) -> Mesh:
    """Grow the box by ``margin`` on every side.

    Margin layers use the spacing of the adjacent boundary element (rounded
    so an integer number of layers fits), so original nodes and elements are
    reproduced exactly inside the enlarged mesh.
    """
    if not margin > 0:
        raise InvalidMeshError(f"margin must be positive, got {margin}")
    new_axes, offsets = [], []
    for ax in mesh.axes:
        k_lo = max(1, math.ceil(margin / (ax[1] - ax[0]) - 1e-9))
        k_hi = max(1, math.ceil(margin / (ax[-1] - ax[-2]) - 1e-9))
        left = np.linspace(ax[0] - margin, ax[0], k_lo + 1)[:-1]
        right = np.linspace(ax[-1], ax[-1] + margin, k_hi + 1)[1:]
        new_axes.append(np.concatenate([left, ax, right]))
        offsets.append(k_lo)
    if mesh.dim == 1:
        parent = np.arange(mesh.n_nodes) + offsets[0]
    else:
        ny_new = len(new_axes[1])
        i, j = np.meshgrid(np.arange(len(mesh.axes[0])), np.arange(len(mesh.axes[1])), indexing="ij")
        parent = ((i + offsets[0]) * ny_new + (j + offsets[1])).ravel()
    return _tensor_mesh(new_axes, delta_prime=float(margin), parent_nodes=parent)


def restrict(values: np.ndarray, big: Mesh) -> np.ndarray:
    """Nodal values on an enlarged mesh, read back at the original nodes."""
    if big.parent_nodes is None:
        raise MeshMismatchError("mesh was not produced by enlarge_domain")
    return np.asarray(values)[big.parent_nodes]


@dataclass(frozen=True)
class QuadratureRule:
    """Per-element rule in barycentric coordinates; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray

    def interpolate(self, mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
        """Values of a P1 field at every rule point, shape (m, k)."""
        return np.einsum("kv,ev->ek", self.points, np.asarray(nodal)[mesh.elements])

    def integrate(self, mesh: Mesh, point_values: np.ndarray) -> float:
        return float(np.einsum("e,k,ek->", mesh.measures, self.weights, point_values))


def barycenter_rule(dim: int) -> QuadratureRule:
    return QuadratureRule(np.full((1, dim + 1), 1.0 / (dim + 1)), np.ones(1))


def gauss_rule(dim: int) -> QuadratureRule:
    """Degree-2 exact rule with all points strictly inside the element."""
    if dim == 1:
        s = 0.5 / math.sqrt(3.0)
        pts = np.array([[0.5 + s, 0.5 - s], [0.5 - s, 0.5 + s]])
        return QuadratureRule(pts, np.full(2, 0.5))
    pts = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    return QuadratureRule(pts, np.full(3, 1 / 3))
