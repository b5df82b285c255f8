"""Interval and triangulated-rectangle meshes for P1 finite elements."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = ["InvalidMesh", "GridDomain", "BoundarySpec", "interval_mesh", "rectangle_mesh"]


class InvalidMesh(ValueError):
    """Raised for degenerate or inconsistent meshes."""


@dataclass(frozen=True)
class GridDomain:
    """Conforming simplicial mesh in one or two dimensions.

    Parameters
    ----------
    nodes : ndarray, shape (N, dim)
    elements : ndarray, shape (E, dim + 1)
        Node indices of each simplex.
    boundary_nodes : ndarray of int
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        elements = np.asarray(self.elements, dtype=int)
        dim = nodes.shape[1]
        if dim not in (1, 2) or elements.ndim != 2 or elements.shape[1] != dim + 1:
            raise InvalidMesh("expected intervals in 1D or triangles in 2D")
        if elements.min() < 0 or elements.max() >= nodes.shape[0]:
            raise InvalidMesh("element references a missing node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary_nodes", np.unique(np.asarray(self.boundary_nodes, dtype=int)))
        if np.any(self.measures <= 0):
            raise InvalidMesh("elements must have positive measure (check orientation)")

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def _edges(self):
        P = self.nodes[self.elements]
        return P[:, 1:, :] - P[:, :1, :]

    @property
    def measures(self) -> np.ndarray:
        """Signed-then-checked element measures (lengths or areas)."""
        E = self._edges()
        return np.linalg.det(E) / factorial(self.dim)

    @property
    def h(self) -> float:
        """Largest element diameter."""
        P = self.nodes[self.elements]
        diam = np.zeros(self.n_elements)
        k = self.dim + 1
        for i in range(k):
            for j in range(i + 1, k):
                diam = np.maximum(diam, np.linalg.norm(P[:, i] - P[:, j], axis=1))
        return float(diam.max())

    @property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the local hat functions, shape (E, dim + 1, dim)."""
        E = self._edges()
        inv = np.linalg.inv(E)  # columns are gradients of barycentric coords 1..dim
        g_rest = np.swapaxes(inv, 1, 2)
        g0 = -g_rest.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g_rest], axis=1)


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet node set; the rest of the boundary carries natural conditions."""

    dirichlet_nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dirichlet_nodes", np.unique(np.asarray(self.dirichlet_nodes, dtype=int)))

    @classmethod
    def dirichlet(cls, domain: GridDomain) -> "BoundarySpec":
        return cls(domain.boundary_nodes)

    @classmethod
    def neumann(cls) -> "BoundarySpec":
        return cls(np.array([], dtype=int))

    @classmethod
    def where(cls, domain: GridDomain, predicate) -> "BoundarySpec":
        """Dirichlet on the boundary nodes whose coordinates satisfy ``predicate``."""
        b = domain.boundary_nodes
        mask = np.asarray(predicate(domain.nodes[b]), dtype=bool)
        return cls(b[mask])

    def validate(self, domain: GridDomain) -> None:
        if not np.all(np.isin(self.dirichlet_nodes, domain.boundary_nodes)):
            raise InvalidMesh("Dirichlet nodes must lie on the boundary")


def interval_mesh(n: int, a: float = 0.0, b: float = 1.0) -> GridDomain:
    """Uniform mesh of ``(a, b)`` with ``n`` elements."""
    if n < 1 or not b > a:
        raise InvalidMesh("need n >= 1 and b > a")
    x = np.linspace(a, b, n + 1)
    el = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return GridDomain(x[:, None], el, np.array([0, n]))


def rectangle_mesh(nx: int, ny: int, box=((0.0, 1.0), (0.0, 1.0))) -> GridDomain:
    """Uniform right-triangle mesh of a rectangle, each cell split along a diagonal."""
    if nx < 1 or ny < 1:
        raise InvalidMesh("need nx, ny >= 1")
    (x0, x1), (y0, y1) = box
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    elements = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    on_edge = (np.isclose(nodes[:, 0], x0) | np.isclose(nodes[:, 0], x1)
               | np.isclose(nodes[:, 1], y0) | np.isclose(nodes[:, 1], y1))
    return GridDomain(nodes, elements, np.flatnonzero(on_edge))
