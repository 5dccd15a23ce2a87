"""Poses, relative-pose measurements and the measurement graph.

Vertices are indexed 0..n-1 internally. Each measurement is attached to a
directed edge ``tail -> head``; the stored direction is the one the noise
model refers to (the tail is the measurement's base frame).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

ORTHO_TOL = 1e-9


class GraphError(ValueError):
    """Raised for structurally invalid measurement graphs."""


class ConnectivityError(GraphError):
    pass


def rotation_2d(theta: float) -> np.ndarray:
    """Counter-clockwise planar rotation by ``theta`` radians."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def angle_2d(R: np.ndarray) -> float:
    return float(np.arctan2(R[1, 0], R[0, 0]))


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        return False
    d = R.shape[0]
    return (
        np.linalg.norm(R.T @ R - np.eye(d)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """An element (t, R) of SE(d)."""

    t: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        R = np.asarray(self.R, dtype=float)
        if R.shape != (t.size, t.size):
            raise ValueError(f"rotation shape {R.shape} does not match translation size {t.size}")
        if not is_rotation(R):
            raise ValueError("R is not a special orthogonal matrix")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "R", R)

    @property
    def d(self) -> int:
        return self.t.size

    @classmethod
    def identity(cls, d: int) -> "Pose":
        return cls(np.zeros(d), np.eye(d))

    def __matmul__(self, other: "Pose") -> "Pose":
        return pose_compose(self, other)


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Group product ``a * b = (a.t + a.R b.t, a.R b.R)``."""
    return Pose(a.t + a.R @ b.t, a.R @ b.R)


def pose_inverse(a: Pose) -> Pose:
    return Pose(-a.R.T @ a.t, a.R.T)


def relative_pose(a: Pose, b: Pose) -> Pose:
    """The transform ``a^{-1} b`` taking frame ``a`` to frame ``b``."""
    return pose_compose(pose_inverse(a), b)


@dataclass(frozen=True, eq=False)
class RelativePoseMeasurement:
    """One directed edge ``tail -> head`` with its noisy relative transform.

    ``tau`` is the isotropic translational precision and ``kappa`` the
    Langevin concentration of the rotational noise.
    """

    tail: int
    head: int
    translation: np.ndarray
    rotation: np.ndarray
    tau: float
    kappa: float

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (t.size, t.size):
            raise ValueError("rotation/translation dimension mismatch")
        if not is_rotation(R):
            raise ValueError(f"edge ({self.tail}, {self.head}): rotation is not in SO(d)")
        if self.tail == self.head:
            raise ValueError(f"self-loop at vertex {self.tail}")
        if not self.tau > 0:
            raise ValueError(f"edge ({self.tail}, {self.head}): tau must be positive, got {self.tau}")
        if not self.kappa >= 0:
            raise ValueError(f"edge ({self.tail}, {self.head}): kappa must be >= 0, got {self.kappa}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "tail", int(self.tail))
        object.__setattr__(self, "head", int(self.head))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def d(self) -> int:
        return self.translation.size

    def as_pose(self) -> Pose:
        return Pose(self.translation, self.rotation)

    def reversed(self) -> "RelativePoseMeasurement":
        """Same information attached to the opposite orientation."""
        inv = pose_inverse(self.as_pose())
        return RelativePoseMeasurement(self.head, self.tail, inv.t, inv.R, self.tau, self.kappa)


@dataclass(frozen=True, eq=False)
class MeasurementGraph:
    """Directed, connected measurement graph.

    Parallel edges are allowed and kept as separate measurements.
    ``vertex_ids`` maps internal index -> original id (e.g. from a g2o file);
    ``initial_estimates`` optionally holds poses read from VERTEX records.
    """

    n: int
    edges: tuple[RelativePoseMeasurement, ...]
    dimension: int
    vertex_ids: tuple[Hashable, ...] = ()
    initial_estimates: dict[int, Pose] = field(default_factory=dict)

    def __post_init__(self):
        edges = tuple(self.edges)
        object.__setattr__(self, "edges", edges)
        if self.dimension not in (2, 3):
            raise GraphError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.n < 1:
            raise GraphError("graph needs at least one vertex")
        for e in edges:
            if e.d != self.dimension:
                raise GraphError(f"edge ({e.tail}, {e.head}) has dimension {e.d}, expected {self.dimension}")
            if not (0 <= e.tail < self.n and 0 <= e.head < self.n):
                raise GraphError(f"edge ({e.tail}, {e.head}) references a vertex outside [0, {self.n})")
        if not self.vertex_ids:
            object.__setattr__(self, "vertex_ids", tuple(range(self.n)))
        elif len(self.vertex_ids) != self.n:
            raise GraphError("vertex_ids must have one entry per vertex")
        if self.n > 1:
            ncomp, _ = connected_components(self._adjacency(), directed=False)
            if ncomp != 1:
                raise ConnectivityError(f"measurement graph is not connected ({ncomp} components)")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def d(self) -> int:
        return self.dimension

    def index_of(self, vertex_id: Hashable) -> int:
        return self.vertex_ids.index(vertex_id)

    def _adjacency(self) -> sp.csr_matrix:
        if not self.edges:
            return sp.csr_matrix((self.n, self.n))
        i = [e.tail for e in self.edges]
        j = [e.head for e in self.edges]
        return sp.csr_matrix((np.ones(len(i)), (i, j)), shape=(self.n, self.n))

    def tails(self) -> np.ndarray:
        return np.array([e.tail for e in self.edges], dtype=int)

    def heads(self) -> np.ndarray:
        return np.array([e.head for e in self.edges], dtype=int)

    def taus(self) -> np.ndarray:
        return np.array([e.tau for e in self.edges])

    def kappas(self) -> np.ndarray:
        return np.array([e.kappa for e in self.edges])

    def with_edges(self, edges: Sequence[RelativePoseMeasurement]) -> "MeasurementGraph":
        return MeasurementGraph(self.n, tuple(edges), self.dimension, self.vertex_ids, dict(self.initial_estimates))


def incidence_matrix(g: MeasurementGraph) -> sp.csc_matrix:
    """Oriented n x m incidence matrix: +1 at the head, -1 at the tail."""
    m = g.m
    cols = np.repeat(np.arange(m), 2)
    rows = np.empty(2 * m, dtype=int)
    rows[0::2] = g.tails()
    rows[1::2] = g.heads()
    vals = np.tile([-1.0, 1.0], m)
    return sp.csc_matrix((vals, (rows, cols)), shape=(g.n, m))


def reduced_incidence_matrix(g: MeasurementGraph) -> sp.csc_matrix:
    """Incidence matrix with its final row removed; full row rank n-1."""
    return incidence_matrix(g)[:-1, :].tocsc()


def weight_graph_laplacian(g: MeasurementGraph, which: str = "tau") -> sp.csr_matrix:
    """Laplacian of the translational (``"tau"``) or rotational (``"kappa"``) weight graph."""
    if which in ("tau", "translational"):
        w = g.taus()
    elif which in ("kappa", "rotational"):
        w = g.kappas()
    else:
        raise ValueError(f"unknown weight graph {which!r}")
    i, j = g.tails(), g.heads()
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([w, w, -w, -w])
    return sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))


def spanning_tree_edges(g: MeasurementGraph, root: int = 0) -> tuple[list[int], np.ndarray, list[int]]:
    """BFS spanning tree.

    Returns the tree edge indices, the parent edge of every vertex (-1 at the
    root) and the BFS visiting order.
    """
    adj: list[list[int]] = [[] for _ in range(g.n)]
    for k, e in enumerate(g.edges):
        adj[e.tail].append(k)
        adj[e.head].append(k)
    parent_edge = np.full(g.n, -1, dtype=int)
    seen = np.zeros(g.n, dtype=bool)
    seen[root] = True
    order = [root]
    tree: list[int] = []
    head = 0
    while head < len(order):
        v = order[head]
        head += 1
        for k in adj[v]:
            e = g.edges[k]
            w = e.head if e.tail == v else e.tail
            if not seen[w]:
                seen[w] = True
                parent_edge[w] = k
                tree.append(k)
                order.append(w)
    return tree, parent_edge, order


def chain_poses(g: MeasurementGraph, root: int = 0) -> list[Pose]:
    """Compose measurements along a BFS spanning tree (odometry-style estimate)."""
    _, parent_edge, order = spanning_tree_edges(g, root)
    poses: list[Pose | None] = [None] * g.n
    poses[root] = Pose.identity(g.d)
    for v in order[1:]:
        e = g.edges[parent_edge[v]]
        if e.head == v:
            poses[v] = pose_compose(poses[e.tail], e.as_pose())
        else:
            poses[v] = pose_compose(poses[e.head], pose_inverse(e.as_pose()))
    return poses  # type: ignore[return-value]
