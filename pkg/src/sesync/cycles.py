"""Cycle-space construction of the projector onto ker(A Omega^{1/2}).

These routines build the projector from a fundamental cycle basis or from the
closed-form incidence pseudoinverse. They are dense and meant for
cross-checking the sparse factorizations on small graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import MeasurementGraph, incidence_matrix, reduced_incidence_matrix, spanning_tree_edges

MAX_ORACLE_EDGES = 500
MAX_ORACLE_VERTICES = 500


@dataclass(frozen=True, eq=False)
class CycleBasis:
    """Integer cycle matrix: one circuit per column, entries in {-1, 0, +1}."""

    circuits: np.ndarray  # m x nu

    @property
    def count(self) -> int:
        return self.circuits.shape[1]


def _tree_path(u: int, v: int, parent_edge: np.ndarray, g: MeasurementGraph) -> list[tuple[int, int]]:
    """Signed tree edges walking from u to v: list of (edge index, +1 forward / -1 backward)."""

    def up(w: int) -> int:
        e = g.edges[parent_edge[w]]
        return e.tail if e.head == w else e.head

    def ancestors(w: int) -> list[int]:
        chain = [w]
        while parent_edge[w] >= 0:
            w = up(w)
            chain.append(w)
        return chain

    au, av = ancestors(u), ancestors(v)
    in_av = set(av)
    lca = next(w for w in au if w in in_av)
    path: list[tuple[int, int]] = []
    w = u
    while w != lca:
        k = parent_edge[w]
        path.append((k, 1 if g.edges[k].tail == w else -1))
        w = up(w)
    down: list[tuple[int, int]] = []
    w = v
    while w != lca:
        k = parent_edge[w]
        # traversed from the parent towards w
        down.append((k, 1 if g.edges[k].head == w else -1))
        w = up(w)
    return path + down[::-1]


def fundamental_cycle_basis(g: MeasurementGraph) -> CycleBasis:
    """Fundamental circuits of a BFS spanning tree; ``A @ circuits == 0``."""
    tree, parent_edge, _ = spanning_tree_edges(g)
    in_tree = np.zeros(g.m, dtype=bool)
    in_tree[tree] = True
    cols = []
    for k in np.flatnonzero(~in_tree):
        e = g.edges[k]
        c = np.zeros(g.m, dtype=np.int64)
        c[k] = 1
        # close the loop from the head back to the tail through the tree
        for idx, sign in _tree_path(e.head, e.tail, parent_edge, g):
            c[idx] += sign
        cols.append(c)
    circuits = np.array(cols, dtype=np.int64).T if cols else np.zeros((g.m, 0), dtype=np.int64)
    return CycleBasis(circuits)


def projector_via_cycles(g: MeasurementGraph, weights: np.ndarray | None = None) -> np.ndarray:
    """Dense projector onto ker(A Omega^{1/2}) as ``G G^+`` with ``G = Omega^{-1/2} Gamma``."""
    if g.m > MAX_ORACLE_EDGES:
        raise ValueError(f"cycle oracle limited to {MAX_ORACLE_EDGES} edges, graph has {g.m}")
    Gamma = fundamental_cycle_basis(g).circuits.astype(float)
    if Gamma.shape[1] == 0:
        return np.zeros((g.m, g.m))
    if weights is not None:
        Gamma = Gamma / np.sqrt(np.asarray(weights, dtype=float))[:, None]
    return Gamma @ np.linalg.pinv(Gamma)


def incidence_pseudoinverse(g: MeasurementGraph) -> np.ndarray:
    """Closed-form Moore-Penrose pseudoinverse of the incidence matrix (m x n)."""
    if g.n > MAX_ORACLE_VERTICES:
        raise ValueError(f"pseudoinverse oracle limited to {MAX_ORACLE_VERTICES} vertices, graph has {g.n}")
    n = g.n
    Ar = reduced_incidence_matrix(g).toarray()
    ones = np.ones((n - 1, 1))
    E_pinv = np.hstack([np.eye(n - 1) - ones @ ones.T / n, -ones / n])
    return Ar.T @ np.linalg.solve(Ar @ Ar.T, E_pinv)


def projector_via_pseudoinverse(g: MeasurementGraph, weights: np.ndarray | None = None) -> np.ndarray:
    """Dense ``I - (A Omega^{1/2})^+ (A Omega^{1/2})`` by SVD pseudoinverse."""
    A = incidence_matrix(g).toarray()
    if weights is not None:
        A = A * np.sqrt(np.asarray(weights, dtype=float))[None, :]
    return np.eye(g.m) - np.linalg.pinv(A) @ A
