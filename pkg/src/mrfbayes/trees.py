"""Spanning trees and exact sampling / normalisation of tree-structured fields."""

from __future__ import annotations

from collections import deque

import numpy as np

from . import _kernels
from .models import GraphStructure, ModelError


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def spanning_tree_and_order(g: GraphStructure, rng) -> tuple[np.ndarray, np.ndarray]:
    """Randomised Kruskal spanning tree plus a shuffled order of the other edges.

    Returns indices into ``g.edges``: (tree edge ids, remaining edge ids).
    """
    if not g.is_connected():
        raise ModelError("graph is not connected; no spanning tree")
    order = rng.permutation(g.edge_count)
    ds = _DisjointSet(g.node_count)
    tree, rest = [], []
    for e in order.tolist():
        i, j = g.edges[e]
        (tree if ds.union(int(i), int(j)) else rest).append(e)
    rest = np.array(rest, dtype=np.int64)
    return np.array(tree, dtype=np.int64), rest[rng.permutation(len(rest))]


class TreeField:
    """Exact sum-product on a spanning tree of binary variables.

    The density is proportional to exp(sum_k h_k v_k + sum_tree w_e v_i v_j).
    """

    def __init__(self, n: int, tree_edges, weights, h, spin: bool = True):
        tree_edges = np.asarray(tree_edges, dtype=np.int64).reshape(-1, 2)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(tree_edges),))
        if len(tree_edges) != n - 1:
            raise ModelError(f"a spanning tree on {n} nodes needs {n - 1} edges, got {len(tree_edges)}")
        ds = _DisjointSet(n)
        adj = [[] for _ in range(n)]
        for (i, j), w in zip(tree_edges.tolist(), weights.tolist()):
            if not ds.union(i, j):
                raise ModelError("cycle detected in tree edges")
            adj[i].append((j, w))
            adj[j].append((i, w))
        parent = np.full(n, -1, dtype=np.int64)
        parent_w = np.zeros(n)
        seen = np.zeros(n, dtype=bool)
        order = []
        queue = deque([0])
        seen[0] = True
        while queue:
            k = queue.popleft()
            order.append(k)
            for j, w in adj[k]:
                if not seen[j]:
                    seen[j] = True
                    parent[j], parent_w[j] = k, w
                    queue.append(j)
        self.n = n
        self.order = np.array(order, dtype=np.int64)
        self.parent, self.parent_w = parent, parent_w
        self.vals = np.array([-1.0, 1.0]) if spin else np.array([0.0, 1.0])
        self.beliefs, self.log_z = _kernels.tree_messages(
            self.order, parent, parent_w, np.asarray(h, dtype=float), self.vals
        )

    def sample(self, P: int, rng) -> np.ndarray:
        X = np.empty((P, self.n), dtype=np.int8)
        _kernels.tree_draw(X, self.beliefs, self.order, self.parent, self.parent_w, self.vals,
                           rng.random((P, self.n)))
        return X


def tree_sample_and_log_z(tree_edges, theta_x: float, unary, rng, n: int | None = None,
                          spin: bool = True, size: int | None = None):
    """Exact draw(s) from the tree field and its log normaliser.

    ``unary`` is the per-node field h, i.e. unary log potential h_k * x_k.
    """
    unary = np.asarray(unary, dtype=float)
    n = len(unary) if n is None else n
    tf = TreeField(n, tree_edges, theta_x, unary, spin)
    X = tf.sample(1 if size is None else size, rng)
    return (X[0] if size is None else X), float(tf.log_z)
