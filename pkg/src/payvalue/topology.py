"""Structure of the invitation forest: components, out-degrees, cascades."""
from __future__ import annotations

from collections import deque

import numpy as np
import pandas as pd

from .graph_model import Digraph, InvitationNetwork


def distribution_table(values) -> pd.DataFrame:
    """Exact histogram with CCDF, the fraction of samples >= value."""
    values = np.asarray(values, dtype=np.int64)
    uniq, counts = np.unique(values, return_counts=True)
    ge = counts[::-1].cumsum()[::-1]
    ccdf = ge / values.size if values.size else ge.astype(float)
    return pd.DataFrame({"value": uniq, "count": counts, "ccdf": ccdf})


def ccdf_at(table: pd.DataFrame, x) -> float:
    """Evaluate a distribution table's CCDF at any x (0 beyond the maximum)."""
    ge = table["value"].to_numpy() >= x
    return float(table["ccdf"].to_numpy()[ge][0]) if ge.any() else 0.0


# ---------------------------------------------------------------- components


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def _canonical_labels(raw: np.ndarray) -> np.ndarray:
    # relabel so components are numbered by their smallest node index
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inverse]


def wcc_labels_union_find(graph: Digraph) -> np.ndarray:
    uf = UnionFind(graph.n_nodes)
    src, dst = graph.edges()
    for a, b in zip(src.tolist(), dst.tolist()):
        uf.union(a, b)
    return _canonical_labels(np.array([uf.find(v) for v in range(graph.n_nodes)], dtype=np.int64))


def wcc_labels_bfs(graph: Digraph) -> np.ndarray:
    n = graph.n_nodes
    in_ptr, in_idx = graph.predecessors_csr()
    out_ptr, out_idx = graph.out_ptr, graph.out_idx
    label = np.full(n, -1, dtype=np.int64)
    for start in range(n):
        if label[start] >= 0:
            continue
        label[start] = start
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in np.concatenate((out_idx[out_ptr[v]:out_ptr[v + 1]],
                                     in_idx[in_ptr[v]:in_ptr[v + 1]])).tolist():
                if label[w] < 0:
                    label[w] = start
                    queue.append(w)
    return _canonical_labels(label)


def forest_component_roots(network: InvitationNetwork) -> np.ndarray:
    """Root node index of every node's tree, by a root-first sweep."""
    root = np.arange(network.n_nodes)
    for level in network.levels[1:]:
        root[level] = root[network.parent[level]]
    return root


def weakly_connected_components(network: InvitationNetwork) -> pd.DataFrame:
    """One row per component: component_id, root_id, size, depth.

    Components are numbered in ascending order of root id.
    """
    root = forest_component_roots(network)
    roots = network.roots()
    size = np.bincount(root, minlength=network.n_nodes)[roots]
    depth = np.zeros(network.n_nodes, dtype=np.int64)
    np.maximum.at(depth, root, network.depth)
    return pd.DataFrame({
        "component_id": np.arange(roots.size),
        "root_id": network.ids[roots],
        "size": size,
        "depth": depth[roots],
    })


def component_size_distribution(network: InvitationNetwork) -> pd.DataFrame:
    return distribution_table(weakly_connected_components(network)["size"])


# ---------------------------------------------------------------- per node


def out_degree_distribution(network: Digraph) -> pd.DataFrame:
    return distribution_table(network.out_degree())


def reachable_counts(network: InvitationNetwork) -> np.ndarray:
    """Number of descendants of every node, excluding the node itself."""
    reach = np.zeros(network.n_nodes, dtype=np.int64)
    for level in reversed(network.levels[1:]):
        np.add.at(reach, network.parent[level], reach[level] + 1)
    return reach


def reachable_set_sizes(network: InvitationNetwork) -> pd.DataFrame:
    return distribution_table(reachable_counts(network))


def inviter_fraction(network: Digraph) -> float:
    return float((network.out_degree() > 0).mean()) if network.n_nodes else 0.0
