"""Directed multigraph containers, support-set indexing and permutation machinery.

A multigraph keeps its edges as an ordered multiset: the same (src, dst)
pair may appear any number of times, and edge feature row k always belongs
to edge k. All derived index structures (support set, reverse index) are
built once and treated as immutable afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Structural problem with a multigraph or one of its indices."""


class InfeasibleError(GraphError):
    """Requested random graph cannot exist (m < n - 1)."""


def _as_int_array(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.int64))


def _as_float_matrix(x) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if a.ndim != 2:
        raise GraphError(f"expected a 2-d feature matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Multigraph:
    """Directed attributed multigraph with dense feature storage.

    edges is an [m, 2] array of (src, dst) node indices; parallel edges are
    simply repeated rows. Feature rows are aligned with node/edge indices.
    """

    num_nodes: int
    node_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edges", _as_int_array(self.edges).reshape(-1, 2))
        object.__setattr__(self, "node_features", _as_float_matrix(self.node_features))
        object.__setattr__(self, "edge_features", _as_float_matrix(self.edge_features))
        if self.num_nodes < 0:
            raise GraphError("num_nodes must be non-negative")
        if self.node_features.shape[0] != self.num_nodes:
            raise GraphError("node_features row count does not match num_nodes")
        if self.edge_features.shape[0] != self.num_edges:
            raise GraphError("edge_features row count does not match number of edges")
        if self.num_edges:
            lo, hi = self.edges.min(), self.edges.max()
            if lo < 0 or hi >= self.num_nodes:
                raise GraphError("edge endpoint out of range")
        if not np.isfinite(self.node_features).all():
            raise GraphError("node_features contain non-finite entries")
        if not np.isfinite(self.edge_features).all():
            raise GraphError("edge_features contain non-finite entries")

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]


def build_groups(keys: np.ndarray, num_groups: int) -> tuple[np.ndarray, np.ndarray]:
    """Stable grouping of item indices by integer key.

    Returns (order, offsets): order is a permutation of item indices such
    that items of group g occupy order[offsets[g]:offsets[g+1]], preserving
    their original relative order.
    """
    keys = _as_int_array(keys)
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=num_groups)
    offsets = np.zeros(num_groups + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return order, offsets


@dataclass(frozen=True)
class SupportIndex:
    """Unique-pair structure over a multigraph's edge multiset.

    supp_pairs lists distinct (src, dst) pairs in first-occurrence order.
    Parallel edges of pair s occupy group_order[group_offsets[s]:group_offsets[s+1]].
    in_order/in_offsets group support-pair indices by destination node,
    out_order/out_offsets by source node.
    """

    num_nodes: int
    supp_pairs: np.ndarray          # [S, 2]
    edge_to_supp: np.ndarray        # [m]
    group_order: np.ndarray         # [m], edge indices grouped by supp id
    group_offsets: np.ndarray       # [S + 1]
    multiplicity: np.ndarray        # [S]
    in_order: np.ndarray            # [S], supp ids grouped by dst
    in_offsets: np.ndarray          # [num_nodes + 1]
    out_order: np.ndarray           # [S], supp ids grouped by src
    out_offsets: np.ndarray         # [num_nodes + 1]

    @property
    def num_pairs(self) -> int:
        return self.supp_pairs.shape[0]

    @property
    def supp_src(self) -> np.ndarray:
        return self.supp_pairs[:, 0]

    @property
    def supp_dst(self) -> np.ndarray:
        return self.supp_pairs[:, 1]

    @property
    def supp_groups(self) -> list[np.ndarray]:
        return [
            self.group_order[self.group_offsets[s]:self.group_offsets[s + 1]]
            for s in range(self.num_pairs)
        ]

    @property
    def in_neighbors(self) -> list[np.ndarray]:
        """Per node, the support-pair indices arriving at it."""
        return [
            self.in_order[self.in_offsets[j]:self.in_offsets[j + 1]]
            for j in range(self.num_nodes)
        ]

    @property
    def out_neighbors(self) -> list[np.ndarray]:
        """Per node, the support-pair indices leaving it."""
        return [
            self.out_order[self.out_offsets[i]:self.out_offsets[i + 1]]
            for i in range(self.num_nodes)
        ]

    def in_degrees(self) -> np.ndarray:
        """Distinct in-neighbor count per node."""
        return np.diff(self.in_offsets)

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.out_offsets)


def build_support_index(g: Multigraph) -> SupportIndex:
    """Group parallel edges by their (src, dst) pair.

    Pairs are numbered in first-occurrence order so the result is
    deterministic for a given edge list.
    """
    m = g.num_edges
    n = g.num_nodes
    if m == 0:
        empty = np.zeros(0, dtype=np.int64)
        zeros_n = np.zeros(n + 1, dtype=np.int64)
        return SupportIndex(
            num_nodes=n,
            supp_pairs=np.zeros((0, 2), dtype=np.int64),
            edge_to_supp=empty,
            group_order=empty,
            group_offsets=np.zeros(1, dtype=np.int64),
            multiplicity=empty,
            in_order=empty,
            in_offsets=zeros_n,
            out_order=empty,
            out_offsets=zeros_n,
        )
    key = g.src * np.int64(n) + g.dst
    _, first_idx, inverse = np.unique(key, return_index=True, return_inverse=True)
    # renumber sorted-unique ids into first-occurrence order
    occ_order = np.argsort(first_idx, kind="stable")
    rank = np.empty(occ_order.shape[0], dtype=np.int64)
    rank[occ_order] = np.arange(occ_order.shape[0])
    edge_to_supp = rank[inverse]
    supp_pairs = g.edges[first_idx[occ_order]]

    num_pairs = supp_pairs.shape[0]
    group_order, group_offsets = build_groups(edge_to_supp, num_pairs)
    multiplicity = np.diff(group_offsets)
    in_order, in_offsets = build_groups(supp_pairs[:, 1], n)
    out_order, out_offsets = build_groups(supp_pairs[:, 0], n)
    return SupportIndex(
        num_nodes=n,
        supp_pairs=supp_pairs,
        edge_to_supp=edge_to_supp,
        group_order=group_order,
        group_offsets=group_offsets,
        multiplicity=multiplicity,
        in_order=in_order,
        in_offsets=in_offsets,
        out_order=out_order,
        out_offsets=out_offsets,
    )


@dataclass(frozen=True)
class ReverseIndex:
    """Support structure over the reversed edge multiset.

    support is a SupportIndex built on edges with swapped endpoints;
    rev_edge_to_orig maps reverse-edge index k to its original edge.
    Reverse edge features start out as copies of the original features.
    """

    support: SupportIndex
    rev_edge_to_orig: np.ndarray
    initial_features: np.ndarray

    @property
    def num_pairs(self) -> int:
        return self.support.num_pairs


def build_reverse_index(g: Multigraph, s: SupportIndex) -> ReverseIndex:
    """Mirror the support structure over swapped (dst, src) pairs."""
    if s.num_nodes != g.num_nodes or s.edge_to_supp.shape[0] != g.num_edges:
        raise GraphError("support index does not match graph")
    reversed_graph = Multigraph(
        num_nodes=g.num_nodes,
        node_features=g.node_features,
        edges=g.edges[:, ::-1],
        edge_features=g.edge_features,
    )
    rev_support = build_support_index(reversed_graph)
    return ReverseIndex(
        support=rev_support,
        rev_edge_to_orig=np.arange(g.num_edges, dtype=np.int64),
        initial_features=g.edge_features.copy(),
    )


@dataclass(frozen=True)
class GraphPermutation:
    """Joint relabeling of nodes and edge positions.

    node_perm[i] is the new id of node i; edge_perm[k] is the new position
    of edge k. Node permutations do not induce edge permutations on a
    multigraph, so both are explicit.
    """

    node_perm: np.ndarray
    edge_perm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "node_perm", _as_int_array(self.node_perm))
        object.__setattr__(self, "edge_perm", _as_int_array(self.edge_perm))
        for name, p in (("node_perm", self.node_perm), ("edge_perm", self.edge_perm)):
            if p.size and not np.array_equal(np.sort(p), np.arange(p.size)):
                raise GraphError(f"{name} is not a bijection")

    def inverse(self) -> "GraphPermutation":
        inv_n = np.empty_like(self.node_perm)
        inv_n[self.node_perm] = np.arange(self.node_perm.size)
        inv_e = np.empty_like(self.edge_perm)
        inv_e[self.edge_perm] = np.arange(self.edge_perm.size)
        return GraphPermutation(inv_n, inv_e)


def apply_permutation(g: Multigraph, p: GraphPermutation) -> Multigraph:
    """Return the isomorphic graph with relabeled nodes and reordered edges."""
    if p.node_perm.size != g.num_nodes or p.edge_perm.size != g.num_edges:
        raise GraphError("permutation size does not match graph")
    new_node_features = np.empty_like(g.node_features)
    new_node_features[p.node_perm] = g.node_features
    new_edges = np.empty_like(g.edges)
    new_edges[p.edge_perm] = p.node_perm[g.edges]
    new_edge_features = np.empty_like(g.edge_features)
    new_edge_features[p.edge_perm] = g.edge_features
    return Multigraph(g.num_nodes, new_node_features, new_edges, new_edge_features)


def random_permutation(g: Multigraph, rng: np.random.Generator) -> GraphPermutation:
    return GraphPermutation(
        node_perm=rng.permutation(g.num_nodes),
        edge_perm=rng.permutation(g.num_edges),
    )


def random_connected_multigraph(
    n: int,
    m: int,
    seed: int,
    d_node: int = 2,
    d_edge: int = 2,
) -> Multigraph:
    """Weakly connected directed multigraph with exactly m edges.

    A spanning-tree backbone (each node attaches to a random earlier node,
    random direction) guarantees weak connectivity; the remaining edges are
    uniform random pairs, so parallel edges and self-loops can occur. Edge
    features are drawn until all rows are pairwise distinct, which supports
    a feature-induced strict total order on the edges.
    """
    if n < 1:
        raise InfeasibleError("need at least one node")
    if m < n - 1:
        raise InfeasibleError(f"m={m} cannot weakly connect n={n} nodes")
    rng = np.random.default_rng(seed)
    edges = np.zeros((m, 2), dtype=np.int64)
    if n > 1:
        attach = (rng.random(n - 1) * np.arange(1, n)).astype(np.int64)
        flip = rng.random(n - 1) < 0.5
        tree_src = np.where(flip, attach, np.arange(1, n))
        tree_dst = np.where(flip, np.arange(1, n), attach)
        edges[: n - 1, 0] = tree_src
        edges[: n - 1, 1] = tree_dst
    extra = m - max(n - 1, 0)
    if extra > 0:
        edges[n - 1:, 0] = rng.integers(0, n, size=extra)
        edges[n - 1:, 1] = rng.integers(0, n, size=extra)
    node_features = rng.random((n, d_node))
    edge_features = rng.random((m, d_edge))
    # redraw on the (practically impossible) duplicate feature row
    while m > 1:
        view = np.ascontiguousarray(edge_features).view(
            [("", edge_features.dtype)] * d_edge
        )
        if np.unique(view).shape[0] == m:
            break
        edge_features = rng.random((m, d_edge))
    return Multigraph(n, node_features, edges, edge_features)


def is_weakly_connected(g: Multigraph) -> bool:
    """Union-find check of weak connectivity."""
    if g.num_nodes <= 1:
        return True
    parent = np.arange(g.num_nodes)

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for s, d in g.edges:
        ra, rb = find(int(s)), find(int(d))
        if ra != rb:
            parent[rb] = ra
    root0 = find(0)
    return all(find(i) == root0 for i in range(1, g.num_nodes))


def undirected_bfs_distances(g: Multigraph, root: int) -> np.ndarray:
    """Hop distance from root ignoring edge direction; -1 when unreached."""
    adj: list[set[int]] = [set() for _ in range(g.num_nodes)]
    for s, d in g.edges:
        adj[int(s)].add(int(d))
        adj[int(d)].add(int(s))
    dist = np.full(g.num_nodes, -1, dtype=np.int64)
    dist[root] = 0
    frontier = [root]
    while frontier:
        nxt = []
        for v in frontier:
            for u in adj[v]:
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    nxt.append(u)
        frontier = nxt
    return dist
