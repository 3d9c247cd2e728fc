"""Undirected interaction graphs and the graph-collapse test.

Vertices are 0-based inside the library. The JSON form uses 1-based indices:
``{"k": 4, "edges": [[1, 2], [2, 3]]}``.
"""
from collections import Counter
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.sparse.csgraph import connected_components as _cc


@dataclass(frozen=True)
class Graph:
    k: int
    edges: tuple = ()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("graph needs at least one vertex")
        canon = []
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            i, j = min(i, j), max(i, j)
            if i < 0 or j >= self.k:
                raise ValueError(f"edge ({i}, {j}) out of range for k={self.k}")
            canon.append((i, j))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def num_edges(self):
        return len(self.edges)

    def adjacency(self):
        A = np.zeros((self.k, self.k), dtype=int)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    def neighbors(self, i):
        return [b if a == i else a for a, b in self.edges if i in (a, b)]

    def edge_index(self, i, j):
        return self.edges.index((min(i, j), max(i, j)))

    def relabel(self, perm):
        """Graph with vertex ``v`` renamed ``perm[v]``."""
        return Graph(self.k, tuple((perm[i], perm[j]) for i, j in self.edges))

    def to_json(self):
        return {"k": self.k, "edges": [[i + 1, j + 1] for i, j in self.edges]}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["k"]), tuple((int(i) - 1, int(j) - 1) for i, j in obj["edges"]))

    @classmethod
    def complete(cls, k):
        return cls(k, tuple((i, j) for i in range(k) for j in range(i + 1, k)))


def incidence_matrix(G):
    """k x #E matrix; column e has -1 at the smaller endpoint and +1 at the larger."""
    B = np.zeros((G.k, G.num_edges), dtype=int)
    for e, (i, j) in enumerate(G.edges):
        B[i, e] = -1
        B[j, e] = 1
    return B


def standard_laplacian(G):
    A = G.adjacency()
    return np.diag(A.sum(axis=1)) - A


def connected_components(G):
    """Return ``(count, labels)`` with labels numbered by first appearance."""
    if G.num_edges == 0:
        return G.k, np.arange(G.k)
    count, labels = _cc(G.adjacency(), directed=False)
    return int(count), labels


@dataclass
class MultiGraph:
    vertices: set
    edges: Counter = field(default_factory=Counter)

    @classmethod
    def from_graph(cls, G):
        return cls(set(range(G.k)), Counter(frozenset(e) for e in G.edges))

    def has(self, a, b):
        return self.edges.get(frozenset((a, b)), 0) > 0

    def merge(self, group):
        """Collapse the vertices in ``group`` into the smallest of them."""
        keep = min(group)
        group = set(group)
        merged = Counter()
        for pair, mult in self.edges.items():
            a, b = tuple(pair)
            a = keep if a in group else a
            b = keep if b in group else b
            if a != b:
                merged[frozenset((a, b))] += mult
        self.edges = merged
        self.vertices = (self.vertices - group) | {keep}
        return keep

    def multi_edge(self):
        """First (lexicographic) pair joined by more than one edge, or None."""
        multi = sorted(tuple(sorted(p)) for p, m in self.edges.items() if m > 1)
        return multi[0] if multi else None

    def edge_list(self):
        return sorted((tuple(sorted(p)), m) for p, m in self.edges.items())


def _find_pattern(mg):
    verts = sorted(mg.vertices)
    adj = {v: set() for v in verts}
    for pair in mg.edges:
        a, b = tuple(pair)
        adj[a].add(b)
        adj[b].add(a)
    # (i,l), (i,m), (p,l), (p,m), (m,l): i and p both see the adjacent pair l, m
    for i in verts:
        for l in sorted(adj[i]):
            for m in sorted(adj[i] & adj[l]):
                if m == l:
                    continue
                for p in sorted(adj[l] & adj[m]):
                    if p not in (i, l, m):
                        return i, l, m, p
    return None


def collapse_analysis(G):
    """Run the four-vertex / double-edge collapse on ``G``.

    Returns a dict with ``reducible`` (True when a single vertex remains),
    ``final`` (the remaining MultiGraph) and ``trace``, a list of steps
    ``{"rule": "pattern" | "double_edge", "vertices": [...], "into": v}``.
    """
    mg = MultiGraph.from_graph(G)
    trace = []
    while True:
        found = _find_pattern(mg)
        if found is None:
            break
        keep = mg.merge(found)
        trace.append({"rule": "pattern", "vertices": list(found), "into": keep})
        while (pair := mg.multi_edge()) is not None:
            keep = mg.merge(pair)
            trace.append({"rule": "double_edge", "vertices": list(pair), "into": keep})
    return {"reducible": len(mg.vertices) == 1, "final": mg, "trace": trace}


def collapse_order_independent(G, perms=None):
    """True when every relabeling of ``G`` collapses to the same verdict.

    ``perms`` defaults to all k! relabelings.
    """
    expected = collapse_analysis(G)["reducible"]
    if perms is None:
        perms = permutations(range(G.k))
    return all(collapse_analysis(G.relabel(p))["reducible"] == expected for p in perms)


# graphs A and B of the non-rigid example (7 agents, two diamonds sharing vertex 3)
FIG6A = Graph(7, ((0, 1), (0, 2), (0, 3), (1, 3), (2, 3), (3, 4), (3, 5), (4, 6), (5, 6), (4, 5)))
FIG6B = Graph(7, ((0, 1), (0, 2), (0, 3), (1, 3), (2, 3), (3, 4), (3, 5), (4, 6), (5, 6)))
