'''
Graph representations and the matrix operators (adjacency, degree, Laplacian,
incidence and selection) used by the estimator, controller and optimizer
modules.

Node ids are 0-based inside the library. Scenario files and traces use
1-based ids, the conversion happens in `scenario.py` and `report.py`.
'''

from __future__ import annotations
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class GraphError(RuntimeError):
    ''' Error raised when a graph, numbering or leader set is invalid'''
    pass


class Topology(str, Enum):
    complete = 'complete'
    path = 'path'
    ring = 'ring'
    star = 'star'
    custom = 'custom'


Edge = Tuple[int, int, float]


class WeightedGraph:
    '''
    Weighted graph over nodes 0..n_nodes-1.

    For undirected graphs each edge is stored once as (min id, max id, weight).
    Giving both directions of an undirected edge is accepted only when the
    weights match.
    '''

    def __init__(
            self,
            n_nodes: int,
            edges: Iterable[Edge],
            directed: bool = False):
        if n_nodes < 1:
            raise GraphError(f"Graph needs at least one node, got {n_nodes}")
        self.n_nodes = int(n_nodes)
        self.directed = directed

        self._weights: Dict[Tuple[int, int], float] = {}
        for (i, j, w) in edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise GraphError(f"Self loop on node {i} is not allowed")
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise GraphError(
                    f"Edge ({i}, {j}) references a node outside 0..{n_nodes - 1}")
            if not np.isfinite(w) or w <= 0:
                raise GraphError(
                    f"Edge ({i}, {j}) weight must be strictly positive, got {w}")
            key = (i, j) if directed else (min(i, j), max(i, j))
            if key in self._weights and self._weights[key] != w:
                raise GraphError(
                    f"Edge {key} given twice with different weights "
                    f"({self._weights[key]} != {w})")
            self._weights[key] = w

        self._neighbors: List[List[int]] = [[] for _ in range(n_nodes)]
        for (i, j) in self._weights:
            self._neighbors[i].append(j)
            if not directed:
                self._neighbors[j].append(i)
        for nbrs in self._neighbors:
            nbrs.sort()

    @classmethod
    def complete(cls, n_nodes: int, weight: float = 1.0) -> WeightedGraph:
        edges = [
            (i, j, weight)
            for i in range(n_nodes) for j in range(i + 1, n_nodes)
        ]
        return cls(n_nodes, edges)

    @classmethod
    def path(cls, n_nodes: int, weight: float = 1.0) -> WeightedGraph:
        return cls(n_nodes, [(i, i + 1, weight) for i in range(n_nodes - 1)])

    @classmethod
    def ring(cls, n_nodes: int, weight: float = 1.0) -> WeightedGraph:
        if n_nodes < 3:
            return cls.path(n_nodes, weight)
        edges = [(i, (i + 1) % n_nodes, weight) for i in range(n_nodes)]
        return cls(n_nodes, edges)

    @classmethod
    def star(cls, n_nodes: int, weight: float = 1.0) -> WeightedGraph:
        return cls(n_nodes, [(0, i, weight) for i in range(1, n_nodes)])

    @classmethod
    def from_topology(
            cls,
            topology: Topology,
            n_nodes: int,
            weight: float = 1.0,
            edges: Optional[Iterable[Edge]] = None) -> WeightedGraph:
        topology = Topology(topology)
        if topology == Topology.custom:
            if edges is None:
                raise GraphError("Custom topology requires an explicit edge list")
            return cls(n_nodes, edges)
        builder = {
            Topology.complete: cls.complete,
            Topology.path: cls.path,
            Topology.ring: cls.ring,
            Topology.star: cls.star,
        }[topology]
        return builder(n_nodes, weight)

    @property
    def nodes(self) -> List[int]:
        return list(range(self.n_nodes))

    @property
    def edges(self) -> List[Edge]:
        ''' edges in lexicographic order of their stored key '''
        return [(i, j, w) for (i, j), w in sorted(self._weights.items())]

    def neighbors(self, i: int) -> List[int]:
        return self._neighbors[i]

    def neighbor_count(self, i: int) -> int:
        return len(self._neighbors[i])

    def has_edge(self, i: int, j: int) -> bool:
        return self.weight(i, j) > 0.0

    def weight(self, i: int, j: int) -> float:
        key = (i, j) if self.directed else (min(i, j), max(i, j))
        return self._weights.get(key, 0.0)

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"WeightedGraph({self.n_nodes} nodes, {len(self._weights)} {kind} edges)"


class EdgeNumbering:
    '''
    Maps each undirected edge to a unique column index and fixes its
    orientation (source, sink).
    '''

    def __init__(self, orientations: List[Tuple[int, int]]):
        self.orientations = list(orientations)
        self.index: Dict[Tuple[int, int], int] = {}
        for e, (src, sink) in enumerate(self.orientations):
            key = (min(src, sink), max(src, sink))
            if key in self.index:
                raise GraphError(f"Edge {key} numbered twice")
            self.index[key] = e

    @classmethod
    def lexicographic(cls, g: WeightedGraph) -> EdgeNumbering:
        ''' numbering by (min id, max id) with the smaller id as source '''
        return cls([(i, j) for (i, j, _) in g.edges])

    def __len__(self):
        return len(self.orientations)


class LeaderSet:
    '''
    Nodes that carry a global position sensor or know the true formation
    scale.
    '''

    def __init__(self, nodes: Iterable[int]):
        self.nodes: Tuple[int, ...] = tuple(sorted(set(int(n) for n in nodes)))

    def __contains__(self, node: int) -> bool:
        return node in self.nodes

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def __repr__(self):
        return f"LeaderSet({list(self.nodes)})"


def adjacency_matrix(g: WeightedGraph) -> np.ndarray:
    a = np.zeros((g.n_nodes, g.n_nodes))
    for (i, j, w) in g.edges:
        a[i, j] = w
        if not g.directed:
            a[j, i] = w
    return a


def degree_matrix(g: WeightedGraph) -> np.ndarray:
    ''' out-degree matrix diag(A 1) '''
    return np.diag(adjacency_matrix(g).sum(axis=1))


def laplacian(g: WeightedGraph) -> np.ndarray:
    return degree_matrix(g) - adjacency_matrix(g)


def incidence_matrix(
        g: WeightedGraph,
        num: Optional[EdgeNumbering] = None) -> np.ndarray:
    '''
    Node by edge incidence matrix of an undirected graph.

    Parameters:
        g (WeightedGraph): undirected graph
        num (EdgeNumbering): edge numbering, defaults to the lexicographic
            numbering

    Returns:
        numpy array of shape (N, m), column e holds +1 at the source and -1
        at the sink of edge e
    '''
    if g.directed:
        raise GraphError("Incidence matrix is only defined for undirected graphs")
    if num is None:
        num = EdgeNumbering.lexicographic(g)

    graph_keys = {(i, j) for (i, j, _) in g.edges}
    if graph_keys != set(num.index.keys()):
        raise GraphError(
            "Edge numbering does not cover exactly the edges of the graph")

    b = np.zeros((g.n_nodes, len(num)))
    for e, (src, sink) in enumerate(num.orientations):
        b[src, e] = 1.0
        b[sink, e] = -1.0
    return b


def edge_weights(g: WeightedGraph, num: Optional[EdgeNumbering] = None) -> np.ndarray:
    ''' edge weights ordered by the numbering, for B diag(a) B^T '''
    if num is None:
        num = EdgeNumbering.lexicographic(g)
    return np.array([g.weight(src, sink) for (src, sink) in num.orientations])


def selection_matrix(leaders: LeaderSet, n_nodes: int) -> np.ndarray:
    e = np.zeros((n_nodes, len(leaders)))
    for col, node in enumerate(leaders):
        if not 0 <= node < n_nodes:
            raise GraphError(
                f"Leader id {node} is outside the node range 0..{n_nodes - 1}")
        e[node, col] = 1.0
    return e


def is_connected(g: WeightedGraph) -> bool:
    ''' connectivity for undirected graphs, strong connectivity for directed '''
    if g.n_nodes == 1:
        return True
    adjacency = csr_matrix(adjacency_matrix(g))
    n_components, _ = connected_components(
        adjacency,
        directed=g.directed,
        connection='strong')
    return n_components == 1


def gain_laplacian(
        n_nodes: int,
        gains: Dict[Tuple[int, int], float]) -> np.ndarray:
    '''
    Laplacian-structured matrix of per ordered pair gains, row i holding
    sum_j k_ij on the diagonal and -k_ij off the diagonal. Equals
    B diag(k) B^T when the gains are symmetric.
    '''
    m = np.zeros((n_nodes, n_nodes))
    for (i, j), k in gains.items():
        m[i, i] += k
        m[i, j] -= k
    return m


def leader_follower_weights(
        g: WeightedGraph,
        leaders: LeaderSet) -> Tuple[Dict[Tuple[int, int], float], Dict[int, float]]:
    '''
    Normalised neighbour weights shared by the observer, controller and scale
    estimator gain schedules. A leader weighs each neighbour and its own
    global term by 1/(N_i + 1), a follower weighs each neighbour by 1/N_i.

    Returns:
        (weights per ordered pair (i, j), global weight per leader)
    '''
    relative: Dict[Tuple[int, int], float] = {}
    global_: Dict[int, float] = {}
    for i in g.nodes:
        n_i = g.neighbor_count(i)
        if i in leaders:
            w = 1.0 / (n_i + 1)
            global_[i] = w
        elif n_i == 0:
            raise GraphError(f"Follower {i} has no neighbours")
        else:
            w = 1.0 / n_i
        for j in g.neighbors(i):
            relative[(i, j)] = w
    return relative, global_
