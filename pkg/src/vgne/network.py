"""Communication graphs and the blockwise mixing step.

The distributed iteration exchanges aggregate estimates over an undirected
graph.  Each node averages its own estimate with those of its neighbors,
which is the action of ``W (x) I_n`` for the weight matrix
``W = inv(I + D) (I + E)`` built from the degree and adjacency matrices.
The Kronecker product is never materialized; mixing works on the stacked
vector through closed-neighborhood index arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphError

__all__ = [
    "CommGraph",
    "mix",
    "build_graph",
]


@dataclass(frozen=True)
class CommGraph:
    """Simple undirected graph on nodes ``0..num_nodes-1``.

    Edges are stored as sorted unique pairs ``(i, j)`` with ``i < j``; self
    loops are rejected.  Neighborhoods exclude the node itself, but every
    mixing-related quantity works with the closed neighborhood (node plus
    neighbors), so an isolated node simply keeps its own value.
    """

    num_nodes: int
    edges: tuple

    def __post_init__(self):
        if self.num_nodes < 1:
            raise GraphError(f"graph needs at least one node, received {self.num_nodes}")
        seen = set()
        for e in self.edges:
            try:
                i, j = int(e[0]), int(e[1])
            except (TypeError, ValueError, IndexError):
                raise GraphError(f"edge {e!r} is not a pair of node indices") from None
            if i == j:
                raise GraphError(f"self loop at node {i} is not allowed")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise GraphError(
                    f"edge ({i}, {j}) leaves the node range 0..{self.num_nodes - 1}"
                )
            seen.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbor_lists(self) -> tuple:
        nbrs = [[] for _ in range(self.num_nodes)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(b)) for b in nbrs)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        E = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.edges:
            E[i, j] = E[j, i] = 1.0
        return E

    def laplacian(self) -> np.ndarray:
        return np.diag(self.degrees().astype(float)) - self.adjacency()

    def mixing_matrix(self) -> np.ndarray:
        """Row-stochastic weights ``inv(I + D) (I + E)``.

        Doubly stochastic exactly when the graph is regular; on irregular
        graphs some column sums differ from 1.
        """
        W = self.adjacency() + np.eye(self.num_nodes)
        return W / (1.0 + self.degrees().astype(float))[:, None]

    def closed_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closed-neighborhood index arrays for blockwise mixing.

        Returns ``(indptr, indices, inv_sizes)`` where segment ``i`` of
        ``indices`` lists node ``i`` followed by its neighbors, and
        ``inv_sizes[i] = 1 / (deg_i + 1)``.
        """
        nbrs = self.neighbor_lists()
        indptr = np.zeros(self.num_nodes + 1, dtype=np.intp)
        chunks = []
        for i, b in enumerate(nbrs):
            seg = (i, *b)
            chunks.append(seg)
            indptr[i + 1] = indptr[i] + len(seg)
        indices = np.concatenate([np.asarray(c, dtype=np.intp) for c in chunks])
        inv_sizes = 1.0 / (1.0 + self.degrees().astype(float))
        return indptr, indices, inv_sizes

    def is_connected(self) -> bool:
        if self.num_nodes == 1:
            return True
        nbrs = self.neighbor_lists()
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in nbrs[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_nodes

    def is_regular(self) -> bool:
        deg = self.degrees()
        return bool(np.all(deg == deg[0]))


def csr_mix(
    V: np.ndarray,
    indptr: np.ndarray,
    indices: np.ndarray,
    inv_sizes: np.ndarray,
) -> np.ndarray:
    """Closed-neighborhood averages of the rows of ``V``.

    Shared by the public :func:`mix` and the pure-python solver kernel so
    both paths produce identical floating-point results.
    """
    sums = np.add.reduceat(V[indices], indptr[:-1], axis=0)
    return sums * inv_sizes[:, None]


def mix(v: np.ndarray, graph: CommGraph, block_dim: int) -> np.ndarray:
    """Apply the mixing weights blockwise to a stacked vector.

    ``v`` stacks one block of length ``block_dim`` per node; block ``i`` of
    the result is the average of block ``i`` and its neighbors' blocks.
    Equivalent to multiplying by ``W (x) I_n`` without forming it.
    """
    v = np.asarray(v, dtype=float)
    N = graph.num_nodes
    if v.shape != (N * block_dim,):
        raise GraphError(
            f"mix: expected a stacked vector of length {N * block_dim}, received {v.shape}"
        )
    indptr, indices, inv_sizes = graph.closed_csr()
    return csr_mix(v.reshape(N, block_dim), indptr, indices, inv_sizes).reshape(-1)


def build_graph(
    kind: str,
    num_nodes: int,
    *,
    degree: int | None = None,
    seed: int | None = None,
) -> CommGraph:
    """Construct a named topology.

    ``kind`` is one of ``complete``, ``cycle``, ``path``, or
    ``random_regular``.  The random kind needs ``degree`` and ``seed``; it
    resamples (up to 100 attempts, advancing the seed) until the graph is
    connected, and raises if that never happens.
    """
    if num_nodes < 1:
        raise GraphError(f"graph needs at least one node, received {num_nodes}")
    if kind == "complete":
        edges = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)]
        return CommGraph(num_nodes, tuple(edges))
    if kind == "cycle":
        if num_nodes < 3:
            raise GraphError("a cycle needs at least 3 nodes")
        edges = [(i, (i + 1) % num_nodes) for i in range(num_nodes)]
        return CommGraph(num_nodes, tuple(edges))
    if kind == "path":
        edges = [(i, i + 1) for i in range(num_nodes - 1)]
        return CommGraph(num_nodes, tuple(edges))
    if kind == "random_regular":
        if degree is None or seed is None:
            raise GraphError("random_regular needs both degree and seed")
        import networkx as nx

        for attempt in range(100):
            g = nx.random_regular_graph(degree, num_nodes, seed=seed + attempt)
            graph = CommGraph(num_nodes, tuple(g.edges()))
            if graph.is_connected():
                return graph
        raise GraphError(
            f"no connected {degree}-regular graph on {num_nodes} nodes found in 100 draws"
        )
    raise GraphError(f"unknown graph kind {kind!r}")
