"""Undirected graph container, normalized adjacency and homophily metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SPLITS = ("train", "val", "test")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph with dense node indices ``0..n-1``.

    Edges are stored once as ``(min, max)`` pairs in lexicographic order.
    ``labels`` uses ``-1`` for unlabeled nodes; ``splits`` holds one of
    ``"train"``, ``"val"``, ``"test"`` per node (or is empty).
    """

    n: int
    edges: np.ndarray  # (m, 2) int64, u < v
    labels: np.ndarray | None = None
    splits: np.ndarray | None = None
    degree: np.ndarray = field(init=False)

    def __post_init__(self):
        deg = np.zeros(self.n, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        object.__setattr__(self, "degree", deg)

    @property
    def num_edges(self) -> int:
        return int(len(self.edges))

    @property
    def num_classes(self) -> int:
        if self.labels is None or not np.any(self.labels >= 0):
            return 0
        return int(self.labels.max()) + 1

    def mask(self, split: str) -> np.ndarray:
        if self.splits is None:
            raise GraphError("graph has no split assignment")
        return self.splits == split

    def index(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.mask(split))

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def neighbors(self) -> list[np.ndarray]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[u].append(int(v))
            nbrs[v].append(int(u))
        return [np.asarray(x, dtype=np.int64) for x in nbrs]


def build_graph(raw_edges, n: int, labels=None, splits=None, num_classes: int | None = None) -> Graph:
    """Build a :class:`Graph` from an arbitrary edge list.

    Self-loops are dropped and ``(u, v)`` / ``(v, u)`` collapse to a single
    edge. Labels may contain ``-1`` (or ``None``) for unlabeled nodes.

    Raises:
        GraphError: an endpoint is out of ``[0, n)``, or a label is outside
            ``[0, num_classes)`` when ``num_classes`` is given.
    """
    if n < 0:
        raise GraphError(f"node count must be non-negative, got {n}")
    arr = np.asarray(list(raw_edges) if not isinstance(raw_edges, np.ndarray) else raw_edges, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise GraphError(f"edge endpoint out of range for n={n}: {tuple(int(x) for x in bad)}")
    arr = arr[arr[:, 0] != arr[:, 1]]
    arr = np.sort(arr, axis=1)
    edges = np.unique(arr, axis=0) if len(arr) else np.zeros((0, 2), dtype=np.int64)

    lab = None
    if labels is not None:
        lab = np.array([-1 if x is None else x for x in labels], dtype=np.int64)
        if lab.shape != (n,):
            raise GraphError(f"expected {n} labels, got {lab.shape[0]}")
        if np.any(lab < -1):
            raise GraphError("negative class label")
        if num_classes is not None and np.any(lab >= num_classes):
            raise GraphError(f"label out of class range [0, {num_classes})")

    spl = None
    if splits is not None:
        spl = np.asarray(splits, dtype=object)
        if spl.shape != (n,):
            raise GraphError(f"expected {n} split tags, got {spl.shape[0]}")
        unknown = set(spl.tolist()) - set(SPLITS)
        if unknown:
            raise GraphError(f"unknown split tag(s): {sorted(map(str, unknown))}")
        spl = spl.astype(str)

    return Graph(n=n, edges=edges, labels=lab, splits=spl)


@dataclass(frozen=True)
class NormAdj:
    """``D^-1/2 (A + I) D^-1/2`` in CSR layout."""

    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def edge_weights(self, edges: np.ndarray) -> np.ndarray:
        """Entries ``(u, v)`` for each row of ``edges``."""
        if len(edges) == 0:
            return np.zeros(0)
        return np.asarray(self.matrix[edges[:, 0], edges[:, 1]]).ravel()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def norm_adjacency(g: Graph) -> NormAdj:
    deg1 = g.degree + 1.0
    u, v = g.edges[:, 0], g.edges[:, 1]
    diag = np.arange(g.n)
    rows = np.concatenate([u, v, diag])
    cols = np.concatenate([v, u, diag])
    vals = 1.0 / np.sqrt(deg1[rows] * deg1[cols])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))
    mat.sort_indices()
    return NormAdj(mat)


def _require_labels(g: Graph) -> np.ndarray:
    if g.labels is None or np.any(g.labels < 0):
        raise GraphError("homophily requires a label for every node")
    return g.labels


def edge_homophily(g: Graph) -> float:
    y = _require_labels(g)
    if g.num_edges == 0:
        return float("nan")
    same = y[g.edges[:, 0]] == y[g.edges[:, 1]]
    return float(same.mean())


def node_homophily(g: Graph) -> float:
    """Mean same-label neighbor fraction; isolated nodes are left out."""
    y = _require_labels(g)
    same = (y[g.edges[:, 0]] == y[g.edges[:, 1]]).astype(np.float64)
    hits = np.zeros(g.n)
    np.add.at(hits, g.edges[:, 0], same)
    np.add.at(hits, g.edges[:, 1], same)
    has_nbrs = g.degree > 0
    if not has_nbrs.any():
        return float("nan")
    return float(np.mean(hits[has_nbrs] / g.degree[has_nbrs]))
