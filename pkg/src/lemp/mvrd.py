"""Edge scoring by modulated variation of reliable difference (MVRD).

For every candidate edge the heuristic compares how far apart the two
endpoints are, relative to how well each sits in its class cluster, before
and after one round of neighborhood aggregation. A large drop flags edges
where aggregation pulls dissimilar nodes together.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import _sigmoid
from .graph import NormAdj
from .linalg import standardize

logger = logging.getLogger(__name__)

WEIGHT_FREE = "weight-free"
WEIGHT_BASED = "weight-based"


@dataclass
class ClusterState:
    centers: np.ndarray
    pseudo_labels: np.ndarray
    distances: np.ndarray
    empty_classes: list[int] = field(default_factory=list)


def _nearest(H: np.ndarray, centers: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(H.shape[0], dtype=np.int64)
    for start in range(0, H.shape[0], chunk):
        block = H[start:start + chunk]
        sq = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[start:start + chunk] = np.argmin(sq, axis=1)
    return out


def semi_cluster(H, train_index, train_labels, num_classes: int | None = None) -> ClusterState:
    """Label-seeded clustering with exactly one refinement pass.

    Centers start as the mean of labeled rows per class; every node takes the
    nearest center (ties to the lower class); centers are then recomputed
    from all nodes under those pseudo-labels.
    """
    H = np.asarray(H, dtype=np.float64)
    idx = np.asarray(train_index, dtype=np.int64)
    y = np.asarray(train_labels, dtype=np.int64)
    K = int(num_classes if num_classes is not None else y.max() + 1)
    if len(idx) == 0:
        raise ValueError("clustering needs at least one labeled node")
    global_mean = H[idx].mean(axis=0)
    centers = np.empty((K, H.shape[1]))
    empty = []
    for k in range(K):
        rows = idx[y == k]
        if len(rows):
            centers[k] = H[rows].mean(axis=0)
        else:
            centers[k] = global_mean
            empty.append(k)
    if empty:
        logger.warning("classes without labeled nodes use the global labeled mean: %s", empty)
    pseudo = _nearest(H, centers)
    for k in range(K):
        members = pseudo == k
        if members.any():
            centers[k] = H[members].mean(axis=0)
    dist = np.linalg.norm(H - centers[pseudo], axis=1)
    return ClusterState(centers, pseudo, dist, empty)


def reliable_difference(H, cluster: ClusterState, edges, gamma: float = 1.0, normalize: bool = True):
    """Per-edge ``sigmoid(gamma * d_ij) / sigmoid(d_i + d_j)``.

    With ``normalize`` both the pair distances and the summed center
    distances are z-scored across the given edges first.

    Returns:
        ``(rd, pair_distance)`` where ``pair_distance`` is the (standardized
        when ``normalize``) value fed to the numerator.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) == 0:
        raise ValueError("reliable_difference needs at least one edge")
    H = np.asarray(H, dtype=np.float64)
    d_pair = np.linalg.norm(H[edges[:, 0]] - H[edges[:, 1]], axis=1)
    d_center = cluster.distances[edges[:, 0]] + cluster.distances[edges[:, 1]]
    if normalize:
        d_pair = standardize(d_pair)
        d_center = standardize(d_center)
    return rd_formula(d_pair, d_center, gamma), d_pair


def rd_formula(d_pair, d_center, gamma: float = 1.0) -> np.ndarray:
    return _sigmoid(gamma * np.asarray(d_pair, dtype=np.float64)) / _sigmoid(np.asarray(d_center, dtype=np.float64))


def embedding_pair_wb(W0, b0, adj: NormAdj, X, activation: str = "relu"):
    """Embeddings around the first aggregation of the live model.

    ``before = act(X W0 + b0)``, ``after = act(A (X W0 + b0))``; no dropout.
    """
    pre = np.asarray(X, dtype=np.float64) @ np.asarray(W0, dtype=np.float64) + np.asarray(b0, dtype=np.float64).reshape(1, -1)
    act = _ACTIVATIONS[activation]
    return act(pre), act(np.asarray(adj.matrix @ pre))


def embedding_pair_wf(X_pca, adj: NormAdj):
    """Parameter-free counterpart: ``sigmoid(X)`` and ``sigmoid(A X)``."""
    X = np.asarray(X_pca, dtype=np.float64)
    return _sigmoid(X), _sigmoid(np.asarray(adj.matrix @ X))


_ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": _sigmoid,
}


def vrd(rd_before, rd_after) -> np.ndarray:
    a = np.asarray(rd_before, dtype=np.float64)
    b = np.asarray(rd_after, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a - b


def mvrd(vrd_values, d_after, eta: float = 0.8, adj_weights=None) -> np.ndarray:
    """``sigmoid(eta * d_after) * vrd``, optionally times the adjacency entry."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    v = np.asarray(vrd_values, dtype=np.float64)
    out = _sigmoid(eta * np.asarray(d_after, dtype=np.float64)) * v
    if adj_weights is not None:
        out = out * np.asarray(adj_weights, dtype=np.float64)
    return out


def horizon(budget: int, interval: int, k: int, mode: str = "literal") -> float:
    """Epoch horizon of the cosine schedule.

    ``"literal"`` is ``k * budget / interval``; ``"rounds"`` is
    ``interval * budget / k`` (epochs until the budget is spent).
    """
    if mode == "literal":
        value = k * budget / interval if interval else 0.0
    elif mode == "rounds":
        value = interval * budget / k if k else 0.0
    else:
        raise ValueError(f"unknown horizon mode {mode!r}")
    return float(value)


def lambda_schedule(n_e: float, n_total: float, omega: float = 0.5, phi: float = 0.5) -> float:
    """``omega * cos(pi * n_e / n_total) + phi`` clamped to [0, 1].

    Progress past ``n_total`` is held at ``n_total``.
    """
    if n_total <= 0:
        raise ValueError("schedule horizon must be positive")
    if n_e < 0:
        raise ValueError("epoch must be non-negative")
    t = min(n_e, n_total) / n_total
    lam = omega * math.cos(math.pi * t) + phi
    return min(1.0, max(0.0, lam))


def fuse_scores(mvrd_wf, mvrd_wb, lam: float) -> np.ndarray:
    a = np.asarray(mvrd_wf, dtype=np.float64)
    b = np.asarray(mvrd_wb, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    return lam * a + (1.0 - lam) * b


def select_top_k(scores, candidate_edges, k: int) -> list[tuple[int, int]]:
    """Highest-scoring edges, ties broken by ``(u, v)`` ascending."""
    if k <= 0:
        return []
    scores = np.asarray(scores, dtype=np.float64)
    cands = np.asarray(candidate_edges, dtype=np.int64).reshape(-1, 2)
    if len(scores) != len(cands):
        raise ValueError("one score per candidate edge required")
    items = ((-float(s), int(u), int(v)) for s, (u, v) in zip(scores, cands))
    top = heapq.nsmallest(k, items)
    return [(u, v) for _, u, v in top]


@dataclass
class MvrdScores:
    track: str
    edges: np.ndarray
    d_before: np.ndarray
    d_after: np.ndarray
    rd_before: np.ndarray
    rd_after: np.ndarray
    vrd: np.ndarray
    d_after_raw: np.ndarray
    mvrd: np.ndarray


def score_track(track: str, H_before, H_after, train_index, train_labels, num_classes: int, edges, adj: NormAdj,
                gamma: float = 1.0, eta: float = 0.8, normalize: bool = True) -> MvrdScores:
    """Full MVRD computation for one embedding pair over ``edges``."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    cl_b = semi_cluster(H_before, train_index, train_labels, num_classes)
    cl_a = semi_cluster(H_after, train_index, train_labels, num_classes)
    rd_b, d_b = reliable_difference(H_before, cl_b, edges, gamma, normalize)
    rd_a, d_a = reliable_difference(H_after, cl_a, edges, gamma, normalize)
    variation = vrd(rd_b, rd_a)
    d_a_raw = np.linalg.norm(np.asarray(H_after)[edges[:, 0]] - np.asarray(H_after)[edges[:, 1]], axis=1)
    scores = mvrd(variation, d_a, eta, adj.edge_weights(edges))
    return MvrdScores(track, edges, d_b, d_a, rd_b, rd_a, variation, d_a_raw, scores)
