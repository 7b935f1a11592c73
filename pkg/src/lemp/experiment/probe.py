"""Graph-aware vs graph-agnostic probes for sorting datasets into categories."""

from __future__ import annotations

import numpy as np

from ..graph import edge_homophily, norm_adjacency, node_homophily
from ..models import TrainConfig, evaluate, train
from .data import DatasetBundle

MALIGNANT = "malignant"
BENIGN = "benign"
AMBIGUOUS = "ambiguous"


def categorize(best_gcn: float, best_mlp: float, threshold_points: float = 0.5) -> str:
    gap = 100.0 * (best_gcn - best_mlp)
    if gap < -threshold_points:
        return MALIGNANT
    if gap > threshold_points:
        return BENIGN
    return AMBIGUOUS


def probe(bundle: DatasetBundle, seeds=(0, 1, 2, 3), config: TrainConfig | None = None, layers=(2, 4),
          threshold_points: float = 0.5) -> dict:
    """Train MLP and GCN probes at each depth and compare their best mean test accuracy.

    The dataset is malignant when the best GCN trails the best MLP by more
    than ``threshold_points`` accuracy points, benign when it leads by more,
    ambiguous otherwise.
    """
    g = bundle.graph
    if g.labels is None or g.splits is None:
        raise ValueError("probe needs labels and splits")
    train_idx = g.index("train")
    labeled = train_idx[g.labels[train_idx] >= 0]
    if len(labeled) < 2 or len(np.unique(g.labels[labeled])) < 2 or len(g.index("val")) == 0:
        raise ValueError("probe needs labeled training nodes from at least two classes and a validation split")
    base = config or TrainConfig()
    adj = norm_adjacency(g)
    acc: dict[str, list[float]] = {}
    for kind in ("mlp", "gcn"):
        for depth in layers:
            key = f"{depth}-{kind}"
            acc[key] = []
            for seed in seeds:
                cfg = TrainConfig.from_dict({**base.to_dict(), "seed": seed, "layers": depth})
                res = train(kind, g, adj, bundle.X, cfg)
                acc[key].append(evaluate(res.params, g, adj, bundle.X, None, "test"))
    means = {k: float(np.mean(v)) for k, v in acc.items()}
    best_mlp = max(means[f"{d}-mlp"] for d in layers)
    best_gcn = max(means[f"{d}-gcn"] for d in layers)
    labeled_all = g.labels is not None and np.all(g.labels >= 0)
    return {
        "verdict": categorize(best_gcn, best_mlp, threshold_points),
        "best_mlp": best_mlp,
        "best_gcn": best_gcn,
        "gap_points": 100.0 * (best_gcn - best_mlp),
        "mean_acc": means,
        "per_seed_acc": acc,
        "seeds": list(seeds),
        "h_edge": edge_homophily(g) if labeled_all else None,
        "h_node": node_homophily(g) if labeled_all else None,
    }
