"""Writing run reports and budget sweeps to JSON/CSV."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..models import TrainConfig
from .data import DatasetBundle
from .loop import LempConfig, RunReport, run_lemp

EPOCH_FIELDS = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "n_enhanced"]
SELECTION_FIELDS = ["round", "epoch", "lambda", "rank", "u", "v", "score_wf", "score_wb", "fused"]
SWEEP_FIELDS = ["budget", "n_enhanced", "test_acc", "best_epoch", "provider_calls", "cost_usd"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    return obj


def report_export(report: RunReport, out_dir) -> dict[str, Path]:
    """Write ``report.json``, ``epochs.csv`` and ``selections.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "epochs": out / "epochs.csv", "selections": out / "selections.csv"}
    paths["json"].write_text(json.dumps(_jsonable(report.to_dict()), indent=2))
    with open(paths["epochs"], "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=EPOCH_FIELDS)
        w.writeheader()
        for m in report.history:
            w.writerow(asdict(m))
    with open(paths["selections"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SELECTION_FIELDS)
        for r in report.rounds:
            for rank, ((u, v), a, b, c) in enumerate(zip(r.edges, r.score_wf, r.score_wb, r.fused), start=1):
                w.writerow([r.round, r.epoch, r.lam, rank, u, v, a, b, c])
    return paths


def sweep_row(report: RunReport) -> dict:
    return {
        "budget": report.budget.get("budget", 0),
        "n_enhanced": report.n_enhanced,
        "test_acc": report.test_acc,
        "best_epoch": report.best_epoch,
        "provider_calls": report.provider_calls,
        "cost_usd": report.budget.get("cost_usd", 0.0),
    }


def budget_sweep(bundle: DatasetBundle, train_config: TrainConfig, config: LempConfig, budgets, provider_factory,
                 cache=None) -> list[dict]:
    """One LEMP run per budget; ``provider_factory()`` builds a fresh provider each time."""
    rows = []
    for b in budgets:
        cfg = LempConfig(**{**asdict(config), "budget": int(b)})
        rows.append(sweep_row(run_lemp(bundle, train_config, cfg, provider_factory(), cache)))
    return rows


def write_sweep(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return path
