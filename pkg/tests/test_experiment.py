import csv
import json
import struct

import numpy as np
import pytest

from lemp.experiment import (AMBIGUOUS, BundleError, DatasetBundle, LempConfig, budget_sweep, categorize, ingest,
                             probe, read_embeddings, report_export, run_baseline, run_lemp, synth_bundle,
                             synth_dataset, write_bundle, write_embeddings)
from lemp.graph import build_graph, edge_homophily
from lemp.models import TrainConfig
from lemp.providers import MessageCache, SyntheticProvider

SMALL = TrainConfig(max_epochs=60, patience=15, hidden=16)


def _write_fixture(root, n_emb=3, magic=b"EMB1"):
    root.mkdir(exist_ok=True)
    (root / "nodes.jsonl").write_text("\n".join(json.dumps(r) for r in [
        {"id": "a", "label": 0, "split": "train", "text": "alpha"},
        {"id": "b", "label": 1, "split": "val", "text": "beta"},
        {"id": "c", "label": 0, "split": "test"},
    ]) + "\n")
    (root / "edges.csv").write_text("u,v\na,b\nc,b\nb,a\n")
    X = np.arange(n_emb * 2, dtype=np.float32).reshape(n_emb, 2) / 7
    with open(root / "embeddings.bin", "wb") as f:
        f.write(magic + struct.pack("<II", *X.shape) + X.astype("<f4").tobytes())
    return X


def test_ingest_hand_written_bundle(tmp_path):
    X = _write_fixture(tmp_path / "d")
    b = ingest(tmp_path / "d")
    assert b.graph.n == 3
    assert b.graph.edges.tolist() == [[0, 1], [1, 2]]
    np.testing.assert_array_equal(b.X, X.astype(np.float64))
    assert b.texts == ["alpha", "beta", None]
    assert b.graph.splits.tolist() == ["train", "val", "test"]


def test_ingest_wrong_row_count(tmp_path):
    _write_fixture(tmp_path / "d", n_emb=4)
    with pytest.raises(BundleError, match="4 rows.*3 nodes"):
        ingest(tmp_path / "d")


def test_ingest_bad_magic(tmp_path):
    _write_fixture(tmp_path / "d", magic=b"EMB2")
    with pytest.raises(BundleError, match="magic"):
        ingest(tmp_path / "d")


def test_ingest_truncated_embeddings(tmp_path):
    _write_fixture(tmp_path / "d")
    p = tmp_path / "d" / "embeddings.bin"
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(BundleError):
        ingest(tmp_path / "d")


def test_ingest_dangling_edge(tmp_path):
    _write_fixture(tmp_path / "d")
    with open(tmp_path / "d" / "edges.csv", "a") as f:
        f.write("a,zz\n")
    with pytest.raises(BundleError, match="zz"):
        ingest(tmp_path / "d")


def test_ingest_missing_split(tmp_path):
    _write_fixture(tmp_path / "d")
    with open(tmp_path / "d" / "nodes.jsonl", "a") as f:
        f.write(json.dumps({"id": "d", "label": 1}) + "\n")
    with pytest.raises(BundleError, match="split"):
        ingest(tmp_path / "d")


def test_embeddings_round_trip(tmp_path, rng):
    X = rng.standard_normal((5, 3)).astype(np.float32)
    write_embeddings(tmp_path / "e.bin", X)
    np.testing.assert_array_equal(read_embeddings(tmp_path / "e.bin"), X)


def test_synth_round_trip(tmp_path):
    b = synth_bundle("heterophilic", n=60, seed=3)
    c = ingest(write_bundle(b, tmp_path / "s"))
    np.testing.assert_array_equal(c.X, b.X)
    np.testing.assert_array_equal(c.graph.edges, b.graph.edges)
    np.testing.assert_array_equal(c.graph.labels, b.graph.labels)
    np.testing.assert_array_equal(c.graph.splits, b.graph.splits)
    assert c.meta["seed"] == 3


def test_synth_deterministic_and_split():
    a, b = synth_bundle(seed=9, n=100), synth_bundle(seed=9, n=100)
    np.testing.assert_array_equal(a.graph.edges, b.graph.edges)
    np.testing.assert_array_equal(a.X, b.X)
    counts = {s: int((a.graph.splits == s).sum()) for s in ("train", "val", "test")}
    assert counts == {"train": 48, "val": 32, "test": 20}


def test_synth_extreme_homophily():
    assert edge_homophily(synth_bundle("homophilic", n=60, p_intra=0.3, p_inter=0.0).graph) == 1.0
    assert edge_homophily(synth_bundle("heterophilic", n=60, p_intra=0.0, p_inter=0.3).graph) == 0.0


def test_synth_homophily_matches_expectation():
    n, pi, po = 400, 0.005, 0.05
    expected = pi * (n / 2 - 1) / (pi * (n / 2 - 1) + po * n / 2)
    measured = np.mean([edge_homophily(synth_bundle("heterophilic", n, 2, pi, po, seed=s).graph) for s in range(8)])
    assert abs(measured - expected) <= 0.05


def test_synth_rejects_bad_input():
    with pytest.raises(ValueError):
        synth_bundle("heterophilic", p_intra=0.2, p_inter=0.1)
    with pytest.raises(ValueError):
        synth_bundle("homophilic", p_intra=1.2, p_inter=0.1)
    with pytest.raises(ValueError):
        synth_bundle(n=401)


def test_synth_dataset_writes_directory(tmp_path):
    root = synth_dataset(tmp_path / "x", kind="homophilic", n=40, seed=1)
    assert {p.name for p in root.iterdir()} == {"nodes.jsonl", "edges.csv", "embeddings.bin", "meta.json"}


# -- probe -----------------------------------------------------------------


def test_categorize_threshold():
    assert categorize(0.80, 0.81) == "malignant"
    assert categorize(0.81, 0.80) == "benign"
    assert categorize(0.800, 0.804) == AMBIGUOUS


def test_probe_edgeless_is_ambiguous():
    b = synth_bundle("homophilic", n=80, p_intra=0.0, p_inter=0.0, seed=2)
    res = probe(b, seeds=(0, 1), config=SMALL)
    assert res["verdict"] == AMBIGUOUS
    assert res["gap_points"] == 0.0


def test_probe_verdict_label_permutation_invariant():
    b = synth_bundle("homophilic", n=80, seed=4, classes=4, dim=8)
    perm = np.array([2, 0, 3, 1])
    g = b.graph
    pb = DatasetBundle(build_graph(g.edges, g.n, perm[g.labels], g.splits), b.X)
    r1 = probe(b, seeds=(0,), config=SMALL)
    r2 = probe(pb, seeds=(0,), config=SMALL)
    assert r1["verdict"] == r2["verdict"]


def test_probe_needs_labels():
    g = build_graph([(0, 1)], 2, [0, 0], ["train", "val"])
    with pytest.raises(ValueError):
        probe(DatasetBundle(g, np.ones((2, 2))), seeds=(0,), config=SMALL)


# -- run_lemp --------------------------------------------------------------


@pytest.fixture(scope="module")
def het():
    return synth_bundle("heterophilic", n=120, p_intra=0.03, p_inter=0.05, feature_noise=0.5, dim=4, seed=1)


def test_budget_zero_equals_gcn(het):
    rep = run_lemp(het, SMALL, LempConfig(budget=0), SyntheticProvider(het.X))
    base = run_baseline("gcn", het, SMALL)
    assert rep.history == base.history
    assert rep.test_acc == base.test_acc and rep.rounds == [] and rep.provider_calls == 0


def test_full_budget_enhances_every_edge_once(het):
    cfg = LempConfig(budget=het.graph.num_edges + 10, interval=3, batch=40)
    tc = TrainConfig(max_epochs=200, patience=200, hidden=16)
    rep = run_lemp(het, tc, cfg, SyntheticProvider(het.X, het.graph.labels, mode="class-informative"))
    chosen = [e for r in rep.rounds for e in r.edges]
    assert len(chosen) == len(set(chosen)) == het.graph.num_edges
    assert set(chosen) == het.graph.edge_set()
    assert rep.provider_calls == het.graph.num_edges == rep.budget["used"]
    assert [r.epoch for r in rep.rounds] == [3 * (i + 1) for i in range(len(rep.rounds))]


def test_budget_remainder_and_conservation(het):
    cfg = LempConfig(budget=55, interval=2, batch=20)
    rep = run_lemp(het, SMALL, cfg, SyntheticProvider(het.X))
    assert [len(r.edges) for r in rep.rounds] == [20, 20, 15]
    assert rep.n_enhanced == 55 == rep.budget["used"]


def test_halt_on_budget_exhaustion(het):
    tc = TrainConfig(max_epochs=200, patience=200, hidden=16, halt_on_budget_exhaustion=True)
    rep = run_lemp(het, tc, LempConfig(budget=40, interval=5, batch=20), SyntheticProvider(het.X))
    assert rep.stop_reason == "budget_exhausted" and len(rep.history) == 10


def test_warm_cache_second_run(het, tmp_path):
    path = tmp_path / "c.jsonl"
    cfg = LempConfig(budget=60, interval=3, batch=20)
    r1 = run_lemp(het, SMALL, cfg, SyntheticProvider(het.X), MessageCache(path))
    prov = SyntheticProvider(het.X)
    r2 = run_lemp(het, SMALL, cfg, prov, MessageCache(path))
    assert r1.provider_calls > 0 and r2.provider_calls == 0 and prov.calls == 0
    assert r2.budget["cost_usd"] == 0.0
    assert r2.test_acc == r1.test_acc and r2.history == r1.history


def test_report_export(het, tmp_path):
    empty = run_lemp(het, TrainConfig(max_epochs=0, patience=1), LempConfig(), SyntheticProvider(het.X))
    paths = report_export(empty, tmp_path / "e")
    assert json.loads(paths["json"].read_text())["rounds"] == []
    rep = run_lemp(het, SMALL, LempConfig(budget=30, interval=4, batch=10), SyntheticProvider(het.X))
    paths = report_export(rep, tmp_path / "r")
    with open(paths["epochs"]) as f:
        assert len(list(csv.DictReader(f))) == len(rep.history)
    with open(paths["selections"]) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 30
    data = json.loads(paths["json"].read_text())
    assert data["n_enhanced"] == 30 and data["model"] == "lemp"


def test_report_export_unwritable(het, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rep = run_baseline("mlp", het, TrainConfig(max_epochs=2, patience=2))
    with pytest.raises(OSError):
        report_export(rep, blocker / "sub")


def test_budget_sweep(het):
    k = 15
    rows = budget_sweep(het, SMALL, LempConfig(interval=3, batch=k), [0, k, 2 * k], lambda: SyntheticProvider(het.X))
    assert [r["budget"] for r in rows] == [0, k, 2 * k]
    assert [r["n_enhanced"] for r in rows] == [0, k, 2 * k]
    assert rows[0]["cost_usd"] == 0.0 < rows[1]["cost_usd"] < rows[2]["cost_usd"]
