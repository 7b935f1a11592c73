import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lemp.graph import build_graph, norm_adjacency
from lemp.mvrd import (ClusterState, embedding_pair_wb, embedding_pair_wf, fuse_scores, horizon, lambda_schedule,
                       mvrd, rd_formula, reliable_difference, score_track, select_top_k, semi_cluster, vrd)

from conftest import random_graph


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


# -- clustering ------------------------------------------------------------


def test_cluster_two_point_example():
    H = np.array([[0.0, 0.0], [10.0, 10.0], [1.0, 1.0]])
    cl = semi_cluster(H, [0, 1], [0, 1], 2)
    assert cl.pseudo_labels.tolist() == [0, 1, 0]
    np.testing.assert_array_equal(cl.centers, [[0.5, 0.5], [10.0, 10.0]])


def test_cluster_all_labeled_uses_nearest_center():
    # label-1 point sits closer to the class-0 labeled mean
    H = np.array([[0.0], [1.0], [10.0], [2.0]])
    cl = semi_cluster(H, [0, 1, 2, 3], [0, 0, 1, 1], 2)
    assert cl.pseudo_labels.tolist() == [0, 0, 1, 0]
    np.testing.assert_array_equal(cl.centers.ravel(), [1.0, 10.0])


def test_cluster_ties_go_to_lower_class():
    H = np.array([[0.0], [2.0], [1.0]])
    assert semi_cluster(H, [0, 1], [0, 1], 2).pseudo_labels[2] == 0


def test_cluster_matches_brute_force(rng):
    H = rng.standard_normal((40, 4))
    idx = rng.choice(40, 12, replace=False)
    y = np.arange(12) % 4
    cl = semi_cluster(H, idx, y, 4)
    C = np.array([H[idx[y == k]].mean(axis=0) for k in range(4)])
    pseudo = []
    for i in range(40):
        d = [sum((H[i, t] - C[k, t]) ** 2 for t in range(4)) for k in range(4)]
        pseudo.append(min(range(4), key=lambda k: (d[k], k)))
    pseudo = np.array(pseudo)
    C2 = np.array([H[pseudo == k].mean(axis=0) if np.any(pseudo == k) else C[k] for k in range(4)])
    np.testing.assert_array_equal(cl.pseudo_labels, pseudo)
    np.testing.assert_allclose(cl.centers, C2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(cl.distances, np.linalg.norm(H - C2[pseudo], axis=1), atol=1e-15)


def test_cluster_empty_class_falls_back_to_global_mean(caplog):
    H = np.array([[0.0], [4.0], [100.0]])
    with caplog.at_level("WARNING"):
        cl = semi_cluster(H, [0, 1], [0, 0], 2)
    assert cl.empty_classes == [1]
    assert "global labeled mean" in caplog.text


# -- reliable difference ---------------------------------------------------


def _cluster_with(dist):
    dist = np.asarray(dist, dtype=float)
    return ClusterState(np.zeros((1, 1)), np.zeros(len(dist), dtype=int), dist)


def test_rd_single_edge_standardized_is_one():
    H = np.array([[0.0], [3.0]])
    rd, _ = reliable_difference(H, _cluster_with([0.2, 0.7]), [(0, 1)])
    assert rd.tolist() == [1.0]


def test_rd_unstandardized_hand_value():
    H = np.array([[0.0], [1.0]])
    rd, _ = reliable_difference(H, _cluster_with([0.0, 0.0]), [(0, 1)], gamma=1.0, normalize=False)
    assert rd[0] == pytest.approx(1.46212, abs=1e-5)
    assert rd[0] == pytest.approx(_sig(1.0) / 0.5, rel=1e-15)


def test_rd_errors():
    with pytest.raises(ValueError):
        reliable_difference(np.zeros((2, 1)), _cluster_with([0, 0]), [])
    with pytest.raises(ValueError):
        reliable_difference(np.zeros((2, 1)), _cluster_with([0, 0]), [(0, 1)], gamma=0)


def test_rd_monotone_in_pair_distance(rng):
    s = np.full(200, 1.3)
    d = np.sort(rng.random(200) * 5)
    rd = rd_formula(d, s, 1.0)
    assert np.all(np.diff(rd) >= 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0.1, 3), st.floats(1e-3, 1.0))
def test_rd_signs(dij, di, dj, gamma, step):
    # arguments stay below ~20 where float64 sigmoid is not yet rounded to 1
    base = rd_formula(dij, di + dj, gamma)
    assert rd_formula(dij + step, di + dj, gamma) > base
    assert rd_formula(dij, di + step + dj, gamma) < base


# -- embedding pairs -------------------------------------------------------


def test_wb_edgeless_before_equals_after(rng):
    adj = norm_adjacency(build_graph([], 5))
    b, a = embedding_pair_wb(rng.standard_normal((3, 2)), rng.standard_normal(2), adj, rng.standard_normal((5, 3)))
    np.testing.assert_array_equal(b, a)


def test_wb_zero_weights_constant_rows(rng):
    g = random_graph(9, 0.4, rng)
    adj = norm_adjacency(g)
    b0 = np.array([0.3, -0.2])
    before, _ = embedding_pair_wb(np.zeros((3, 2)), b0, adj, rng.standard_normal((9, 3)))
    np.testing.assert_array_equal(before, np.tile(np.maximum(b0, 0), (9, 1)))
    cl = semi_cluster(before, g.index("train"), g.labels[g.index("train")], 2)
    rd, _ = reliable_difference(before, cl, g.edges)
    assert np.all(rd == 1.0)


def test_wb_wf_match_dense_oracle(rng):
    g = random_graph(9, 0.4, rng)
    adj = norm_adjacency(g)
    A = adj.toarray()
    X, W, b = rng.standard_normal((9, 4)), rng.standard_normal((4, 3)), rng.standard_normal(3)
    before, after = embedding_pair_wb(W, b, adj, X)
    assert np.max(np.abs(before - np.maximum(X @ W + b, 0))) <= 1e-10
    assert np.max(np.abs(after - np.maximum(A @ (X @ W + b), 0))) <= 1e-10
    before, after = embedding_pair_wf(X, adj)
    assert np.max(np.abs(before - 1 / (1 + np.exp(-X)))) <= 1e-10
    assert np.max(np.abs(after - 1 / (1 + np.exp(-(A @ X))))) <= 1e-10


def test_wf_edgeless_before_equals_after(rng):
    X = rng.standard_normal((4, 2))
    b, a = embedding_pair_wf(X, norm_adjacency(build_graph([], 4)))
    np.testing.assert_array_equal(b, a)


# -- variation and modulation ----------------------------------------------


def test_vrd_examples(rng):
    assert vrd([1.2], [0.8])[0] == pytest.approx(0.4, abs=1e-15)
    x = rng.random(10)
    assert np.all(vrd(x, x) == 0)
    a, b = rng.random(30), rng.random(30)
    np.testing.assert_array_equal(vrd(a, b), a - b)
    np.testing.assert_array_equal(vrd(b, a), -vrd(a, b))
    with pytest.raises(ValueError):
        vrd([1, 2], [1])


def test_mvrd_examples(rng):
    assert mvrd([0.7], [0.0])[0] == 0.35
    assert np.all(mvrd(np.zeros(5), rng.standard_normal(5)) == 0)
    v, d, w = rng.standard_normal(20), rng.standard_normal(20), rng.random(20)
    ref = np.array([_sig(0.8 * d[i]) * v[i] * w[i] for i in range(20)])
    assert np.max(np.abs(mvrd(v, d, 0.8, w) - ref)) <= 1e-12
    assert np.all(np.abs(mvrd(v, d, 0.8, w)) < np.abs(v) * w)


# -- schedule, fusion and selection ----------------------------------------


def test_lambda_endpoints():
    assert lambda_schedule(0, 40) == 1.0
    assert lambda_schedule(40, 40) == 0.0
    assert lambda_schedule(20, 40) == 0.5
    assert lambda_schedule(80, 40) == 0.0
    with pytest.raises(ValueError):
        lambda_schedule(1, 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1, 1000))
def test_lambda_non_increasing(omega, phi, n_total):
    ts = np.linspace(0, n_total, 50)
    lams = [lambda_schedule(t, n_total, omega, phi) for t in ts]
    assert all(0.0 <= x <= 1.0 for x in lams)
    assert all(b <= a + 1e-15 for a, b in zip(lams, lams[1:]))


def test_horizon_modes():
    assert horizon(1000, 10, 50, "literal") == 5000.0
    assert horizon(1000, 10, 50, "rounds") == 200.0
    with pytest.raises(ValueError):
        horizon(1, 1, 1, "other")


def test_fuse_scores(rng):
    a, b = rng.random(10), rng.random(10)
    np.testing.assert_array_equal(fuse_scores(a, b, 1.0), a)
    np.testing.assert_array_equal(fuse_scores(a, b, 0.0), b)
    np.testing.assert_array_equal(fuse_scores(a, b, 0.3), 0.3 * a + 0.7 * b)
    with pytest.raises(ValueError):
        fuse_scores(a, b[:3], 0.5)


def _full_sort(scores, edges, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], edges[i][0], edges[i][1]))
    return [tuple(map(int, edges[i])) for i in order[:k]]


def test_select_top_k_examples():
    edges = np.array([[0, 1], [0, 2], [1, 2], [2, 3]])
    assert select_top_k([1, 1, 1, 1], edges, 2) == [(0, 1), (0, 2)]
    assert select_top_k([0.1, 0.9, 0.5, 0.7], edges, 10) == [(0, 2), (2, 3), (1, 2), (0, 1)]
    assert select_top_k([0.1, 0.9, 0.5, 0.7], edges, 0) == []


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(0, 70), st.integers(0, 2**32 - 1))
def test_select_top_k_matches_full_sort(m, k, seed):
    r = np.random.default_rng(seed)
    edges = r.integers(0, 20, size=(m, 2))
    scores = np.round(r.random(m), 1)  # coarse values force ties
    assert select_top_k(scores, edges, k) == _full_sort(scores, edges, k)


def test_simulated_run_never_reselects(rng):
    g = random_graph(60, 0.1, rng)
    chosen = set()
    cands = g.edges
    while len(cands):
        picked = select_top_k(rng.random(len(cands)), cands, 7)
        assert not chosen.intersection(picked)
        chosen.update(picked)
        cands = np.array([e for e in cands if tuple(map(int, e)) not in chosen]).reshape(-1, 2)
    assert chosen == g.edge_set()


def test_score_track_fields(rng):
    g = random_graph(30, 0.2, rng)
    adj = norm_adjacency(g)
    X = rng.standard_normal((30, 4))
    b, a = embedding_pair_wf(X, adj)
    idx = g.index("train")
    s = score_track("weight-free", b, a, idx, g.labels[idx], 2, g.edges, adj)
    np.testing.assert_array_equal(s.vrd, s.rd_before - s.rd_after)
    np.testing.assert_array_equal(s.mvrd, mvrd(s.vrd, s.d_after, 0.8, adj.edge_weights(g.edges)))
    assert np.all(np.isfinite(s.mvrd))
