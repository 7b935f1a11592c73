import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lemp.autograd import Tensor
from lemp.linalg import Adam, pca_fit_transform, standardize


def test_standardize_examples():
    np.testing.assert_array_equal(standardize([1, 1, 1]), [0, 0, 0])
    np.testing.assert_array_equal(standardize([0, 2]), [-1, 1])
    with pytest.raises(ValueError):
        standardize([])


def test_standardize_random(rng):
    z = standardize(rng.standard_normal(1000) * 7 + 3)
    assert abs(z.mean()) <= 1e-12
    assert abs(z.var() - 1) <= 1e-9


def test_pca_rank_one_line(rng):
    t = rng.standard_normal(50)
    X = np.outer(t, [3.0, -4.0])
    P = pca_fit_transform(X, 1)
    total = (X - X.mean(0)).var(axis=0).sum()
    assert abs(P.var(axis=0).sum() - total) <= 1e-9


def test_pca_full_dim_preserves_variance(rng):
    X = rng.standard_normal((40, 5)) * [5, 4, 3, 2, 1]
    P = pca_fit_transform(X, 5)
    assert P.var(axis=0).sum() == pytest.approx(X.var(axis=0).sum(), rel=1e-12)


def test_pca_matches_svd_oracle(rng):
    X = rng.standard_normal((30, 8)) @ rng.standard_normal((8, 8))
    P = pca_fit_transform(X, 3)
    Xc = X - X.mean(0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    comps = vt[:3].T
    recon_ref = Xc @ comps @ comps.T
    # components recovered from the projection (orthonormal)
    C = np.linalg.lstsq(Xc, P, rcond=None)[0]
    recon = P @ C.T
    assert abs(np.linalg.norm(Xc - recon) - np.linalg.norm(Xc - recon_ref)) <= 1e-6
    # same subspace and sign convention
    for j in range(3):
        c = comps[:, j] * np.sign(comps[np.abs(comps[:, j]).argmax(), j])
        np.testing.assert_allclose(C[:, j], c, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 25), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_pca_variance_non_increasing(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((n, d))
    k = min(n, d)
    v = pca_fit_transform(X, k).var(axis=0)
    assert np.all(np.diff(v) <= 1e-10)


def test_pca_warns_past_rank(rng, caplog):
    with caplog.at_level("WARNING"):
        P = pca_fit_transform(rng.standard_normal((3, 6)), 5)
    assert P.shape == (3, 5)
    assert "exceeds" in caplog.text
    with pytest.raises(ValueError):
        pca_fit_transform(rng.standard_normal((3, 6)), 7)


def test_adam_first_step_is_lr_sign():
    # bias-corrected first step moves each coordinate by lr * g/|g|
    p = Tensor(np.array([[1.0, -2.0]]), requires_grad=True)
    opt = Adam([p], lr=0.1, weight_decay=0.0)
    p.grad = np.array([[3.0, -0.5]])
    opt.step()
    np.testing.assert_allclose(p.data, [[0.9, -1.9]], atol=1e-7)


def test_adam_decoupled_decay():
    p = Tensor(np.array([[2.0]]), requires_grad=True)
    opt = Adam([p], lr=0.1, weight_decay=0.5)
    p.grad = np.zeros((1, 1))
    opt.step()
    assert p.data[0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([[5.0, -3.0]]), requires_grad=True)
    opt = Adam([p], lr=0.1, weight_decay=0.0)
    for _ in range(500):
        opt.zero_grad()
        p.grad = 2 * p.data
        opt.step()
    assert np.all(np.abs(p.data) < 1e-2)
