"""PCA, z-scoring and the Adam optimizer."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .autograd import Tensor

logger = logging.getLogger(__name__)


def standardize(values) -> np.ndarray:
    """Z-score a vector; near-constant input maps to zeros."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("standardize needs at least one value")
    var = x.var()
    if var < 1e-12:
        return np.zeros_like(x)
    return (x - x.mean()) / np.sqrt(var)


def pca_fit_transform(X, out_dim: int) -> np.ndarray:
    """Project mean-centered rows of ``X`` onto the top ``out_dim`` components.

    Components come from a symmetric eigendecomposition of the ``d x d``
    covariance, sorted by decreasing eigenvalue. Each component is signed so
    that its largest-magnitude coordinate is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if out_dim < 1 or out_dim > d:
        raise ValueError(f"out_dim must be in [1, {d}], got {out_dim}")
    if out_dim > min(n, d):
        logger.warning("out_dim=%d exceeds min(n, d)=%d; trailing components are null", out_dim, min(n, d))
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:out_dim]
    comps = evecs[:, order]
    pivot = np.abs(comps).argmax(axis=0)
    signs = np.sign(comps[pivot, np.arange(out_dim)])
    signs[signs == 0] = 1.0
    comps = comps * signs
    return Xc @ comps


class Adam:
    """Adam with decoupled weight decay."""

    def __init__(self, params: Sequence[Tensor], lr: float = 2e-2, weight_decay: float = 5e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= self.lr * (update + self.weight_decay * p.data)
