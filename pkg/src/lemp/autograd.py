"""A small reverse-mode tape over 2-D numpy arrays.

Only the handful of primitives needed by the 2-layer MLP/GCN/LEMP models are
provided. Every primitive records its inputs and a closure mapping the
output gradient to input gradients; :meth:`Tape.backward` replays the
records in reverse order.

Example::

    tape = Tape()
    w = Tensor(np.ones((3, 2)), requires_grad=True)
    loss = tape.softmax_cross_entropy(tape.matmul(x, w), labels)
    tape.backward(loss)
    w.grad
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


class Tensor:
    """A 2-D array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


_Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def _accumulator(index: np.ndarray, n_out: int, dtype) -> sp.csr_matrix:
    """Sparse ``(n_out, len(index))`` matrix summing row ``r`` into ``index[r]``."""
    m = len(index)
    if m and (index.min() < 0 or index.max() >= n_out):
        raise IndexError("row index out of range")
    return sp.csr_matrix((np.ones(m, dtype=dtype), (index, np.arange(m))), shape=(n_out, m))


class Tape:
    """Records primitive operations for a single forward/backward pass.

    Args:
        debug: check every forward output for non-finite values.
    """

    def __init__(self, debug: bool = False):
        self.debug = debug
        self._records: list[tuple[Tensor, tuple[Tensor, ...], _Backward]] = []

    def __len__(self):
        return len(self._records)

    def clear(self) -> None:
        self._records.clear()

    def _emit(self, data: np.ndarray, inputs: tuple[Tensor, ...], backward: _Backward) -> Tensor:
        if self.debug and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite value in forward pass")
        out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
        if out.requires_grad:
            self._records.append((out, inputs, backward))
        return out

    def _check_finite(self, *tensors: Tensor) -> None:
        if self.debug:
            for t in tensors:
                if not np.all(np.isfinite(t.data)):
                    raise FloatingPointError("non-finite input")

    # -- primitives ---------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        self._check_finite(a, b)
        return self._emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))

    def spmm(self, adj: sp.spmatrix, h: Tensor) -> Tensor:
        """Sparse-constant times dense: ``adj @ h``."""
        if adj.shape[1] != h.shape[0]:
            raise ValueError(f"spmm shape mismatch: {adj.shape} @ {h.shape}")
        adj_t = adj.T.tocsr()
        return self._emit(np.asarray(adj @ h.data), (h,), lambda g: (np.asarray(adj_t @ g),))

    def add_bias(self, h: Tensor, b: Tensor) -> Tensor:
        if b.shape != (1, h.shape[1]):
            raise ValueError(f"bias shape {b.shape} does not match {h.shape}")
        return self._emit(h.data + b.data, (h, b), lambda g: (g, g.sum(axis=0, keepdims=True)))

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        self._same_shape(a, b)
        return self._emit(a.data + b.data, (a, b), lambda g: (g, g))

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        self._same_shape(a, b)
        return self._emit(a.data - b.data, (a, b), lambda g: (g, -g))

    def scale(self, a: Tensor, c: float) -> Tensor:
        return self._emit(a.data * c, (a,), lambda g: (g * c,))

    def row_scale(self, a: Tensor, w: np.ndarray) -> Tensor:
        """Multiply row ``r`` by the constant ``w[r]``."""
        w = np.asarray(w, dtype=a.data.dtype).reshape(-1, 1)
        if w.shape[0] != a.shape[0]:
            raise ValueError(f"row_scale needs {a.shape[0]} weights, got {w.shape[0]}")
        return self._emit(a.data * w, (a,), lambda g: (g * w,))

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        self._same_shape(a, b)
        return self._emit(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))

    def sigmoid(self, a: Tensor) -> Tensor:
        s = _sigmoid(a.data)
        return self._emit(s, (a,), lambda g: (g * s * (1.0 - s),))

    def relu(self, a: Tensor) -> Tensor:
        keep = a.data > 0
        return self._emit(np.where(keep, a.data, 0.0), (a,), lambda g: (g * keep,))

    def dropout(self, a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        if p == 0.0:
            return a
        mask = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
        return self._emit(a.data * mask, (a,), lambda g: (g * mask,))

    def concat(self, parts: Sequence[Tensor]) -> Tensor:
        rows = {t.shape[0] for t in parts}
        if len(rows) != 1:
            raise ValueError(f"concat row mismatch: {[t.shape for t in parts]}")
        bounds = np.cumsum([0] + [t.shape[1] for t in parts])

        def backward(g):
            return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

        return self._emit(np.hstack([t.data for t in parts]), tuple(parts), backward)

    def slice_rows(self, a: Tensor, start: int, stop: int) -> Tensor:
        """Rows ``start:stop`` of ``a`` (used to split stacked weight blocks)."""
        n = a.shape[0]

        def backward(g):
            out = np.zeros((n, g.shape[1]), dtype=g.dtype)
            out[start:stop] = g
            return (out,)

        return self._emit(a.data[start:stop], (a,), backward)

    def gather_rows(self, a: Tensor, index: np.ndarray) -> Tensor:
        index = np.asarray(index, dtype=np.int64)
        n = a.shape[0]

        def backward(g):
            return (np.asarray(_accumulator(index, n, g.dtype) @ g),)

        return self._emit(a.data[index], (a,), backward)

    def scatter_add_rows(self, a: Tensor, index: np.ndarray, n_out: int) -> Tensor:
        """Row ``r`` of ``a`` is accumulated into output row ``index[r]``."""
        index = np.asarray(index, dtype=np.int64)
        if index.shape[0] != a.shape[0]:
            raise ValueError("scatter index length must equal row count")
        out = np.asarray(_accumulator(index, n_out, a.data.dtype) @ a.data)
        return self._emit(out, (a,), lambda g: (g[index],))

    def standardize_cols(self, a: Tensor, eps: float = 1e-5) -> Tensor:
        """Per-column z-score over rows (batch statistics, no affine)."""
        mu = a.data.mean(axis=0, keepdims=True)
        xc = a.data - mu
        inv = 1.0 / np.sqrt((xc**2).mean(axis=0, keepdims=True) + eps)
        y = xc * inv
        m = a.shape[0]

        def backward(g):
            return (inv * (g - g.mean(axis=0, keepdims=True) - y * (g * y).sum(axis=0, keepdims=True) / m),)

        return self._emit(y, (a,), backward)

    def sum(self, a: Tensor) -> Tensor:
        return self._emit(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(a.shape, g[0, 0], dtype=a.data.dtype),))

    def softmax_cross_entropy(self, logits: Tensor, labels: np.ndarray, index: np.ndarray | None = None) -> Tensor:
        """Mean cross-entropy of ``softmax(logits[index])`` against ``labels``.

        ``labels`` aligns with ``index`` (or with all rows when ``index`` is
        None).
        """
        z = logits.data if index is None else logits.data[index]
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != z.shape[0]:
            raise ValueError("label count does not match selected rows")
        if z.shape[0] == 0:
            raise ValueError("cross-entropy over zero rows")
        shifted = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logsum
        rows = np.arange(z.shape[0])
        loss = -logp[rows, labels].mean()
        n_sel = z.shape[0]

        def backward(g):
            d = np.exp(logp)
            d[rows, labels] -= 1.0
            d *= g[0, 0] / n_sel
            if index is None:
                return (d,)
            full = np.zeros_like(logits.data)
            np.add.at(full, index, d)
            return (full,)

        return self._emit(np.array([[loss]], dtype=logits.data.dtype), (logits,), backward)

    @staticmethod
    def _same_shape(a: Tensor, b: Tensor) -> None:
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")

    # -- backward -----------------------------------------------------------

    def backward(self, loss: Tensor, keep: bool = False) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of requires-grad leaves.

        The tape is cleared afterwards unless ``keep`` is set.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self._records or self._records[-1][0] is not loss:
            if not any(rec[0] is loss for rec in self._records):
                raise RuntimeError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        produced = {id(rec[0]) for rec in self._records}
        for out, inputs, fn in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in produced:
                    grads[key] = grads[key] + gi if key in grads else gi
                else:
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
        if not keep:
            self.clear()


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], tape_factory: Callable[[], Tape] | None = None,
                      step: float = 1e-5) -> float:
    """Compare analytic gradients with central differences.

    ``f`` takes a :class:`Tape` and returns a scalar tensor; it must be
    deterministic (fix any dropout seed inside ``f``).

    Returns:
        max over all parameter entries of
        ``|analytic - numeric| / max(1e-8, |numeric|)``.
    """
    make = tape_factory or Tape
    for p in params:
        p.zero_grad()
    tape = make()
    loss = f(tape)
    tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            hi = f(make()).item()
            flat[k] = orig - step
            lo = f(make()).item()
            flat[k] = orig
            num = (hi - lo) / (2 * step)
            err = abs(ga.reshape(-1)[k] - num) / max(1e-8, abs(num))
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
