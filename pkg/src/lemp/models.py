"""MLP, GCN and LEMP node classifiers with a full-batch training loop.

LEMP layers replace the neighbor operand of selected edges with a gated
fusion of a language-model message and both endpoint states. Node states
are transformed by the layer weight before fusion, and raw message
embeddings are mapped to the same width by a learned per-layer projection.
Edges without a message fall back to the plain GCN operand, so an empty
message set reproduces the GCN forward pass exactly.
"""

from __future__ import annotations

import io
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .autograd import Tape, Tensor, _sigmoid
from .graph import Graph, NormAdj
from .linalg import Adam

MODEL_KINDS = ("mlp", "gcn", "lemp")


@dataclass
class TrainConfig:
    max_epochs: int = 500
    patience: int = 50
    lr: float = 2e-2
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 128
    beta: float = 0.5
    seed: int = 0
    layers: int = 2
    standardize_hidden: bool = False
    dtype: str = "float64"
    # stop as soon as the query budget runs out instead of running to patience
    halt_on_budget_exhaustion: bool = False

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.patience < 1 or self.patience > max(self.max_epochs, 1):
            raise ValueError("patience must be in [1, max_epochs]")
        if self.lr <= 0 or self.weight_decay < 0 or self.hidden < 1 or self.layers < 1:
            raise ValueError("invalid optimizer or size settings")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    kind: str
    weights: list[Tensor]
    biases: list[Tensor]
    gates: list[Tensor] = field(default_factory=list)
    projections: list[Tensor] = field(default_factory=list)
    beta: float = 0.5

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def tensors(self) -> list[Tensor]:
        return [*self.weights, *self.biases, *self.gates, *self.projections]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, group in (("W", self.weights), ("b", self.biases), ("G", self.gates), ("P", self.projections)):
            out += [(f"{prefix}{i}", t.data) for i, t in enumerate(group)]
        return out

    def copy(self) -> "ModelParams":
        def dup(ts):
            return [Tensor(t.data.copy(), requires_grad=True) for t in ts]

        return ModelParams(self.kind, dup(self.weights), dup(self.biases), dup(self.gates), dup(self.projections),
                           self.beta)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype), requires_grad=True)


def init_params(kind: str, in_dim: int, n_classes: int, config: TrainConfig, msg_dim: int | None = None) -> ModelParams:
    """Glorot-uniform weights, zero biases.

    Base weights draw from one seed stream and gate/projection weights from
    another, so a LEMP model's base weights equal a GCN's at the same seed.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    dtype = np.dtype(config.dtype)
    dims = [in_dim] + [config.hidden] * (config.layers - 1) + [n_classes]
    rng = np.random.default_rng([config.seed, 0])
    weights = [glorot(rng, dims[i], dims[i + 1], dtype) for i in range(config.layers)]
    biases = [Tensor(np.zeros((1, dims[i + 1]), dtype=dtype), requires_grad=True) for i in range(config.layers)]
    params = ModelParams(kind, weights, biases, beta=config.beta)
    if kind == "lemp":
        if msg_dim is None:
            raise ValueError("lemp needs the message embedding width")
        grng = np.random.default_rng([config.seed, 1])
        for i in range(config.layers):
            d = dims[i + 1]
            params.gates.append(glorot(grng, 3 * d, d, dtype))
            params.projections.append(glorot(grng, msg_dim, d, dtype))
    return params


class EnhancedEdgeSet:
    """Raw message embeddings keyed by unordered node pair.

    Both orientations of a pair read the same stored vector.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self._index: dict[tuple[int, int], int] = {}
        self._rows: list[np.ndarray] = []
        self._epochs: list[int] = []

    @staticmethod
    def key(u: int, v: int) -> tuple[int, int]:
        u, v = int(u), int(v)
        return (u, v) if u < v else (v, u)

    def add(self, u: int, v: int, embedding, epoch: int = 0) -> None:
        emb = np.asarray(embedding, dtype=np.float64).reshape(-1)
        if emb.shape[0] != self.dim:
            raise ValueError(f"message width {emb.shape[0]} != {self.dim}")
        k = self.key(u, v)
        if k in self._index:
            raise KeyError(f"pair {k} already enhanced")
        self._index[k] = len(self._rows)
        self._rows.append(emb)
        self._epochs.append(int(epoch))

    def get(self, u: int, v: int) -> np.ndarray:
        return self._rows[self._index[self.key(u, v)]]

    def epoch_of(self, u: int, v: int) -> int:
        return self._epochs[self._index[self.key(u, v)]]

    def __contains__(self, pair) -> bool:
        return self.key(*pair) in self._index

    def __len__(self) -> int:
        return len(self._rows)

    def pairs(self) -> list[tuple[int, int]]:
        return list(self._index)

    def active(self, upto_epoch: int | None = None) -> "EnhancedEdgeSet":
        if upto_epoch is None:
            return self
        out = EnhancedEdgeSet(self.dim)
        for k, r in self._index.items():
            if self._epochs[r] <= upto_epoch:
                out.add(k[0], k[1], self._rows[r], self._epochs[r])
        return out

    def directed(self, graph: Graph, adj: NormAdj, upto_epoch: int | None = None):
        """Both orientations of every active pair.

        Returns:
            ``(src, dst, msg_row, weight, messages)`` where ``messages`` is the
            ``(n_pairs, dim)`` raw embedding matrix and ``weight`` holds the
            normalized adjacency entry for each directed edge.
        """
        keys, rows = [], []
        for k, r in self._index.items():
            if upto_epoch is None or self._epochs[r] <= upto_epoch:
                keys.append(k)
                rows.append(r)
        if not keys:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty, np.zeros(0), np.zeros((0, self.dim))
        pairs = np.asarray(keys, dtype=np.int64)
        edge_set = graph.edge_set()
        missing = [tuple(p) for p in keys if p not in edge_set]
        if missing:
            raise ValueError(f"enhanced pair is not a graph edge: {missing[0]}")
        m = len(keys)
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
        msg_row = np.concatenate([np.arange(m), np.arange(m)])
        weight = adj.edge_weights(np.stack([src, dst], axis=1))
        messages = np.stack([self._rows[r] for r in rows])
        return src, dst, msg_row, weight, messages


# -- building blocks -------------------------------------------------------


def gate(h_src, h_msg, h_dst, w_gate) -> np.ndarray:
    """``sigmoid([h_src | h_msg | h_dst] @ w_gate)`` for stacked rows or single vectors."""
    a, m, b = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (h_src, h_msg, h_dst))
    w = np.asarray(w_gate, dtype=np.float64)
    d = a.shape[1]
    if m.shape[1] != d or b.shape[1] != d or w.shape != (3 * d, d):
        raise ValueError("gate operands must share width d and w_gate must be 3d x d")
    out = _sigmoid(np.hstack([a, m, b]) @ w)
    return out[0] if np.ndim(h_src) == 1 else out


def synthesize_message(h_src, h_msg, h_dst, alpha, beta: float) -> np.ndarray:
    """``beta * h_msg + (1 - beta) * (alpha * h_src + (1 - alpha) * h_dst)``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    arrays = [np.asarray(x, dtype=np.float64) for x in (h_src, h_msg, h_dst, alpha)]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("message operands must share a shape")
    h_src, h_msg, h_dst, alpha = arrays
    return beta * h_msg + (1.0 - beta) * (alpha * h_src + (1.0 - alpha) * h_dst)


def fused_aggregate(tape: Tape, adj: NormAdj, z: Tensor, src, dst, weight, z_msg: Tensor | None,
                    w_gate: Tensor | None, beta: float, msg_row=None) -> Tensor:
    """``A_jj z_j + sum_i A_ij m_ij`` where ``m_ij = z_i`` unless the edge has a message.

    ``z_msg`` holds one row per directed enhanced edge ``(src[r], dst[r])``,
    or one row per pair when ``msg_row`` maps directed edges to pairs.
    """
    agg = tape.spmm(adj.matrix, z)
    if len(src) == 0:
        return agg
    d = z.shape[1]
    # [z_i | z_msg | z_j] @ W == z_i @ W_top + z_msg @ W_mid + z_j @ W_bot; the
    # node and pair products are formed once and then gathered per edge
    pre = tape.add(
        tape.add(tape.gather_rows(tape.matmul(z, tape.slice_rows(w_gate, 0, d)), src),
                 tape.gather_rows(tape.matmul(z, tape.slice_rows(w_gate, 2 * d, 3 * d)), dst)),
        _rows(tape, tape.matmul(z_msg, tape.slice_rows(w_gate, d, 2 * d)), msg_row),
    )
    alpha = tape.sigmoid(pre)
    z_src = tape.gather_rows(z, src)
    z_dst = tape.gather_rows(z, dst)
    z_msg_e = _rows(tape, z_msg, msg_row)
    mix = tape.add(z_dst, tape.mul(alpha, tape.sub(z_src, z_dst)))
    msg = tape.add(tape.scale(z_msg_e, beta), tape.scale(mix, 1.0 - beta))
    delta = tape.row_scale(tape.sub(msg, z_src), weight)
    return tape.add(agg, tape.scatter_add_rows(delta, dst, z.shape[0]))


def _rows(tape: Tape, t: Tensor, index) -> Tensor:
    return t if index is None else tape.gather_rows(t, index)


@dataclass
class _EdgeMessages:
    src: np.ndarray
    dst: np.ndarray
    msg_row: np.ndarray
    weight: np.ndarray
    messages: Tensor

    @classmethod
    def build(cls, graph, adj, enhanced: EnhancedEdgeSet | None, upto_epoch, dtype):
        if enhanced is None or len(enhanced) == 0:
            return None
        src, dst, row, w, msgs = enhanced.directed(graph, adj, upto_epoch)
        if len(src) == 0:
            return None
        return cls(src, dst, row, w.astype(dtype), Tensor(msgs.astype(dtype)))


def forward(params: ModelParams, X: Tensor, adj: NormAdj | None = None, tape: Tape | None = None,
            edge_msgs: _EdgeMessages | None = None, dropout: float = 0.0, rng: np.random.Generator | None = None,
            standardize_hidden: bool = False) -> Tensor:
    """Logits for every node. Dropout is active only when ``rng`` is given."""
    if tape is None:
        tape = Tape()
    kind = params.kind
    if kind != "mlp" and adj is None:
        raise ValueError(f"{kind} needs a normalized adjacency")
    h = X
    last = params.num_layers - 1
    for layer in range(params.num_layers):
        if h.shape[1] != params.weights[layer].shape[0]:
            raise ValueError(f"layer {layer}: input width {h.shape[1]} != {params.weights[layer].shape[0]}")
        z = tape.matmul(h, params.weights[layer])
        if kind == "mlp":
            h = z
        elif kind == "gcn" or edge_msgs is None:
            h = tape.spmm(adj.matrix, z)
        else:
            z_msg = tape.matmul(edge_msgs.messages, params.projections[layer])
            h = fused_aggregate(tape, adj, z, edge_msgs.src, edge_msgs.dst, edge_msgs.weight, z_msg,
                                params.gates[layer], params.beta, edge_msgs.msg_row)
        h = tape.add_bias(h, params.biases[layer])
        if layer < last:
            if standardize_hidden:
                h = tape.standardize_cols(h)
            h = tape.relu(h)
            if rng is not None:
                h = tape.dropout(h, dropout, rng)
    return h


def mlp_forward(params: ModelParams, X) -> np.ndarray:
    p = ModelParams("mlp", params.weights, params.biases)
    return forward(p, _as_tensor(X)).data


def gcn_forward(params: ModelParams, adj: NormAdj, X) -> np.ndarray:
    p = ModelParams("gcn", params.weights, params.biases)
    return forward(p, _as_tensor(X), adj).data


def lemp_forward(params: ModelParams, graph: Graph, adj: NormAdj, X, enhanced: EnhancedEdgeSet | None,
                 upto_epoch: int | None = None) -> np.ndarray:
    X = _as_tensor(X)
    msgs = _EdgeMessages.build(graph, adj, enhanced, upto_epoch, X.data.dtype)
    return forward(params, X, adj, edge_msgs=msgs).data


def lemp_layer(tape: Tape, params: ModelParams, layer: int, adj: NormAdj, H_prev: Tensor, graph: Graph,
               enhanced: EnhancedEdgeSet | None, activate: bool = True) -> Tensor:
    """A single LEMP layer (without dropout)."""
    msgs = _EdgeMessages.build(graph, adj, enhanced, None, H_prev.data.dtype)
    z = tape.matmul(H_prev, params.weights[layer])
    if msgs is None:
        h = tape.spmm(adj.matrix, z)
    else:
        z_msg = tape.matmul(msgs.messages, params.projections[layer])
        h = fused_aggregate(tape, adj, z, msgs.src, msgs.dst, msgs.weight, z_msg, params.gates[layer], params.beta,
                            msgs.msg_row)
    h = tape.add_bias(h, params.biases[layer])
    return tape.relu(h) if activate else h


def _as_tensor(X) -> Tensor:
    return X if isinstance(X, Tensor) else Tensor(np.asarray(X, dtype=np.float64))


# -- training --------------------------------------------------------------


def predict(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. lowest class on ties
    return np.argmax(logits, axis=1)


def accuracy(logits: np.ndarray, labels: np.ndarray, index: np.ndarray) -> float:
    if len(index) == 0:
        return float("nan")
    return float(np.mean(predict(logits[index]) == labels[index]))


def evaluate(params: ModelParams, graph: Graph, adj: NormAdj | None, X, enhanced: EnhancedEdgeSet | None = None,
             split: str = "test", upto_epoch: int | None = None) -> float:
    X = _as_tensor(X)
    msgs = None
    if params.kind == "lemp":
        msgs = _EdgeMessages.build(graph, adj, enhanced, upto_epoch, X.data.dtype)
    logits = forward(params, X, adj, edge_msgs=msgs).data
    return accuracy(logits, graph.labels, graph.index(split))


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    n_enhanced: int = 0


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochMetrics]
    best_epoch: int
    best_val_acc: float
    stopped_epoch: int
    stop_reason: str


def _ce(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


# called after each epoch with (epoch, live params); return True to stop
EpochCallback = Callable[[int, ModelParams], bool]


def train(kind: str, graph: Graph, adj: NormAdj | None, X, config: TrainConfig,
          enhanced: EnhancedEdgeSet | None = None, params: ModelParams | None = None,
          callback: EpochCallback | None = None, msg_dim: int | None = None) -> TrainResult:
    """Full-batch training with early stopping on validation accuracy.

    Returns the parameters of the best-validation epoch. ``enhanced`` may be
    mutated by ``callback`` between epochs; messages inserted at epoch ``e``
    take part from epoch ``e + 1`` on.
    """
    train_idx = graph.index("train")
    if len(train_idx) == 0:
        raise ValueError("empty train split")
    val_idx = graph.index("val")
    dtype = np.dtype(config.dtype)
    X = Tensor(np.asarray(X.data if isinstance(X, Tensor) else X, dtype=dtype))
    labels = graph.labels
    if params is None:
        if kind == "lemp" and msg_dim is None:
            msg_dim = enhanced.dim if enhanced is not None else 1
        params = init_params(kind, X.shape[1], graph.num_classes, config, msg_dim)
    opt = Adam(params.tensors(), lr=config.lr, weight_decay=config.weight_decay)
    drop_rng = np.random.default_rng([config.seed, 2])

    best = params.copy()
    best_epoch, best_val = 0, -1.0
    history: list[EpochMetrics] = []
    wait = 0
    stop_reason = "max_epochs"
    epoch = 0
    msgs = None
    msgs_size = -1
    for epoch in range(1, config.max_epochs + 1):
        n_enh = len(enhanced) if (kind == "lemp" and enhanced is not None) else 0
        if kind == "lemp" and n_enh != msgs_size:
            msgs = _EdgeMessages.build(graph, adj, enhanced, None, dtype)
            msgs_size = n_enh
        tape = Tape()
        logits = forward(params, X, adj, tape, msgs, config.dropout, drop_rng, config.standardize_hidden)
        loss = tape.softmax_cross_entropy(logits, labels[train_idx], train_idx)
        opt.zero_grad()
        tape.backward(loss)
        opt.step()

        eval_logits = forward(params, X, adj, None, msgs, standardize_hidden=config.standardize_hidden).data
        val_acc = accuracy(eval_logits, labels, val_idx)
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=loss.item(),
            train_acc=accuracy(eval_logits, labels, train_idx),
            val_loss=_ce(eval_logits[val_idx], labels[val_idx]),
            val_acc=val_acc,
            n_enhanced=n_enh,
        ))
        if val_acc > best_val:
            best_val, best_epoch, wait = val_acc, epoch, 0
            best = params.copy()
        else:
            wait += 1
        if callback is not None and callback(epoch, params):
            stop_reason = "budget_exhausted"
            break
        if wait >= config.patience:
            stop_reason = "patience"
            break
    if best_epoch == 0:
        best_val = float("nan") if not history else best_val
    return TrainResult(best, history, best_epoch, best_val, epoch if history else 0, stop_reason)


# -- checkpoints -----------------------------------------------------------

_MAGIC = b"LMPC"
_VERSION = 1
_KINDS = {k: i for i, k in enumerate(MODEL_KINDS)}


def save_params(params: ModelParams, path, dtype: str = "float64") -> None:
    """Write a versioned little-endian checkpoint."""
    width = 8 if dtype == "float64" else 4
    arrays = params.named_arrays()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IBBdI", _VERSION, width, _KINDS[params.kind], params.beta, len(arrays)))
    for name, arr in arrays:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<QQ", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=f"<f{width}").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_params(path) -> ModelParams:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, width, kind_code, beta, count = struct.unpack_from("<IBBdI", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IBBdI")
    groups: dict[str, list[Tensor]] = {"W": [], "b": [], "G": [], "P": []}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode()
        off += nlen
        rows, cols = struct.unpack_from("<QQ", data, off)
        off += 16
        size = rows * cols * width
        arr = np.frombuffer(data[off:off + size], dtype=f"<f{width}").reshape(rows, cols).astype(np.float64)
        off += size
        groups[name[0]].append(Tensor(arr.copy(), requires_grad=True))
    kind = MODEL_KINDS[kind_code]
    return ModelParams(kind, groups["W"], groups["b"], groups["G"], groups["P"], beta)
