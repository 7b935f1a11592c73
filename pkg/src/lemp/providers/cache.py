"""Append-only JSONL store of pair messages."""

from __future__ import annotations

import base64
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class PairMessage:
    u: int
    v: int
    text: str
    embedding: np.ndarray
    tok_in: int
    tok_out: int
    model: str
    ts: float = 0.0

    def __post_init__(self):
        if self.u > self.v:
            self.u, self.v = self.v, self.u
        if self.tok_in < 0 or self.tok_out < 0:
            raise ValueError("token counts must be non-negative")
        # round-trip through the stored width so fresh and cached copies agree
        self.embedding = np.asarray(self.embedding, dtype="<f4").astype(np.float64)

    @property
    def key(self) -> tuple[int, int]:
        return (self.u, self.v)

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[0])

    def to_record(self) -> dict:
        return {
            "u": self.u,
            "v": self.v,
            "model": self.model,
            "text": self.text,
            "emb_b64": base64.b64encode(np.asarray(self.embedding, dtype="<f4").tobytes()).decode("ascii"),
            "dim": self.dim,
            "tok_in": self.tok_in,
            "tok_out": self.tok_out,
            "ts": self.ts,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PairMessage":
        emb = np.frombuffer(base64.b64decode(rec["emb_b64"]), dtype="<f4")
        if emb.shape[0] != rec["dim"]:
            raise ValueError(f"record ({rec['u']}, {rec['v']}): blob has {emb.shape[0]} floats, dim says {rec['dim']}")
        return cls(int(rec["u"]), int(rec["v"]), rec["text"], emb, int(rec["tok_in"]), int(rec["tok_out"]),
                   rec["model"], float(rec.get("ts", 0.0)))


def pair_key(u: int, v: int) -> tuple[int, int]:
    u, v = int(u), int(v)
    return (u, v) if u < v else (v, u)


class MessageCache:
    """Pair messages keyed by ``(min(u, v), max(u, v), model)``.

    With a ``path`` every insert is appended to disk immediately; the file is
    replayed on open (later lines win). ``path=None`` keeps everything in
    memory.
    """

    def __init__(self, path: str | os.PathLike | None = None, dim: int | None = None):
        self.path = Path(path) if path is not None else None
        self.dim = dim
        self._lock = threading.Lock()
        self._items: dict[tuple[int, int, str], PairMessage] = {}
        self.lines_read = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # torn final line from an interrupted append
                    continue
                msg = PairMessage.from_record(rec)
                self._check_dim(msg)
                self._items[(msg.u, msg.v, msg.model)] = msg
                self.lines_read = lineno

    def _check_dim(self, msg: PairMessage) -> None:
        if self.dim is None:
            self.dim = msg.dim
        elif msg.dim != self.dim:
            raise ValueError(f"embedding width {msg.dim} does not match cache width {self.dim}")

    def get(self, u: int, v: int, model: str) -> PairMessage | None:
        return self._items.get((*pair_key(u, v), model))

    def __contains__(self, item) -> bool:
        u, v, model = item
        return (*pair_key(u, v), model) in self._items

    def __len__(self) -> int:
        return len(self._items)

    def values(self) -> list[PairMessage]:
        return list(self._items.values())

    def put(self, msg: PairMessage) -> None:
        with self._lock:
            self._check_dim(msg)
            if not msg.ts:
                msg.ts = time.time()
            self._items[(msg.u, msg.v, msg.model)] = msg
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(self.to_line(msg)) + "\n")
                    f.flush()

    @staticmethod
    def to_line(msg: PairMessage) -> dict:
        return msg.to_record()

    def compact(self) -> int:
        """Rewrite the file with one line per key; returns lines dropped."""
        if self.path is None:
            return 0
        before = sum(1 for _ in open(self.path, encoding="utf-8")) if self.path.exists() else 0
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with self._lock:
            with open(tmp, "w", encoding="utf-8") as f:
                for msg in sorted(self._items.values(), key=lambda m: (m.u, m.v, m.model)):
                    f.write(json.dumps(msg.to_record()) + "\n")
            os.replace(tmp, self.path)
        return before - len(self._items)
