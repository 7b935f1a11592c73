"""Query budget and token cost accounting."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Prices:
    """USD per million prompt / completion tokens."""

    input_per_m: float = 0.02
    output_per_m: float = 0.04

    def __post_init__(self):
        if self.input_per_m < 0 or self.output_per_m < 0:
            raise ValueError("prices must be non-negative")


def estimate_cost(records: Iterable, prices: Prices) -> float:
    """Total USD for ``(prompt_tokens, completion_tokens)`` records.

    Records may be tuples or objects with ``tok_in``/``tok_out``.
    """
    tok_in = tok_out = 0
    for r in records:
        a, b = (r.tok_in, r.tok_out) if hasattr(r, "tok_in") else r
        if a < 0 or b < 0:
            raise ValueError("token counts must be non-negative")
        tok_in += a
        tok_out += b
    # integer token totals keep the sum exact before the single division
    return (tok_in * prices.input_per_m + tok_out * prices.output_per_m) / 1e6


@dataclass
class BudgetLedger:
    total: int
    prices: Prices = field(default_factory=Prices)
    used: int = 0
    tok_in: int = 0
    tok_out: int = 0
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.total < 0:
            raise ValueError("budget must be non-negative")
        self._lock = threading.Lock()
        self._round: dict | None = None

    @property
    def remaining(self) -> int:
        return self.total - self.used

    @property
    def cost(self) -> float:
        return (self.tok_in * self.prices.input_per_m + self.tok_out * self.prices.output_per_m) / 1e6

    def reserve(self, count: int) -> None:
        if count > self.remaining:
            raise BudgetExhausted(f"need {count} queries, {self.remaining} of {self.total} left")

    def begin_round(self, label) -> None:
        self._round = {"round": label, "queries": 0, "tok_in": 0, "tok_out": 0}

    def end_round(self) -> dict | None:
        rnd, self._round = self._round, None
        if rnd is not None:
            self.history.append(rnd)
        return rnd

    def charge(self, tok_in: int, tok_out: int) -> None:
        with self._lock:
            if self.used >= self.total:
                raise BudgetExhausted(f"budget of {self.total} queries is spent")
            self.used += 1
            self.tok_in += tok_in
            self.tok_out += tok_out
            if self._round is not None:
                self._round["queries"] += 1
                self._round["tok_in"] += tok_in
                self._round["tok_out"] += tok_out

    def to_dict(self) -> dict:
        return {
            "budget": self.total,
            "used": self.used,
            "tok_in": self.tok_in,
            "tok_out": self.tok_out,
            "price_in_per_m": self.prices.input_per_m,
            "price_out_per_m": self.prices.output_per_m,
            "cost_usd": self.cost,
            "rounds": list(self.history),
        }
