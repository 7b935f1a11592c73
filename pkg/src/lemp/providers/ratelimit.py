"""Sliding-window limiter for queries and tokens per minute."""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass


@dataclass(frozen=True)
class RateLimit:
    queries_per_minute: int = 60
    tokens_per_minute: int = 1_000_000
    max_in_flight: int = 8
    window: float = 60.0

    def __post_init__(self):
        if self.queries_per_minute < 1 or self.tokens_per_minute < 1 or self.max_in_flight < 1:
            raise ValueError("rate limits must be positive")


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock for tests; ``sleep`` advances time instantly."""

    def __init__(self, start: float = 0.0):
        self.t = start
        self._lock = threading.Lock()

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.t += max(0.0, seconds)

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)


class RateLimiter:
    """Blocks until a request fits the last ``window`` seconds' allowance.

    Every admitted request is logged as ``(time, tokens)``; ``dispatch_log``
    keeps the full history for auditing.
    """

    def __init__(self, limit: RateLimit, clock=None):
        self.limit = limit
        self.clock = clock or SystemClock()
        self._events: deque[tuple[float, int]] = deque()
        self._tokens = 0
        self._cond = threading.Condition()
        self._in_flight = threading.BoundedSemaphore(limit.max_in_flight)
        self.dispatch_log: list[tuple[float, int]] = []

    def _expire(self, now: float) -> None:
        while self._events and self._events[0][0] <= now - self.limit.window:
            _, tok = self._events.popleft()
            self._tokens -= tok

    def acquire(self, tokens: int) -> float:
        """Admit a request estimated at ``tokens``; returns the admit time."""
        if tokens > self.limit.tokens_per_minute:
            raise ValueError(f"request of {tokens} tokens exceeds the per-minute token limit")
        self._in_flight.acquire()
        try:
            with self._cond:
                while True:
                    now = self.clock.now()
                    self._expire(now)
                    fits_q = len(self._events) < self.limit.queries_per_minute
                    fits_t = self._tokens + tokens <= self.limit.tokens_per_minute
                    if fits_q and fits_t:
                        self._events.append((now, tokens))
                        self._tokens += tokens
                        self.dispatch_log.append((now, tokens))
                        return now
                    wait = self._events[0][0] + self.limit.window - now
                    self.clock.sleep(max(wait, 1e-3))
        except BaseException:
            self._in_flight.release()
            raise

    def release(self) -> None:
        self._in_flight.release()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def max_window_load(log: list[tuple[float, int]], window: float = 60.0) -> tuple[int, int]:
    """Largest request count and token sum inside any half-open window."""
    times = sorted(log)
    best_q = best_t = 0
    lo = 0
    tok = 0
    for hi, (t, k) in enumerate(times):
        tok += k
        while times[lo][0] <= t - window:
            tok -= times[lo][1]
            lo += 1
        best_q = max(best_q, hi - lo + 1)
        best_t = max(best_t, tok)
    return best_q, best_t
