"""Budgeted, cached, rate-limited acquisition of pair messages."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .budget import BudgetLedger
from .cache import MessageCache, PairMessage, pair_key
from .prompts import PromptTemplate, get_template
from .ratelimit import RateLimit, RateLimiter

logger = logging.getLogger(__name__)


@dataclass
class QueryStats:
    requested: int = 0
    cache_hits: int = 0
    provider_calls: int = 0


def _node_text(texts, i: int) -> str:
    if texts is None:
        return f"node {i}"
    t = texts[i]
    return t if t else f"node {i}"


def query_connection_analysis(pairs, texts, provider, cache: MessageCache, ledger: BudgetLedger,
                              rate: RateLimiter | RateLimit | None = None,
                              template: str | PromptTemplate = "generic",
                              stats: QueryStats | None = None) -> list[PairMessage]:
    """Return one message per requested pair, in request order.

    Cached pairs cost nothing. The remaining distinct pairs are charged to
    ``ledger`` once each and dispatched concurrently under ``rate``; each
    result is appended to ``cache`` as soon as it arrives.

    Raises:
        BudgetExhausted: fewer queries left than uncached pairs.
        ProviderError: a request still failed after retries.
    """
    tmpl = get_template(template) if isinstance(template, str) else template
    if isinstance(rate, RateLimit) or rate is None:
        rate = RateLimiter(rate or RateLimit())
    stats = stats if stats is not None else QueryStats()
    model = provider.model_id
    keys = [pair_key(u, v) for u, v in pairs]
    stats.requested += len(keys)

    todo: list[tuple[int, int]] = []
    seen = set()
    for k in keys:
        if k in seen:
            continue
        seen.add(k)
        if (k[0], k[1], model) in cache:
            stats.cache_hits += 1
        else:
            todo.append(k)
    ledger.reserve(len(todo))

    def fetch(k: tuple[int, int]) -> PairMessage:
        prompt = tmpl.render(_node_text(texts, k[0]), _node_text(texts, k[1]))
        rate.acquire(provider.estimate_tokens(prompt))
        try:
            comp, emb = provider.analyze(k[0], k[1], prompt)
        finally:
            rate.release()
        msg = PairMessage(k[0], k[1], comp.text, emb, comp.tok_in, comp.tok_out, model, time.time())
        cache.put(msg)
        ledger.charge(msg.tok_in, msg.tok_out)
        return msg

    if todo:
        workers = min(rate.limit.max_in_flight, len(todo))
        if workers == 1:
            for k in todo:
                fetch(k)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for _ in pool.map(fetch, todo):
                    pass
        stats.provider_calls += len(todo)
        logger.info("queried %d new pairs (%d cached)", len(todo), stats.cache_hits)
    return [cache.get(u, v, model) for u, v in keys]
