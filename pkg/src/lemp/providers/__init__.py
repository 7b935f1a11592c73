from .budget import BudgetExhausted, BudgetLedger, Prices, estimate_cost
from .cache import MessageCache, PairMessage, pair_key
from .clients import (Completion, HttpProvider, ProviderError, SyntheticProvider, TransientProviderError,
                      synthetic_oracle, with_retries)
from .prompts import TEMPLATES, PromptTemplate, get_template, render_prompt
from .query import QueryStats, query_connection_analysis
from .ratelimit import RateLimit, RateLimiter, SystemClock, VirtualClock, max_window_load

__all__ = [
    "BudgetExhausted", "BudgetLedger", "Prices", "estimate_cost",
    "MessageCache", "PairMessage", "pair_key",
    "Completion", "HttpProvider", "ProviderError", "SyntheticProvider", "TransientProviderError",
    "synthetic_oracle", "with_retries",
    "TEMPLATES", "PromptTemplate", "get_template", "render_prompt",
    "QueryStats", "query_connection_analysis",
    "RateLimit", "RateLimiter", "SystemClock", "VirtualClock", "max_window_load",
]
