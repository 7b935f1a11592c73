"""Language-model providers: an OpenAI-compatible HTTP client and an offline oracle."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import httpx
import numpy as np

logger = logging.getLogger(__name__)


class ProviderError(RuntimeError):
    pass


class TransientProviderError(ProviderError):
    """Retryable failure (timeouts, 429, 5xx)."""


@dataclass
class Completion:
    text: str
    tok_in: int
    tok_out: int


def with_retries(fn, attempts: int = 3, base_delay: float = 1.0, sleep=time.sleep):
    """Call ``fn`` retrying transient errors with exponential backoff."""
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except TransientProviderError as exc:
            if attempt == attempts:
                raise ProviderError(f"giving up after {attempts} attempts: {exc}") from exc
            delay = base_delay * 2 ** (attempt - 1)
            logger.warning("transient provider error (%s); retry %d in %.1fs", exc, attempt, delay)
            sleep(delay)


class HttpProvider:
    """Chat completions plus embeddings over the OpenAI-style JSON API.

    The API key is read from the environment variable named by
    ``api_key_env``.
    """

    name = "http"

    def __init__(self, base_url: str, model: str, embedding_model: str, api_key_env: str = "LEMP_API_KEY",
                 timeout: float = 60.0, max_tokens: int = 400, temperature: float = 0.0,
                 transport: httpx.BaseTransport | None = None, retry_delay: float = 1.0, sleep=time.sleep):
        self.model = model
        self.embedding_model = embedding_model
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.retry_delay = retry_delay
        self._sleep = sleep
        self._dim: int | None = None
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout,
                                    transport=transport)

    @property
    def model_id(self) -> str:
        return self.model

    @property
    def dim(self) -> int:
        """Embedding width, discovered with one embedding call."""
        if self._dim is None:
            self._dim = int(self.embed("dimension probe").shape[0])
        return self._dim

    def _post(self, path: str, payload: dict) -> dict:
        def call():
            try:
                resp = self._client.post(path, json=payload)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                raise TransientProviderError(str(exc)) from exc
            if resp.status_code == 429 or resp.status_code >= 500:
                raise TransientProviderError(f"HTTP {resp.status_code} from {path}")
            if resp.status_code >= 400:
                raise ProviderError(f"HTTP {resp.status_code} from {path}: {resp.text[:200]}")
            return resp.json()

        return with_retries(call, attempts=3, base_delay=self.retry_delay, sleep=self._sleep)

    def complete(self, prompt: str) -> Completion:
        body = self._post("/chat/completions", {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        })
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {body!r:.200}") from exc
        usage = body.get("usage") or {}
        return Completion(text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))

    def embed(self, text: str) -> np.ndarray:
        body = self._post("/embeddings", {"model": self.embedding_model, "input": text})
        try:
            return np.asarray(body["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {body!r:.200}") from exc

    def analyze(self, u: int, v: int, prompt: str):
        comp = self.complete(prompt)
        return comp, self.embed(comp.text)

    def estimate_tokens(self, prompt: str) -> int:
        return len(prompt) // 4 + self.max_tokens

    def close(self) -> None:
        self._client.close()


class SyntheticProvider:
    """Deterministic offline stand-in for the language model.

    ``mode="mean"``: L2-normalized average of the endpoint features plus
    seeded noise of amplitude ``noise``. ``mode="class-informative"``: mean
    of the endpoints' class prototypes (needs labels).
    """

    name = "synthetic"

    def __init__(self, features, labels=None, mode: str = "mean", seed: int = 0, noise: float = 0.01,
                 prototypes=None):
        self.features = np.asarray(features, dtype=np.float64)
        self.mode = mode
        self.seed = seed
        self.noise = noise
        self.calls = 0
        if mode == "class-informative":
            if labels is None:
                raise ValueError("class-informative mode needs labels")
            self.labels = np.asarray(labels, dtype=np.int64)
            if prototypes is None:
                K = int(self.labels.max()) + 1
                prototypes = np.stack([self.features[self.labels == k].mean(axis=0) for k in range(K)])
            self.prototypes = np.asarray(prototypes, dtype=np.float64)
        elif mode == "mean":
            self.labels = None if labels is None else np.asarray(labels)
            self.prototypes = None
        else:
            raise ValueError(f"unknown synthetic mode {mode!r}")

    @property
    def model_id(self) -> str:
        return f"synthetic-{self.mode}-s{self.seed}"

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def estimate_tokens(self, prompt: str) -> int:
        return len(prompt) // 4 + 64

    def message(self, u: int, v: int) -> tuple[str, np.ndarray]:
        u, v = (u, v) if u < v else (v, u)
        if self.mode == "mean":
            avg = 0.5 * (self.features[u] + self.features[v])
            norm = np.linalg.norm(avg)
            emb = avg / norm if norm > 0 else avg.copy()
            if self.noise:
                emb = emb + self.noise * np.random.default_rng([self.seed, u, v]).standard_normal(emb.shape)
        else:
            emb = 0.5 * (self.prototypes[self.labels[u]] + self.prototypes[self.labels[v]])
        text = (f"The relational implications between [Node A] and [Node B] are as below. "
                f"Node {u} and node {v} are linked; synthetic analysis ({self.mode}, seed {self.seed}).")
        return text, emb

    def analyze(self, u: int, v: int, prompt: str):
        self.calls += 1
        text, emb = self.message(u, v)
        return Completion(text, len(prompt) // 4, len(text) // 4), emb


def synthetic_oracle(pair, node_features, labels=None, mode: str = "mean", seed: int = 0, noise: float = 0.01,
                     prompt: str = ""):
    """One :class:`PairMessage` from the offline oracle."""
    from .cache import PairMessage

    prov = SyntheticProvider(node_features, labels, mode, seed, noise)
    comp, emb = prov.analyze(int(pair[0]), int(pair[1]), prompt)
    return PairMessage(int(pair[0]), int(pair[1]), comp.text, emb, comp.tok_in, comp.tok_out, prov.model_id)
