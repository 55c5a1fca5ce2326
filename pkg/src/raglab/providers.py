"""Embedding and language-model providers.

Two families share one interface pair:

- Offline stubs (`StubEmbedder`, `StubLM`) are fully deterministic functions
  of their inputs and a seed. They need no network and exist so that every
  pipeline, experiment, and test in this package can run reproducibly.
- Remote providers (`RemoteEmbedder`, `RemoteLM`) speak the OpenAI-compatible
  HTTP surface (`/v1/embeddings`, `/v1/chat/completions`) over httpx, with
  bounded concurrency, retry on transient failures, and optional streaming.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Protocol

import httpx
import numpy as np

__all__ = [
    "Embedder",
    "LanguageModel",
    "StubEmbedder",
    "StubLM",
    "RemoteConfig",
    "RemoteEmbedder",
    "RemoteLM",
    "RemoteProviderError",
    "stable_seed",
]

DEFAULT_EMBEDDING_DIM = 384
DEFAULT_EMBEDDING_MODEL = "all-MiniLM-L6-v2"


def stable_seed(*parts: str | int) -> int:
    """64-bit seed derived from the parts via blake2b. Stable across
    processes and platforms, unlike hash()."""
    digest = hashlib.blake2b(
        "\x1f".join(str(p) for p in parts).encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


class Embedder(Protocol):
    dim: int
    model: str

    def embed(self, texts: list[str]) -> np.ndarray:
        """Embed texts into a (len(texts), dim) float64 array of unit-norm
        rows, in input order."""
        ...


class LanguageModel(Protocol):
    model: str

    def complete(self, prompt: str, max_tokens: int) -> str:
        ...

    def stream(self, prompt: str, max_tokens: int) -> Iterator[str]:
        ...


class StubEmbedder:
    """Deterministic stand-in for a sentence-embedding model.

    Each text maps to a unit-norm vector drawn from a RandomState seeded by
    a digest of (model, seed, text). Equal texts always get equal vectors;
    the map has no semantics beyond that, which is exactly what ranking and
    persistence tests need.
    """

    def __init__(self, dim: int = DEFAULT_EMBEDDING_DIM, seed: int = 0,
                 model: str = DEFAULT_EMBEDDING_MODEL):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self.model = model

    def embed_one(self, text: str) -> np.ndarray:
        rng = np.random.RandomState(
            stable_seed("embed", self.model, self.seed, text) % (2**32)
        )
        vec = rng.standard_normal(self.dim)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # unreachable for continuous draws; belt and braces
            vec[0] = 1.0
            norm = 1.0
        return vec / norm

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self.embed_one(text)
        return out


# Closed vocabulary for the stub LM. Plain lowercase words keep scoring
# tokenization trivial and make generated text look like text.
_STUB_VOCAB = (
    "the a an of to in on for with and or but is are was were be been has "
    "have had will would could should may might must not no yes it this "
    "that these those he she they we you i one two three first second last "
    "new old large small good bad long short high low early late time year "
    "day way man world life hand part child eye woman place work week case "
    "point company number group problem fact water money story light night "
    "question answer system program city state nation house power country "
    "area book word business issue side kind head home force air line body "
    "information door result change reason research moment history market "
    "science nature idea truth knowledge model value practice evidence"
).split()


class StubLM:
    """Deterministic stand-in for an instruction-tuned LM.

    The completion for a prompt is a stream of vocabulary words chosen by a
    RandomState seeded from (model, seed, prompt). Every emitted token
    carries a leading space, so token streams concatenate into well-formed
    text even when a generation loop re-prompts mid-sequence and stitches
    the segments together.
    """

    def __init__(self, seed: int = 0, model: str = "stub-lm"):
        self.seed = seed
        self.model = model

    def _rng(self, prompt: str) -> np.random.RandomState:
        return np.random.RandomState(
            stable_seed("lm", self.model, self.seed, prompt) % (2**32)
        )

    def stream(self, prompt: str, max_tokens: int) -> Iterator[str]:
        if max_tokens < 0:
            raise ValueError("max_tokens must be >= 0")
        rng = self._rng(prompt)
        for _ in range(max_tokens):
            yield " " + _STUB_VOCAB[int(rng.randint(len(_STUB_VOCAB)))]

    def complete(self, prompt: str, max_tokens: int) -> str:
        # exact concatenation of the stream, leading space included, so
        # complete() and stream() are interchangeable in generation traces
        return "".join(self.stream(prompt, max_tokens))


class RemoteProviderError(RuntimeError):
    """Raised when a remote provider request fails after all retries, or
    returns a payload that cannot be interpreted."""


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout: float = 60.0
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_initial: float = 0.25
    backoff_multiplier: float = 2.0


class _RemoteBase:
    def __init__(self, config: RemoteConfig, transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep):
        self.config = config
        headers = {}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, payload: dict, *, stream: bool = False):
        """POST with bounded concurrency and retry on transport errors and
        5xx responses. 4xx responses are not retried: the request itself is
        wrong and retrying cannot fix it."""
        delay = self.config.backoff_initial
        last_error: Exception | None = None
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                with self._gate:
                    if stream:
                        request = self._client.build_request("POST", path, json=payload)
                        response = self._client.send(request, stream=True)
                    else:
                        response = self._client.post(path, json=payload)
                if response.status_code >= 500:
                    if stream:
                        response.close()
                    last_error = RemoteProviderError(
                        f"{path}: server error {response.status_code}"
                    )
                elif response.status_code >= 400:
                    detail = "" if stream else f": {response.text[:200]}"
                    if stream:
                        response.close()
                    raise RemoteProviderError(
                        f"{path}: client error {response.status_code}{detail}"
                    )
                else:
                    return response
            except RemoteProviderError:
                raise
            except httpx.HTTPError as exc:
                last_error = exc
            if attempt < self.config.max_attempts:
                self._sleep(delay)
                delay *= self.config.backoff_multiplier
        raise RemoteProviderError(
            f"{path}: failed after {self.config.max_attempts} attempts"
        ) from last_error


class RemoteEmbedder(_RemoteBase):
    """OpenAI-compatible /v1/embeddings client. Rows come back ordered by
    each item's index field, not response-array position, so interleaved
    server responses cannot scramble text/vector pairing."""

    def __init__(self, config: RemoteConfig, dim: int = DEFAULT_EMBEDDING_DIM,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        super().__init__(config, transport=transport, sleep=sleep)
        self.dim = dim
        self.model = config.model

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.empty((0, self.dim), dtype=np.float64)
        response = self._post(
            "/v1/embeddings", {"model": self.config.model, "input": list(texts)}
        )
        try:
            items = response.json()["data"]
            rows: list[np.ndarray | None] = [None] * len(texts)
            for item in items:
                rows[int(item["index"])] = np.asarray(item["embedding"], dtype=np.float64)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise RemoteProviderError(f"/v1/embeddings: malformed response ({exc})") from None
        if any(row is None for row in rows):
            raise RemoteProviderError(
                f"/v1/embeddings: expected {len(texts)} rows, got {len(items)}"
            )
        out = np.vstack(rows)
        if out.shape[1] != self.dim:
            raise RemoteProviderError(
                f"/v1/embeddings: expected dim {self.dim}, got {out.shape[1]}"
            )
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return out / norms


class RemoteLM(_RemoteBase):
    """OpenAI-compatible /v1/chat/completions client.

    complete() uses a plain request; stream() uses server-sent events and
    yields content deltas as they arrive. A stream that ends without the
    DONE sentinel raises, because a silently truncated completion is worse
    than a failed one.
    """

    def __init__(self, config: RemoteConfig,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        super().__init__(config, transport=transport, sleep=sleep)
        self.model = config.model

    def _payload(self, prompt: str, max_tokens: int) -> dict:
        return {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": max_tokens,
            "temperature": 0.0,
        }

    def complete(self, prompt: str, max_tokens: int) -> str:
        response = self._post("/v1/chat/completions", self._payload(prompt, max_tokens))
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, TypeError, IndexError) as exc:
            raise RemoteProviderError(
                f"/v1/chat/completions: malformed response ({exc})"
            ) from None

    def stream(self, prompt: str, max_tokens: int) -> Iterator[str]:
        payload = self._payload(prompt, max_tokens) | {"stream": True}
        response = self._post("/v1/chat/completions", payload, stream=True)
        done = False
        try:
            for line in response.iter_lines():
                line = line.strip()
                if not line.startswith("data:"):
                    continue
                data = line[len("data:"):].strip()
                if data == "[DONE]":
                    done = True
                    break
                try:
                    delta = json.loads(data)["choices"][0].get("delta", {})
                except (json.JSONDecodeError, KeyError, TypeError, IndexError):
                    raise RemoteProviderError(
                        "/v1/chat/completions: malformed stream event"
                    ) from None
                content = delta.get("content")
                if content:
                    yield content
        finally:
            response.close()
        if not done:
            raise RemoteProviderError(
                "/v1/chat/completions: stream ended without completion sentinel"
            )


def batched(items: list[str], size: int) -> Iterable[list[str]]:
    """Yield consecutive slices of at most `size` items."""
    if size < 1:
        raise ValueError("size must be >= 1")
    for start in range(0, len(items), size):
        yield items[start:start + size]
