"""Text embeddings: a deterministic hashed n-gram embedder, a remote provider, cosine."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import List, Optional, Protocol, Sequence

import httpx
import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
DEFAULT_NGRAM = 3
# Salt for the blake2b bucket hash; changing it changes every vector.
HASH_SEED = b"metaforge-ngram-v1"

_WS_RE = re.compile(r"\s+")


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> np.ndarray: ...


class EmbeddingError(RuntimeError):
    def __init__(self, message: str, attempts: int, last_status: Optional[int] = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, c))


def _bucket(gram: str, dim: int) -> int:
    h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=HASH_SEED)
    return int.from_bytes(h.digest(), "little") % dim


class HashingEmbedder:
    """Character n-gram term frequencies hashed into ``dim`` buckets, L2-normalized.

    Text is case-folded and whitespace-collapsed, then padded with one space on
    each side so that word boundaries contribute n-grams. Empty text (after
    normalization) maps to the zero vector.
    """

    def __init__(self, dim: int = DEFAULT_DIM, ngram: int = DEFAULT_NGRAM):
        if dim < 1 or ngram < 1:
            raise ValueError("dim and ngram must be positive")
        self.dim = dim
        self.ngram = ngram
        self._cached = lru_cache(maxsize=65536)(self._compute)

    def _compute(self, text: str) -> bytes:
        norm = _WS_RE.sub(" ", text.casefold()).strip()
        vec = np.zeros(self.dim, dtype=np.float64)
        if norm:
            padded = f" {norm} "
            n = self.ngram
            for i in range(max(1, len(padded) - n + 1)):
                vec[_bucket(padded[i:i + n], self.dim)] += 1.0
            vec /= np.linalg.norm(vec)
        return vec.tobytes()

    def embed(self, text: str) -> np.ndarray:
        return np.frombuffer(self._cached(text), dtype=np.float64).copy()

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self.embed(t) for t in texts])


class RemoteEmbedder:
    """Embedding service client: POST ``{"inputs": [...]}`` -> ``{"vectors": [[...]]}``.

    Batches run concurrently up to ``max_concurrency`` in-flight requests.
    Transport errors, 429 and 5xx responses are retried with exponential backoff.
    """

    def __init__(self, endpoint: Optional[str] = None, token: Optional[str] = None,
                 dim: int = DEFAULT_DIM, batch_size: int = 32, max_concurrency: int = 4,
                 max_retries: int = 3, backoff: float = 0.5, timeout: float = 30.0,
                 transport: Optional[httpx.BaseTransport] = None):
        self.endpoint = endpoint or os.environ.get("METAFORGE_EMBED_ENDPOINT")
        if not self.endpoint:
            raise ValueError("no embedding endpoint configured (METAFORGE_EMBED_ENDPOINT)")
        self.token = token or os.environ.get("METAFORGE_EMBED_KEY")
        self.dim = dim
        self.batch_size = batch_size
        self.max_concurrency = max_concurrency
        self.max_retries = max_retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _post(self, batch: List[str]) -> np.ndarray:
        status = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(self.endpoint, json={"inputs": batch})
                status = resp.status_code
                if status == 429 or status >= 500:
                    raise httpx.HTTPStatusError(f"status {status}", request=resp.request,
                                                response=resp)
                resp.raise_for_status()
                vectors = np.asarray(resp.json()["vectors"], dtype=np.float64)
                if vectors.shape != (len(batch), self.dim):
                    raise EmbeddingError(
                        f"expected vectors of shape {(len(batch), self.dim)}, got {vectors.shape}",
                        attempts=attempt + 1, last_status=status)
                return vectors
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                retryable = isinstance(exc, httpx.TransportError) or status == 429 or (
                    status is not None and status >= 500)
                if not retryable or attempt == self.max_retries:
                    raise EmbeddingError(f"embedding request failed: {exc}",
                                         attempts=attempt + 1, last_status=status) from exc
                delay = self.backoff * (2 ** attempt)
                logger.warning("embedding request failed (%s); retrying in %.2fs", exc, delay)
                time.sleep(delay)
        raise AssertionError("unreachable")

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.dim))
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            parts = list(pool.map(self._post, batches))
        return np.vstack(parts)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]
