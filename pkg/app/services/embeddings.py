from __future__ import annotations

import hashlib
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Protocol

import numpy as np

from app.errors import ProviderError
from app.services.storage import EmbeddingCache, cache_key
from app.services.text import identifier_tokens

if TYPE_CHECKING:
    import httpx

logger = logging.getLogger(__name__)


class EmbeddingProvider(Protocol):
    provider_id: str
    model_id: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        ...


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    provider_id: str
    model_id: str


def _token_hash(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    raw = int.from_bytes(digest, "big", signed=False)
    index = raw % dim
    sign = -1.0 if ((raw >> 63) & 1) else 1.0
    return index, sign


def hashed_bag_of_identifiers(text: str, dim: int = 256) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    for token in identifier_tokens(text):
        idx, sign = _token_hash(token, dim)
        vec[idx] += sign

    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


@dataclass(frozen=True)
class HashingEmbedder:
    """Offline embedder: identifier tokens hashed into signed buckets."""

    dimension: int = 256
    provider_id: str = "offline-hash"
    model_id: str = "identifier-bag-v1"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [hashed_bag_of_identifiers(text, self.dimension) for text in texts]


@dataclass
class OpenAIEmbeddingProvider:
    api_key: str
    model: str = "text-embedding-ada-002"
    dimension: int = 1536
    base_url: str | None = None
    timeout_seconds: float = 20.0
    max_retries: int = 2
    http_client: httpx.Client | None = None
    provider_id: str = field(init=False)
    _client: Any = field(init=False, repr=False)

    def __post_init__(self) -> None:
        try:
            from openai import OpenAI
        except ImportError as exc:  # pragma: no cover - import guard
            raise RuntimeError(
                "openai package is not installed. Install with `pip install .[llm]`."
            ) from exc

        self.provider_id = f"openai:{self.base_url or 'default'}"
        self._client = OpenAI(
            api_key=self.api_key,
            base_url=self.base_url,
            timeout=self.timeout_seconds,
            max_retries=self.max_retries,
            http_client=self.http_client,
        )

    @property
    def model_id(self) -> str:
        return self.model

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        from openai import OpenAIError

        try:
            response = self._client.embeddings.create(
                model=self.model,
                input=list(texts),
                encoding_format="float",
            )
        except OpenAIError as error:
            raise ProviderError(
                f"Embedding request failed: {error}", failed_indices=range(len(texts))
            ) from error

        items = sorted(response.data, key=lambda item: item.index)
        if len(items) != len(texts):
            raise ProviderError(
                f"Provider returned {len(items)} embeddings for {len(texts)} inputs",
                failed_indices=range(len(texts)),
            )
        return [np.asarray(item.embedding, dtype=np.float64) for item in items]


def _checked(vectors: Sequence[np.ndarray], expected: int, dimension: int) -> list[np.ndarray]:
    if len(vectors) != expected:
        raise ProviderError(f"Provider returned {len(vectors)} vectors for {expected} inputs")
    for vector in vectors:
        if vector.shape != (dimension,):
            raise ProviderError(
                f"Provider returned a vector of shape {vector.shape}, expected ({dimension},)"
            )
        if not np.all(np.isfinite(vector)):
            raise ProviderError("Provider returned non-finite embedding values")
    return list(vectors)


def embed_batch(
    texts: Sequence[str],
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
    batch_size: int = 64,
    max_in_flight: int = 4,
) -> list[EmbeddingVector]:
    """One vector per text, served from the cache where possible.

    Texts missing from the cache are requested in batches, at most
    ``max_in_flight`` at a time, and persisted before returning. Batches that
    fail are reported together through ``ProviderError.failed_indices``.
    """
    if not texts:
        return []
    if batch_size < 1 or max_in_flight < 1:
        raise ValueError("batch_size and max_in_flight must be positive")

    keys = [cache_key(provider.provider_id, provider.model_id, text) for text in texts]
    resolved: dict[str, np.ndarray] = {}
    missing: dict[str, str] = {}
    for key, text in zip(keys, texts, strict=True):
        if key in resolved or key in missing:
            continue
        cached = cache.get(key, provider.dimension) if cache is not None else None
        if cached is not None:
            resolved[key] = cached
        else:
            missing[key] = text

    pending = list(missing.items())
    batches = [pending[start : start + batch_size] for start in range(0, len(pending), batch_size)]

    def run(batch: list[tuple[str, str]]) -> tuple[list[tuple[str, str]], list[np.ndarray] | None, str | None]:
        batch_texts = [text for _key, text in batch]
        try:
            vectors = _checked(provider.embed(batch_texts), len(batch), provider.dimension)
        except ProviderError as error:
            logger.warning("Embedding batch of %d texts failed: %s", len(batch), error)
            return batch, None, str(error)
        return batch, vectors, None

    failed_keys: set[str] = set()
    messages: list[str] = []
    if batches:
        with ThreadPoolExecutor(max_workers=min(max_in_flight, len(batches))) as pool:
            for batch, vectors, message in pool.map(run, batches):
                if vectors is None:
                    failed_keys.update(key for key, _text in batch)
                    messages.append(message or "unknown error")
                    continue
                for (key, _text), vector in zip(batch, vectors, strict=True):
                    resolved[key] = vector
                if cache is not None:
                    cache.put_many(
                        provider.provider_id,
                        provider.model_id,
                        ((text, vector) for (_key, text), vector in zip(batch, vectors, strict=True)),
                    )

    if failed_keys:
        failed = [position for position, key in enumerate(keys) if key in failed_keys]
        raise ProviderError("; ".join(messages), failed_indices=failed)

    return [
        EmbeddingVector(values=resolved[key], provider_id=provider.provider_id, model_id=provider.model_id)
        for key in keys
    ]
