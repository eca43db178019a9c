import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

from app.errors import CachePoisonError, ProviderError
from app.services.embeddings import HashingEmbedder, embed_batch
from app.services.storage import EmbeddingCache, cache_key


@dataclass
class CountingProvider:
    dimension: int = 4
    provider_id: str = "counting"
    model_id: str = "count-v1"
    requests: list[list[str]] = field(default_factory=list)
    failing: frozenset[str] = frozenset()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.requests.append(list(texts))
        if self.failing & set(texts):
            raise ProviderError("refused")
        return [np.full(self.dimension, float(len(text) + 1)) for text in texts]

    @property
    def sent(self) -> list[str]:
        return [text for request in self.requests for text in request]


def test_offline_embedder_is_deterministic() -> None:
    first, second = HashingEmbedder().embed(["def area(width, height)", "def area(width, height)"])

    assert np.array_equal(first, second)
    assert np.linalg.norm(first) == pytest.approx(1.0)


def test_repeated_text_is_served_from_cache() -> None:
    provider = CountingProvider()
    cache = EmbeddingCache()

    embed_batch(["alpha"], provider, cache)
    vectors = embed_batch(["alpha"], provider, cache)

    assert provider.requests == [["alpha"]]
    assert vectors[0].provider_id == "counting"


def test_only_uncached_texts_reach_provider() -> None:
    provider = CountingProvider()
    cache = EmbeddingCache()
    embed_batch(["b"], provider, cache)
    provider.requests.clear()

    vectors = embed_batch(["a", "b", "c"], provider, cache)

    assert sorted(provider.sent) == ["a", "c"]
    assert [vector.values[0] for vector in vectors] == [2.0, 2.0, 2.0]


def test_duplicates_in_one_call_are_sent_once() -> None:
    provider = CountingProvider()

    vectors = embed_batch(["x", "x", "y"], provider, batch_size=1)

    assert sorted(provider.sent) == ["x", "y"]
    assert len(vectors) == 3


def test_cache_persists_across_instances(tmp_path: Path) -> None:
    path = tmp_path / "cache" / "embeddings.jsonl"
    provider = CountingProvider()
    embed_batch(["alpha", "beta"], provider, EmbeddingCache(str(path)))

    reloaded = EmbeddingCache(str(path))
    provider.requests.clear()
    embed_batch(["beta", "alpha"], provider, reloaded)

    assert len(reloaded) == 2
    assert provider.requests == []


def test_corrupt_lines_are_dropped_and_compacted(tmp_path: Path) -> None:
    path = tmp_path / "embeddings.jsonl"
    record = {"key": cache_key("p", "m", "t"), "provider_id": "p", "model_id": "m", "vector": [1.0, 2.0]}
    path.write_text(json.dumps(record) + "\n{not json\n", encoding="utf-8")

    cache = EmbeddingCache(str(path))

    assert len(cache) == 1
    assert len(path.read_text(encoding="utf-8").splitlines()) == 1


def test_dimension_mismatch_poisons_cache() -> None:
    cache = EmbeddingCache()
    cache.put_many("counting", "count-v1", [("alpha", np.ones(3))])

    with pytest.raises(CachePoisonError):
        embed_batch(["alpha"], CountingProvider(dimension=4), cache)


def test_failed_batches_report_positions_and_keep_successes() -> None:
    provider = CountingProvider(failing=frozenset({"bad"}))
    cache = EmbeddingCache()

    with pytest.raises(ProviderError) as raised:
        embed_batch(["a", "bad", "c", "bad"], provider, cache, batch_size=1)

    assert raised.value.failed_indices == (1, 3)
    assert cache.get(cache_key("counting", "count-v1", "a")) is not None
    assert cache.get(cache_key("counting", "count-v1", "c")) is not None


def test_wrong_shape_is_a_provider_error() -> None:
    @dataclass
    class ShortProvider(CountingProvider):
        def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
            return [np.ones(self.dimension - 1) for _ in texts]

    with pytest.raises(ProviderError):
        embed_batch(["a"], ShortProvider())


def test_clear_empties_cache(tmp_path: Path) -> None:
    cache = EmbeddingCache(str(tmp_path / "embeddings.jsonl"))
    embed_batch(["a", "b"], CountingProvider(), cache)

    assert cache.clear() == 2
    assert len(cache) == 0
    assert (tmp_path / "embeddings.jsonl").read_text(encoding="utf-8") == ""


def test_openai_provider_over_mock_transport() -> None:
    pytest.importorskip("openai")
    import httpx

    from app.services.embeddings import OpenAIEmbeddingProvider

    seen: list[dict] = []

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        seen.append(body)
        data = [
            {"object": "embedding", "index": i, "embedding": [float(i), 1.0, 0.0]}
            for i, _text in enumerate(body["input"])
        ]
        return httpx.Response(
            200,
            json={
                "object": "list",
                "data": list(reversed(data)),
                "model": body["model"],
                "usage": {"prompt_tokens": 2, "total_tokens": 2},
            },
        )

    provider = OpenAIEmbeddingProvider(
        api_key="test-key",
        model="embed-small",
        dimension=3,
        base_url="http://embeddings.test/v1",
        max_retries=0,
        http_client=httpx.Client(transport=httpx.MockTransport(handler)),
    )

    vectors = embed_batch(["first", "second"], provider)

    assert seen[0]["model"] == "embed-small"
    assert seen[0]["input"] == ["first", "second"]
    assert [vector.values.tolist() for vector in vectors] == [[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]
    assert provider.provider_id == "openai:http://embeddings.test/v1"


def test_openai_provider_maps_transport_failure() -> None:
    pytest.importorskip("openai")
    import httpx

    from app.services.embeddings import OpenAIEmbeddingProvider

    provider = OpenAIEmbeddingProvider(
        api_key="test-key",
        model="embed-small",
        dimension=3,
        base_url="http://embeddings.test/v1",
        max_retries=0,
        http_client=httpx.Client(transport=httpx.MockTransport(lambda _request: httpx.Response(500))),
    )

    with pytest.raises(ProviderError) as raised:
        embed_batch(["first", "second"], provider)

    assert raised.value.failed_indices == (0, 1)
