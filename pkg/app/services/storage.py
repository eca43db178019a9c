from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock

import numpy as np
from pydantic import ValidationError

from app.errors import CachePoisonError
from app.schemas import CachedEmbedding

logger = logging.getLogger(__name__)


def cache_key(provider_id: str, model_id: str, text: str) -> str:
    payload = json.dumps([provider_id, model_id, text], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write through a sibling temp file and rename over the target."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8") as stream:
            stream.write(text)
        os.replace(temp_name, target)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise


@dataclass
class EmbeddingCache:
    """Append-only JSON-Lines vector store with an in-memory map.

    A cache with no path lives in memory only.
    """

    path: str | None = None
    _lock: Lock = field(default_factory=Lock, init=False, repr=False)
    _vectors: dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)
    _records: dict[str, CachedEmbedding] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.path is None:
            return
        cache_path = Path(self.path)
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        if cache_path.exists():
            self._load(cache_path)

    def _load(self, cache_path: Path) -> None:
        dropped = 0
        with cache_path.open(encoding="utf-8") as stream:
            for line in stream:
                if not line.strip():
                    continue
                try:
                    record = CachedEmbedding.model_validate_json(line)
                except ValidationError:
                    dropped += 1
                    continue
                self._remember(record)
        if dropped:
            logger.warning("Dropped %d corrupt records from %s", dropped, cache_path)
            self._compact(cache_path)

    def _remember(self, record: CachedEmbedding) -> None:
        self._records[record.key] = record
        self._vectors[record.key] = np.asarray(record.vector, dtype=np.float64)

    def _compact(self, cache_path: Path) -> None:
        lines = "".join(record.model_dump_json() + "\n" for record in self._records.values())
        atomic_write_text(cache_path, lines)

    def __len__(self) -> int:
        with self._lock:
            return len(self._vectors)

    def get(self, key: str, dimension: int | None = None) -> np.ndarray | None:
        with self._lock:
            vector = self._vectors.get(key)
        if vector is not None and dimension is not None and vector.shape[0] != dimension:
            raise CachePoisonError(
                f"Cached vector {key[:12]} has {vector.shape[0]} dimensions, provider declares {dimension}"
            )
        return vector

    def put_many(self, provider_id: str, model_id: str, items: Iterable[tuple[str, np.ndarray]]) -> None:
        records = [
            CachedEmbedding(
                key=cache_key(provider_id, model_id, text),
                provider_id=provider_id,
                model_id=model_id,
                vector=[float(value) for value in vector],
            )
            for text, vector in items
        ]
        if not records:
            return
        with self._lock:
            for record in records:
                self._remember(record)
            if self.path is not None:
                with Path(self.path).open("a", encoding="utf-8") as stream:
                    for record in records:
                        stream.write(record.model_dump_json() + "\n")

    def clear(self) -> int:
        with self._lock:
            removed = len(self._records)
            self._records.clear()
            self._vectors.clear()
            if self.path is not None:
                Path(self.path).write_text("", encoding="utf-8")
        return removed
