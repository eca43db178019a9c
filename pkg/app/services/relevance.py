from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from app.schemas import CompletionTask
from app.services.embeddings import EmbeddingProvider, embed_batch
from app.services.repo_model import FileNode, RepoIndex
from app.services.storage import EmbeddingCache
from app.services.tasks import PreparedTask, check_cursor

DEFAULT_QUERY_RADIUS = 10


@dataclass(frozen=True)
class Query:
    text: str
    path: str
    line: int
    column: int
    window_radius: int = DEFAULT_QUERY_RADIUS


@dataclass(frozen=True)
class RelevanceScores:
    scores: Mapping[str, float]
    query: Query | None = None

    def __len__(self) -> int:
        return len(self.scores)


def function_ref(path: str, qualified_name: str) -> str:
    return f"{path}::{qualified_name}"


def split_ref(ref: str) -> tuple[str, str]:
    path, _, qualified_name = ref.rpartition("::")
    return path, qualified_name


def build_query(
    task: PreparedTask | CompletionTask,
    file: FileNode,
    radius: int = DEFAULT_QUERY_RADIUS,
) -> Query:
    """Cursor window: ``radius`` lines either side, the cursor line cut at the column."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    line, column = task.line, task.column
    lines = check_cursor(file.raw_text, line, column)
    if not lines:
        return Query(text="", path=file.path, line=line, column=column, window_radius=radius)

    start = max(1, line - radius)
    end = min(len(lines), line + radius)
    anchor = lines[line - 1].rstrip("\r\n")[:column]
    after = "".join(lines[line:end])
    text = "".join(lines[start - 1 : line - 1]) + anchor + ("\n" + after if after else "")
    return Query(text=text, path=file.path, line=line, column=column, window_radius=radius)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / norm, -1.0, 1.0))


def candidate_texts(scope: Iterable[str], index: RepoIndex) -> dict[str, tuple[str, str, str]]:
    """ref -> (path, qualified name, full source) for every function and method."""
    candidates: dict[str, tuple[str, str, str]] = {}
    for path in sorted(set(scope)):
        file = index.file(path)
        for function in file.iter_functions():
            candidates[function_ref(path, function.qualified_name)] = (
                path,
                function.qualified_name,
                file.text_of(function.span),
            )
    return candidates


def score_functions(
    scope: Iterable[str],
    index: RepoIndex,
    query: Query,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
    batch_size: int = 64,
    max_in_flight: int = 4,
) -> RelevanceScores:
    candidates = candidate_texts(scope, index)
    if not candidates:
        return RelevanceScores(scores={}, query=query)

    refs = sorted(candidates)
    texts = [query.text, *(candidates[ref][2] for ref in refs)]
    vectors = embed_batch(texts, provider, cache, batch_size=batch_size, max_in_flight=max_in_flight)
    query_vector = vectors[0].values
    scores = {
        ref: cosine_similarity(query_vector, vector.values)
        for ref, vector in zip(refs, vectors[1:], strict=True)
    }
    return RelevanceScores(scores=scores, query=query)
