"""Comparison strategies: Infile-Only, RAG-BM25, Random-All, D-level and P-level."""
from __future__ import annotations

import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

from rank_bm25 import BM25Okapi

from app.services.dependency_graph import (
    DEFAULT_MAX_DEPTH,
    ImportGraphResult,
    dependency_closure,
)
from app.services.planner import (
    ContextPlan,
    PlannedFile,
    PruningLevel,
    dependency_order,
    empty_plan,
    planned_files,
)
from app.services.relevance import Query
from app.services.repo_model import RepoIndex
from app.services.tasks import PreparedTask
from app.services.text import split_lines, word_tokens

BM25_K1 = 1.2
BM25_B = 0.75
# Negative idf (terms in over half the chunks) is floored at this share of the mean idf.
BM25_EPSILON = 0.25


@dataclass(frozen=True)
class Chunk:
    path: str
    start_line: int
    end_line: int
    text: str

    @property
    def line_count(self) -> int:
        return self.end_line - self.start_line + 1

    @property
    def label(self) -> str:
        return f"{self.path}:{self.start_line}-{self.end_line}"


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


def chunk_repository(
    index: RepoIndex,
    chunk_size: int = 10,
    exclude: Iterable[str] = (),
) -> list[Chunk]:
    """Tile every file into consecutive ``chunk_size``-line chunks."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be at least 1")
    skipped = set(exclude)
    chunks: list[Chunk] = []
    for path in index.paths():
        if path in skipped:
            continue
        lines = split_lines(index.files[path].raw_text)
        for start in range(0, len(lines), chunk_size):
            window = lines[start : start + chunk_size]
            chunks.append(
                Chunk(path=path, start_line=start + 1, end_line=start + len(window), text="".join(window))
            )
    return chunks


@dataclass
class Bm25Index:
    """Okapi BM25 over word tokens of each chunk.

    Idf is log((N - n + 0.5) / (n + 0.5)) as in classic Okapi, except that a
    negative idf is replaced by ``BM25_EPSILON`` times the mean idf.
    """

    chunks: list[Chunk]
    k1: float = BM25_K1
    b: float = BM25_B
    _model: Any = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        corpus = [word_tokens(chunk.text) for chunk in self.chunks]
        # rank_bm25 divides by the average document length.
        if any(corpus):
            self._model = BM25Okapi(corpus, k1=self.k1, b=self.b, epsilon=BM25_EPSILON)

    @classmethod
    def build(cls, index: RepoIndex, exclude: Iterable[str] = (), chunk_size: int = 10) -> Bm25Index:
        return cls(chunk_repository(index, chunk_size=chunk_size, exclude=exclude))

    def scores(self, tokens: Sequence[str]) -> list[float]:
        if self._model is None:
            return [0.0] * len(self.chunks)
        return [float(value) for value in self._model.get_scores(list(tokens))]


def bm25_retrieve(bm25: Bm25Index, query: Query | str, top_n: int = 5) -> list[ScoredChunk]:
    """Best chunks for the query: score descending, then (path, start_line)."""
    if top_n < 0:
        raise ValueError("top_n must be non-negative")
    if not bm25.chunks:
        return []
    text = query.text if isinstance(query, Query) else query
    scores = bm25.scores(word_tokens(text))
    order = sorted(
        range(len(bm25.chunks)),
        key=lambda i: (-scores[i], bm25.chunks[i].path, bm25.chunks[i].start_line),
    )
    return [ScoredChunk(chunk=bm25.chunks[i], score=scores[i]) for i in order[:top_n]]


def infile_only_plan(task: PreparedTask, repo_name: str = "") -> ContextPlan:
    return empty_plan(task, repo_name=repo_name, strategy="infile")


def rag_plan(task: PreparedTask, snippets: Sequence[ScoredChunk], repo_name: str = "") -> ContextPlan:
    """Snippets as pseudo-files named ``path:start-end``, most relevant first."""
    return ContextPlan(
        current=task.fim,
        other_files=tuple(
            PlannedFile(path=item.chunk.label, text=item.chunk.text, score=item.score) for item in snippets
        ),
        repo_name=repo_name,
        strategy="rag-bm25",
    )


def random_all_plan(task: PreparedTask, index: RepoIndex, seed: int) -> ContextPlan:
    """Every other file, unpruned, in an order shuffled per (seed, task)."""
    paths = [path for path in index.paths() if path != task.path]
    random.Random(f"{seed}:{task.task_id}").shuffle(paths)
    return ContextPlan(
        current=task.fim,
        other_files=tuple(planned_files(paths, index, PruningLevel.P0)),
        repo_name=index.name,
        strategy="random-all",
    )


def _infinity_order(task: PreparedTask, index: RepoIndex, graph: ImportGraphResult | None) -> list[str]:
    """Unreachable files in path order, then reachable ones farthest first."""
    dep_set = dependency_closure(task.path, DEFAULT_MAX_DEPTH, index, graph)
    reachable = dependency_order(dep_set, set(dep_set.reachable) - {task.path})
    return [*dep_set.remainder, *reachable]


def d_level_plan(
    task: PreparedTask,
    level: int | None,
    index: RepoIndex,
    graph: ImportGraphResult | None = None,
) -> ContextPlan:
    """Files of dependency level ``level`` (``None`` for every file), unpruned."""
    descriptor = f"d-level:{'inf' if level is None else level}"
    if level is None:
        paths = _infinity_order(task, index, graph)
    else:
        dep_set = dependency_closure(task.path, level, index, graph)
        paths = dependency_order(dep_set, dep_set.level(level) - {task.path})
    return ContextPlan(
        current=task.fim,
        other_files=tuple(planned_files(paths, index, PruningLevel.P0)),
        repo_name=index.name,
        strategy=descriptor,
    )


def p_level_plan(
    task: PreparedTask,
    level: PruningLevel | int,
    index: RepoIndex,
    dep_depth: int | None = None,
    graph: ImportGraphResult | None = None,
) -> ContextPlan:
    """Every other file at pruning ``level``.

    With ``dep_depth`` the files of that dependency level are rendered at P1
    and placed next to the current file.
    """
    level = PruningLevel(level)
    descriptor = f"p-level:{int(level)}" + (f"+d:{dep_depth}" if dep_depth is not None else "")
    ordered = _infinity_order(task, index, graph)
    dependencies: list[str] = []
    if dep_depth is not None:
        dep_set = dependency_closure(task.path, dep_depth, index, graph)
        dependencies = dependency_order(dep_set, dep_set.level(dep_depth) - {task.path})
    placed = set(dependencies)
    others = [path for path in ordered if path not in placed]
    return ContextPlan(
        current=task.fim,
        dependency_files=tuple(planned_files(dependencies, index, PruningLevel.P1)),
        other_files=tuple(planned_files(others, index, level)),
        repo_name=index.name,
        strategy=descriptor,
    )
