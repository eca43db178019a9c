"""Strategy descriptors and the index -> plan -> prompt pipeline."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock
from typing import Literal

from app.config import Settings
from app.errors import StrategyError
from app.schemas import CompletionTask
from app.services.baselines import (
    Bm25Index,
    bm25_retrieve,
    d_level_plan,
    infile_only_plan,
    p_level_plan,
    rag_plan,
    random_all_plan,
)
from app.services.dependency_graph import ImportGraphResult, dependency_closure, import_graph
from app.services.embeddings import EmbeddingProvider, HashingEmbedder, OpenAIEmbeddingProvider
from app.services.planner import ContextPlan, PruningLevel, SamplingConfig, plan_context
from app.services.prompting import (
    PromptTemplate,
    RegexTokenCounter,
    RenderedPrompt,
    TokenBudget,
    TokenCounter,
    get_template,
    make_counter,
    render,
)
from app.services.relevance import build_query, score_functions
from app.services.repo_model import DEFAULT_EXCLUDE_GLOBS, DEFAULT_INCLUDE_GLOBS, RepoIndex, index_repository
from app.services.storage import EmbeddingCache
from app.services.tasks import PreparedTask, make_task

logger = logging.getLogger(__name__)

StrategyKind = Literal["infile", "rag-bm25", "random-all", "d-level", "p-level", "hcp"]

_D_LEVEL = re.compile(r"d-level:(?P<level>\d+|inf)")
_P_LEVEL = re.compile(r"p-level:(?P<level>[012])(?:\+d:(?P<depth>\d+))?")


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    level: int | None = None
    dep_depth: int | None = None

    @property
    def descriptor(self) -> str:
        if self.kind == "d-level":
            return f"d-level:{'inf' if self.level is None else self.level}"
        if self.kind == "p-level":
            suffix = f"+d:{self.dep_depth}" if self.dep_depth is not None else ""
            return f"p-level:{self.level}{suffix}"
        return self.kind

    def __str__(self) -> str:
        return self.descriptor


def parse_strategy(text: str, p_level: int = 2, d_level: int | None = None) -> Strategy:
    """Parse a strategy descriptor.

    A bare ``p-level`` or ``d-level`` takes its level from ``p_level`` or
    ``d_level``; ``d_level=None`` means the whole closure.
    """
    descriptor = text.strip().lower()
    if descriptor == "p-level":
        return Strategy(kind="p-level", level=p_level)
    if descriptor == "d-level":
        return Strategy(kind="d-level", level=d_level)
    if descriptor in ("infile", "rag-bm25", "random-all", "hcp"):
        return Strategy(kind=descriptor)  # type: ignore[arg-type]
    if match := _D_LEVEL.fullmatch(descriptor):
        level = match["level"]
        return Strategy(kind="d-level", level=None if level == "inf" else int(level))
    if match := _P_LEVEL.fullmatch(descriptor):
        depth = match["depth"]
        return Strategy(
            kind="p-level",
            level=int(match["level"]),
            dep_depth=int(depth) if depth is not None else None,
        )
    raise StrategyError(
        f"Unknown strategy {text!r}; expected infile, rag-bm25, random-all, "
        "d-level[:N|inf], p-level[:N[+d:M]] or hcp"
    )


def build_provider(settings: Settings) -> EmbeddingProvider:
    if settings.embedding_provider == "openai":
        if not settings.embedding_api_key:
            raise ValueError("embedding_provider 'openai' needs HCP_EMBEDDING_API_KEY or OPENAI_API_KEY")
        return OpenAIEmbeddingProvider(
            api_key=settings.embedding_api_key,
            model=settings.embedding_model,
            dimension=settings.embedding_dimension,
            base_url=settings.embedding_base_url,
            timeout_seconds=settings.embedding_timeout_seconds,
        )
    return HashingEmbedder()


@dataclass
class PromptPipeline:
    """Everything needed to turn a completion task into a prompt.

    Repository indexes and import graphs are built once per root and shared
    across threads.
    """

    template: PromptTemplate
    budget: TokenBudget
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    provider: EmbeddingProvider = field(default_factory=HashingEmbedder)
    cache: EmbeddingCache | None = None
    counter: TokenCounter = field(default_factory=RegexTokenCounter)
    strategy: Strategy = field(default_factory=lambda: Strategy(kind="hcp"))
    chunk_size: int = 10
    top_n: int = 5
    seed: int = 0
    embedding_batch_size: int = 64
    embedding_max_in_flight: int = 4
    include_globs: tuple[str, ...] = DEFAULT_INCLUDE_GLOBS
    exclude_globs: tuple[str, ...] = DEFAULT_EXCLUDE_GLOBS
    _lock: Lock = field(default_factory=Lock, init=False, repr=False)
    _indexes: dict[str, RepoIndex] = field(default_factory=dict, init=False, repr=False)
    _graphs: dict[str, ImportGraphResult] = field(default_factory=dict, init=False, repr=False)

    @classmethod
    def from_settings(cls, settings: Settings, strategy: Strategy | None = None) -> PromptPipeline:
        return cls(
            template=get_template(settings.template_family),
            budget=TokenBudget(
                model_max_length=settings.resolved_model_max_length(),
                reserve_for_generation=settings.reserve_for_generation,
            ),
            sampling=SamplingConfig(
                top_k=settings.top_k,
                top_p=settings.top_p,
                dependency_depth=settings.d_level,
                query_radius=settings.query_radius,
            ),
            provider=build_provider(settings),
            cache=EmbeddingCache(str(settings.embedding_cache_path())),
            counter=make_counter(settings.tokenizer),
            strategy=strategy or parse_strategy(settings.strategy, settings.p_level, settings.d_level),
            chunk_size=settings.chunk_size,
            top_n=settings.top_n,
            seed=settings.seed,
            embedding_batch_size=settings.embedding_batch_size,
            embedding_max_in_flight=settings.embedding_max_in_flight,
            include_globs=tuple(settings.include_globs),
            exclude_globs=tuple(settings.exclude_globs),
        )

    def index_for(self, repo_root: str | Path) -> RepoIndex:
        key = str(Path(repo_root).resolve())
        with self._lock:
            if key not in self._indexes:
                self._indexes[key] = index_repository(key, self.include_globs, self.exclude_globs)
            return self._indexes[key]

    def add_index(self, index: RepoIndex) -> None:
        """Register an already-built index (in-memory repositories)."""
        with self._lock:
            self._indexes[str(Path(index.root).resolve())] = index

    def graph_for(self, index: RepoIndex) -> ImportGraphResult:
        key = str(Path(index.root).resolve())
        with self._lock:
            graph = self._graphs.get(key)
        if graph is None:
            graph = import_graph(index)
            with self._lock:
                self._graphs.setdefault(key, graph)
        return graph

    def prepare(self, task: CompletionTask) -> tuple[PreparedTask, RepoIndex]:
        index = self.index_for(task.repo_root)
        file = index.file(task.target_file)
        prepared = make_task(
            task.repo_root,
            file.path,
            task.line,
            task.column,
            task.ground_truth,
            text=file.raw_text,
            task_id=task.id,
        )
        return prepared, index

    def plan(self, prepared: PreparedTask, index: RepoIndex, strategy: Strategy | None = None) -> ContextPlan:
        strategy = strategy or self.strategy
        graph = self.graph_for(index)
        if strategy.kind == "infile":
            return infile_only_plan(prepared, repo_name=index.name)
        if strategy.kind == "rag-bm25":
            bm25 = Bm25Index.build(index, exclude=[prepared.path], chunk_size=self.chunk_size)
            query = build_query(prepared, index.file(prepared.path), self.sampling.query_radius)
            return rag_plan(prepared, bm25_retrieve(bm25, query, self.top_n), repo_name=index.name)
        if strategy.kind == "random-all":
            return random_all_plan(prepared, index, self.seed)
        if strategy.kind == "d-level":
            return d_level_plan(prepared, strategy.level, index, graph)
        if strategy.kind == "p-level":
            return p_level_plan(prepared, PruningLevel(strategy.level or 0), index, strategy.dep_depth, graph)
        return self._hcp_plan(prepared, index, graph)

    def _hcp_plan(self, prepared: PreparedTask, index: RepoIndex, graph: ImportGraphResult) -> ContextPlan:
        depth = self.sampling.dependency_depth
        dep_set = dependency_closure(prepared.path, depth, index, graph)
        file = index.file(prepared.path)
        query = build_query(prepared, file, self.sampling.query_radius)
        scope = [path for path in index.paths() if path not in dep_set.level(depth)]
        scores = score_functions(
            scope,
            index,
            query,
            self.provider,
            self.cache,
            batch_size=self.embedding_batch_size,
            max_in_flight=self.embedding_max_in_flight,
        )
        return plan_context(prepared, index, dep_set, scores, self.sampling)

    def render(self, plan: ContextPlan, budget: TokenBudget | None | Literal["default"] = "default") -> RenderedPrompt:
        return render(plan, self.template, self.counter, self.budget if budget == "default" else budget)

    def prompt_for(
        self, task: CompletionTask, strategy: Strategy | None = None
    ) -> tuple[PreparedTask, ContextPlan, RenderedPrompt]:
        prepared, index = self.prepare(task)
        plan = self.plan(prepared, index, strategy)
        return prepared, plan, self.render(plan)
