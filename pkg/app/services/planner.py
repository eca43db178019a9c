"""Hierarchical context pruning: sampling, weighting, scoring and planning."""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Literal

from app.schemas import PlanCurrent, PlanDump, PlanOtherFile
from app.services.dependency_graph import DependencySet
from app.services.relevance import RelevanceScores, function_ref, split_ref
from app.services.repo_model import ClassNode, FileNode, FunctionNode, RenderMode, RepoIndex, render_file
from app.services.tasks import FimTriple, PreparedTask

# Cumulative-mass comparisons tolerate float summation error.
_MASS_EPSILON = 1e-12


class PruningLevel(IntEnum):
    P0 = 0
    P1 = 1
    P2 = 2


HCP_MODE = "hcp"
PruningMode = PruningLevel | Literal["hcp"]


class Tier(str, Enum):
    TOP_K = "top_k"
    TOP_P_ONLY = "top_p_only"
    PRUNED = "pruned"


TIER_WEIGHTS: dict[Tier, float] = {Tier.TOP_K: 1.0, Tier.TOP_P_ONLY: 0.5, Tier.PRUNED: 0.0}


@dataclass(frozen=True)
class FunctionWeight:
    ref: str
    weight: float
    tier: Tier


@dataclass(frozen=True)
class SamplingConfig:
    top_k: int = 5
    top_p: float = 0.3
    dependency_depth: int = 1
    query_radius: int = 10

    def __post_init__(self) -> None:
        if self.top_k < 0:
            raise ValueError("top_k must be non-negative")
        if not 0.0 <= self.top_p <= 1.0:
            raise ValueError("top_p must lie in [0, 1]")
        if self.dependency_depth < 0:
            raise ValueError("dependency_depth must be non-negative")
        if self.query_radius < 0:
            raise ValueError("query_radius must be non-negative")


@dataclass(frozen=True)
class PlannedFile:
    path: str
    text: str
    score: float | None = None


@dataclass(frozen=True)
class ContextPlan:
    current: FimTriple
    dependency_files: tuple[PlannedFile, ...] = ()
    other_files: tuple[PlannedFile, ...] = ()
    config: SamplingConfig | None = None
    repo_name: str = ""
    strategy: str = HCP_MODE

    def cross_file_segments(self) -> list[PlannedFile]:
        """Prompt order: other files first, dependency files next to the cursor file."""
        return [*self.other_files, *self.dependency_files]

    def paths(self) -> list[str]:
        return [planned.path for planned in self.cross_file_segments()]

    def summary(self) -> PlanDump:
        return PlanDump(
            strategy=self.strategy,
            current=PlanCurrent(
                path=self.current.path,
                prefix_len=len(self.current.prefix),
                suffix_len=len(self.current.suffix),
            ),
            dependency=[planned.path for planned in self.dependency_files],
            other=[
                PlanOtherFile(path=planned.path, score=planned.score or 0.0, render_len=len(planned.text))
                for planned in self.other_files
            ],
        )


def _score_map(scores: RelevanceScores | Mapping[str, float]) -> Mapping[str, float]:
    return scores.scores if isinstance(scores, RelevanceScores) else scores


def _ranked(scores: Mapping[str, float]) -> list[str]:
    return sorted(scores, key=lambda ref: (-scores[ref], ref))


def sample_top_k(scores: RelevanceScores | Mapping[str, float], k: int) -> set[str]:
    if k < 0:
        raise ValueError("k must be non-negative")
    return set(_ranked(_score_map(scores))[:k])


def sample_top_p(scores: RelevanceScores | Mapping[str, float], p: float) -> set[str]:
    """Smallest score-ranked prefix holding ``p`` of the clamped score mass."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    score_map = _score_map(scores)
    if p == 0.0:
        return set()
    if p == 1.0:
        return set(score_map)

    ranked = _ranked(score_map)
    total = math.fsum(max(score_map[ref], 0.0) for ref in ranked)
    if total <= 0.0:
        return set()

    selected: set[str] = set()
    mass = 0.0
    for ref in ranked:
        selected.add(ref)
        mass += max(score_map[ref], 0.0)
        if mass + _MASS_EPSILON >= p * total:
            break
    return selected


def assign_weights(all_refs: Iterable[str], f_k: set[str], f_p: set[str]) -> list[FunctionWeight]:
    nucleus = f_p | f_k
    weights: list[FunctionWeight] = []
    for ref in sorted(set(all_refs)):
        if ref in f_k:
            tier = Tier.TOP_K
        elif ref in nucleus:
            tier = Tier.TOP_P_ONLY
        else:
            tier = Tier.PRUNED
        weights.append(FunctionWeight(ref=ref, weight=TIER_WEIGHTS[tier], tier=tier))
    return weights


def weight_map(weights: Iterable[FunctionWeight]) -> dict[str, float]:
    return {item.ref: item.weight for item in weights}


def _weighted(ref: str, weights: Mapping[str, float], scores: Mapping[str, float]) -> float:
    return weights.get(ref, 0.0) * scores.get(ref, 0.0)


def class_score(
    cls: ClassNode,
    weights: Mapping[str, float],
    scores: RelevanceScores | Mapping[str, float],
    path: str,
) -> float:
    score_map = _score_map(scores)
    return math.fsum(
        _weighted(function_ref(path, method.qualified_name), weights, score_map) for method in cls.methods
    )


def file_score(
    file: FileNode,
    weights: Mapping[str, float],
    scores: RelevanceScores | Mapping[str, float],
) -> float:
    score_map = _score_map(scores)
    parts = [
        _weighted(function_ref(file.path, function.qualified_name), weights, score_map)
        for function in file.functions
    ]
    parts.extend(class_score(cls, weights, score_map, file.path) for cls in file.classes)
    return math.fsum(parts)


def _full(_function: FunctionNode) -> RenderMode:
    return "full"


def _header_only(_function: FunctionNode) -> RenderMode:
    return "header_only"


def apply_pruning(
    file: FileNode,
    level: PruningMode,
    weights: Mapping[str, float] | None = None,
) -> str:
    """Render ``file`` at a pruning level, or in the weight-driven HCP mode.

    In HCP mode weight 1.0 keeps a function whole, 0.5 keeps its header and
    anything else drops it.
    """
    if level == HCP_MODE:
        if weights is None:
            raise ValueError("HCP pruning needs function weights")

        def by_weight(function: FunctionNode) -> RenderMode | None:
            weight = weights.get(function_ref(file.path, function.qualified_name), 0.0)
            if weight >= TIER_WEIGHTS[Tier.TOP_K]:
                return "full"
            if weight >= TIER_WEIGHTS[Tier.TOP_P_ONLY]:
                return "header_only"
            return None

        return render_file(
            file,
            keep_globals=False,
            policy=by_weight,
            omit_empty_classes=True,
            empty_when_all_pruned=True,
        )

    level = PruningLevel(level)
    if level is PruningLevel.P0:
        return file.raw_text
    if level is PruningLevel.P1:
        return render_file(file, keep_globals=False, policy=_full)
    return render_file(file, keep_globals=False, policy=_header_only, drop_class_other=True)


def dependency_order(dep_set: DependencySet, paths: Iterable[str]) -> list[str]:
    """Farthest dependencies first, so the closest sit next to the current file."""
    return sorted(paths, key=lambda path: (-dep_set.distances.get(path, math.inf), path))


def plan_context(
    task: PreparedTask,
    index: RepoIndex,
    dep_set: DependencySet,
    scores: RelevanceScores | Mapping[str, float],
    config: SamplingConfig,
) -> ContextPlan:
    current = index.file(task.path)
    if dep_set.focal != current.path:
        raise ValueError(f"Dependency set is for {dep_set.focal}, not {current.path}")

    depth = min(config.dependency_depth, dep_set.max_depth)
    dependencies = dep_set.level(depth) - {current.path}
    dependency_files: list[PlannedFile] = []
    for path in dependency_order(dep_set, dependencies):
        text = apply_pruning(index.file(path), PruningLevel.P1)
        if text:
            dependency_files.append(PlannedFile(path=path, text=text))

    excluded = dependencies | {current.path}
    other_paths = [path for path in index.paths() if path not in excluded]
    other_set = set(other_paths)
    score_map = _score_map(scores)
    candidates = {ref: value for ref, value in score_map.items() if split_ref(ref)[0] in other_set}
    weights = weight_map(
        assign_weights(
            candidates,
            sample_top_k(candidates, config.top_k),
            sample_top_p(candidates, config.top_p),
        )
    )

    other_files: list[PlannedFile] = []
    for path in other_paths:
        file = index.file(path)
        if not (file.functions or file.classes):
            continue
        text = apply_pruning(file, HCP_MODE, weights)
        if not text:
            continue
        score = file_score(file, weights, score_map)
        if not math.isfinite(score):
            raise ValueError(f"Non-finite score for {path}")
        other_files.append(PlannedFile(path=path, text=text, score=score))
    other_files.sort(key=lambda planned: (planned.score or 0.0, planned.path))

    return ContextPlan(
        current=task.fim,
        dependency_files=tuple(dependency_files),
        other_files=tuple(other_files),
        config=config,
        repo_name=index.name,
        strategy=HCP_MODE,
    )


def empty_plan(task: PreparedTask, repo_name: str = "", strategy: str = "infile") -> ContextPlan:
    return ContextPlan(current=task.fim, repo_name=repo_name, strategy=strategy)


def planned_files(paths: Sequence[str], index: RepoIndex, level: PruningLevel) -> list[PlannedFile]:
    planned: list[PlannedFile] = []
    for path in paths:
        text = apply_pruning(index.file(path), level)
        if text:
            planned.append(PlannedFile(path=path, text=text))
    return planned
