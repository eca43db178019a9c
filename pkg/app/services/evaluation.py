"""Evaluation runs: plan, render, complete and score every task."""
from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path

import numpy as np

from app.schemas import (
    CompletionTask,
    EvalReport,
    LevelLengthStats,
    PromptLengthReport,
    ReportMeta,
    TaskRecord,
)
from app.services.backends import CompletionBackend, complete
from app.services.scoring import aggregate, edit_similarity, exact_match
from app.services.storage import atomic_write_text
from app.services.strategies import PromptPipeline, Strategy

logger = logging.getLogger(__name__)

STATS_LEVELS: tuple[int | None, ...] = (0, 1, 2, 3, 4, None)

# Domain errors all derive from these builtins.
TASK_ERRORS = (RuntimeError, ValueError, LookupError, OSError)


def evaluate_task(
    task: CompletionTask,
    strategy: Strategy,
    backend: CompletionBackend,
    pipeline: PromptPipeline,
    max_new_tokens: int = 32,
) -> TaskRecord:
    started = time.perf_counter()
    try:
        _prepared, _plan, rendered = pipeline.prompt_for(task, strategy)
        completion = complete(backend, rendered.text, max_new_tokens=max_new_tokens)
    except TASK_ERRORS as error:
        logger.warning("Task %s failed: %s", task.id, error)
        return TaskRecord(
            id=task.id,
            latency_seconds=time.perf_counter() - started,
            error=f"{type(error).__name__}: {error}",
        )
    return TaskRecord(
        id=task.id,
        prediction=completion.text,
        raw_completion=completion.raw,
        em=exact_match(completion.text, task.ground_truth),
        es=edit_similarity(completion.text, task.ground_truth),
        prompt_tokens=rendered.counted_tokens,
        truncated=rendered.truncated,
        segments_dropped=rendered.segments_dropped,
        latency_seconds=time.perf_counter() - started,
    )


def run_eval(
    tasks: Sequence[CompletionTask],
    strategy: Strategy,
    backend: CompletionBackend,
    pipeline: PromptPipeline,
    *,
    max_new_tokens: int = 32,
    workers: int = 4,
    app_version: str = "0.1.0",
    clock: Callable[[], datetime] = lambda: datetime.now(UTC),
) -> EvalReport:
    """Evaluate tasks on a bounded worker pool; records come back sorted by id."""
    if workers < 1:
        raise ValueError("workers must be at least 1")

    def run(task: CompletionTask) -> TaskRecord:
        return evaluate_task(task, strategy, backend, pipeline, max_new_tokens)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = sorted(pool.map(run, tasks), key=lambda record: record.id)

    aggregates = aggregate(records)
    logger.info(
        "Evaluated %d tasks with %s: EM %.2f ES %.2f (%d errors)",
        len(records),
        strategy,
        aggregates.em,
        aggregates.es,
        aggregates.errors,
    )
    return EvalReport(
        meta=ReportMeta(
            strategy=str(strategy),
            template_family=pipeline.template.family,
            model_max_length=pipeline.budget.model_max_length,
            backend=backend.name,
            app_version=app_version,
            created_at=clock().isoformat(),
        ),
        aggregates=aggregates,
        records=records,
    )


def write_report(report: EvalReport, path: str | Path) -> None:
    atomic_write_text(path, report.model_dump_json(indent=2) + "\n")


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def prompt_length_stats(
    tasks: Sequence[CompletionTask],
    pipeline: PromptPipeline,
    levels: Sequence[int | None] = STATS_LEVELS,
) -> PromptLengthReport:
    """Median and mean untruncated prompt length per dependency level."""
    lengths: dict[int | None, list[int]] = {level: [] for level in levels}
    counted = 0
    for task in tasks:
        try:
            prepared, index = pipeline.prepare(task)
        except TASK_ERRORS as error:
            logger.warning("Skipping task %s: %s", task.id, error)
            continue
        counted += 1
        for level in levels:
            strategy = Strategy(kind="d-level", level=level)
            plan = pipeline.plan(prepared, index, strategy)
            lengths[level].append(pipeline.render(plan, budget=None).counted_tokens)

    rows: list[LevelLengthStats] = []
    if counted:
        for level in levels:
            values = np.asarray(lengths[level], dtype=np.float64)
            rows.append(
                LevelLengthStats(
                    level="inf" if level is None else str(level),
                    count=int(values.size),
                    median=float(np.median(values)),
                    mean=float(np.mean(values)),
                )
            )
    return PromptLengthReport(template_family=pipeline.template.family, tasks=counted, levels=rows)
