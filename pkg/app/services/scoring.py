from __future__ import annotations

import math
from collections.abc import Iterable
from typing import Literal

import Levenshtein
import numpy as np

from app.schemas import Aggregates, EvalReport, HitDiff, TaskRecord


def normalize_completion(text: str) -> str:
    return text.rstrip()


def exact_match(prediction: str, reference: str) -> Literal[0, 1]:
    return 1 if normalize_completion(prediction) == normalize_completion(reference) else 0


def edit_similarity(prediction: str, reference: str) -> float:
    """Character Levenshtein similarity scaled to [0, 100], longer string as base."""
    left = normalize_completion(prediction)
    right = normalize_completion(reference)
    longest = max(len(left), len(right))
    if longest == 0:
        return 100.0
    return 100.0 * (1.0 - Levenshtein.distance(left, right) / longest)


def aggregate(records: Iterable[TaskRecord]) -> Aggregates:
    """EM percentage, mean ES, prompt length and latency over records without errors.

    Throughput is tasks per second of summed backend latency.
    """
    scored: list[TaskRecord] = []
    errors = 0
    for record in records:
        if record.error is not None:
            errors += 1
        else:
            scored.append(record)
    if not scored:
        return Aggregates(count=0, errors=errors, em=0.0, es=0.0)
    lengths = np.asarray([record.prompt_tokens for record in scored], dtype=np.float64)
    latency = math.fsum(record.latency_seconds for record in scored)
    return Aggregates(
        count=len(scored),
        errors=errors,
        em=100.0 * math.fsum(record.em for record in scored) / len(scored),
        es=math.fsum(record.es for record in scored) / len(scored),
        mean_prompt_tokens=float(np.mean(lengths)),
        median_prompt_tokens=float(np.median(lengths)),
        mean_latency_seconds=latency / len(scored),
        tasks_per_second=len(scored) / latency if latency > 0 else 0.0,
    )


def diff_reports(a: EvalReport, b: EvalReport) -> HitDiff:
    """Hit-count change from ``a`` to ``b`` over the ids both scored."""
    before = {record.id: record.em for record in a.records if record.error is None}
    after = {record.id: record.em for record in b.records if record.error is None}
    shared = before.keys() & after.keys()
    gained = sum(1 for task_id in shared if before[task_id] == 0 and after[task_id] == 1)
    lost = sum(1 for task_id in shared if before[task_id] == 1 and after[task_id] == 0)
    return HitDiff(gained=gained, lost=lost, net=gained - lost, compared=len(shared))
