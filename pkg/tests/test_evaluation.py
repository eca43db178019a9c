from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path

import pytest

from app.schemas import CompletionTask
from app.services.backends import EchoBackend, ReplayBackend, complete, prompt_sha256
from app.services.evaluation import evaluate_task, load_report, prompt_length_stats, run_eval, write_report
from app.services.prompting import TokenBudget, get_template
from app.services.repo_model import index_sources
from app.services.strategies import PromptPipeline, Strategy
from app.services.synthetic import bulky_repo, chain_repo

HCP = Strategy(kind="hcp")
FIXED_TIME = datetime(2026, 1, 1, tzinfo=UTC)


def _pipeline(sources: dict[str, str], root: Path) -> PromptPipeline:
    pipeline = PromptPipeline(template=get_template("deepseekcoder"), budget=TokenBudget(16352))
    pipeline.add_index(index_sources(sources, root=root))
    return pipeline


def _line_tasks(sources: dict[str, str], root: Path, limit: int) -> list[CompletionTask]:
    """One task per non-blank line: the cursor sits after the indentation."""
    tasks: list[CompletionTask] = []
    for path in sorted(sources):
        for number, line in enumerate(sources[path].split("\n"), start=1):
            content = line.strip()
            if not content:
                continue
            tasks.append(
                CompletionTask(
                    id=f"t{len(tasks):02d}",
                    repo_root=str(root),
                    target_file=path,
                    line=number,
                    column=len(line) - len(line.lstrip()),
                    ground_truth=content,
                )
            )
    return tasks[:limit]


def test_replay_evaluation_is_deterministic(tmp_path: Path) -> None:
    sources = chain_repo(6, extra=4)
    pipeline = _pipeline(sources, tmp_path)
    tasks = _line_tasks(sources, tmp_path, 25)
    recorded: dict[str, str] = {}
    for position, task in enumerate(tasks):
        _prepared, _plan, rendered = pipeline.prompt_for(task, HCP)
        answer = f"{task.ground_truth}\n..." if position % 2 == 0 else "wrong"
        recorded[prompt_sha256(rendered.text)] = answer
    backend = ReplayBackend(records=recorded)

    first = run_eval(tasks, HCP, backend, pipeline, workers=4, clock=lambda: FIXED_TIME)
    second = run_eval(tasks, HCP, backend, pipeline, workers=1, clock=lambda: FIXED_TIME)

    assert len(tasks) == 25
    assert first.aggregates.count == 25
    assert first.aggregates.errors == 0
    assert first.aggregates.em == pytest.approx(52.0)
    assert [record.id for record in first.records] == sorted(task.id for task in tasks)
    assert first.meta.strategy == "hcp"
    assert first.meta.backend == "replay"
    assert first.meta.created_at == FIXED_TIME.isoformat()
    without_latency = {
        "records": {"__all__": {"latency_seconds"}},
        "aggregates": {"mean_latency_seconds", "tasks_per_second"},
    }
    assert first.model_dump_json(exclude=without_latency) == second.model_dump_json(exclude=without_latency)


def test_random_all_prompts_are_longer_than_hcp_prompts(tmp_path: Path) -> None:
    sources = bulky_repo(n_files=10, functions_per_file=6)
    pipeline = _pipeline(sources, tmp_path)
    tasks = _line_tasks(sources, tmp_path, 4)
    backend = EchoBackend(text="x")

    hcp = run_eval(tasks, HCP, backend, pipeline, workers=1, clock=lambda: FIXED_TIME)
    everything = run_eval(tasks, Strategy(kind="random-all"), backend, pipeline, workers=1, clock=lambda: FIXED_TIME)

    assert {task.target_file for task in tasks} == {"app.py"}
    assert hcp.aggregates.count == everything.aggregates.count == 4
    assert everything.aggregates.mean_prompt_tokens > hcp.aggregates.mean_prompt_tokens > 0
    assert everything.aggregates.median_prompt_tokens > hcp.aggregates.median_prompt_tokens
    assert not any(record.truncated for record in everything.records)
    assert hcp.aggregates.mean_latency_seconds >= 0.0


def test_replay_miss_becomes_error_record(tmp_path: Path) -> None:
    sources = chain_repo(3)
    pipeline = _pipeline(sources, tmp_path)
    task = _line_tasks(sources, tmp_path, 1)[0]

    record = evaluate_task(task, HCP, ReplayBackend(), pipeline)

    assert record.error is not None
    assert record.error.startswith("BackendError")
    assert record.em == 0


def test_unknown_target_file_becomes_error_record(tmp_path: Path) -> None:
    pipeline = _pipeline(chain_repo(2), tmp_path)
    task = CompletionTask(
        id="ghost", repo_root=str(tmp_path), target_file="ghost.py", line=1, column=0, ground_truth="x"
    )

    report = run_eval([task], HCP, EchoBackend(text="x"), pipeline, workers=1)

    assert report.aggregates.errors == 1
    assert report.aggregates.count == 0


def test_report_round_trips_through_disk(tmp_path: Path) -> None:
    sources = chain_repo(3)
    pipeline = _pipeline(sources, tmp_path / "repo")
    tasks = _line_tasks(sources, tmp_path / "repo", 4)
    report = run_eval(tasks, Strategy(kind="infile"), EchoBackend(text="return x"), pipeline)
    path = tmp_path / "out" / "report.json"

    write_report(report, path)

    assert load_report(path) == report


def test_echo_backend_completion_is_first_line() -> None:
    completion = complete(EchoBackend(text="return x\nprint(x)\n"), "prompt")

    assert completion.text == "return x"
    assert completion.raw == "return x\nprint(x)\n"
    with pytest.raises(ValueError):
        complete(EchoBackend(), "prompt", greedy=False)


def test_prompt_lengths_grow_with_dependency_level(tmp_path: Path) -> None:
    sources = chain_repo(6, extra=2)
    pipeline = _pipeline(sources, tmp_path)
    tasks = [
        CompletionTask(
            id=f"m{i}", repo_root=str(tmp_path), target_file=f"m{i}.py", line=5, column=4, ground_truth="return"
        )
        for i in range(3)
    ]

    stats = prompt_length_stats(tasks, pipeline)

    assert stats.tasks == 3
    assert [row.level for row in stats.levels] == ["0", "1", "2", "3", "4", "inf"]
    medians = [row.median for row in stats.levels]
    assert medians == sorted(medians)
    assert medians[-1] > medians[-2]
    assert all(row.count == 3 for row in stats.levels)


def test_prompt_lengths_single_file_repo(tmp_path: Path) -> None:
    pipeline = _pipeline({"only.py": "def f(x):\n    return x\n"}, tmp_path)
    task = CompletionTask(
        id="only", repo_root=str(tmp_path), target_file="only.py", line=2, column=4, ground_truth="return x"
    )

    stats = prompt_length_stats([task], pipeline)

    assert len({row.median for row in stats.levels}) == 1


def test_prompt_lengths_without_tasks(tmp_path: Path) -> None:
    stats = prompt_length_stats([], _pipeline(chain_repo(2), tmp_path))

    assert stats.tasks == 0
    assert stats.levels == []
