"""Completion tasks: cursor validation and the in-file FIM split."""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

from pydantic import ValidationError

from app.errors import CursorRangeError
from app.schemas import CompletionTask
from app.services.repo_model import normalize_path
from app.services.text import split_lines


@dataclass(frozen=True)
class FimTriple:
    path: str
    prefix: str
    suffix: str


@dataclass(frozen=True)
class PreparedTask:
    task_id: str
    repo_root: str
    path: str
    line: int
    column: int
    ground_truth: str
    removed_tail: str
    fim: FimTriple


def check_cursor(text: str, line: int, column: int) -> list[str]:
    """Validate a 1-based line and 0-based character column; return the lines."""
    lines = split_lines(text)
    last_line = max(1, len(lines))
    if not 1 <= line <= last_line:
        raise CursorRangeError(f"Line {line} is outside 1..{last_line}")
    current = lines[line - 1].rstrip("\r\n") if lines else ""
    if not 0 <= column <= len(current):
        raise CursorRangeError(f"Column {column} is outside 0..{len(current)} on line {line}")
    return lines


def make_task(
    repo_root: str | Path,
    file: str,
    line: int,
    column: int,
    ground_truth: str | None = None,
    *,
    text: str | None = None,
    task_id: str | None = None,
) -> PreparedTask:
    """Cut the file at the cursor and drop the rest of the cursor line.

    ``text`` defaults to the file's contents on disk. Without a
    ``ground_truth`` the removed tail of the line is used.
    """
    path = normalize_path(file)
    if text is None:
        text = (Path(repo_root) / path).read_text(encoding="utf-8")
    lines = check_cursor(text, line, column)

    before = "".join(lines[: line - 1])
    current = lines[line - 1] if lines else ""
    body = current.rstrip("\r\n")
    removed_tail = body[column:]
    return PreparedTask(
        task_id=task_id or f"{path}:{line}:{column}",
        repo_root=str(repo_root),
        path=path,
        line=line,
        column=column,
        ground_truth=removed_tail if ground_truth is None else ground_truth,
        removed_tail=removed_tail,
        fim=FimTriple(
            path=path,
            prefix=before + body[:column],
            suffix="".join(lines[line:]),
        ),
    )


def prepare(task: CompletionTask, text: str | None = None) -> PreparedTask:
    return make_task(
        task.repo_root,
        task.target_file,
        task.line,
        task.column,
        task.ground_truth,
        text=text,
        task_id=task.id,
    )


def iter_tasks(path: str | Path) -> Iterator[CompletionTask]:
    with Path(path).open(encoding="utf-8") as stream:
        for number, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                yield CompletionTask.model_validate_json(line)
            except ValidationError as error:
                raise ValueError(f"{path}:{number}: invalid task record: {error}") from error


def load_tasks(path: str | Path) -> list[CompletionTask]:
    return list(iter_tasks(path))
