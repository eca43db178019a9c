"""FIM prompt rendering under a token budget with left truncation."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Protocol

from app.errors import BudgetExceededError
from app.prompt_templates import load_prompt_templates
from app.services.planner import ContextPlan
from app.services.text import prompt_tokens, split_lines


class TokenCounter(Protocol):
    name: str

    def count(self, text: str) -> int:
        ...


@dataclass(frozen=True)
class RegexTokenCounter:
    """Identifiers, numbers, ``...`` and single symbols; whitespace is free."""

    name: str = "regex"

    def count(self, text: str) -> int:
        return len(prompt_tokens(text))


@dataclass
class TiktokenCounter:
    encoding_name: str = "cl100k_base"
    name: str = field(init=False)
    _encoding: Any = field(init=False, repr=False)

    def __post_init__(self) -> None:
        try:
            import tiktoken
        except ImportError as exc:  # pragma: no cover - import guard
            raise RuntimeError(
                "tiktoken package is not installed. Install with `pip install .[tokenizers]`."
            ) from exc

        self.name = f"tiktoken:{self.encoding_name}"
        self._encoding = tiktoken.get_encoding(self.encoding_name)

    def count(self, text: str) -> int:
        return len(self._encoding.encode(text, disallowed_special=()))


_DEFAULT_COUNTER = RegexTokenCounter()


def count_tokens(text: str, counter: TokenCounter | None = None) -> int:
    return (counter or _DEFAULT_COUNTER).count(text)


def make_counter(name: str) -> TokenCounter:
    """``regex`` or ``tiktoken[:encoding]``."""
    if name == "regex":
        return RegexTokenCounter()
    if name == "tiktoken" or name.startswith("tiktoken:"):
        _, _, encoding = name.partition(":")
        return TiktokenCounter(encoding or "cl100k_base")
    raise ValueError(f"Unknown tokenizer {name!r}; use 'regex' or 'tiktoken[:encoding]'")


@dataclass(frozen=True)
class PromptTemplate:
    family: str
    file_sep: str
    fim_prefix: str
    fim_suffix: str
    fim_middle: str
    repo_token: str | None = None
    segment_trailer: str = ""

    def repo_header(self, repo_name: str) -> str:
        return f"{self.repo_token}{repo_name}" if self.repo_token else ""

    def format_segment(self, path: str, text: str) -> str:
        return f"{self.file_sep}{path}\n{text}{self.segment_trailer}"

    def fim(self, prefix: str, suffix: str) -> str:
        return f"{self.fim_prefix}{prefix}{self.fim_suffix}{suffix}{self.fim_middle}"


@lru_cache
def get_template(family: str) -> PromptTemplate:
    templates = load_prompt_templates()
    if family not in templates:
        raise ValueError(f"Unknown template family {family!r}; choose from {sorted(templates)}")
    return PromptTemplate(**templates[family])


@dataclass(frozen=True)
class TokenBudget:
    model_max_length: int
    reserve_for_generation: int = 32

    def __post_init__(self) -> None:
        if self.model_max_length <= 0:
            raise ValueError("model_max_length must be positive")
        if self.reserve_for_generation < 0:
            raise ValueError("reserve_for_generation must be non-negative")

    @property
    def limit(self) -> int:
        return self.model_max_length


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    counted_tokens: int
    truncated: bool = False
    segments_dropped: int = 0
    fim_tokens: int = 0


@dataclass(frozen=True)
class Truncation:
    kept: list[str]
    partial_head: bool = False


def _drop_leading_lines(text: str, allowance: int, counter: TokenCounter) -> str:
    """Longest line-suffix of ``text`` that fits ``allowance`` tokens."""
    lines = split_lines(text)
    low, high = 0, len(lines)
    while low < high:
        middle = (low + high) // 2
        if counter.count("".join(lines[middle:])) <= allowance:
            high = middle
        else:
            low = middle + 1
    return "".join(lines[low:])


def truncate_left(
    ordered_segments: Sequence[str],
    fim_triple_cost: int,
    budget: int,
    counter: TokenCounter,
) -> Truncation:
    """Keep the longest tail of segments that fits beside the FIM triple.

    The segment just before that tail keeps as many of its trailing lines as
    still fit, even when its path line is lost: the kept text is always a
    suffix of the joined segments.
    """
    available = budget - fim_triple_cost
    if available <= 0:
        return Truncation(kept=[])

    used = 0
    start = len(ordered_segments)
    while start > 0:
        cost = counter.count(ordered_segments[start - 1])
        if used + cost > available:
            break
        used += cost
        start -= 1

    kept = list(ordered_segments[start:])
    if start == 0:
        return Truncation(kept=kept)
    head = _drop_leading_lines(ordered_segments[start - 1], available - used, counter)
    if not head.strip():
        return Truncation(kept=kept)
    return Truncation(kept=[head, *kept], partial_head=True)


def render(
    plan: ContextPlan,
    template: PromptTemplate,
    counter: TokenCounter | None = None,
    budget: TokenBudget | None = None,
) -> RenderedPrompt:
    """Cross-file segments in plan order, then the FIM triple of the current file.

    Without a ``budget`` nothing is truncated.
    """
    counter = counter or _DEFAULT_COUNTER
    fim_text = template.fim(plan.current.prefix, plan.current.suffix)
    fim_cost = counter.count(fim_text)
    segments = [template.format_segment(item.path, item.text) for item in plan.cross_file_segments()]
    header = template.repo_header(plan.repo_name)

    if budget is None:
        text = (header if segments else "") + "".join(segments) + fim_text
        return RenderedPrompt(text=text, counted_tokens=counter.count(text), fim_tokens=fim_cost)

    limit = budget.limit
    if fim_cost > limit:
        raise BudgetExceededError(fim_cost, limit)

    header_cost = counter.count(header) if header and segments else 0
    truncation = truncate_left(segments, fim_cost + header_cost, limit, counter)
    kept = truncation.kept
    partial = truncation.partial_head

    def assemble(parts: list[str]) -> str:
        return (header if parts else "") + "".join(parts) + fim_text

    text = assemble(kept)
    total = counter.count(text)
    while total > limit and kept:
        # Non-additive counters can overshoot after joining; trim a line at a time.
        lines = split_lines(kept[0])
        remainder = "".join(lines[1:])
        kept = [remainder, *kept[1:]] if remainder.strip() else kept[1:]
        partial = bool(kept) and remainder.strip() != ""
        text = assemble(kept)
        total = counter.count(text)

    dropped = len(segments) - len(kept)
    return RenderedPrompt(
        text=text,
        counted_tokens=total,
        truncated=dropped > 0 or partial,
        segments_dropped=dropped,
        fim_tokens=fim_cost,
    )
