from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock
from typing import TYPE_CHECKING, Any, Protocol

from pydantic import ValidationError

from app.config import Settings
from app.errors import BackendError
from app.schemas import ReplayRecord

if TYPE_CHECKING:
    import httpx

logger = logging.getLogger(__name__)


class CompletionBackend(Protocol):
    name: str

    def generate(self, prompt: str, max_new_tokens: int) -> str:
        ...


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Completion:
    text: str
    raw: str


def first_line(text: str) -> str:
    return text.split("\n", 1)[0].rstrip("\r")


def complete(
    backend: CompletionBackend,
    prompt: str,
    max_new_tokens: int = 32,
    greedy: bool = True,
) -> Completion:
    """Single-line completion: the generation up to its first newline."""
    if not greedy:
        raise ValueError("Only greedy decoding is supported")
    raw = backend.generate(prompt, max_new_tokens)
    return Completion(text=first_line(raw), raw=raw)


@dataclass(frozen=True)
class EchoBackend:
    text: str = ""
    name: str = "echo"

    def generate(self, prompt: str, max_new_tokens: int) -> str:
        return self.text


@dataclass
class ReplayBackend:
    """Completions looked up by the SHA-256 of the prompt."""

    records: dict[str, str] = field(default_factory=dict)
    name: str = "replay"

    @classmethod
    def from_file(cls, path: str | Path) -> ReplayBackend:
        records: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as stream:
            for number, line in enumerate(stream, start=1):
                if not line.strip():
                    continue
                try:
                    record = ReplayRecord.model_validate_json(line)
                except ValidationError as error:
                    raise ValueError(f"{path}:{number}: invalid replay record: {error}") from error
                records[record.prompt_sha256] = record.completion
        return cls(records=records)

    def generate(self, prompt: str, max_new_tokens: int) -> str:
        digest = prompt_sha256(prompt)
        try:
            return self.records[digest]
        except KeyError:
            raise BackendError(f"No recorded completion for prompt {digest[:12]}") from None


@dataclass
class RecordingBackend:
    """Wraps a backend and appends every completion as a replay record."""

    inner: CompletionBackend
    path: str
    _lock: Lock = field(default_factory=Lock, init=False, repr=False)

    def __post_init__(self) -> None:
        Path(self.path).parent.mkdir(parents=True, exist_ok=True)

    @property
    def name(self) -> str:
        return f"recording:{self.inner.name}"

    def generate(self, prompt: str, max_new_tokens: int) -> str:
        completion = self.inner.generate(prompt, max_new_tokens)
        record = ReplayRecord(prompt_sha256=prompt_sha256(prompt), completion=completion)
        with self._lock, Path(self.path).open("a", encoding="utf-8") as stream:
            stream.write(record.model_dump_json() + "\n")
        return completion


@dataclass
class OpenAICompletionBackend:
    api_key: str
    model: str
    base_url: str | None = None
    timeout_seconds: float = 60.0
    max_retries: int = 2
    http_client: httpx.Client | None = None
    name: str = "openai"
    _client: Any = field(init=False, repr=False)

    def __post_init__(self) -> None:
        try:
            from openai import OpenAI
        except ImportError as exc:  # pragma: no cover - import guard
            raise RuntimeError(
                "openai package is not installed. Install with `pip install .[llm]`."
            ) from exc
        self._client = OpenAI(
            api_key=self.api_key,
            base_url=self.base_url,
            timeout=self.timeout_seconds,
            max_retries=self.max_retries,
            http_client=self.http_client,
        )

    def generate(self, prompt: str, max_new_tokens: int) -> str:
        from openai import OpenAIError

        try:
            response = self._client.completions.create(
                model=self.model,
                prompt=prompt,
                max_tokens=max_new_tokens,
                temperature=0,
            )
        except OpenAIError as error:
            logger.warning("Completion request failed: %s", error)
            raise BackendError(f"Completion request failed: {error}") from error
        if not response.choices:
            raise BackendError("Completion response has no choices")
        return response.choices[0].text or ""


def build_backend(settings: Settings) -> CompletionBackend:
    if settings.backend == "echo":
        return EchoBackend(text=settings.echo_text)
    if settings.backend == "openai":
        if not settings.backend_api_key:
            raise ValueError("backend 'openai' needs HCP_BACKEND_API_KEY or OPENAI_API_KEY")
        return OpenAICompletionBackend(
            api_key=settings.backend_api_key,
            model=settings.backend_model,
            base_url=settings.backend_base_url,
            timeout_seconds=settings.backend_timeout_seconds,
        )
    if not settings.replay_path:
        raise ValueError("backend 'replay' needs replay_path")
    return ReplayBackend.from_file(settings.replay_path)
