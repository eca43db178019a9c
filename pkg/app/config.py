import json
import os
from collections.abc import Mapping
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

TemplateFamily = Literal["deepseekcoder", "starcoder2", "codegemma"]

DEFAULT_MODEL_MAX_LENGTH: dict[str, int] = {
    "deepseekcoder": 16352,
    "starcoder2": 16352,
    "codegemma": 8160,
}

# Environment variables that win over a config file for secrets.
_SECRET_ENV: dict[str, tuple[str, ...]] = {
    "embedding_api_key": ("HCP_EMBEDDING_API_KEY", "OPENAI_API_KEY"),
    "backend_api_key": ("HCP_BACKEND_API_KEY", "OPENAI_API_KEY"),
}


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="HCP_", env_file=".env", extra="ignore"
    )

    app_version: str = "0.1.0"
    log_level: str = "WARNING"

    repo_root: str | None = None
    include_globs: list[str] = Field(default_factory=lambda: ["**/*.py", "**/*.pyi"])
    exclude_globs: list[str] = Field(
        default_factory=lambda: [
            "**/.git/*",
            "**/__pycache__/*",
            "**/.venv/*",
            "**/venv/*",
            "**/node_modules/*",
            "**/site-packages/*",
        ]
    )

    template_family: TemplateFamily = "deepseekcoder"
    model_max_length: int | None = Field(default=None, gt=0)
    reserve_for_generation: int = Field(default=32, ge=0)
    max_new_tokens: int = Field(default=32, ge=1)
    tokenizer: str = "regex"

    strategy: str = "hcp"
    top_k: int = Field(default=5, ge=0)
    top_p: float = Field(default=0.3, ge=0.0, le=1.0)
    d_level: int = Field(default=1, ge=0)
    p_level: int = Field(default=2, ge=0, le=2)
    query_radius: int = Field(default=10, ge=0)
    chunk_size: int = Field(default=10, ge=1)
    top_n: int = Field(default=5, ge=0)
    seed: int = 0

    embedding_provider: Literal["offline", "openai"] = "offline"
    embedding_base_url: str | None = None
    embedding_model: str = "text-embedding-ada-002"
    embedding_api_key: str | None = None
    embedding_dimension: int = Field(default=1536, gt=0)
    embedding_batch_size: int = Field(default=64, ge=1)
    embedding_max_in_flight: int = Field(default=4, ge=1)
    embedding_timeout_seconds: float = 20.0
    cache_dir: str = ".hcp_cache"

    backend: Literal["replay", "echo", "openai"] = "replay"
    backend_base_url: str | None = None
    backend_model: str = "deepseek-coder-1.3b-base"
    backend_api_key: str | None = None
    backend_timeout_seconds: float = 60.0
    replay_path: str | None = None
    echo_text: str = ""
    eval_workers: int = Field(default=4, ge=1)

    def resolved_model_max_length(self) -> int:
        if self.model_max_length is not None:
            return self.model_max_length
        return DEFAULT_MODEL_MAX_LENGTH[self.template_family]

    def embedding_cache_path(self) -> Path:
        return Path(self.cache_dir) / "embeddings.jsonl"


@lru_cache
def get_settings() -> Settings:
    return Settings()


def load_settings(
    config_path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Settings:
    data: dict[str, Any] = {}
    if config_path is not None:
        loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise ValueError(f"Config file {config_path} must hold a JSON object.")
        data.update(loaded)
    if overrides:
        data.update({key: value for key, value in overrides.items() if value is not None})

    settings = Settings(**data)
    secrets: dict[str, str] = {}
    for field_name, env_names in _SECRET_ENV.items():
        value = next((os.environ[name] for name in env_names if os.environ.get(name)), None)
        if value:
            secrets[field_name] = value
    if secrets:
        settings = settings.model_copy(update=secrets)
    return settings


def save_settings(settings: Settings, path: str | Path) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(settings.model_dump_json(indent=2) + "\n", encoding="utf-8")
