import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from app.config import Settings, get_settings, load_settings, save_settings
from app.services.strategies import Strategy, parse_strategy


def test_defaults() -> None:
    settings = Settings()

    assert (settings.top_k, settings.top_p, settings.d_level) == (5, 0.3, 1)
    assert settings.resolved_model_max_length() == 16352
    assert Settings(template_family="codegemma").resolved_model_max_length() == 8160
    assert Settings(model_max_length=512).resolved_model_max_length() == 512


def test_flags_beat_file_beat_environment(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("HCP_TOP_K", "7")
    monkeypatch.setenv("HCP_SEED", "3")
    config = tmp_path / "hcp.json"
    config.write_text(json.dumps({"top_k": 9, "strategy": "infile"}), encoding="utf-8")

    settings = load_settings(config, {"strategy": "d-level:2", "top_p": None})

    assert settings.seed == 3
    assert settings.top_k == 9
    assert settings.strategy == "d-level:2"
    assert settings.top_p == 0.3


def test_api_key_environment_wins_over_file(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("HCP_EMBEDDING_API_KEY", raising=False)
    monkeypatch.delenv("HCP_BACKEND_API_KEY", raising=False)
    monkeypatch.setenv("OPENAI_API_KEY", "from-env")
    config = tmp_path / "hcp.json"
    config.write_text(json.dumps({"backend_api_key": "from-file"}), encoding="utf-8")

    settings = load_settings(config)

    assert settings.backend_api_key == "from-env"
    assert settings.embedding_api_key == "from-env"


def test_saved_settings_load_back(tmp_path: Path) -> None:
    settings = load_settings(overrides={"template_family": "starcoder2", "top_k": 2})
    path = tmp_path / "nested" / "hcp.json"

    save_settings(settings, path)

    assert load_settings(path) == settings


def test_invalid_values_are_rejected(tmp_path: Path) -> None:
    config = tmp_path / "hcp.json"
    config.write_text("[1, 2]", encoding="utf-8")

    with pytest.raises(ValueError):
        load_settings(config)
    with pytest.raises(ValidationError):
        load_settings(overrides={"top_p": 1.5})


def test_get_settings_is_cached() -> None:
    get_settings.cache_clear()

    assert get_settings() is get_settings()


def test_bare_level_strategies_take_their_level_from_settings(tmp_path: Path) -> None:
    config = tmp_path / "hcp.json"
    config.write_text(json.dumps({"strategy": "p-level", "p_level": 1, "d_level": 2}), encoding="utf-8")

    settings = load_settings(config)
    strategy = parse_strategy(settings.strategy, settings.p_level, settings.d_level)

    assert strategy == Strategy(kind="p-level", level=1)
    assert strategy.descriptor == "p-level:1"
    assert parse_strategy("d-level", settings.p_level, settings.d_level) == Strategy(kind="d-level", level=2)
    assert parse_strategy("p-level:0+d:1", settings.p_level) == Strategy(kind="p-level", level=0, dep_depth=1)
