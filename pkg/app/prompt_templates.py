from __future__ import annotations

import json
from pathlib import Path
from typing import Any

TEMPLATE_FILES = {
    "deepseekcoder": "deepseekcoder.json",
    "starcoder2": "starcoder2.json",
    "codegemma": "codegemma.json",
}


def load_prompt_templates() -> dict[str, dict[str, Any]]:
    base_dir = Path(__file__).resolve().parent / "prompts"
    templates: dict[str, dict[str, Any]] = {}
    for family, filename in TEMPLATE_FILES.items():
        path = base_dir / filename
        templates[family] = json.loads(path.read_text(encoding="utf-8"))
    return templates
