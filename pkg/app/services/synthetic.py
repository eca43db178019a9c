"""Deterministic synthetic repositories for benchmarks and property tests."""
from __future__ import annotations

import random
from pathlib import Path

from app.services.storage import atomic_write_text

SYLLABLES = (
    "alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "theta",
    "lumen", "vector", "matrix", "buffer", "cursor", "packet", "ledger", "socket",
    "parse", "merge", "split", "index", "token", "frame", "block", "chunk",
)


def chain_repo(n: int, extra: int = 0) -> dict[str, str]:
    """``m0`` imports ``m1`` imports ... ``m{n-1}``, plus unrelated files."""
    if n < 1:
        raise ValueError("n must be at least 1")
    sources: dict[str, str] = {}
    for i in range(n):
        if i + 1 < n:
            sources[f"m{i}.py"] = (
                f"from m{i + 1} import f{i + 1}\n\n\n"
                f"def f{i}(x):\n"
                f"    return f{i + 1}(x) + {i}\n"
            )
        else:
            sources[f"m{i}.py"] = f"def f{i}(x):\n    return x\n"
    for j in range(extra):
        sources[f"extra{j}.py"] = (
            f"LIMIT_{j} = {j}\n\n\n"
            f"def extra_{j}(values):\n"
            f"    return [value * {j} for value in values]\n"
        )
    return sources


def random_import_graph(
    rng: random.Random,
    n_files: int,
    edge_prob: float = 0.15,
    cycles: int = 2,
) -> dict[int, set[int]]:
    """A random forward-edge DAG over ``n_files`` nodes plus ``cycles`` back edges."""
    edges: dict[int, set[int]] = {i: set() for i in range(n_files)}
    for i in range(n_files):
        for j in range(i + 1, n_files):
            if rng.random() < edge_prob:
                edges[i].add(j)
    if n_files > 1:
        for _ in range(cycles):
            low, high = sorted(rng.sample(range(n_files), 2))
            edges[high].add(low)
    return edges


def repo_from_graph(edges: dict[int, set[int]], rng: random.Random) -> dict[str, str]:
    """Render an import graph as modules ``m{i}.py`` using mixed import styles."""
    sources: dict[str, str] = {}
    for i in sorted(edges):
        header: list[str] = []
        local: list[str] = []
        for j in sorted(edges[i]):
            style = rng.randrange(4)
            if style == 0:
                header.append(f"import m{j}")
            elif style == 1:
                header.append(f"from m{j} import f{j}")
            elif style == 2:
                header.append(f"from . import m{j}")
            else:
                local.append(f"    import m{j}")
        parts = ["\n".join(header) + "\n\n\n"] if header else []
        parts.append(f"def f{i}(x):\n")
        parts.extend(line + "\n" for line in local)
        parts.append(f"    return x + {i}\n")
        sources[f"m{i}.py"] = "".join(parts)
    return sources


def random_repo(
    rng: random.Random,
    n_files: int,
    edge_prob: float = 0.15,
    cycles: int = 2,
) -> dict[str, str]:
    return repo_from_graph(random_import_graph(rng, n_files, edge_prob, cycles), rng)


def _identifier(rng: random.Random) -> str:
    return f"{rng.choice(SYLLABLES)}_{rng.choice(SYLLABLES)}"


def bulky_repo(
    n_files: int = 40,
    functions_per_file: int = 12,
    body_lines: int = 10,
    seed: int = 0,
) -> dict[str, str]:
    """A repository whose unpruned concatenation runs to tens of thousands of tokens.

    ``app.py`` is the natural completion target: it imports ``helpers.py``
    and nothing else.
    """
    rng = random.Random(seed)
    sources: dict[str, str] = {
        "helpers.py": "def clamp(value, low, high):\n    return max(low, min(high, value))\n",
        "app.py": (
            "from helpers import clamp\n\n\n"
            "def summarize(alpha_beta, gamma_delta):\n"
            "    total = alpha_beta + gamma_delta\n"
            "    limit = clamp(total, 0, 100)\n"
            "    return limit\n"
        ),
    }
    for i in range(n_files):
        functions: list[str] = []
        for k in range(functions_per_file):
            args = ", ".join(_identifier(rng) for _ in range(2))
            lines = [f"def {_identifier(rng)}_{i}_{k}({args}):\n"]
            for step in range(body_lines):
                lines.append(
                    f"    {_identifier(rng)}_{step} = {_identifier(rng)}({_identifier(rng)}, {rng.randrange(1000)})\n"
                )
            lines.append(f"    return {_identifier(rng)}\n")
            functions.append("".join(lines))
        sources[f"pkg/mod{i}.py"] = "import math\n\n\n" + "\n\n".join(functions)
    sources["pkg/__init__.py"] = ""
    return sources


def write_repo(sources: dict[str, str], root: str | Path) -> list[Path]:
    written: list[Path] = []
    for relative, text in sorted(sources.items()):
        target = Path(root) / relative
        atomic_write_text(target, text)
        written.append(target)
    return written
