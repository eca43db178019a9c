import random

import pytest

from app.errors import NodeNotFoundError
from app.services.dependency_graph import (
    ImportRef,
    dependency_closure,
    extract_imports,
    import_graph,
    resolve_import,
    resolve_import_targets,
)
from app.services.repo_model import index_sources, parse_file
from app.services.synthetic import random_import_graph, repo_from_graph

PACKAGE_REPO = {
    "app.py": (
        "import os\n"
        "import pkg.core as core\n"
        "from pkg import util\n"
        "from pkg.models import User, Group\n"
        "from .. import nowhere\n"
    ),
    "pkg/__init__.py": "from .core import run\n",
    "pkg/core.py": (
        "from . import util\n"
        "from .models import User\n"
        "\n"
        "\n"
        "def run():\n"
        "    from pkg.sub import deep\n"
        "    return deep\n"
    ),
    "pkg/util.py": "import json\n",
    "pkg/models.py": (
        "from __future__ import annotations\n"
        "from dataclasses import dataclass\n"
        "\n"
        "\n"
        "class User: ...\n"
        "\n"
        "\n"
        "class Group: ...\n"
    ),
    "pkg/sub/__init__.py": "",
    "pkg/sub/deep.py": "from ..util import helper\n",
    "src/lib/__init__.py": "",
    "src/lib/tools.py": "from lib import helpers\n",
    "src/lib/helpers.py": "import lib.tools\n",
    "broken.py": "def oops(:\n    pass\n",
}


def _summary(refs: list[ImportRef]) -> list[tuple[str, int, tuple[str, ...]]]:
    return [(ref.module_path, ref.relative_level, ref.imported_names) for ref in refs]


def test_extract_absolute_imports() -> None:
    file = parse_file("import os\nfrom pkg.b import C\n", "main.py")

    assert _summary(extract_imports(file)) == [("os", 0, ()), ("pkg.b", 0, ("C",))]


def test_extract_relative_import() -> None:
    file = parse_file("from . import util\n", "pkg/a.py")

    assert _summary(extract_imports(file)) == [("", 1, ("util",))]


def test_extract_includes_function_local_imports() -> None:
    file = parse_file("def f():\n    import json\n    return json\n", "f.py")

    assert _summary(extract_imports(file)) == [("json", 0, ())]


def test_degraded_file_has_no_imports() -> None:
    assert extract_imports(parse_file("import os\ndef oops(:\n", "broken.py")) == []


def test_resolve_import() -> None:
    index = index_sources(
        {
            "pkg/__init__.py": "",
            "pkg/b.py": "class C:\n    pass\n",
            "main.py": "import os\n",
        }
    )

    assert resolve_import(ImportRef("from pkg.b import C", "pkg.b", 0, ("C",)), "main.py", index) == "pkg/b.py"
    assert resolve_import(ImportRef("import os", "os"), "main.py", index) is None
    assert resolve_import(ImportRef("from pkg import b", "pkg", 0, ("b",)), "main.py", index) == "pkg/b.py"
    with pytest.raises(NodeNotFoundError):
        resolve_import(ImportRef("import os", "os"), "ghost.py", index)


def test_import_targets_cover_submodules_and_package() -> None:
    index = index_sources(
        {
            "pkg/__init__.py": "VALUE = 1\n",
            "pkg/b.py": "",
            "pkg/c.py": "",
            "main.py": "",
        }
    )

    submodules = ImportRef("from pkg import b, c", "pkg", 0, ("b", "c"))
    mixed = ImportRef("from pkg import b, VALUE", "pkg", 0, ("b", "VALUE"))

    assert resolve_import_targets(submodules, "main.py", index) == ["pkg/b.py", "pkg/c.py"]
    assert resolve_import_targets(mixed, "main.py", index) == ["pkg/b.py", "pkg/__init__.py"]
    assert resolve_import_targets(ImportRef("import pkg", "pkg"), "main.py", index) == ["pkg/__init__.py"]
    assert resolve_import_targets(ImportRef("import os", "os"), "main.py", index) == []


def test_relative_import_above_top_level_is_recorded() -> None:
    index = index_sources({"a.py": "", "x.py": ""})
    errors: list[str] = []

    resolved = resolve_import(ImportRef("from .. import x", "", 2, ("x",)), "a.py", index, errors)

    assert resolved is None
    assert len(errors) == 1


def test_import_graph_on_mixed_fixture() -> None:
    index = index_sources(PACKAGE_REPO)

    graph = import_graph(index)

    assert graph.edges == {
        "app.py": ("pkg/core.py", "pkg/models.py", "pkg/util.py"),
        "broken.py": (),
        "pkg/__init__.py": ("pkg/core.py",),
        "pkg/core.py": ("pkg/models.py", "pkg/sub/deep.py", "pkg/util.py"),
        "pkg/models.py": (),
        "pkg/sub/__init__.py": (),
        "pkg/sub/deep.py": ("pkg/util.py",),
        "pkg/util.py": (),
        "src/lib/__init__.py": (),
        "src/lib/helpers.py": ("src/lib/tools.py",),
        "src/lib/tools.py": ("src/lib/helpers.py",),
    }
    assert list(graph.errors) == ["app.py"]


def test_file_without_local_imports() -> None:
    index = index_sources({"a.py": "import os\n", "b.py": "", "c.py": ""})

    dep_set = dependency_closure("a.py", 4, index)

    assert all(dep_set.level(depth) == {"a.py"} for depth in range(5))
    assert dep_set.remainder == ("b.py", "c.py")
    assert dep_set.infinity == ("a.py", "b.py", "c.py")


def test_chain_levels() -> None:
    names = "abcdef"
    sources = {f"{name}.py": f"import {following}\n" for name, following in zip(names, names[1:])}
    sources["f.py"] = ""
    index = index_sources(sources)

    dep_set = dependency_closure("a.py", 4, index)

    assert dep_set.level(1) == {"a.py", "b.py"}
    assert dep_set.level(2) == {"a.py", "b.py", "c.py"}
    assert dep_set.level(4) == {"a.py", "b.py", "c.py", "d.py", "e.py"}
    assert dep_set.reachable == ("a.py", "b.py", "c.py", "d.py", "e.py")
    assert dep_set.remainder == ("f.py",)
    with pytest.raises(ValueError):
        dep_set.level(5)


def test_closure_rejects_unknown_focal() -> None:
    index = index_sources({"a.py": ""})

    with pytest.raises(NodeNotFoundError):
        dependency_closure("missing.py", 1, index)


def _expand(edges: dict[int, set[int]], focal: int, depth: int) -> set[int]:
    reached = {focal}
    for _ in range(depth):
        reached = reached | {target for source in reached for target in edges[source]}
    return reached


def test_closure_matches_set_expansion_on_random_repos() -> None:
    for seed in range(200):
        rng = random.Random(seed)
        n_files = rng.randint(2, 30)
        edges = random_import_graph(rng, n_files)
        index = index_sources(repo_from_graph(edges, rng))
        graph = import_graph(index)

        assert graph.edges == {
            f"m{i}.py": tuple(sorted(f"m{j}.py" for j in edges[i])) for i in range(n_files)
        }

        focal = rng.randrange(n_files)
        dep_set = dependency_closure(f"m{focal}.py", 4, index, graph)
        for depth in range(5):
            expected = {f"m{i}.py" for i in _expand(edges, focal, depth)}
            assert dep_set.level(depth) == expected, (seed, depth)
        assert sorted(dep_set.infinity) == sorted(index.files)
