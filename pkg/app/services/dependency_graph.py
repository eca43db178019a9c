"""Import extraction, local resolution and dependency-level closure."""
from __future__ import annotations

import logging
from collections import deque
from collections.abc import Mapping, MutableSequence
from dataclasses import dataclass, field
from pathlib import PurePosixPath

from tree_sitter import Node

from app.errors import NodeNotFoundError
from app.schemas import DependencyDump
from app.services.repo_model import IMPORT_NODE_TYPES, FileNode, RepoIndex, parse_tree

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 4


@dataclass(frozen=True)
class ImportRef:
    raw_text: str
    module_path: str
    relative_level: int = 0
    imported_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class DependencySet:
    focal: str
    levels: Mapping[int, frozenset[str]]
    infinity: tuple[str, ...]
    distances: Mapping[str, int]
    errors: tuple[str, ...] = ()

    @property
    def max_depth(self) -> int:
        return max(self.levels)

    @property
    def reachable(self) -> tuple[str, ...]:
        return self.infinity[: len(self.distances)]

    @property
    def remainder(self) -> tuple[str, ...]:
        return self.infinity[len(self.distances) :]

    def level(self, depth: int) -> frozenset[str]:
        if depth not in self.levels:
            raise ValueError(f"Level {depth} was not computed (max depth {self.max_depth})")
        return self.levels[depth]

    def to_dump(self) -> DependencyDump:
        return DependencyDump(
            focal=self.focal,
            levels={str(depth): sorted(paths) for depth, paths in sorted(self.levels.items())},
            remainder=list(self.remainder),
        )


def _text(node: Node | None) -> str:
    if node is None or node.text is None:
        return ""
    return node.text.decode("utf-8")


def _imported_name(node: Node) -> str:
    if node.type == "aliased_import":
        return _text(node.child_by_field_name("name"))
    return _text(node)


def _iter_import_nodes(root: Node) -> list[Node]:
    found: list[Node] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.type in IMPORT_NODE_TYPES:
            found.append(node)
            continue
        stack.extend(reversed(node.children))
    return found


def _refs_for(node: Node) -> list[ImportRef]:
    raw = _text(node)
    if node.type == "import_statement":
        return [
            ImportRef(raw_text=raw, module_path=_imported_name(name))
            for name in node.children_by_field_name("name")
        ]

    names = tuple(_imported_name(name) for name in node.children_by_field_name("name"))
    if node.type == "future_import_statement":
        return [ImportRef(raw_text=raw, module_path="__future__", imported_names=names)]

    module = node.child_by_field_name("module_name")
    level = 0
    module_path = _text(module)
    if module is not None and module.type == "relative_import":
        prefix = next((child for child in module.children if child.type == "import_prefix"), None)
        level = _text(prefix).count(".")
        dotted = next((child for child in module.children if child.type == "dotted_name"), None)
        module_path = _text(dotted)
    return [
        ImportRef(raw_text=raw, module_path=module_path, relative_level=level, imported_names=names)
    ]


def extract_imports(file: FileNode) -> list[ImportRef]:
    """Every import statement in the file, including function-local ones."""
    if file.degraded or not file.raw_text.strip():
        return []
    refs: list[ImportRef] = []
    for node in _iter_import_nodes(parse_tree(file.source)):
        refs.extend(_refs_for(node))
    return refs


def _anchored_module(
    imp: ImportRef, importer: str, errors: MutableSequence[str] | None
) -> str | None:
    if imp.relative_level == 0:
        return imp.module_path
    package = list(PurePosixPath(importer).with_suffix("").parts[:-1])
    hops = imp.relative_level - 1
    if hops > len(package):
        message = (
            f"{importer}: {imp.raw_text!r} climbs {imp.relative_level} levels "
            f"above a package of depth {len(package)}"
        )
        logger.debug("Unresolvable relative import: %s", message)
        if errors is not None:
            errors.append(message)
        return None
    base = package[: len(package) - hops]
    if imp.module_path:
        base.append(imp.module_path)
    return ".".join(base)


def _candidates(module: str, imp: ImportRef) -> list[str]:
    candidates = [f"{module}.{name}" if module else name for name in imp.imported_names]
    if module:
        candidates.append(module)
    return candidates


def resolve_import(
    imp: ImportRef,
    importer: str,
    index: RepoIndex,
    errors: MutableSequence[str] | None = None,
) -> str | None:
    """Repo path of the module an import loads, or ``None`` when it is external.

    Imported names are tried as submodules before the module itself.
    """
    if importer not in index.files:
        raise NodeNotFoundError(f"{importer} is not indexed")
    module = _anchored_module(imp, importer, errors)
    if module is None:
        return None
    for candidate in _candidates(module, imp):
        path = index.module_table.get(candidate)
        if path is not None:
            return path
    return None


def resolve_import_targets(
    imp: ImportRef,
    importer: str,
    index: RepoIndex,
    errors: MutableSequence[str] | None = None,
) -> list[str]:
    """All local files an import loads: submodule names plus the module itself."""
    module = _anchored_module(imp, importer, errors)
    if module is None:
        return []
    targets: list[str] = []
    needs_module = not imp.imported_names
    for name in imp.imported_names:
        path = index.module_table.get(f"{module}.{name}" if module else name)
        if path is None:
            needs_module = True
        elif path not in targets:
            targets.append(path)
    if needs_module and module:
        path = index.module_table.get(module)
        if path is not None and path not in targets:
            targets.append(path)
    return targets


@dataclass(frozen=True)
class ImportGraphResult:
    edges: Mapping[str, tuple[str, ...]]
    errors: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


def import_graph(index: RepoIndex) -> ImportGraphResult:
    """Direct local import edges for every indexed file, self-loops removed."""
    edges: dict[str, tuple[str, ...]] = {}
    errors: dict[str, tuple[str, ...]] = {}
    for path, file in index.files.items():
        file_errors: list[str] = []
        targets: list[str] = []
        for imp in extract_imports(file):
            for target in resolve_import_targets(imp, path, index, file_errors):
                if target != path and target not in targets:
                    targets.append(target)
        edges[path] = tuple(sorted(targets))
        if file_errors:
            errors[path] = tuple(file_errors)
    return ImportGraphResult(edges=edges, errors=errors)


def dependency_closure(
    focal: str,
    max_depth: int,
    index: RepoIndex,
    graph: ImportGraphResult | None = None,
) -> DependencySet:
    """Breadth-first dependency levels ``0..max_depth`` around ``focal``.

    ``infinity`` lists reachable files by (distance, path) followed by every
    other indexed file in path order.
    """
    if focal not in index.files:
        raise NodeNotFoundError(f"{focal} is not indexed")
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    graph = graph if graph is not None else import_graph(index)

    distances: dict[str, int] = {focal: 0}
    queue: deque[tuple[str, int]] = deque([(focal, 0)])
    while queue:
        current, depth = queue.popleft()
        if depth >= max_depth:
            continue
        for target in graph.edges.get(current, ()):
            if target not in distances:
                distances[target] = depth + 1
                queue.append((target, depth + 1))

    levels = {
        depth: frozenset(path for path, distance in distances.items() if distance <= depth)
        for depth in range(max_depth + 1)
    }
    reachable = sorted(distances, key=lambda path: (distances[path], path))
    remainder = sorted(path for path in index.files if path not in distances)
    errors: list[str] = []
    for path in reachable:
        errors.extend(graph.errors.get(path, ()))
    return DependencySet(
        focal=focal,
        levels=levels,
        infinity=(*reachable, *remainder),
        distances=distances,
        errors=tuple(errors),
    )
