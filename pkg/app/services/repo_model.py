"""Function-granular model of a Python repository, parsed with tree-sitter.

Every file becomes a ``FileNode`` holding its imports, global statements,
top-level functions and classes (with their methods). Spans are byte ranges
into the UTF-8 source; each definition span runs from its first decorator to
the end of its last line, including that line's newline.
"""
from __future__ import annotations

import fnmatch
import logging
import os
import re
import threading
from bisect import bisect_right
from collections import Counter
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path, PurePosixPath
from typing import Literal

import tree_sitter_python
from tree_sitter import Language, Node, Parser

from app.errors import NodeNotFoundError, SourceEncodingError, UnsupportedFileError
from app.schemas import IndexClassRecord, IndexFunctionRecord, IndexRecord, IndexSummary

logger = logging.getLogger(__name__)

SOURCE_EXTENSIONS = frozenset({".py", ".pyi"})
PLACEHOLDER = b"..."
DEFAULT_INCLUDE_GLOBS = ("**/*.py", "**/*.pyi")
DEFAULT_EXCLUDE_GLOBS = (
    "**/.git/*",
    "**/__pycache__/*",
    "**/.venv/*",
    "**/venv/*",
    "**/node_modules/*",
    "**/site-packages/*",
)
IMPORT_NODE_TYPES = frozenset(
    {"import_statement", "import_from_statement", "future_import_statement"}
)

RenderMode = Literal["full", "header_only"]
# None drops the function entirely.
FunctionPolicy = Callable[["FunctionNode"], RenderMode | None]

_WHITESPACE = b" \t\r\n\f\v"
_SEPARATOR = re.compile(rb"[ \t]*;?[ \t]*")
_PY_LANGUAGE = Language(tree_sitter_python.language())
_thread_state = threading.local()


def _parser() -> Parser:
    parser = getattr(_thread_state, "parser", None)
    if parser is None:
        parser = Parser(_PY_LANGUAGE)
        _thread_state.parser = parser
    return parser


def parse_tree(source: bytes) -> Node:
    """Parse UTF-8 source and return the tree-sitter root node."""
    return _parser().parse(source).root_node


@dataclass(frozen=True, order=True)
class SourceSpan:
    byte_start: int
    byte_end: int
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    @property
    def is_empty(self) -> bool:
        return self.byte_start == self.byte_end

    def as_range(self) -> list[int]:
        return [self.start_line, self.start_col, self.end_line, self.end_col]


@dataclass(frozen=True)
class FunctionNode:
    name: str
    qualified_name: str
    span: SourceSpan
    header_span: SourceSpan
    body_span: SourceSpan
    decorators: tuple[str, ...] = ()
    is_method: bool = False


@dataclass(frozen=True)
class ClassNode:
    name: str
    qualified_name: str
    span: SourceSpan
    header_span: SourceSpan
    attribute_spans: tuple[SourceSpan, ...] = ()
    methods: tuple[FunctionNode, ...] = ()
    other_spans: tuple[SourceSpan, ...] = ()
    decorators: tuple[str, ...] = ()
    body_indent: str = "    "


@dataclass(frozen=True)
class FileNode:
    path: str
    raw_text: str
    functions: tuple[FunctionNode, ...] = ()
    classes: tuple[ClassNode, ...] = ()
    import_spans: tuple[SourceSpan, ...] = ()
    global_spans: tuple[SourceSpan, ...] = ()
    degraded: bool = False

    @cached_property
    def source(self) -> bytes:
        return self.raw_text.encode("utf-8")

    def text_of(self, span: SourceSpan) -> str:
        return self.source[span.byte_start : span.byte_end].decode("utf-8")

    def iter_functions(self) -> Iterator[FunctionNode]:
        """Top-level functions followed by class methods, in source order."""
        yield from self.functions
        for cls in self.classes:
            yield from cls.methods

    def find(self, qualified_name: str) -> FunctionNode | ClassNode:
        for cls in self.classes:
            if cls.qualified_name == qualified_name:
                return cls
        for function in self.iter_functions():
            if function.qualified_name == qualified_name:
                return function
        raise NodeNotFoundError(f"{self.path} has no node named {qualified_name!r}")

    def top_level_spans(self) -> list[SourceSpan]:
        spans = [*self.import_spans, *self.global_spans]
        spans.extend(function.span for function in self.functions)
        spans.extend(cls.span for cls in self.classes)
        return sorted(spans)


@dataclass(frozen=True, eq=False)
class RepoIndex:
    root: Path
    files: Mapping[str, FileNode]
    module_table: Mapping[str, str]
    failures: Mapping[str, str] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.root.name

    def file(self, path: str) -> FileNode:
        try:
            return self.files[normalize_path(path)]
        except KeyError:
            raise NodeNotFoundError(f"{path} is not indexed under {self.root}") from None

    def paths(self) -> list[str]:
        return sorted(self.files)


def normalize_path(path: str | PurePosixPath) -> str:
    normalized = PurePosixPath(str(path).replace("\\", "/")).as_posix()
    return normalized[2:] if normalized.startswith("./") else normalized


class _LineIndex:
    def __init__(self, source: bytes) -> None:
        self._starts = [0] + [match.end() for match in re.finditer(rb"\n", source)]

    def span(self, start: int, end: int) -> SourceSpan:
        start_row = bisect_right(self._starts, start) - 1
        end_row = bisect_right(self._starts, end) - 1
        return SourceSpan(
            byte_start=start,
            byte_end=end,
            start_line=start_row + 1,
            start_col=start - self._starts[start_row],
            end_line=end_row + 1,
            end_col=end - self._starts[end_row],
        )


def _trim_end(source: bytes, start: int, end: int) -> int:
    while end > start and source[end - 1] in _WHITESPACE:
        end -= 1
    return end


def _with_newline(source: bytes, end: int) -> int:
    if source.startswith(b"\r\n", end):
        return end + 2
    if source.startswith(b"\n", end):
        return end + 1
    return end


def _skip_whitespace(source: bytes, start: int, limit: int) -> int:
    while start < limit and source[start] in _WHITESPACE:
        start += 1
    return start


def _line_indent(source: bytes, offset: int) -> str:
    line_start = source.rfind(b"\n", 0, offset) + 1
    prefix = source[line_start:offset]
    return prefix.decode("utf-8") if not prefix.strip() else ""


def _node_text(node: Node | None) -> str:
    if node is None or node.text is None:
        return ""
    return node.text.decode("utf-8")


def _is_docstring(node: Node) -> bool:
    if node.type != "expression_statement" or node.named_child_count != 1:
        return False
    return node.named_children[0].type in {"string", "concatenated_string"}


def _is_attribute(node: Node) -> bool:
    if node.type != "expression_statement" or node.named_child_count == 0:
        return False
    return node.named_children[0].type in {"assignment", "augmented_assignment"}


def _unwrap_definition(node: Node) -> tuple[Node, list[str]]:
    if node.type != "decorated_definition":
        return node, []
    decorators = [_node_text(child) for child in node.children if child.type == "decorator"]
    definition = node.child_by_field_name("definition")
    return (definition if definition is not None else node), decorators


def _header_end(definition: Node, body: Node | None) -> int:
    """Byte offset just past the block colon, or past the docstring."""
    if body is None:
        return definition.end_byte
    end = body.start_byte
    for child in definition.children:
        if child.type == ":" and child.end_byte <= body.start_byte:
            end = child.end_byte
    statements = [child for child in body.named_children if child.type != "comment"]
    if statements and _is_docstring(statements[0]):
        end = max(end, statements[0].end_byte)
    return end


class _FileBuilder:
    def __init__(self, path: str, source: bytes) -> None:
        self.path = path
        self.source = source
        self.lines = _LineIndex(source)
        self._names: Counter[str] = Counter()

    def _unique(self, qualified_name: str) -> str:
        self._names[qualified_name] += 1
        count = self._names[qualified_name]
        return qualified_name if count == 1 else f"{qualified_name}#{count}"

    def _outer_span(self, node: Node) -> SourceSpan:
        end = _with_newline(self.source, _trim_end(self.source, node.start_byte, node.end_byte))
        return self.lines.span(node.start_byte, end)

    def function(self, outer: Node, owner: str | None) -> FunctionNode:
        definition, decorators = _unwrap_definition(outer)
        name = _node_text(definition.child_by_field_name("name"))
        span = self._outer_span(outer)
        body = definition.child_by_field_name("body")
        header_end = _header_end(definition, body)
        content_end = _trim_end(self.source, span.byte_start, span.byte_end)
        body_start = _skip_whitespace(self.source, header_end, content_end)
        qualified = f"{owner}.{name}" if owner else name
        return FunctionNode(
            name=name,
            qualified_name=self._unique(qualified),
            span=span,
            header_span=self.lines.span(span.byte_start, header_end),
            body_span=self.lines.span(body_start, content_end),
            decorators=tuple(decorators),
            is_method=owner is not None,
        )

    def cls(self, outer: Node) -> ClassNode:
        definition, decorators = _unwrap_definition(outer)
        name = _node_text(definition.child_by_field_name("name"))
        qualified = self._unique(name)
        span = self._outer_span(outer)
        body = definition.child_by_field_name("body")
        header_end = _header_end(definition, body)

        attributes: list[SourceSpan] = []
        others: list[SourceSpan] = []
        methods: list[FunctionNode] = []
        body_indent = _line_indent(self.source, outer.start_byte) + "    "
        first_member = True
        for child in body.children if body is not None else ():
            if child.start_byte < header_end or not child.is_named or not child.text:
                continue
            if first_member:
                indent = _line_indent(self.source, child.start_byte)
                if indent:
                    body_indent = indent
                first_member = False
            inner, _ = _unwrap_definition(child)
            if inner.type == "function_definition":
                methods.append(self.function(child, owner=qualified))
            elif _is_attribute(child):
                attributes.append(self._outer_span(child))
            else:
                others.append(self._outer_span(child))

        return ClassNode(
            name=name,
            qualified_name=qualified,
            span=span,
            header_span=self.lines.span(span.byte_start, header_end),
            attribute_spans=tuple(attributes),
            methods=tuple(methods),
            other_spans=tuple(others),
            decorators=tuple(decorators),
            body_indent=body_indent,
        )

    def build(self, root: Node, raw_text: str) -> FileNode:
        functions: list[FunctionNode] = []
        classes: list[ClassNode] = []
        imports: list[SourceSpan] = []
        globals_: list[SourceSpan] = []
        for child in root.children:
            if child.start_byte == child.end_byte or not child.is_named:
                continue
            definition, _ = _unwrap_definition(child)
            if definition.type == "function_definition":
                functions.append(self.function(child, owner=None))
            elif definition.type == "class_definition":
                classes.append(self.cls(child))
            elif child.type in IMPORT_NODE_TYPES:
                imports.append(self._outer_span(child))
            else:
                globals_.append(self._outer_span(child))
        return FileNode(
            path=self.path,
            raw_text=raw_text,
            functions=tuple(functions),
            classes=tuple(classes),
            import_spans=tuple(imports),
            global_spans=tuple(globals_),
        )


def parse_file(source_text: str | bytes, path: str) -> FileNode:
    """Parse one source file into a ``FileNode``.

    Files with syntax errors are not rejected: they come back flagged
    ``degraded`` with the whole text as a single global span.
    """
    normalized = normalize_path(path)
    if PurePosixPath(normalized).suffix not in SOURCE_EXTENSIONS:
        raise UnsupportedFileError(f"{path} does not have a Python source extension")
    if isinstance(source_text, bytes):
        try:
            raw_text = source_text.decode("utf-8")
        except UnicodeDecodeError as error:
            raise SourceEncodingError(f"{path} is not valid UTF-8: {error}") from error
    else:
        raw_text = source_text

    source = raw_text.encode("utf-8")
    if not source.strip():
        return FileNode(path=normalized, raw_text=raw_text)

    root = parse_tree(source)
    if root.has_error:
        logger.warning("Syntax errors in %s; indexing it as global context only", normalized)
        whole = _LineIndex(source).span(0, len(source))
        return FileNode(path=normalized, raw_text=raw_text, global_spans=(whole,), degraded=True)
    return _FileBuilder(normalized, source).build(root, raw_text)


def module_names_for(path: str) -> list[str]:
    """Dotted module names a repo-relative path can be imported as."""
    parts = list(PurePosixPath(path).with_suffix("").parts)
    if parts and parts[-1] == "__init__":
        parts.pop()
    if not parts:
        return []
    names = [".".join(parts)]
    if parts[0] == "src" and len(parts) > 1:
        names.append(".".join(parts[1:]))
    return names


def build_module_table(paths: Iterable[str]) -> dict[str, str]:
    table: dict[str, str] = {}
    ordered = sorted(paths, key=lambda item: (PurePosixPath(item).suffix == ".pyi", item))
    for primary in (True, False):
        for path in ordered:
            names = module_names_for(path)
            for name in names[:1] if primary else names[1:]:
                table.setdefault(name, path)
    return table


def _matches(path: str, patterns: Sequence[str]) -> bool:
    for pattern in patterns:
        if fnmatch.fnmatchcase(path, pattern):
            return True
        if pattern.startswith("**/") and fnmatch.fnmatchcase(path, pattern[3:]):
            return True
    return False


def _assemble(root: Path, parsed: Mapping[str, FileNode], failures: Mapping[str, str]) -> RepoIndex:
    files = {path: parsed[path] for path in sorted(parsed)}
    return RepoIndex(
        root=root,
        files=files,
        module_table=build_module_table(files),
        failures=dict(sorted(failures.items())),
    )


def index_sources(sources: Mapping[str, str], root: str | Path = ".") -> RepoIndex:
    """Build an index from an in-memory ``{path: source}`` mapping."""
    parsed: dict[str, FileNode] = {}
    failures: dict[str, str] = {}
    for path, text in sources.items():
        normalized = normalize_path(path)
        try:
            parsed[normalized] = parse_file(text, normalized)
        except (UnsupportedFileError, SourceEncodingError) as error:
            failures[normalized] = str(error)
    return _assemble(Path(root), parsed, failures)


def index_repository(
    root: str | Path,
    include_globs: Sequence[str] = DEFAULT_INCLUDE_GLOBS,
    exclude_globs: Sequence[str] = DEFAULT_EXCLUDE_GLOBS,
    max_workers: int | None = None,
) -> RepoIndex:
    """Parse every matching file under ``root``.

    Per-file failures are recorded in ``RepoIndex.failures`` and never abort
    the index; an unreadable root raises ``OSError``.
    """
    root_path = Path(root).resolve()
    if not root_path.exists():
        raise FileNotFoundError(f"Repository root {root} does not exist")
    if not root_path.is_dir():
        raise NotADirectoryError(f"Repository root {root} is not a directory")
    if not os.access(root_path, os.R_OK | os.X_OK):
        raise PermissionError(f"Repository root {root} is not readable")

    candidates: list[str] = []
    for dirpath, _dirnames, filenames in os.walk(root_path):
        for filename in filenames:
            relative = Path(dirpath, filename).relative_to(root_path).as_posix()
            if _matches(relative, include_globs) and not _matches(relative, exclude_globs):
                candidates.append(relative)
    candidates.sort()

    def load(relative: str) -> tuple[str, FileNode | None, str | None]:
        try:
            data = (root_path / relative).read_bytes()
            return relative, parse_file(data, relative), None
        except (OSError, UnsupportedFileError, SourceEncodingError) as error:
            return relative, None, str(error)

    parsed: dict[str, FileNode] = {}
    failures: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for relative, node, error in pool.map(load, candidates):
            if node is not None:
                parsed[relative] = node
            else:
                logger.warning("Could not index %s: %s", relative, error)
                failures[relative] = error or "unknown error"

    logger.info("Indexed %d files under %s (%d failures)", len(parsed), root_path, len(failures))
    return _assemble(root_path, parsed, failures)


# Rendering -----------------------------------------------------------------


def _splice(source: bytes, start: int, end: int, edits: Sequence[tuple[int, int, bytes]]) -> bytes:
    pieces: list[bytes] = []
    cursor = start
    for edit_start, edit_end, replacement in sorted(edits):
        pieces.append(source[cursor:edit_start])
        pieces.append(replacement)
        cursor = max(cursor, edit_end)
    pieces.append(source[cursor:end])
    return b"".join(pieces)


def _removal_start(source: bytes, previous_end: int, member_start: int) -> int:
    start = source.rfind(b"\n", 0, member_start) + 1
    while start > previous_end:
        above = source.rfind(b"\n", 0, start - 1) + 1
        if above < previous_end or source[above:start].strip():
            break
        start = above
    return max(start, previous_end)


def _removal_range(source: bytes, previous_end: int, span: SourceSpan) -> tuple[int, int]:
    """Bytes to delete for a dropped statement.

    A statement alone on its lines goes with its newline and the blank lines
    above it. One sharing a line with kept code takes only itself and its
    `;` separator, so the neighbours keep their line breaks and indentation.
    """
    line_start = source.rfind(b"\n", 0, span.byte_start) + 1
    end = span.byte_end
    if not source.endswith(b"\n", 0, end):
        end = _SEPARATOR.match(source, end).end()
    if source[line_start : span.byte_start].strip():
        if source.endswith(b"\n", 0, end):
            end -= 2 if source.endswith(b"\r\n", 0, end) else 1
        return (previous_end if previous_end >= line_start else span.byte_start), end
    if not source.endswith(b"\n", 0, end):
        end = _with_newline(source, end)
        if end < len(source) and not source.endswith(b"\n", 0, end):
            return span.byte_start, end
    return _removal_start(source, previous_end, span.byte_start), end


def _header_only_edit(function: FunctionNode) -> list[tuple[int, int, bytes]]:
    body = function.body_span
    if body.is_empty:
        return []
    return [(body.byte_start, body.byte_end, PLACEHOLDER)]


def _render_class(
    file: FileNode,
    cls: ClassNode,
    policy: FunctionPolicy,
    drop_other: bool,
    omit_when_empty: bool,
) -> bytes | None:
    source = file.source
    members: list[tuple[SourceSpan, str, FunctionNode | None]] = [
        *((span, "attribute", None) for span in cls.attribute_spans),
        *((span, "other", None) for span in cls.other_spans),
        *((method.span, "method", method) for method in cls.methods),
    ]
    members.sort(key=lambda member: member[0].byte_start)

    edits: list[tuple[int, int, bytes]] = []
    kept = 0
    surviving_methods = 0
    previous_end = cls.header_span.byte_end
    for span, kind, method in members:
        if kind == "method" and method is not None:
            mode = policy(method)
            if mode is None:
                edits.append((*_removal_range(source, previous_end, span), b""))
            else:
                kept += 1
                surviving_methods += 1
                if mode == "header_only":
                    edits.extend(_header_only_edit(method))
        elif kind == "other" and drop_other:
            edits.append((*_removal_range(source, previous_end, span), b""))
        else:
            kept += 1
        previous_end = span.byte_end

    if omit_when_empty and cls.methods and not surviving_methods and not cls.attribute_spans:
        return None

    rendered = _splice(source, cls.span.byte_start, cls.span.byte_end, edits)
    header_text = source[cls.span.byte_start : cls.header_span.byte_end]
    has_docstring = header_text.rstrip().endswith((b'"', b"'"))
    if not kept and not has_docstring:
        original = source[cls.span.byte_start : cls.span.byte_end]
        newline = b"\r\n" if original.endswith(b"\r\n") else b"\n" if original.endswith(b"\n") else b""
        rendered = (
            rendered.rstrip()
            + (newline or b"\n")
            + cls.body_indent.encode("utf-8")
            + PLACEHOLDER
            + newline
        )
    return rendered


def render_node(file: FileNode, node_ref: str | FunctionNode | ClassNode, mode: RenderMode = "full") -> str:
    """Render one function, method or class at the requested fidelity."""
    node = file.find(node_ref) if isinstance(node_ref, str) else node_ref
    if not _owns(file, node):
        raise NodeNotFoundError(f"{node.qualified_name} does not belong to {file.path}")
    source = file.source
    if mode == "full":
        return file.text_of(node.span)
    if isinstance(node, FunctionNode):
        edits = _header_only_edit(node)
        return _splice(source, node.span.byte_start, node.span.byte_end, edits).decode("utf-8")
    rendered = _render_class(
        file, node, policy=lambda _method: "header_only", drop_other=True, omit_when_empty=False
    )
    return (rendered or b"").decode("utf-8")


def _owns(file: FileNode, node: FunctionNode | ClassNode) -> bool:
    if isinstance(node, ClassNode):
        return any(cls is node or cls == node for cls in file.classes)
    return any(function is node or function == node for function in file.iter_functions())


def render_file(
    file: FileNode,
    *,
    keep_globals: bool,
    policy: FunctionPolicy,
    drop_class_other: bool = False,
    omit_empty_classes: bool = False,
    empty_when_all_pruned: bool = False,
) -> str:
    """Render a file through span edits.

    Dropped statements take their leading blank lines with them, so the
    surviving text keeps its original layout.
    """
    if not keep_globals and file.degraded:
        return ""
    source = file.source
    items: list[tuple[SourceSpan, str, FunctionNode | ClassNode | None]] = [
        *((span, "import", None) for span in file.import_spans),
        *((span, "global", None) for span in file.global_spans),
        *((function.span, "function", function) for function in file.functions),
        *((cls.span, "class", cls) for cls in file.classes),
    ]
    items.sort(key=lambda item: item[0].byte_start)

    edits: list[tuple[int, int, bytes]] = []
    definitions_kept = 0
    previous_end = 0
    for span, kind, node in items:
        if kind == "global" and not keep_globals:
            edits.append((*_removal_range(source, previous_end, span), b""))
        elif isinstance(node, FunctionNode):
            mode = policy(node)
            if mode is None:
                edits.append((*_removal_range(source, previous_end, span), b""))
            else:
                definitions_kept += 1
                if mode == "header_only":
                    edits.extend(_header_only_edit(node))
        elif isinstance(node, ClassNode):
            rendered = _render_class(file, node, policy, drop_class_other, omit_empty_classes)
            if rendered is None:
                edits.append((*_removal_range(source, previous_end, span), b""))
            else:
                definitions_kept += 1
                if rendered != source[span.byte_start : span.byte_end]:
                    edits.append((span.byte_start, span.byte_end, rendered))
        previous_end = span.byte_end

    has_definitions = bool(file.functions or file.classes)
    if empty_when_all_pruned and has_definitions and not definitions_kept:
        return ""
    text = _splice(source, 0, len(source), edits).decode("utf-8")
    text = text.lstrip("\r\n")
    return text if text.strip() else ""


# Index dump ----------------------------------------------------------------


def _function_record(function: FunctionNode) -> IndexFunctionRecord:
    return IndexFunctionRecord(
        name=function.name,
        qualified_name=function.qualified_name,
        header=function.header_span.as_range(),
        body=function.body_span.as_range(),
    )


def index_records(index: RepoIndex) -> list[IndexRecord]:
    records: list[IndexRecord] = []
    for path in index.paths():
        file = index.files[path]
        records.append(
            IndexRecord(
                path=path,
                functions=[_function_record(function) for function in file.functions],
                classes=[
                    IndexClassRecord(
                        name=cls.name,
                        qualified_name=cls.qualified_name,
                        header=cls.header_span.as_range(),
                        attributes=[span.as_range() for span in cls.attribute_spans],
                        methods=[_function_record(method) for method in cls.methods],
                    )
                    for cls in file.classes
                ],
                degraded=file.degraded,
            )
        )
    return records


def write_index_dump(index: RepoIndex, path: str | Path) -> int:
    """One JSON line per file; returns the number of records written."""
    records = index_records(index)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as stream:
        for record in records:
            stream.write(record.model_dump_json() + "\n")
    return len(records)


def summarize(index: RepoIndex) -> IndexSummary:
    return IndexSummary(
        root=str(index.root),
        files=len(index.files),
        functions=sum(sum(1 for _ in file.iter_functions()) for file in index.files.values()),
        classes=sum(len(file.classes) for file in index.files.values()),
        failures=len(index.failures),
    )
