import random
from pathlib import Path

import pytest

from app.errors import NodeNotFoundError, SourceEncodingError, UnsupportedFileError
from app.services.repo_model import (
    index_repository,
    index_sources,
    module_names_for,
    parse_file,
    render_file,
    render_node,
    summarize,
    write_index_dump,
)
from app.services.synthetic import random_repo, write_repo

FIXTURE = '''import os
from typing import Any

LIMIT = 10


class Alpha:
    """Alpha doc."""

    size = 3

    def __init__(self, value):
        self.value = value

    def grow(self, amount):
        return self.value + amount


@dataclass
class Beta(Alpha):
    name: str = "beta"

    @property
    def label(self):
        return self.name.upper()

    def reset(self):
        self.value = 0
        return None


class Gamma:
    def one(self):
        return 1

    def two(self):
        return 2

    def three(self):
        return 3


def helper(x):
    return x * LIMIT
'''

GAMMA = """class Gamma:
    def one(self):
        return 1

    def two(self):
        return 2

    def three(self):
        return 3
"""


def test_single_function_file() -> None:
    node = parse_file("def f():\n    return 1\n", "a.py")

    assert [function.name for function in node.functions] == ["f"]
    assert node.classes == ()
    assert node.global_spans == ()
    assert node.import_spans == ()
    assert not node.degraded


def test_empty_file() -> None:
    node = parse_file("", "empty.py")

    assert node.raw_text == ""
    assert node.functions == ()
    assert node.classes == ()
    assert node.global_spans == ()
    assert node.import_spans == ()


def test_fixture_structure() -> None:
    node = parse_file(FIXTURE, "fixture.py")

    assert [cls.qualified_name for cls in node.classes] == ["Alpha", "Beta", "Gamma"]
    assert sum(len(cls.methods) for cls in node.classes) == 7
    assert [function.name for function in node.functions] == ["helper"]
    assert len(node.import_spans) == 2
    assert len(node.global_spans) == 1

    beta = node.find("Beta")
    assert beta.decorators == ("@dataclass",)
    assert len(beta.attribute_spans) == 1
    assert [method.qualified_name for method in beta.methods] == ["Beta.label", "Beta.reset"]
    assert node.find("Beta.label").is_method


def test_top_level_spans_reassemble_source_exactly() -> None:
    node = parse_file(FIXTURE, "fixture.py")
    source = FIXTURE.encode("utf-8")

    pieces: list[bytes] = []
    cursor = 0
    for span in node.top_level_spans():
        gap = source[cursor : span.byte_start]
        assert not gap.strip()
        pieces.extend([gap, source[span.byte_start : span.byte_end]])
        cursor = span.byte_end
    pieces.append(source[cursor:])

    assert b"".join(pieces) == source


def test_member_spans_stay_inside_their_class() -> None:
    node = parse_file(FIXTURE, "fixture.py")

    for cls in node.classes:
        members = sorted([*cls.attribute_spans, *cls.other_spans, *(method.span for method in cls.methods)])
        previous = cls.header_span.byte_end
        for span in members:
            assert previous <= span.byte_start
            assert span.byte_end <= cls.span.byte_end
            previous = span.byte_end


def test_duplicate_names_get_numbered() -> None:
    node = parse_file("def f():\n    pass\n\n\ndef f():\n    return 2\n", "dup.py")

    assert [function.qualified_name for function in node.functions] == ["f", "f#2"]


def test_syntax_error_degrades_to_global_context() -> None:
    node = parse_file("def broken(:\n    pass\n", "broken.py")

    assert node.degraded
    assert node.functions == ()
    assert len(node.global_spans) == 1
    assert node.text_of(node.global_spans[0]) == node.raw_text


def test_unsupported_extension_and_bad_encoding() -> None:
    with pytest.raises(UnsupportedFileError):
        parse_file("x = 1\n", "notes.txt")
    with pytest.raises(SourceEncodingError):
        parse_file(b"\xff\xfe\x00", "bad.py")


def test_render_full_is_identity() -> None:
    node = parse_file(FIXTURE, "fixture.py")

    assert render_node(node, "helper") == "def helper(x):\n    return x * LIMIT\n"


def test_header_only_function_reparses_with_placeholder_body() -> None:
    node = parse_file("def g(x):\n    return x*2\n", "g.py")

    rendered = render_node(node, "g", "header_only")

    assert rendered == "def g(x):\n    ...\n"
    reparsed = parse_file(rendered, "g.py")
    function = reparsed.functions[0]
    assert reparsed.text_of(function.body_span) == "..."


def test_header_only_class_keeps_attributes_and_method_headers() -> None:
    node = parse_file(FIXTURE, "fixture.py")

    rendered = render_node(node, "Alpha", "header_only")

    assert rendered == (
        "class Alpha:\n"
        '    """Alpha doc."""\n'
        "\n"
        "    size = 3\n"
        "\n"
        "    def __init__(self, value):\n"
        "        ...\n"
        "\n"
        "    def grow(self, amount):\n"
        "        ...\n"
    )


def test_semicolons_are_separators_not_statements() -> None:
    node = parse_file("import sys; sys.path.insert(0, 'lib')\nimport os\n\n\nclass A:\n    x = 1; y = 2\n", "s.py")

    assert [node.text_of(span) for span in node.import_spans] == ["import sys", "import os\n"]
    assert [node.text_of(span) for span in node.global_spans] == ["sys.path.insert(0, 'lib')\n"]
    assert [node.text_of(span) for span in node.classes[0].attribute_spans] == ["x = 1", "y = 2\n"]
    assert node.classes[0].other_spans == ()


def test_one_line_class_keeps_its_line_ending() -> None:
    assert render_node(parse_file("class A: pass\n", "a.py"), "A", "header_only") == "class A:\n    ...\n"
    assert render_node(parse_file("class A: pass\r\n", "a.py"), "A", "header_only") == "class A:\r\n    ...\r\n"


def test_render_node_rejects_dangling_reference() -> None:
    node = parse_file(FIXTURE, "fixture.py")

    with pytest.raises(NodeNotFoundError):
        render_node(node, "Alpha.missing")


def test_dropping_first_method_keeps_class_header_on_its_own_line() -> None:
    node = parse_file(GAMMA, "gamma.py")

    rendered = render_file(
        node,
        keep_globals=True,
        policy=lambda function: None if function.name == "one" else "full",
    )

    assert rendered.startswith("class Gamma:\n")
    assert "def one" not in rendered
    reparsed = parse_file(rendered, "gamma.py")
    assert not reparsed.degraded
    assert [method.name for method in reparsed.classes[0].methods] == ["two", "three"]


def test_dropping_middle_method_takes_its_leading_blank_line() -> None:
    node = parse_file(GAMMA, "gamma.py")

    rendered = render_file(
        node,
        keep_globals=True,
        policy=lambda function: None if function.name == "two" else "full",
    )

    assert rendered == (
        "class Gamma:\n"
        "    def one(self):\n"
        "        return 1\n"
        "\n"
        "    def three(self):\n"
        "        return 3\n"
    )


def test_render_without_globals_keeps_imports() -> None:
    node = parse_file(FIXTURE, "fixture.py")

    rendered = render_file(node, keep_globals=False, policy=lambda _function: "full")

    assert "LIMIT = 10" not in rendered
    assert rendered.startswith("import os\nfrom typing import Any\n")
    assert not parse_file(rendered, "fixture.py").degraded


def test_module_names() -> None:
    assert module_names_for("pkg/__init__.py") == ["pkg"]
    assert module_names_for("src/lib/tools.py") == ["src.lib.tools", "lib.tools"]
    assert module_names_for("__init__.py") == []


def test_source_file_wins_over_stub() -> None:
    index = index_sources({"m.pyi": "def f(x: int) -> int: ...\n", "m.py": "def f(x):\n    return x\n"})

    assert index.module_table["m"] == "m.py"
    assert index.paths() == ["m.py", "m.pyi"]


def test_index_repository_builds_module_table(tmp_path: Path) -> None:
    write_repo(
        {"a.py": "import pkg.b\n", "pkg/__init__.py": "", "pkg/b.py": "def b():\n    return 1\n"},
        tmp_path,
    )

    index = index_repository(tmp_path)

    assert index.module_table == {"a": "a.py", "pkg": "pkg/__init__.py", "pkg.b": "pkg/b.py"}
    assert index.paths() == ["a.py", "pkg/__init__.py", "pkg/b.py"]


def test_index_repository_empty_directory(tmp_path: Path) -> None:
    index = index_repository(tmp_path)

    assert index.files == {}
    assert summarize(index).files == 0


def test_index_repository_missing_root(tmp_path: Path) -> None:
    with pytest.raises(OSError):
        index_repository(tmp_path / "missing")


def test_index_matches_independent_parses(tmp_path: Path) -> None:
    sources = random_repo(random.Random(7), 20)
    write_repo(sources, tmp_path)

    index = index_repository(tmp_path)

    assert len(index.files) == 20
    for path, text in sources.items():
        assert index.file(path) == parse_file(text, path)


def test_per_file_failures_do_not_abort(tmp_path: Path) -> None:
    write_repo({"good.py": "def ok():\n    return 1\n"}, tmp_path)
    (tmp_path / "bad.py").write_bytes(b"x = '\xff'\n")
    (tmp_path / "skip").mkdir()
    (tmp_path / "skip" / "junk.py").write_text("def junk():\n    pass\n", encoding="utf-8")

    index = index_repository(tmp_path, exclude_globs=["skip/*"])

    assert index.paths() == ["good.py"]
    assert list(index.failures) == ["bad.py"]


def test_index_dump_and_summary(tmp_path: Path) -> None:
    index = index_sources({"fixture.py": FIXTURE, "empty.py": ""}, root=tmp_path)

    written = write_index_dump(index, tmp_path / "out" / "index.jsonl")
    summary = summarize(index)

    assert written == 2
    assert len((tmp_path / "out" / "index.jsonl").read_text(encoding="utf-8").splitlines()) == 2
    assert (summary.files, summary.functions, summary.classes, summary.failures) == (2, 8, 3, 0)
