import re

IDENTIFIER_PATTERN = re.compile(r"[^\W\d]\w*")
WORD_PATTERN = re.compile(r"[a-z0-9_]+")
# Identifiers, integers, the ellipsis, then any single non-space symbol.
PROMPT_TOKEN_PATTERN = re.compile(r"[^\W\d]\w*|\d+|\.\.\.|[^\w\s]")


def identifier_tokens(text: str) -> list[str]:
    return IDENTIFIER_PATTERN.findall(text.lower())


def word_tokens(text: str) -> list[str]:
    return WORD_PATTERN.findall(text.lower())


def prompt_tokens(text: str) -> list[str]:
    return PROMPT_TOKEN_PATTERN.findall(text)


def split_lines(text: str) -> list[str]:
    """Split on ``\\n`` only, keeping line endings; no phantom trailing line."""
    if not text:
        return []
    lines = [line + "\n" for line in text.split("\n")]
    if lines[-1] == "\n":
        lines.pop()
    else:
        lines[-1] = lines[-1][:-1]
    return lines
