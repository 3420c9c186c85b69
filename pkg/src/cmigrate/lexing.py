"""Offset-preserving masking of comments and literals for C and Rust text.

Every masker returns a string of the same length as its input with newlines
kept in place, so line numbers and character offsets computed on the masked
text are valid on the original.  Comments become spaces.  String and char
literals keep their delimiters and have their contents replaced by ``.``, so
a line holding only a literal still counts as code while nothing inside the
literal can be mistaken for a token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

FILL = "."

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Comment:
    start: int
    end: int
    text: str


def _blank(segment: str) -> str:
    return "".join("\n" if ch == "\n" else " " for ch in segment)


def _fill_literal(segment: str, open_len: int, close_len: int) -> str:
    if len(segment) < open_len + close_len:
        return segment
    inner = segment[open_len:len(segment) - close_len]
    inner = "".join("\n" if ch == "\n" else FILL for ch in inner)
    return segment[:open_len] + inner + segment[len(segment) - close_len:]


def mask_c(text: str) -> str:
    """Mask C comments and string/char literals."""
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if ch == "/" and nxt == "/":
            j = i + 2
            # a backslash-newline continues a line comment in C
            while j < n and text[j] != "\n":
                if text[j] == "\\" and j + 1 < n and text[j + 1] == "\n":
                    j += 2
                    continue
                j += 1
            out.append(_blank(text[i:j]))
            i = j
        elif ch == "/" and nxt == "*":
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            out.append(_blank(text[i:j]))
            i = j
        elif ch == '"' or ch == "'":
            j = i + 1
            while j < n and text[j] != ch and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n)
            out.append(_fill_literal(text[i:j], 1, 1 if text[j - 1] == ch and j - 1 > i else 0))
            i = j
        else:
            out.append(ch)
            i += 1
    return "".join(out)


_RAW_START = re.compile(r'(?:br|r|cr)(#*)"')


def _rust_ident_before(text: str, i: int) -> bool:
    return i > 0 and (text[i - 1].isalnum() or text[i - 1] == "_")


def mask_rust(text: str) -> tuple[str, list[Comment]]:
    """Mask Rust comments and literals; also return the comments found."""
    out = []
    comments: list[Comment] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if ch == "/" and nxt == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            comments.append(Comment(i, j, text[i:j]))
            out.append(_blank(text[i:j]))
            i = j
            continue
        if ch == "/" and nxt == "*":
            depth = 1
            j = i + 2
            while j < n and depth:
                if text.startswith("/*", j):
                    depth += 1
                    j += 2
                elif text.startswith("*/", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            comments.append(Comment(i, j, text[i:j]))
            out.append(_blank(text[i:j]))
            i = j
            continue
        if ch in "brc" and not _rust_ident_before(text, i):
            m = _RAW_START.match(text, i)
            if m:
                hashes = m.group(1)
                close = '"' + hashes
                j = text.find(close, m.end())
                j = n if j < 0 else j + len(close)
                out.append(_fill_literal(text[i:j], m.end() - i, len(close)))
                i = j
                continue
            if ch in "bc" and nxt in "\"'":
                out.append(ch)
                i += 1
                continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n)
            out.append(_fill_literal(text[i:j], 1, 1))
            i = j
            continue
        if ch == "'":
            # char literal vs lifetime / loop label
            m = re.compile(r"'(?:\\(?:x[0-9a-fA-F]{2}|u\{[0-9a-fA-F]{1,6}\}|.)|[^\\'\n])'").match(text, i)
            if m:
                out.append(_fill_literal(m.group(0), 1, 1))
                i = m.end()
                continue
        out.append(ch)
        i += 1
    return "".join(out), comments


def line_starts(text: str) -> list[int]:
    starts = [0]
    for m in re.finditer("\n", text):
        starts.append(m.end())
    return starts


def line_of(starts: list[int], offset: int) -> int:
    """1-based line number of ``offset``."""
    lo, hi = 0, len(starts) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if starts[mid] <= offset:
            lo = mid
        else:
            hi = mid - 1
    return lo + 1


def match_brace(masked: str, open_idx: int) -> int:
    """Index of the brace closing the one at ``open_idx``, or -1."""
    depth = 0
    for j in range(open_idx, len(masked)):
        c = masked[j]
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return j
    return -1
