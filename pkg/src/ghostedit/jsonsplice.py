"""Locate and replace JSON values inside raw document bytes.

Config and manifest bytes are treated as authoritative: edits replace the
exact character span of one value and leave every other byte alone, so
formatting and key order survive untouched.
"""

from __future__ import annotations

import json
from json.decoder import WHITESPACE, scanstring

from .errors import SpliceAmbiguous

_decoder = json.JSONDecoder()


def _skip_ws(text: str, pos: int) -> int:
    return WHITESPACE.match(text, pos).end()


def _value_end(text: str, pos: int) -> int:
    _, end = _decoder.raw_decode(text, pos)
    return end


def object_members(text: str, start: int) -> list[tuple[str, int, int, int]]:
    """Members of the object opening at ``start``.

    Returns ``(key, key_start, value_start, value_end)`` tuples in
    document order, duplicates included.
    """
    if text[start] != "{":
        raise ValueError(f"no object at offset {start}")
    members = []
    pos = _skip_ws(text, start + 1)
    if text[pos] == "}":
        return members
    while True:
        if text[pos] != '"':
            raise ValueError(f"expected a key at offset {pos}")
        key_start = pos
        key, pos = scanstring(text, pos + 1)
        pos = _skip_ws(text, pos)
        if text[pos] != ":":
            raise ValueError(f"expected ':' at offset {pos}")
        value_start = _skip_ws(text, pos + 1)
        value_end = _value_end(text, value_start)
        members.append((key, key_start, value_start, value_end))
        pos = _skip_ws(text, value_end)
        if text[pos] == "}":
            return members
        if text[pos] != ",":
            raise ValueError(f"expected ',' at offset {pos}")
        pos = _skip_ws(text, pos + 1)


def array_items(text: str, start: int) -> list[tuple[int, int]]:
    if text[start] != "[":
        raise ValueError(f"no array at offset {start}")
    items = []
    pos = _skip_ws(text, start + 1)
    if text[pos] == "]":
        return items
    while True:
        end = _value_end(text, pos)
        items.append((pos, end))
        pos = _skip_ws(text, end)
        if text[pos] == "]":
            return items
        if text[pos] != ",":
            raise ValueError(f"expected ',' at offset {pos}")
        pos = _skip_ws(text, pos + 1)


def value_span(text: str, path: tuple) -> tuple[int, int] | None:
    """Character span of the value at ``path`` (keys and list indexes).

    ``None`` when the path does not exist; :class:`SpliceAmbiguous` when
    an object along the way repeats the key.
    """
    start = _skip_ws(text, 0)
    end = _value_end(text, start)
    for step in path:
        if isinstance(step, int):
            if text[start] != "[":
                return None
            items = array_items(text, start)
            if not -len(items) <= step < len(items):
                return None
            start, end = items[step]
        else:
            if text[start] != "{":
                return None
            hits = [m for m in object_members(text, start) if m[0] == step]
            if not hits:
                return None
            if len(hits) > 1:
                raise SpliceAmbiguous(f"key {step!r} appears {len(hits)} times")
            _, _, start, end = hits[0]
    return start, end


def raw_value(raw: bytes, path: tuple) -> bytes | None:
    """Exact bytes of the value at ``path``, as written in the document."""
    text = raw.decode("utf-8")
    span = value_span(text, path)
    if span is None:
        return None
    return text[span[0]:span[1]].encode("utf-8")


def replace_value(raw: bytes, path: tuple, new_value) -> bytes:
    text = raw.decode("utf-8")
    span = value_span(text, path)
    if span is None:
        raise KeyError(path)
    encoded = json.dumps(new_value, separators=(",", ":"), ensure_ascii=False)
    return (text[:span[0]] + encoded + text[span[1]:]).encode("utf-8")


def insert_member(raw: bytes, object_path: tuple, key: str, new_value) -> bytes:
    """Add ``key`` as the first member of the object at ``object_path``."""
    text = raw.decode("utf-8")
    span = value_span(text, object_path)
    if span is None or text[span[0]] != "{":
        raise KeyError(object_path)
    member = json.dumps(key) + ":" + json.dumps(new_value, separators=(",", ":"), ensure_ascii=False)
    if object_members(text, span[0]):
        member += ","
    pos = span[0] + 1
    return (text[:pos] + member + text[pos:]).encode("utf-8")
