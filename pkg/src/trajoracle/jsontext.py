"""Extraction of JSON objects embedded in free-form model output."""

from __future__ import annotations

import json
from typing import Any, Iterator

_DECODER = json.JSONDecoder()


def iter_json_objects(text: str) -> Iterator[tuple[dict, int, int]]:
    """Yield every decodable JSON object in ``text`` as (obj, start, end).

    Scans every '{' so nested objects are yielded both embedded and on
    their own; callers filter by the keys they need.
    """
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return
        try:
            obj, consumed = _DECODER.raw_decode(text[start:])
        except json.JSONDecodeError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            yield obj, start, start + consumed
        pos = start + 1


def last_json_with_key(text: str, key: str) -> tuple[Any, int, int] | None:
    """Value of ``key`` in the last JSON object that carries it, with span."""
    hit = None
    for obj, start, end in iter_json_objects(text):
        if key in obj:
            hit = (obj[key], start, end)
    return hit
