"""Canonical JSON documents for presentations, block maps, and reports.

Canonical form sorts keys and list entries where the format says so, so
repeated runs produce byte-identical files.
"""

import json

from .errors import UsageError


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def loads(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")


def write_doc(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))


def read_doc(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
