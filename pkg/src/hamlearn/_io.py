from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A structured file is malformed; the message names the offending field."""


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(path: str | os.PathLike, doc: dict[str, Any]) -> None:
    # json writes floats with repr(), which round-trips every double exactly.
    write_text_atomic(path, json.dumps(doc, indent=1, allow_nan=False) + "\n")


def load_json(path: str | os.PathLike) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc


def require(doc: dict[str, Any], field: str, kind: type | tuple[type, ...] | None = None, where: str = "") -> Any:
    if field not in doc:
        raise SchemaError(f"{where}missing field {field!r}")
    value = doc[field]
    if kind is not None:
        ok = isinstance(value, kind) and not (isinstance(value, bool) and bool not in _as_tuple(kind))
        if not ok:
            raise SchemaError(f"{where}field {field!r} has wrong type {type(value).__name__}")
    return value


def check_schema(doc: dict[str, Any], where: str = "") -> None:
    version = require(doc, "schema", int, where)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{where}field 'schema' is {version}, expected {SCHEMA_VERSION}")


def _as_tuple(kind: type | tuple[type, ...]) -> tuple[type, ...]:
    return kind if isinstance(kind, tuple) else (kind,)
