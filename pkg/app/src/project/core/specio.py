"""
Reading and writing of ``*.holo.json`` documents.

``parse`` is total: any byte string yields either a model or error diagnostics
with a document path and, where it can be found, a line/column position.
``serialize`` is canonical: top-level ``kind`` and ``version`` first, then the
schema-declared field order, shortest round-trip numbers.
"""

import json
import math
import re
from pathlib import Path
from typing import Any

import structlog
from more_itertools import first
from pydantic import ValidationError

from .diagnostics import Diagnostic, error, has_errors, join_path
from .exceptions import DocumentError
from .schemas import (
    DOCUMENT_MODELS,
    Decomposition,
    HolisticTestCase,
    MappingPlan,
    Reference,
    Schema,
    SystemConfiguration,
)

log = structlog.get_logger(__name__)

SUFFIX = ".holo.json"


class _Rejected(ValueError):
    pass


def _reject_nan(constant: str) -> float:
    if constant == "NaN":
        raise _Rejected("NaN is not a valid number")
    return float(constant)


def _unique_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    result = {}
    for key, value in pairs:
        if key in result:
            raise _Rejected(f"duplicate key {key!r}")
        result[key] = value
    return result


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    return line, offset - (text.rfind("\n", 0, offset) + 1) + 1


def _document_path(raw: Any, loc: tuple[str | int, ...]) -> list[str | int]:
    """Drop union member labels from a pydantic error location."""
    path: list[str | int] = []
    current = raw
    for index, part in enumerate(loc):
        if isinstance(current, dict) and isinstance(part, str) and part in current:
            current = current[part]
            path.append(part)
        elif isinstance(current, list) and isinstance(part, int) and 0 <= part < len(current):
            current = current[part]
            path.append(part)
        elif index == len(loc) - 1 and isinstance(part, str) and isinstance(current, dict):
            path.append(part)
    return path


def _locate(text: str, path: list[str | int]) -> tuple[int, int] | None:
    offset, found = 0, None
    for part in path:
        if isinstance(part, int):
            continue
        match = re.compile(rf'"{re.escape(part)}"\s*:').search(text, offset)
        if match is None:
            break
        offset = found = match.start()
    if found is None:
        return None
    return _position(text, found)


def _schema_diagnostic(text: str, raw: Any, err: Any) -> Diagnostic:
    path = _document_path(raw, tuple(err["loc"]))
    match err["type"]:
        case "missing":
            message = f"missing required field {err['loc'][-1]!r}"
        case "extra_forbidden":
            message = f"unknown field {err['loc'][-1]!r}"
        case _:
            message = err["msg"]
    line, col = _locate(text, path) or (None, None)
    return error("E_SCHEMA", join_path(*path), message, line=line, col=col)


def parse(data: bytes, kind: str) -> tuple[Schema | None, list[Diagnostic]]:
    if kind not in DOCUMENT_MODELS:
        return None, [error("E_SCHEMA", "/kind", f"unknown document kind {kind!r}")]

    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        col = exc.start - (data.rfind(b"\n", 0, exc.start) + 1) + 1
        return None, [error("E_SYNTAX", "", f"invalid UTF-8: {exc.reason}", line=line, col=col)]

    try:
        raw = json.loads(text, parse_constant=_reject_nan, object_pairs_hook=_unique_keys)
    except json.JSONDecodeError as exc:
        return None, [error("E_SYNTAX", "", exc.msg, line=exc.lineno, col=exc.colno)]
    except ValueError as exc:
        return None, [error("E_SYNTAX", "", str(exc))]
    except RecursionError:
        return None, [error("E_SYNTAX", "", "document is nested too deeply")]

    if not isinstance(raw, dict):
        return None, [error("E_SCHEMA", "", "document root must be an object", line=1, col=1)]
    if (declared := raw.get("kind", kind)) != kind:
        line, col = _locate(text, ["kind"]) or (None, None)
        return None, [error("E_SCHEMA", "/kind", f"document kind is {declared!r}, expected {kind!r}", line=line, col=col)]

    try:
        model = DOCUMENT_MODELS[kind].model_validate(raw)
    except ValidationError as exc:
        diagnostics = [_schema_diagnostic(text, raw, err) for err in exc.errors()]
        log.debug("document rejected", kind=kind, errors=len(diagnostics))
        return None, diagnostics
    except RecursionError:
        return None, [error("E_SYNTAX", "", "document is nested too deeply")]
    return model, []


def _find_nan(value: Any, path: str = "") -> str | None:
    if isinstance(value, float) and math.isnan(value):
        return path or "/"
    if isinstance(value, dict):
        children = [(f"{path}/{key}", item) for key, item in value.items()]
    elif isinstance(value, list | tuple):
        children = [(f"{path}/{index}", item) for index, item in enumerate(value)]
    else:
        return None
    return first((found for child, item in children if (found := _find_nan(item, child)) is not None), None)


def serialize(model: Schema) -> bytes:
    data = model.model_dump(by_alias=True, exclude_none=True)
    if (path := _find_nan(data)) is not None:
        raise DocumentError(f"NaN at {path} has no JSON form", path=path)
    return (json.dumps(data, indent=2, ensure_ascii=False, allow_nan=True) + "\n").encode("utf-8")


def detect_kind(data: bytes) -> str | None:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError):
        return None
    kind = raw.get("kind") if isinstance(raw, dict) else None
    return kind if isinstance(kind, str) and kind in DOCUMENT_MODELS else None


def _resolve(reference: Reference, base: Path, kind: str, path: str) -> tuple[Schema | None, list[Diagnostic]]:
    target = base.parent / reference.path if reference.path else base
    try:
        model, diagnostics = load(target, kind)
    except OSError as exc:
        return None, [error("E_REF", path, f"cannot read {reference.ref!r}: {exc.strerror}")]
    if model is None:
        return None, [error("E_REF", path, f"{reference.ref!r} is not a valid {kind} document"), *diagnostics]
    if (found_id := getattr(model, "id", None)) != reference.target_id:
        return None, [error("E_REF", path, f"{reference.path!r} holds {found_id!r}, not {reference.target_id!r}")]
    return model, diagnostics


def _resolve_references(model: Schema, source: Path) -> tuple[Schema | None, list[Diagnostic]]:
    fields = {
        HolisticTestCase: (("system_configuration", "system_configuration"),),
        MappingPlan: (("test_case", "test_case"), ("subtest_set", "subtest_set")),
    }.get(type(model), ())
    update: dict[str, Any] = {}
    diagnostics: list[Diagnostic] = []
    for field, kind in fields:
        value = getattr(model, field)
        if isinstance(value, Reference):
            resolved, found = _resolve(value, source, kind, join_path(field, "$ref"))
            diagnostics += found
            if resolved is not None:
                update[field] = resolved
    if has_errors(diagnostics):
        return None, diagnostics
    return (model.model_copy(update=update) if update else model), diagnostics


def load(path: str | Path, kind: str | None = None) -> tuple[Schema | None, list[Diagnostic]]:
    """Read a document file and inline every ``$ref`` it makes, relative to the file."""
    path = Path(path)
    data = path.read_bytes()
    kind = kind or detect_kind(data)
    if kind is None:
        return None, [error("E_SCHEMA", "/kind", "cannot determine document kind")]
    model, diagnostics = parse(data, kind)
    if model is None:
        return None, diagnostics
    return _resolve_references(model, path.resolve())


def load_or_raise(path: str | Path, kind: str | None = None) -> Schema:
    model, diagnostics = load(path, kind)
    if model is None or has_errors(diagnostics):
        raise DocumentError(f"{path}: invalid document", diagnostics)
    return model


def load_system_configuration(path: str | Path) -> SystemConfiguration:
    model = load_or_raise(path, "system_configuration")
    assert isinstance(model, SystemConfiguration)
    return model


def load_test_case(path: str | Path) -> HolisticTestCase:
    model = load_or_raise(path, "test_case")
    assert isinstance(model, HolisticTestCase)
    return model


def load_decomposition(path: str | Path) -> Decomposition:
    model = load_or_raise(path, "subtest_set")
    assert isinstance(model, Decomposition)
    return model


def load_plan(path: str | Path) -> MappingPlan:
    model = load_or_raise(path, "plan")
    assert isinstance(model, MappingPlan)
    return model


def dump(model: Schema, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize(model))
    return path
