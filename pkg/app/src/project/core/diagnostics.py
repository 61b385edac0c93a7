from collections.abc import Iterable, Sequence
from typing import Literal

from pydantic import BaseModel, model_validator

Severity = Literal["error", "warning"]


class Diagnostic(BaseModel, extra="forbid", frozen=True):
    """
    A single finding about a document.

    Error codes start with ``E_`` and warnings with ``W_``; the severity is
    implied by the prefix and checked on construction.
    """

    code: str
    severity: Severity
    path: str = ""
    line: int | None = None
    col: int | None = None
    message: str

    @model_validator(mode="after")
    def code_matches_severity(self) -> "Diagnostic":
        expected = "E_" if self.severity == "error" else "W_"
        if not self.code.startswith(expected):
            raise ValueError(f"{self.severity} code must start with {expected}: {self.code}")
        return self

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def format(self, source: str = "") -> str:
        location = source
        if self.line is not None:
            location += f":{self.line}"
            if self.col is not None:
                location += f":{self.col}"
        prefix = f"{location}: " if location else ""
        path = f" at {self.path}" if self.path else ""
        return f"{prefix}{self.severity} {self.code}{path}: {self.message}"


def error(code: str, path: str, message: str, *, line: int | None = None, col: int | None = None) -> Diagnostic:
    return Diagnostic(code=code, severity="error", path=path, message=message, line=line, col=col)


def warning(code: str, path: str, message: str, *, line: int | None = None, col: int | None = None) -> Diagnostic:
    return Diagnostic(code=code, severity="warning", path=path, message=message, line=line, col=col)


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


def codes(diagnostics: Iterable[Diagnostic]) -> list[str]:
    return [d.code for d in diagnostics]


def join_path(*parts: str | int) -> str:
    """Build a slash-separated document path, e.g. ``/sut/components/2``."""
    return "".join(f"/{part}" for part in parts)


def duplicates(values: Sequence[str]) -> list[tuple[int, str]]:
    """Positions and values of every repeated occurrence after the first."""
    seen: set[str] = set()
    repeated = []
    for index, value in enumerate(values):
        if value in seen:
            repeated.append((index, value))
        seen.add(value)
    return repeated


def nested(diagnostics: Iterable[Diagnostic], *prefix: str | int) -> list[Diagnostic]:
    """Re-root diagnostics of an embedded document under ``prefix``."""
    base = join_path(*prefix)
    return [d.model_copy(update={"path": base + d.path}) for d in diagnostics]
