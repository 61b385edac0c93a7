"""
Shared plumbing of the ``holotest`` management commands.

Human-readable text and logs go to stderr; with ``--json`` a command writes
exactly one canonical document to stdout and nothing else.
"""

import sys
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Literal, NoReturn

import structlog
from django.core.management import BaseCommand, CommandError, CommandParser
from pydantic import Field, ValidationError
from structlog.contextvars import bound_contextvars

from . import specio
from .diagnostics import Diagnostic
from .exceptions import DocumentError, ExitCode, HolotestError, exit_code_for
from .schemas import Decomposition, HolisticTestCase, MappingPlan, RIProfile, Schema, Taxonomy
from .taxonomy import load_taxonomy

log = structlog.get_logger(__name__)

__all__ = ["ExitCode", "HolotestCommand", "FileReport", "ValidationReport"]


class UsageErrorParser(CommandParser):
    """Argument errors exit with the usage code instead of argparse's 2."""

    def error(self, message: str) -> NoReturn:
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=ExitCode.USAGE)


class FileReport(Schema):
    path: str
    kind: str | None = None
    diagnostics: tuple[Diagnostic, ...] = ()


class ValidationReport(Schema):
    """
    Output of ``validate --json``.

    A report, not a document: ``validation_report`` is outside the closed set of
    document kinds, so ``validate``, ``load`` and ``detect_kind`` never accept it as input.
    """

    kind: Literal["validation_report"] = "validation_report"
    version: Literal["1"] = "1"
    files: tuple[FileReport, ...] = Field(default_factory=tuple)


class HolotestCommand(BaseCommand):
    requires_system_checks: list[str] = []

    def create_parser(self, prog_name: str, subcommand: str, **kwargs: Any) -> CommandParser:
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Django always builds a plain CommandParser
        parser.__class__ = UsageErrorParser
        parser.add_argument("--json", action="store_true", help="write the resulting document to stdout")
        return parser

    def info(self, text: str) -> None:
        self.stderr.write(text)

    def report(self, diagnostics: Iterable[Diagnostic], source: str = "") -> None:
        for diagnostic in diagnostics:
            self.stderr.write(diagnostic.format(source))

    def emit(self, model: Schema, options: dict[str, Any]) -> None:
        if options["json"]:
            self.stdout.write(specio.serialize(model).decode("utf-8"), ending="")

    def fail(self, message: str, code: ExitCode) -> NoReturn:
        raise CommandError(message, returncode=code)

    @contextmanager
    def errors_as_exit_codes(self) -> Iterator[None]:
        """Turn toolchain errors into ``CommandError`` carrying the matching exit code."""
        with bound_contextvars(command=self.__module__.rsplit(".", 1)[-1]):
            try:
                yield
            except HolotestError as exc:
                log.debug("command failed", error=str(exc), code=exc.code)
                self.report(exc.diagnostics)
                raise CommandError(str(exc), returncode=exit_code_for(exc)) from exc
            except OSError as exc:
                raise CommandError(f"{exc.filename}: {exc.strerror}", returncode=ExitCode.USAGE) from exc
            except ValidationError as exc:
                raise CommandError(str(exc), returncode=ExitCode.USAGE) from exc

    # --- loading helpers ----------------------------------------------------

    def load(self, path: str, kind: str) -> Schema:
        try:
            return specio.load_or_raise(path, kind)
        except DocumentError as exc:
            self.report(exc.diagnostics, path)
            raise CommandError(str(exc), returncode=ExitCode.DIAGNOSTICS) from exc

    def load_test_case(self, path: str) -> HolisticTestCase:
        model = self.load(path, "test_case")
        assert isinstance(model, HolisticTestCase)
        return model

    def load_decomposition(self, path: str) -> Decomposition:
        model = self.load(path, "subtest_set")
        assert isinstance(model, Decomposition)
        return model

    def load_profiles(self, paths: Iterable[str]) -> list[RIProfile]:
        profiles = []
        for path in paths:
            model = self.load(path, "ri_profile")
            assert isinstance(model, RIProfile)
            profiles.append(model)
        return profiles

    def load_taxonomy(self, path: str | None) -> Taxonomy:
        try:
            return load_taxonomy(path)
        except DocumentError as exc:
            self.report(exc.diagnostics, path or "")
            raise CommandError(str(exc), returncode=ExitCode.DIAGNOSTICS) from exc

    def load_plan(self, path: str | Path) -> tuple[MappingPlan, HolisticTestCase, Decomposition]:
        """A plan together with the test case and sub-test set it must carry inline or by reference."""
        model = self.load(str(path), "plan")
        assert isinstance(model, MappingPlan)
        if not isinstance(model.test_case, HolisticTestCase):
            self.fail(f"{path}: plan does not carry its test case", ExitCode.DIAGNOSTICS)
        if not isinstance(model.subtest_set, Decomposition):
            self.fail(f"{path}: plan does not carry its sub-test set", ExitCode.DIAGNOSTICS)
        return model, model.test_case, model.subtest_set
