from enum import IntEnum

from .diagnostics import Diagnostic, error


class ExitCode(IntEnum):
    OK = 0
    DIAGNOSTICS = 1
    INFEASIBLE = 2
    EXECUTION_FAILURE = 3
    QUALITY_FAIL = 4
    USAGE = 64


class HolotestError(Exception):
    code = "E_HOLOTEST"

    def __init__(self, message: str, diagnostics: list[Diagnostic] | None = None, *, path: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics or [error(self.code, path, message)]


class DocumentError(HolotestError):
    """Raised by file loading when a document has error diagnostics."""

    code = "E_SCHEMA"


class TaxonomyMismatch(HolotestError):
    code = "E_TAXONOMY_MISMATCH"


class InfeasibleMapping(HolotestError):
    code = "E_INFEASIBLE"


class DependencyCycle(HolotestError):
    code = "E_CYCLE"


class IterationGroupError(HolotestError):
    code = "E_ITERATION_GROUP"


class PlanMismatch(HolotestError):
    code = "E_PLAN_MISMATCH"


class PathUnresolved(HolotestError):
    code = "E_PATH_UNRESOLVED"


class MissingArtifact(HolotestError):
    code = "E_MISSING_ARTIFACT"


class ExecutorError(HolotestError):
    code = "E_EXECUTOR"


class ExpressionSyntaxError(HolotestError):
    code = "E_EXPR_SYNTAX"

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})", [error(self.code, "", message, col=column)])
        self.column = column


class ExpressionReferenceError(HolotestError):
    code = "E_EXPR_REF"


class NonNumericRange(HolotestError):
    code = "E_NONNUMERIC_RANGE"


class PoiMismatch(HolotestError):
    code = "E_POI_MISMATCH"


def exit_code_for(exc: Exception) -> ExitCode:
    match exc:
        case InfeasibleMapping():
            return ExitCode.INFEASIBLE
        case MissingArtifact() | ExecutorError():
            return ExitCode.EXECUTION_FAILURE
        case HolotestError():
            return ExitCode.DIAGNOSTICS
    return ExitCode.EXECUTION_FAILURE
