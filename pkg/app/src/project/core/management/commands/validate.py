from ...cli import FileReport, HolotestCommand, ValidationReport
from ...diagnostics import Diagnostic, has_errors, nested, warning
from ...exceptions import ExitCode, HolotestError
from ...mapping import check_plan, validate_decomposition
from ...model import validate_subtest, validate_system_configuration, validate_test_case
from ...schemas import (
    Decomposition,
    HolisticTestCase,
    MappingPlan,
    RIProfile,
    Schema,
    SystemConfiguration,
    Taxonomy,
)
from ...specio import load
from ...taxonomy import check_profile, check_requirements, check_taxonomy, consistent_test


class Command(HolotestCommand):
    help = "Parse and validate holotest documents"

    def add_arguments(self, parser):
        parser.add_argument("paths", nargs="+", metavar="PATH")
        parser.add_argument("--taxonomy", help="taxonomy document used for requirements and profiles")

    def handle(self, *args, paths, taxonomy, **options):
        with self.errors_as_exit_codes():
            loaded: list[tuple[str, Schema | None, list[Diagnostic]]] = []
            for path in paths:
                model, diagnostics = load(path)
                loaded.append((path, model, diagnostics))
            models = [model for _, model, _ in loaded if model is not None]
            tax = self.pick_taxonomy(taxonomy, models)

            files = []
            for path, model, diagnostics in loaded:
                if model is not None:
                    diagnostics = diagnostics + self.check(model, models, tax)
                self.report(diagnostics, path)
                files.append(FileReport(path=path, kind=getattr(model, "kind", None), diagnostics=tuple(diagnostics)))

        report = ValidationReport(files=tuple(files))
        self.emit(report, options)
        failed = [f.path for f in files if has_errors(f.diagnostics)]
        if failed:
            self.fail(f"{len(failed)} of {len(files)} documents have errors", ExitCode.DIAGNOSTICS)
        self.info(f"{len(files)} documents valid")

    def pick_taxonomy(self, flag: str | None, models: list[Schema]) -> Taxonomy:
        if flag is None and (given := [m for m in models if isinstance(m, Taxonomy)]):
            return given[0]
        return self.load_taxonomy(flag)

    def check(self, model: Schema, models: list[Schema], tax: Taxonomy) -> list[Diagnostic]:
        match model:
            case SystemConfiguration():
                return validate_system_configuration(model)
            case HolisticTestCase():
                configurations = [m for m in models if isinstance(m, SystemConfiguration)]
                sc = model.sc or (configurations[0] if len(configurations) == 1 else None)
                return validate_test_case(model, sc)
            case Decomposition():
                parents = [m for m in models if isinstance(m, HolisticTestCase) and m.id == model.parent]
                return self.check_decomposition(model, parents[0] if parents else None, tax)
            case RIProfile():
                return check_profile(model, tax)
            case Taxonomy():
                return check_taxonomy(model)
            case MappingPlan():
                return self.check_plan(model)
        return []

    def check_decomposition(self, d: Decomposition, tc: HolisticTestCase | None, tax: Taxonomy) -> list[Diagnostic]:
        diagnostics: list[Diagnostic] = []
        if tc is None:
            diagnostics.append(
                warning("W_UNRESOLVED_PARENT", "/parent", f"test case {d.parent!r} is not among the given files")
            )
        else:
            diagnostics += validate_decomposition(tc, d)
        for index, st in enumerate(d.subtests):
            if tc is not None:
                diagnostics += nested(validate_subtest(st, tc), "subtests", index)
            if d.taxonomy != tax.id:
                continue
            diagnostics += check_requirements(st.requirements, tax, "subtests", index, "requirements")
            diagnostics += nested(consistent_test(st.requirements, tax.relations), "subtests", index)
        if d.taxonomy != tax.id:
            diagnostics.append(
                warning("W_UNCHECKED_REQUIREMENTS", "/taxonomy", f"requirements use taxonomy {d.taxonomy!r}, not {tax.id!r}")
            )
        return diagnostics

    def check_plan(self, plan: MappingPlan) -> list[Diagnostic]:
        if not isinstance(plan.subtest_set, Decomposition):
            return []
        try:
            check_plan(plan, plan.subtest_set)
        except HolotestError as exc:
            return exc.diagnostics
        return []
