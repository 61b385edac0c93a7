from pathlib import Path

from ...cli import HolotestCommand
from ...combiner import combine, evaluate, render_report
from ...diagnostics import codes
from ...exceptions import ExitCode
from ...harness import Workspace
from ...mapping import combination_expressions
from ...schemas import ResultSet
from ...specio import SUFFIX


class Command(HolotestCommand):
    help = "Combine sub-test results into the holistic verdict"

    def add_arguments(self, parser):
        parser.add_argument("workspace", metavar="WORKSPACE")
        parser.add_argument("--plan-id", help="needed when the workspace holds several plans")

    def handle(self, *args, workspace, plan_id, **options):
        with self.errors_as_exit_codes():
            store = Workspace(workspace, plan_id or self.only_plan(Path(workspace)))
            plan, tc, d = self.load_plan(store.plan_path)
            combined = combine(combination_expressions(tc, d), store.records(st.id for st in d.subtests))
            verdict = evaluate(tc, combined, store.characterizations())

        result = ResultSet(id=f"{plan.id}_verdict", plan=plan.id, verdict=verdict)
        store.write(result, store.verdict_path)
        self.report(verdict.diagnostics)
        self.info(render_report(tc, verdict).rstrip("\n"))
        self.emit(result, options)

        if "W_INCOMPLETE" in codes(verdict.diagnostics):
            self.fail(f"verdict of {tc.id} is incomplete", ExitCode.EXECUTION_FAILURE)
        if verdict.overall == "fail":
            self.fail(f"{tc.id} failed its quality attributes", ExitCode.QUALITY_FAIL)

    def only_plan(self, root: Path) -> str:
        plans = sorted(p.parent.name for p in root.glob(f"*/plan{SUFFIX}"))
        if len(plans) != 1:
            found = ", ".join(plans) or "none"
            self.fail(f"{root} must hold exactly one plan without --plan-id (found {found})", ExitCode.USAGE)
        return plans[0]
