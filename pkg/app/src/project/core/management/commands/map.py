from ...cli import HolotestCommand
from ...diagnostics import has_errors
from ...exceptions import ExitCode
from ...mapping import assign, validate_decomposition
from ...schemas import Objective
from ...specio import dump
from ...taxonomy import check_profile, check_requirements


class Command(HolotestCommand):
    help = "Assign research infrastructures to the sub-tests of a decomposition"

    def add_arguments(self, parser):
        parser.add_argument("testcase", metavar="TESTCASE")
        parser.add_argument("subtests", metavar="SUBTESTS")
        parser.add_argument("profiles", nargs="+", metavar="PROFILE")
        parser.add_argument("--taxonomy", help="taxonomy document the requirements and profiles refer to")
        parser.add_argument("--lambda", dest="lam", type=float, default=0.0, help="penalty per distinct RI used")
        parser.add_argument("--output", default="plan.holo.json", help="where to write the plan")

    def handle(self, *args, testcase, subtests, profiles, taxonomy, lam, output, **options):
        if lam < 0:
            self.fail("--lambda must not be negative", ExitCode.USAGE)
        with self.errors_as_exit_codes():
            tc = self.load_test_case(testcase)
            d = self.load_decomposition(subtests)
            ris = self.load_profiles(profiles)
            tax = self.load_taxonomy(taxonomy)

            diagnostics = validate_decomposition(tc, d)
            for index, st in enumerate(d.subtests):
                diagnostics += check_requirements(st.requirements, tax, "subtests", index, "requirements")
            self.report(diagnostics, subtests)
            for path, profile in zip(profiles, ris, strict=True):
                found = check_profile(profile, tax)
                self.report(found, path)
                diagnostics += found
            if has_errors(diagnostics):
                self.fail("inputs have errors, no plan written", ExitCode.DIAGNOSTICS)

            plan = assign(d, ris, Objective(lambda_=lam), test_case=tc)
            self.report(plan.diagnostics)

        costs = {profile.id: profile.cost for profile in ris}
        width = max((len(st) for st in plan.assignment), default=0)
        for subtest_id, ri_id in plan.assignment.items():
            self.info(f"{subtest_id:<{width}}  {ri_id}  (cost {costs[ri_id]:g})")
        self.info(f"method {plan.method}, total cost {plan.total_cost:g}, objective {plan.objective_value:g}")
        path = dump(plan, output)
        self.info(f"plan written to {path}")
        self.emit(plan, options)
