from ...cli import HolotestCommand
from ...exceptions import ExitCode
from ...harness import Workspace, run_plan
from ...schemas import ResultSet


class Command(HolotestCommand):
    help = "Execute every sub-test of a plan, stage by stage"

    def add_arguments(self, parser):
        parser.add_argument("plan", metavar="PLAN")
        parser.add_argument("--workspace", required=True, help="directory receiving artifacts and results")
        parser.add_argument("--seed", type=int, help="replaces the seed of every executor")
        parser.add_argument("--jobs", type=int, default=1, help="sub-tests of one stage run in parallel")

    def handle(self, *args, plan, workspace, seed, jobs, **options):
        if jobs < 1:
            self.fail("--jobs must be at least 1", ExitCode.USAGE)
        if seed is not None and not 0 <= seed < 2**64:
            self.fail("--seed must be an unsigned 64-bit integer", ExitCode.USAGE)
        with self.errors_as_exit_codes():
            mapping_plan, _, d = self.load_plan(plan)
            records = run_plan(mapping_plan, d, Workspace(workspace, mapping_plan.id), jobs=jobs, seed=seed)

        for record in records:
            suffix = f": {record.message}" if record.message else ""
            self.info(f"{record.subtest_id} on {record.ri_id}: {record.status}{suffix}")
        self.emit(ResultSet(id=f"{mapping_plan.id}_run", plan=mapping_plan.id, records=tuple(records)), options)
        if failed := [r.subtest_id for r in records if r.status == "failed"]:
            self.fail(f"sub-tests failed: {', '.join(failed)}", ExitCode.EXECUTION_FAILURE)
