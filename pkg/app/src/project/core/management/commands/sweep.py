from ...cli import HolotestCommand
from ...exceptions import ExitCode
from ...harness import Workspace, sweep
from ...schemas import ResultSet, SweepRequest


class Command(HolotestCommand):
    help = "Characterize a sub-test by sweeping one variability attribute"

    def add_arguments(self, parser):
        parser.add_argument("plan", metavar="PLAN")
        parser.add_argument("--workspace", required=True)
        parser.add_argument("--subtest", required=True)
        parser.add_argument("--variability", required=True, help="variability attribute id")
        parser.add_argument("--quality", required=True, help="quality attribute id")
        parser.add_argument("--mode", choices=["grid", "bisection"], default="bisection")
        parser.add_argument("--grid-points", type=int, default=8)
        parser.add_argument("--tolerance", type=float, default=1e-3)
        parser.add_argument("--seed", type=int)

    def handle(self, *args, plan, workspace, subtest, variability, quality, mode, grid_points, tolerance, seed, **options):
        if grid_points < 2 or tolerance <= 0:
            self.fail("--grid-points must be at least 2 and --tolerance positive", ExitCode.USAGE)
        with self.errors_as_exit_codes():
            mapping_plan, _, d = self.load_plan(plan)
            st = d.subtest(subtest)
            if st is None:
                self.fail(f"plan {mapping_plan.id} has no sub-test {subtest!r}", ExitCode.USAGE)
            store = Workspace(workspace, mapping_plan.id)
            request = SweepRequest(
                variability_id=variability,
                quality_id=quality,
                mode=mode,
                grid_points=grid_points,
                tolerance=tolerance,
            )
            record = sweep(st, request, store.inputs_for(st), store, seed=seed)

        self.report(record.diagnostics)
        for sample in record.samples:
            self.info(f"{variability} = {sample.value!r}: {'pass' if sample.quality_pass else 'fail'}")
        self.info(f"boundary {variability} = {'none' if record.boundary is None else repr(record.boundary)}")
        result = ResultSet(id=f"{st.id}_sweep_{variability}", plan=mapping_plan.id, characterizations=(record,))
        self.emit(result, options)
