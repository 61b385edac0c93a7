from ...cli import HolotestCommand


class Command(HolotestCommand):
    help = "Print the execution stages and iteration groups of a plan"

    def add_arguments(self, parser):
        parser.add_argument("plan", metavar="PLAN")

    def handle(self, *args, plan, **options):
        with self.errors_as_exit_codes():
            mapping_plan, _, _ = self.load_plan(plan)

        for index, stage in enumerate(mapping_plan.stages, start=1):
            members = ", ".join(f"{st}@{mapping_plan.assignment.get(st, '?')}" for st in stage)
            self.info(f"stage {index}: {members}")
        for group in mapping_plan.iteration_groups:
            self.info(f"iteration group {', '.join(group.members)} (max {group.max_iterations} iterations)")
        for edge in mapping_plan.dag:
            marker = " [iterative]" if edge.iterative else ""
            self.info(f"{edge.producer} -> {edge.consumer}: {edge.artifact_type}{marker}")
        self.emit(mapping_plan, options)
