"""
Decomposition checks, RI feasibility, assignment and execution DAG.

A decomposition is author-supplied; this module only verifies it, finds an
assignment of research infrastructures to its sub-tests and orders the
sub-tests by their artifact dependencies.
"""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import networkx as nx
import structlog
from django.conf import settings
from more_itertools import first

from .combiner import CombinationExpression, parse_expression
from .diagnostics import Diagnostic, duplicates, error, join_path, warning
from .exceptions import (
    DependencyCycle,
    ExpressionReferenceError,
    ExpressionSyntaxError,
    InfeasibleMapping,
    IterationGroupError,
    PlanMismatch,
    TaxonomyMismatch,
)
from .schemas import (
    EXTERNAL_PEER,
    Decomposition,
    ExecutorSpec,
    HolisticTestCase,
    InterfacePort,
    IterationGroup,
    MappingPlan,
    Objective,
    PlanEdge,
    RIProfile,
    ScriptedOutputs,
    SubTest,
    SystemConfiguration,
    TargetCriterion,
    TestCriteria,
)
from .taxonomy import matches

log = structlog.get_logger(__name__)


def known_metrics(d: Decomposition) -> dict[str, set[str]]:
    return {st.id: set(st.criteria.metrics) for st in d.subtests}


def effective_combination(target: TargetCriterion, d: Decomposition) -> str | None:
    """
    Combination text for a holistic target.

    The decomposition may override the test case; without any explicit text the
    identity over the single sub-test declaring the same metric is used.
    """
    if text := d.combinations.get(target.id) or target.combination:
        return text
    declaring = [st.id for st in d.subtests if target.metric in st.criteria.metrics]
    if len(declaring) == 1:
        return f"{declaring[0]}.{target.metric}"
    return None


def combination_expressions(tc: HolisticTestCase, d: Decomposition) -> dict[str, CombinationExpression]:
    metrics = known_metrics(d)
    expressions = {}
    for target in tc.criteria.target:
        text = effective_combination(target, d)
        if text is None:
            raise ExpressionReferenceError(f"target {target.id!r} has no combination expression")
        expressions[target.id] = parse_expression(text, metrics)
    return expressions


def _matching_port(d: Decomposition, owner: str, port: InterfacePort) -> InterfacePort | None:
    peer = d.subtest(port.peer)
    if peer is None:
        return None
    wanted = "consumes" if port.direction == "produces" else "produces"
    return first(
        (p for p in peer.interfaces if p.direction == wanted and p.peer == owner and p.artifact_type == port.artifact_type),
        None,
    )


def _check_ports(d: Decomposition) -> list[Diagnostic]:
    diagnostics = []
    for index, st in enumerate(d.subtests):
        for port_index, port in enumerate(st.interfaces):
            path = join_path("subtests", index, "interfaces", port_index)
            if port.peer == EXTERNAL_PEER:
                continue
            if d.subtest(port.peer) is None:
                diagnostics.append(error("E_REF", path, f"port {st.id}.{port.id} names unknown peer {port.peer!r}"))
                continue
            counterpart = _matching_port(d, st.id, port)
            if counterpart is None:
                verb = "produces" if port.direction == "consumes" else "consumes"
                diagnostics.append(
                    error(
                        "E_UNMATCHED_PORT",
                        path,
                        f"{st.id}.{port.id} {port.direction} {port.artifact_type!r} "
                        f"but {port.peer} never {verb} it for {st.id}",
                    )
                )
            elif counterpart.iterative != port.iterative and port.direction == "produces":
                diagnostics.append(
                    error(
                        "E_ITERATION_MISMATCH",
                        path,
                        f"{st.id}.{port.id} and {port.peer}.{counterpart.id} disagree on being iterative",
                    )
                )
    return diagnostics


def _bridged(d: Decomposition, source: str, target: str) -> bool:
    for st in d.subtests:
        if source not in st.sut.components and target not in st.sut.components:
            continue
        for port in st.ports("produces"):
            consumer = d.subtest(port.peer)
            if consumer is None or _matching_port(d, st.id, port) is None:
                continue
            forward = source in st.sut.components and target in consumer.sut.components
            backward = target in st.sut.components and source in consumer.sut.components
            if forward or backward:
                return True
    return False


def _check_cut(tc: HolisticTestCase, d: Decomposition, sc: SystemConfiguration) -> list[Diagnostic]:
    diagnostics = []
    sut = set(tc.sut.components)
    for connection in sc.connections:
        if connection.from_ not in sut or connection.to not in sut:
            continue
        if any({connection.from_, connection.to} <= set(st.sut.components) for st in d.subtests):
            continue
        if not _bridged(d, connection.from_, connection.to):
            diagnostics.append(
                error(
                    "E_UNMATCHED_PORT",
                    "/subtests",
                    f"connection {connection.id!r} ({connection.from_} -> {connection.to}) is cut "
                    f"but no interface pair bridges it",
                )
            )
    return diagnostics


def _check_assembly(tc: HolisticTestCase, d: Decomposition) -> list[Diagnostic]:
    diagnostics = []
    metrics = known_metrics(d)
    for index, target in enumerate(tc.criteria.target):
        path = join_path("criteria", "target", index, "combination")
        text = effective_combination(target, d)
        if text is None:
            diagnostics.append(
                error(
                    "E_ASSEMBLY",
                    path,
                    f"target {target.id!r} has no combination and {target.metric!r} "
                    f"is not declared by exactly one sub-test",
                )
            )
            continue
        try:
            expression = parse_expression(text, metrics)
        except ExpressionSyntaxError as exc:
            diagnostics.append(error(exc.code, path, str(exc), col=exc.column))
            continue
        except ExpressionReferenceError as exc:
            diagnostics.append(error(exc.code, path, str(exc)))
            continue
        if not expression.references:
            diagnostics.append(error("E_ASSEMBLY", path, f"combination for {target.id!r} references no metric"))
    return diagnostics


def validate_decomposition(
    tc: HolisticTestCase, d: Decomposition, sc: SystemConfiguration | None = None
) -> list[Diagnostic]:
    sc = sc or tc.sc
    diagnostics: list[Diagnostic] = []
    if d.parent != tc.id:
        diagnostics.append(error("E_REF", "/parent", f"sub-test set belongs to {d.parent!r}, not {tc.id!r}"))
    if not d.subtests:
        diagnostics.append(error("E_COVERAGE", "/subtests", "decomposition has no sub-tests"))
    diagnostics += [
        error("E_DUPLICATE_ID", join_path("subtests", index), f"duplicate sub-test id {value!r}")
        for index, value in duplicates([st.id for st in d.subtests])
    ]
    for index, st in enumerate(d.subtests):
        if st.parent != d.parent:
            diagnostics.append(
                error("E_REF", join_path("subtests", index, "parent"), f"{st.id} belongs to {st.parent!r}")
            )

    target_ids = {t.id for t in tc.criteria.target}
    for target_id in d.combinations:
        if target_id not in target_ids:
            diagnostics.append(error("E_REF", f"/combinations/{target_id}", f"{tc.id} has no target {target_id!r}"))

    covered = {c for st in d.subtests for c in st.sut.components}
    for component in tc.sut.components:
        if component not in covered:
            diagnostics.append(error("E_COVERAGE", "/subtests", f"SuT component {component!r} is in no sub-test"))

    diagnostics += _check_ports(d)
    if sc is not None:
        diagnostics += _check_cut(tc, d, sc)
    diagnostics += _check_assembly(tc, d)

    investigated = {c for st in d.subtests for c in st.oui}
    for component in tc.oui:
        if component not in investigated:
            diagnostics.append(
                error("E_OUI_NOT_COVERED", "/subtests", f"object under investigation {component!r} is in no sub-test OuI")
            )
    return diagnostics


def trivial_decomposition(tc: HolisticTestCase) -> Decomposition:
    """One sub-test equal to the holistic test, combined by identity."""
    criteria = TestCriteria(
        target=tuple(target.model_copy(update={"combination": None}) for target in tc.criteria.target),
        variability=tc.criteria.variability,
        quality=tc.criteria.quality,
    )
    subtest = SubTest(
        id=f"{tc.id}_whole",
        parent=tc.id,
        narrative=tc.narrative,
        sut=tc.sut,
        oui=tc.oui,
        doi=tc.doi,
        fut=tc.fut,
        fui=tc.fui,
        poi=tc.poi,
        criteria=criteria,
        executor=ExecutorSpec(
            kind="scripted", outputs=ScriptedOutputs(metrics={metric: 0.0 for metric in criteria.metrics})
        ),
    )
    return Decomposition(
        id=f"{tc.id}_trivial",
        parent=tc.id,
        subtests=(subtest,),
        combinations={target.id: f"{subtest.id}.{target.metric}" for target in criteria.target},
    )


def feasible_ris(
    d: Decomposition, profiles: Sequence[RIProfile], *, taxonomy_id: str | None = None
) -> dict[str, list[str]]:
    taxonomy_id = taxonomy_id or d.taxonomy
    for profile in profiles:
        if profile.taxonomy != taxonomy_id:
            raise TaxonomyMismatch(f"profile {profile.id!r} uses taxonomy {profile.taxonomy!r}, not {taxonomy_id!r}")
    feasible = {}
    for st in d.subtests:
        feasible[st.id] = sorted(
            profile.id
            for profile in profiles
            if all(matches(profile, req, taxonomy_id=taxonomy_id).satisfied for req in st.requirements)
        )
    return feasible


class BranchAndBound:
    """
    Exhaustive depth-first search with a lower-bound cut.

    Sub-tests are fixed in id order and candidates tried in RI id order, so the
    first optimum reached is the lexicographically smallest one; later
    assignments replace it only when strictly better.
    """

    def __init__(self, subtests: list[str], candidates: Mapping[str, list[str]], costs: Mapping[str, float], lam: float):
        self.subtests = subtests
        self.candidates = candidates
        self.costs = costs
        self.lam = lam
        cheapest = [min(costs[ri] for ri in candidates[st]) for st in subtests]
        self.remaining = [math.fsum(cheapest[i:]) for i in range(len(subtests) + 1)]
        self.best_value = math.inf
        self.best: list[str] = []
        self.visited = 0

    def _improves(self, value: float) -> bool:
        if math.isinf(self.best_value):
            return value < self.best_value
        return value < self.best_value - 1e-9 * max(1.0, abs(self.best_value))

    def run(self) -> list[str]:
        self._search(0, [], 0.0)
        return self.best

    def _search(self, depth: int, chosen: list[str], cost: float) -> None:
        self.visited += 1
        distinct = len(set(chosen))
        if depth == len(self.subtests):
            value = cost + self.lam * distinct
            if self._improves(value):
                self.best_value, self.best = value, list(chosen)
            return
        if not self._improves(cost + self.remaining[depth] + self.lam * distinct):
            return
        for ri in self.candidates[self.subtests[depth]]:
            chosen.append(ri)
            self._search(depth + 1, chosen, cost + self.costs[ri])
            chosen.pop()


def _greedy(subtests: list[str], candidates: Mapping[str, list[str]], costs: Mapping[str, float]) -> list[str]:
    return [min(candidates[st], key=lambda ri: (costs[ri], ri)) for st in subtests]


def assign(
    d: Decomposition,
    profiles: Sequence[RIProfile],
    objective: Objective | None = None,
    *,
    test_case: HolisticTestCase | None = None,
    limit: int | None = None,
) -> MappingPlan:
    objective = objective or Objective()
    limit = limit if limit is not None else settings.HOLOTEST_EXACT_SEARCH_LIMIT
    feasible = feasible_ris(d, profiles)

    if empty := sorted(st for st, ris in feasible.items() if not ris):
        positions = {st.id: index for index, st in enumerate(d.subtests)}
        raise InfeasibleMapping(
            f"no feasible research infrastructure for {', '.join(empty)}",
            [
                error("E_INFEASIBLE", join_path("subtests", positions[st]), f"no profile satisfies {st}'s requirements")
                for st in empty
            ],
        )

    subtests = sorted(feasible)
    costs = {profile.id: profile.cost for profile in profiles}
    combinations = math.prod(len(feasible[st]) for st in subtests)
    diagnostics: list[Diagnostic] = []
    if combinations <= limit:
        method = "exact"
        search = BranchAndBound(subtests, feasible, costs, objective.lambda_)
        chosen = search.run()
        log.debug("exact assignment searched", combinations=combinations, visited=search.visited)
    else:
        method = "greedy"
        chosen = _greedy(subtests, feasible, costs)
        diagnostics.append(
            warning("W_APPROXIMATE", "/assignment", f"{combinations} combinations exceed {limit}; greedy assignment")
        )

    total_cost = 0.0
    for ri in chosen:
        total_cost += costs[ri]
    dag = build_dag(d)
    plan = MappingPlan(
        id=f"{d.id}_plan",
        test_case=test_case,
        subtest_set=d,
        taxonomy=d.taxonomy,
        objective=objective,
        method=method,
        assignment=dict(zip(subtests, chosen, strict=True)),
        total_cost=total_cost,
        objective_value=total_cost + objective.lambda_ * len(set(chosen)),
        dag=dag.edges,
        stages=dag.stages,
        iteration_groups=dag.groups,
        diagnostics=tuple(diagnostics),
    )
    log.info(f"assigned {len(subtests)} sub-tests", plan=plan.id, method=method, total_cost=total_cost)
    return plan


@dataclass(frozen=True)
class Dag:
    edges: tuple[PlanEdge, ...]
    stages: tuple[tuple[str, ...], ...]
    groups: tuple[IterationGroup, ...]


def dag_edges(d: Decomposition) -> list[PlanEdge]:
    edges = set()
    for st in d.subtests:
        for port in st.ports("produces"):
            counterpart = _matching_port(d, st.id, port)
            if counterpart is None:
                continue
            iterative = port.iterative and counterpart.iterative
            limits = [p.max_iterations for p in (port, counterpart) if p.max_iterations is not None]
            edges.add(
                PlanEdge(
                    producer=st.id,
                    consumer=port.peer,
                    artifact_type=port.artifact_type,
                    iterative=iterative,
                    max_iterations=max(limits) if iterative and limits else None,
                )
            )
    return sorted(edges, key=lambda e: (e.producer, e.consumer, e.artifact_type))


def build_dag(d: Decomposition) -> Dag:
    edges = dag_edges(d)
    graph = nx.DiGraph()
    graph.add_nodes_from(st.id for st in d.subtests)
    graph.add_edges_from((e.producer, e.consumer) for e in edges)

    components = [frozenset(c) for c in nx.strongly_connected_components(graph)]
    member_of = {node: component for component in components for node in component}
    groups = []
    for component in sorted(components, key=sorted):
        internal = [e for e in edges if e.producer in component and e.consumer in component]
        if not internal:
            continue
        if blocking := [e for e in internal if not e.iterative]:
            raise DependencyCycle(
                f"cycle over {sorted(component)} contains non-iterative edge "
                f"{blocking[0].producer} -> {blocking[0].consumer} ({blocking[0].artifact_type})"
            )
        groups.append(
            IterationGroup(
                members=tuple(sorted(component)),
                max_iterations=max(e.max_iterations or 1 for e in internal),
            )
        )
    for edge in edges:
        if edge.iterative and member_of[edge.producer] is not member_of[edge.consumer]:
            raise IterationGroupError(
                f"iterative edge {edge.producer} -> {edge.consumer} does not close a cycle within one iteration group"
            )

    condensed = nx.condensation(graph, scc=components)
    stages = tuple(
        tuple(sorted(node for c in generation for node in condensed.nodes[c]["members"]))
        for generation in nx.topological_generations(condensed)
    )
    return Dag(edges=tuple(edges), stages=stages, groups=tuple(groups))


def check_plan(plan: MappingPlan, d: Decomposition) -> None:
    """Raise ``PlanMismatch`` unless ``plan`` was built for ``d``."""
    ids = sorted(st.id for st in d.subtests)
    if sorted(plan.assignment) != ids:
        raise PlanMismatch(f"plan {plan.id} assigns {sorted(plan.assignment)}, sub-test set has {ids}")
    dag = build_dag(d)
    if (dag.edges, dag.stages, dag.groups) != (plan.dag, plan.stages, plan.iteration_groups):
        raise PlanMismatch(f"plan {plan.id} stages do not match the dependencies of {d.id}")
