from typing import Annotated, Any, Literal, TypeVar, Union

from pydantic import AfterValidator, BaseModel, Discriminator, Field, StringConstraints, Tag

from .diagnostics import Diagnostic

Identifier = Annotated[str, StringConstraints(pattern=r"^[A-Za-z][A-Za-z0-9_]*$")]
DomainTag = Annotated[str, StringConstraints(pattern=r"^[a-z][a-z0-9_]*$")]
V = TypeVar("V")


def _sorted_keys(value: dict[str, Any]) -> dict[str, Any]:
    return dict(sorted(value.items()))


# free-form maps keep their keys sorted so equal models serialize identically
SortedMap = Annotated[dict[str, V], AfterValidator(_sorted_keys)]

Scalar = bool | int | float | str
ArtifactPayload = SortedMap[Scalar | tuple[Scalar, ...]]

DocumentKind = Literal[
    "system_configuration",
    "test_case",
    "subtest_set",
    "ri_profile",
    "plan",
    "result_set",
    "taxonomy",
]
DEFAULT_TAXONOMY_ID = "holotest_default"
EXTERNAL_PEER = "external"


class Schema(BaseModel, extra="forbid", frozen=True, populate_by_name=True):
    pass


class Reference(Schema):
    """Cross-file reference of the form ``{"$ref": "<relative path>#<id>"}``."""

    ref: str = Field(alias="$ref", pattern=r"^[^#]*#[A-Za-z][A-Za-z0-9_]*$")

    @property
    def path(self) -> str:
        return self.ref.partition("#")[0]

    @property
    def target_id(self) -> str:
        return self.ref.partition("#")[2]


def _inline_or_ref(value: Any) -> str:
    if isinstance(value, Reference) or (isinstance(value, dict) and "$ref" in value):
        return "ref"
    return "inline"


# --- system configuration ---------------------------------------------------


class Component(Schema):
    id: Identifier
    name: str = ""
    kind: Literal["physical", "ict", "abstract"]
    domains: tuple[DomainTag, ...]
    attributes: SortedMap[Scalar] = Field(default_factory=dict)


class Connection(Schema):
    id: Identifier
    from_: Identifier = Field(alias="from")
    to: Identifier
    domain: DomainTag
    attributes: SortedMap[Scalar] = Field(default_factory=dict)


class FunctionDef(Schema):
    """A use-case function; function-under-test sets reference these by id."""

    id: Identifier
    name: str = ""
    actors: tuple[Identifier, ...]


class SystemConfiguration(Schema):
    kind: Literal["system_configuration"] = "system_configuration"
    version: Literal["1"] = "1"
    id: Identifier
    components: tuple[Component, ...] = ()
    connections: tuple[Connection, ...] = ()
    functions: tuple[FunctionDef, ...] = ()

    def component(self, component_id: str) -> Component | None:
        return next((c for c in self.components if c.id == component_id), None)

    def connection(self, connection_id: str) -> Connection | None:
        return next((c for c in self.connections if c.id == connection_id), None)

    def function(self, function_id: str) -> FunctionDef | None:
        return next((f for f in self.functions if f.id == function_id), None)


# --- test criteria ----------------------------------------------------------


class PoI(Schema):
    kind: Literal["characterization", "validation", "verification"]
    statement: str = ""


class Range(Schema):
    lo: float
    hi: float


class TargetCriterion(Schema):
    id: Identifier
    metric: Identifier
    description: str = ""
    combination: str | None = None


class VariabilityAttribute(Schema):
    id: Identifier
    parameter: str
    range: Range | tuple[Scalar, ...]


class Threshold(Schema):
    value: float
    unit: str = ""


class QualityAttribute(Schema):
    id: Identifier
    target_ref: Identifier
    predicate: Literal["lt", "le", "gt", "ge"]
    threshold: Threshold


class TestCriteria(Schema):
    __test__ = False  # not a pytest test class

    target: tuple[TargetCriterion, ...] = ()
    variability: tuple[VariabilityAttribute, ...] = ()
    quality: tuple[QualityAttribute, ...] = ()

    def target_by_id(self, target_id: str) -> TargetCriterion | None:
        return next((t for t in self.target if t.id == target_id), None)

    def variability_by_id(self, variability_id: str) -> VariabilityAttribute | None:
        return next((v for v in self.variability if v.id == variability_id), None)

    def quality_by_id(self, quality_id: str) -> QualityAttribute | None:
        return next((q for q in self.quality if q.id == quality_id), None)

    @property
    def metrics(self) -> list[str]:
        return [t.metric for t in self.target]


class SystemUnderTest(Schema):
    components: tuple[Identifier, ...]
    inputs: tuple[Identifier, ...] = ()
    outputs: tuple[Identifier, ...] = ()


SystemConfigurationOrRef = Annotated[
    Union[Annotated[SystemConfiguration, Tag("inline")], Annotated[Reference, Tag("ref")]],
    Discriminator(_inline_or_ref),
]


class HolisticTestCase(Schema):
    kind: Literal["test_case"] = "test_case"
    version: Literal["1"] = "1"
    id: Identifier
    narrative: str
    system_configuration: SystemConfigurationOrRef | None = None
    sut: SystemUnderTest
    oui: tuple[Identifier, ...]
    doi: tuple[DomainTag, ...]
    fut: tuple[Identifier, ...]
    fui: tuple[Identifier, ...]
    poi: PoI
    criteria: TestCriteria

    @property
    def sc(self) -> SystemConfiguration | None:
        if isinstance(self.system_configuration, SystemConfiguration):
            return self.system_configuration
        return None


# --- taxonomy ---------------------------------------------------------------


class Category(Schema):
    id: Identifier
    description: str = ""


class TaxonomyClass(Schema):
    id: Identifier
    category: Identifier
    description: str = ""
    attribute_schema: SortedMap[Literal["numeric", "text", "bool"]] = Field(default_factory=dict)


class CategoryRelation(Schema):
    from_: Identifier = Field(alias="from")
    to: Identifier
    compatible: tuple[tuple[Identifier, Identifier], ...] = ()


class Taxonomy(Schema):
    kind: Literal["taxonomy"] = "taxonomy"
    version: Literal["1"] = "1"
    id: Identifier
    description: str = ""
    categories: tuple[Category, ...] = ()
    classes: tuple[TaxonomyClass, ...] = ()
    relations: tuple[CategoryRelation, ...] = ()

    def taxonomy_class(self, category: str, class_id: str) -> TaxonomyClass | None:
        return next((c for c in self.classes if c.category == category and c.id == class_id), None)


class AttributeConstraint(Schema):
    attribute: str
    predicate: Literal["eq", "lt", "le", "gt", "ge", "in"]
    value: Scalar | tuple[Scalar, ...]


class Requirement(Schema):
    category: Identifier
    class_: Identifier = Field(alias="class")
    attribute_constraints: tuple[AttributeConstraint, ...] = ()


class Capability(Schema):
    category: Identifier
    class_: Identifier = Field(alias="class")
    attributes: SortedMap[Scalar] = Field(default_factory=dict)


class RIProfile(Schema):
    kind: Literal["ri_profile"] = "ri_profile"
    version: Literal["1"] = "1"
    id: Identifier
    name: str = ""
    taxonomy: Identifier = DEFAULT_TAXONOMY_ID
    capabilities: tuple[Capability, ...] = ()
    cost: float = Field(ge=0)


# --- sub-tests --------------------------------------------------------------


class InterfacePort(Schema):
    id: Identifier
    direction: Literal["produces", "consumes"]
    artifact_type: Identifier
    peer: Identifier
    iterative: bool = False
    max_iterations: int | None = Field(default=None, ge=1)


class ScriptedOutputs(Schema):
    """Declared output table replayed by the scripted executor."""

    metrics: SortedMap[float] = Field(default_factory=dict)
    artifacts: SortedMap[ArtifactPayload] = Field(default_factory=dict)


class ExecutorSpec(Schema):
    kind: Literal["scripted", "model_ict_disturbance", "model_agc_tracking"]
    params: SortedMap[Scalar] = Field(default_factory=dict)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    outputs: ScriptedOutputs | None = None


class SubTest(Schema):
    id: Identifier
    parent: Identifier
    narrative: str = ""
    sut: SystemUnderTest
    oui: tuple[Identifier, ...]
    doi: tuple[DomainTag, ...]
    fut: tuple[Identifier, ...]
    fui: tuple[Identifier, ...]
    poi: PoI
    criteria: TestCriteria = TestCriteria()
    requirements: tuple[Requirement, ...] = ()
    interfaces: tuple[InterfacePort, ...] = ()
    executor: ExecutorSpec

    def ports(self, direction: str) -> list[InterfacePort]:
        return [port for port in self.interfaces if port.direction == direction]


class Decomposition(Schema):
    kind: Literal["subtest_set"] = "subtest_set"
    version: Literal["1"] = "1"
    id: Identifier
    parent: Identifier
    taxonomy: Identifier = DEFAULT_TAXONOMY_ID
    subtests: tuple[SubTest, ...] = ()
    # target id to combination text; overrides the test case for this decomposition
    combinations: SortedMap[str] = Field(default_factory=dict)

    def subtest(self, subtest_id: str) -> SubTest | None:
        return next((st for st in self.subtests if st.id == subtest_id), None)


# --- plans ------------------------------------------------------------------


class Objective(Schema):
    lambda_: float = Field(default=0.0, alias="lambda", ge=0)


class PlanEdge(Schema):
    producer: Identifier
    consumer: Identifier
    artifact_type: Identifier
    iterative: bool = False
    max_iterations: int | None = None


class IterationGroup(Schema):
    members: tuple[Identifier, ...]
    max_iterations: int = Field(ge=1)


HolisticTestCaseOrRef = Annotated[
    Union[Annotated[HolisticTestCase, Tag("inline")], Annotated[Reference, Tag("ref")]],
    Discriminator(_inline_or_ref),
]
DecompositionOrRef = Annotated[
    Union[Annotated[Decomposition, Tag("inline")], Annotated[Reference, Tag("ref")]],
    Discriminator(_inline_or_ref),
]


class MappingPlan(Schema):
    kind: Literal["plan"] = "plan"
    version: Literal["1"] = "1"
    id: Identifier
    test_case: HolisticTestCaseOrRef | None = None
    subtest_set: DecompositionOrRef | None = None
    taxonomy: Identifier = DEFAULT_TAXONOMY_ID
    objective: Objective = Objective()
    method: Literal["exact", "greedy"] = "exact"
    assignment: SortedMap[str] = Field(default_factory=dict)
    total_cost: float = 0.0
    objective_value: float = 0.0
    dag: tuple[PlanEdge, ...] = ()
    stages: tuple[tuple[Identifier, ...], ...] = ()
    iteration_groups: tuple[IterationGroup, ...] = ()
    diagnostics: tuple[Diagnostic, ...] = ()

    def group_of(self, subtest_id: str) -> IterationGroup | None:
        return next((g for g in self.iteration_groups if subtest_id in g.members), None)


# --- execution and results --------------------------------------------------


class Artifact(Schema):
    artifact_type: Identifier
    payload: ArtifactPayload
    producer: str
    iteration: int = Field(default=0, ge=0)


class ResultRecord(Schema):
    subtest_id: Identifier
    ri_id: str = ""
    status: Literal["completed", "failed", "iteration_limit"]
    iteration: int = 0
    metrics: SortedMap[float] = Field(default_factory=dict)
    artifacts: SortedMap[str] = Field(default_factory=dict)
    message: str | None = None

    @property
    def usable(self) -> bool:
        return self.status != "failed"


class SweepRequest(Schema):
    variability_id: Identifier
    quality_id: Identifier
    mode: Literal["grid", "bisection"] = "bisection"
    grid_points: int = Field(default=8, ge=2)
    tolerance: float = Field(default=1e-3, gt=0)


class Sample(Schema):
    value: float
    metrics: SortedMap[float]
    quality_pass: bool


class CharacterizationRecord(Schema):
    subtest_id: Identifier
    variability_id: Identifier
    quality_id: Identifier
    mode: Literal["grid", "bisection"]
    samples: tuple[Sample, ...] = ()
    boundary: float | None = None
    diagnostics: tuple[Diagnostic, ...] = ()


class BoundarySummary(Schema):
    variability_id: Identifier
    subtest_id: Identifier | None = None
    boundary: float | None = None


class HolisticVerdict(Schema):
    test_case: Identifier
    poi: Literal["characterization", "validation", "verification"]
    values: SortedMap[float] = Field(default_factory=dict)
    unevaluable: tuple[Identifier, ...] = ()
    quality: SortedMap[Literal["pass", "fail"]] = Field(default_factory=dict)
    overall: Literal["pass", "fail"] | None = None
    characterization: tuple[BoundarySummary, ...] | None = None
    provenance: SortedMap[tuple[str, ...]] = Field(default_factory=dict)
    diagnostics: tuple[Diagnostic, ...] = ()


class ResultSet(Schema):
    kind: Literal["result_set"] = "result_set"
    version: Literal["1"] = "1"
    id: Identifier
    plan: str = ""
    records: tuple[ResultRecord, ...] = ()
    characterizations: tuple[CharacterizationRecord, ...] = ()
    verdict: HolisticVerdict | None = None


class SignalHandle(Schema):
    """Resolved dotted path used by criteria and combination expressions."""

    kind: Literal["attribute", "metric", "signal"]
    owner: str
    name: str
    value: Scalar | None = None

    @property
    def path(self) -> str:
        return f"{self.owner}.{self.name}"


DOCUMENT_MODELS: dict[str, type[Schema]] = {
    "system_configuration": SystemConfiguration,
    "test_case": HolisticTestCase,
    "subtest_set": Decomposition,
    "ri_profile": RIProfile,
    "plan": MappingPlan,
    "result_set": ResultSet,
    "taxonomy": Taxonomy,
}
