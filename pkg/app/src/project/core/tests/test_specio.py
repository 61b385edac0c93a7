import json
import math
import random
import string

import pytest

from ..diagnostics import Diagnostic, codes
from ..exceptions import DocumentError
from ..schemas import (
    AttributeConstraint,
    BoundarySummary,
    Capability,
    CharacterizationRecord,
    Component,
    Connection,
    Decomposition,
    ExecutorSpec,
    FunctionDef,
    HolisticTestCase,
    HolisticVerdict,
    InterfacePort,
    IterationGroup,
    MappingPlan,
    PlanEdge,
    PoI,
    QualityAttribute,
    Range,
    Reference,
    Requirement,
    ResultRecord,
    ResultSet,
    RIProfile,
    Sample,
    ScriptedOutputs,
    SubTest,
    SystemConfiguration,
    SystemUnderTest,
    TargetCriterion,
    Taxonomy,
    TestCriteria,
    Threshold,
    VariabilityAttribute,
)
from ..specio import detect_kind, dump, load, load_or_raise, parse, serialize

FIXTURE_KINDS = {
    "system_configuration.holo.json": "system_configuration",
    "test_case.holo.json": "test_case",
    "subtests.holo.json": "subtest_set",
    "lab_A.holo.json": "ri_profile",
    "lab_B.holo.json": "ri_profile",
    "taxonomy.holo.json": "taxonomy",
}


@pytest.fixture
def test_case_raw(fixture_dir):
    return json.loads((fixture_dir / "test_case.holo.json").read_text())


def encode(raw) -> bytes:
    return json.dumps(raw).encode()


@pytest.mark.parametrize("name,kind", FIXTURE_KINDS.items())
def test__parse__fixtures(fixture_dir, name, kind):
    data = (fixture_dir / name).read_bytes()
    assert detect_kind(data) == kind
    model, diagnostics = parse(data, kind)
    assert diagnostics == []
    canonical = serialize(model)
    reparsed, diagnostics = parse(canonical, kind)
    assert diagnostics == []
    assert reparsed == model
    assert serialize(reparsed) == canonical
    assert list(json.loads(canonical))[:2] == ["kind", "version"]


def test__serialize__canonical_key_order(sc):
    shuffled = json.loads(serialize(sc))
    shuffled["components"][3]["attributes"] = {"count": 500, "capacity_kw": 2.0}
    shuffled = dict(reversed(list(shuffled.items())))
    model, _ = parse(encode(shuffled), "system_configuration")
    assert serialize(model) == serialize(sc)


def test__parse__unknown_poi_kind(test_case_raw):
    test_case_raw["poi"]["kind"] = "exploration"
    text = json.dumps(test_case_raw, indent=2).encode()
    model, diagnostics = parse(text, "test_case")
    assert model is None
    [diagnostic] = diagnostics
    assert diagnostic.code == "E_SCHEMA"
    assert diagnostic.path == "/poi/kind"
    assert diagnostic.line is not None
    for allowed in ("characterization", "validation", "verification"):
        assert allowed in diagnostic.message


def test__parse__missing_and_unknown_fields(test_case_raw):
    del test_case_raw["narrative"]
    test_case_raw["colour"] = "blue"
    _, diagnostics = parse(encode(test_case_raw), "test_case")
    messages = sorted(d.message for d in diagnostics)
    assert messages == ["missing required field 'narrative'", "unknown field 'colour'"]
    assert set(codes(diagnostics)) == {"E_SCHEMA"}


def test__parse__error_inside_inline_configuration(test_case_raw, sc):
    raw_sc = json.loads(serialize(sc))
    raw_sc["components"][0]["kind"] = "virtual"
    test_case_raw["system_configuration"] = raw_sc
    _, diagnostics = parse(encode(test_case_raw), "test_case")
    assert [d.path for d in diagnostics] == ["/system_configuration/components/0/kind"]


@pytest.mark.parametrize(
    "data,code",
    [
        (b'{"kind": "ri_profile", "id": "x", "cost": NaN}', "E_SYNTAX"),
        (b'{"kind": "ri_profile", "id": "x", "id": "y", "cost": 1}', "E_SYNTAX"),
        (b'{"kind": "ri_profile", "id": "x", "cost": 1', "E_SYNTAX"),
        (b'{"kind": "ri_profile", "id": "\xff", "cost": 1}', "E_SYNTAX"),
        (b"[" * 100_000 + b"]" * 100_000, "E_SYNTAX"),
        (b"[1, 2]", "E_SCHEMA"),
        (b'"text"', "E_SCHEMA"),
        (b'{"kind": "taxonomy", "id": "x", "cost": 1}', "E_SCHEMA"),
        (b'{"kind": "ri_profile", "version": "2", "id": "x", "cost": 1}', "E_SCHEMA"),
        (b'{"kind": "ri_profile", "id": "has-hyphen", "cost": 1}', "E_SCHEMA"),
        (b'{"kind": "ri_profile", "id": "x", "cost": -1}', "E_SCHEMA"),
    ],
)
def test__parse__rejections(data, code):
    model, diagnostics = parse(data, "ri_profile")
    assert model is None
    assert codes(diagnostics)[0] == code


def test__parse__syntax_error_position():
    _, [diagnostic] = parse(b'{\n  "id": "x",\n  "cost": }', "ri_profile")
    assert (diagnostic.code, diagnostic.line, diagnostic.col) == ("E_SYNTAX", 3, 11)


def test__parse__lenient_kind_and_infinity():
    model, diagnostics = parse(b'{"id": "x", "cost": Infinity}', "ri_profile")
    assert diagnostics == []
    assert model.cost == float("inf")
    assert b"Infinity" in serialize(model)


def test__parse__unknown_kind():
    assert codes(parse(b"{}", "spreadsheet")[1]) == ["E_SCHEMA"]
    assert detect_kind(b'{"kind": "spreadsheet"}') is None


@pytest.mark.parametrize("seed", range(200))
def test__parse__never_raises_on_corrupted_input(fixture_dir, seed):
    rng = random.Random(seed)
    data = bytearray((fixture_dir / rng.choice(list(FIXTURE_KINDS))).read_bytes())
    for _ in range(rng.randint(1, 8)):
        position = rng.randrange(len(data))
        match rng.randrange(3):
            case 0:
                data[position] = rng.randrange(256)
            case 1:
                del data[position]
            case _:
                data.insert(position, rng.choice(b'{}[]",:0-eE.\\'))
    kind = rng.choice(list(FIXTURE_KINDS.values()))
    model, diagnostics = parse(bytes(data), kind)
    assert (model is None) == any(d.is_error for d in diagnostics)


def test__load__resolves_references(fixture_dir):
    model, diagnostics = load(fixture_dir / "test_case.holo.json")
    assert diagnostics == []
    assert isinstance(model, HolisticTestCase)
    assert isinstance(model.system_configuration, SystemConfiguration)
    assert model.system_configuration.id == "agc_system"


@pytest.mark.parametrize(
    "ref",
    ["missing.holo.json#agc_system", "system_configuration.holo.json#other_system", "lab_A.holo.json#lab_A"],
)
def test__load__broken_reference(tmp_path, fixture_dir, test_case_raw, ref):
    for name in ("system_configuration.holo.json", "lab_A.holo.json"):
        (tmp_path / name).write_bytes((fixture_dir / name).read_bytes())
    test_case_raw["system_configuration"] = {"$ref": ref}
    (tmp_path / "tc.holo.json").write_bytes(encode(test_case_raw))
    model, diagnostics = load(tmp_path / "tc.holo.json")
    assert model is None
    assert codes(diagnostics)[0] == "E_REF"
    assert diagnostics[0].path == "/system_configuration/$ref"


def test__load_or_raise__invalid_document(tmp_path):
    path = tmp_path / "broken.holo.json"
    path.write_bytes(b'{"kind": "ri_profile", "id": "x"}')
    with pytest.raises(DocumentError) as exc_info:
        load_or_raise(path)
    assert exc_info.value.diagnostics[0].message == "missing required field 'cost'"


def test__dump__writes_canonical_bytes(tmp_path, sc):
    path = dump(sc, tmp_path / "nested" / "sc.holo.json")
    assert path.read_bytes() == serialize(sc)
    assert load_or_raise(path) == sc


class DocumentFactory:
    """Seeded builder of arbitrary valid documents of every kind."""

    KINDS = ("system_configuration", "test_case", "subtest_set", "ri_profile", "plan", "result_set", "taxonomy")
    TEXT = "abcxyz ÄÖü€ 漢字\"\\\n\t"

    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def build(self, kind: str):
        return getattr(self, kind)()

    def some(self, make, most: int = 3) -> tuple:
        return tuple(make() for _ in range(self.rng.randint(0, most)))

    def identifier(self) -> str:
        first = self.rng.choice(string.ascii_letters)
        return first + "".join(self.rng.choices(string.ascii_letters + string.digits + "_", k=self.rng.randint(0, 8)))

    def domain(self) -> str:
        return self.rng.choice(string.ascii_lowercase) + "".join(
            self.rng.choices(string.ascii_lowercase + "_", k=self.rng.randint(0, 6))
        )

    def text(self) -> str:
        return "".join(self.rng.choices(self.TEXT, k=self.rng.randint(0, 12)))

    def number(self) -> float:
        return self.rng.choice(
            [self.rng.uniform(-1e6, 1e6), self.rng.random() * 1e-12, float(self.rng.randint(-5, 5)), math.inf, -math.inf]
        )

    def scalar(self):
        return self.rng.choice(
            [self.rng.random() < 0.5, self.rng.randint(-(2**40), 2**40), self.number(), self.text()]
        )

    def scalars(self) -> dict:
        return {self.identifier(): self.scalar() for _ in range(self.rng.randint(0, 3))}

    def floats(self) -> dict:
        return {self.identifier(): self.number() for _ in range(self.rng.randint(0, 3))}

    def reference(self) -> Reference:
        return Reference.model_validate({"$ref": f"{self.rng.choice(['', 'other.holo.json'])}#{self.identifier()}"})

    def diagnostic(self) -> Diagnostic:
        severity = self.rng.choice(["error", "warning"])
        line = self.rng.choice([None, self.rng.randint(1, 99)])
        return Diagnostic(
            code=("E_" if severity == "error" else "W_") + self.identifier().upper(),
            severity=severity,
            path=self.text(),
            line=line,
            col=None if line is None else self.rng.randint(1, 99),
            message=self.text(),
        )

    def system_configuration(self) -> SystemConfiguration:
        return SystemConfiguration(
            id=self.identifier(),
            components=self.some(
                lambda: Component(
                    id=self.identifier(),
                    name=self.text(),
                    kind=self.rng.choice(["physical", "ict", "abstract"]),
                    domains=self.some(self.domain),
                    attributes=self.scalars(),
                )
            ),
            connections=self.some(
                lambda: Connection.model_validate(
                    {"id": self.identifier(), "from": self.identifier(), "to": self.identifier(), "domain": self.domain()}
                )
            ),
            functions=self.some(
                lambda: FunctionDef(id=self.identifier(), name=self.text(), actors=self.some(self.identifier))
            ),
        )

    def criteria(self) -> TestCriteria:
        return TestCriteria(
            target=self.some(
                lambda: TargetCriterion(
                    id=self.identifier(),
                    metric=self.identifier(),
                    description=self.text(),
                    combination=self.rng.choice([None, f"{self.identifier()}.{self.identifier()} * 2"]),
                )
            ),
            variability=self.some(
                lambda: VariabilityAttribute(
                    id=self.identifier(),
                    parameter=self.text(),
                    range=self.rng.choice([Range(lo=self.number(), hi=self.number()), self.some(self.scalar, 5)]),
                )
            ),
            quality=self.some(
                lambda: QualityAttribute(
                    id=self.identifier(),
                    target_ref=self.identifier(),
                    predicate=self.rng.choice(["lt", "le", "gt", "ge"]),
                    threshold=Threshold(value=self.number(), unit=self.text()),
                )
            ),
        )

    def scope(self) -> dict:
        return {
            "sut": SystemUnderTest(
                components=self.some(self.identifier), inputs=self.some(self.identifier), outputs=self.some(self.identifier)
            ),
            "oui": self.some(self.identifier),
            "doi": self.some(self.domain),
            "fut": self.some(self.identifier),
            "fui": self.some(self.identifier),
            "poi": PoI(kind=self.rng.choice(["characterization", "validation", "verification"]), statement=self.text()),
            "criteria": self.criteria(),
        }

    def test_case(self) -> HolisticTestCase:
        return HolisticTestCase(
            id=self.identifier(),
            narrative=self.text(),
            system_configuration=self.rng.choice([None, self.reference(), self.system_configuration()]),
            **self.scope(),
        )

    def subtest(self) -> SubTest:
        outputs = ScriptedOutputs(
            metrics=self.floats(),
            artifacts={
                self.identifier(): {self.identifier(): self.rng.choice([self.scalar(), self.some(self.scalar)])}
                for _ in range(self.rng.randint(0, 2))
            },
        )
        return SubTest(
            id=self.identifier(),
            parent=self.identifier(),
            narrative=self.text(),
            requirements=self.some(
                lambda: Requirement.model_validate(
                    {
                        "category": self.identifier(),
                        "class": self.identifier(),
                        "attribute_constraints": self.some(
                            lambda: AttributeConstraint(
                                attribute=self.text(),
                                predicate=self.rng.choice(["eq", "lt", "le", "gt", "ge", "in"]),
                                value=self.rng.choice([self.scalar(), self.some(self.scalar)]),
                            )
                        ),
                    }
                )
            ),
            interfaces=self.some(
                lambda: InterfacePort(
                    id=self.identifier(),
                    direction=self.rng.choice(["produces", "consumes"]),
                    artifact_type=self.identifier(),
                    peer=self.identifier(),
                    iterative=self.rng.random() < 0.5,
                    max_iterations=self.rng.choice([None, self.rng.randint(1, 9)]),
                )
            ),
            executor=ExecutorSpec(
                kind=self.rng.choice(["scripted", "model_ict_disturbance", "model_agc_tracking"]),
                params=self.scalars(),
                seed=self.rng.choice([None, self.rng.randrange(2**64)]),
                outputs=self.rng.choice([None, outputs]),
            ),
            **self.scope(),
        )

    def subtest_set(self) -> Decomposition:
        return Decomposition(
            id=self.identifier(),
            parent=self.identifier(),
            taxonomy=self.identifier(),
            subtests=self.some(self.subtest),
            combinations={self.identifier(): self.text() for _ in range(self.rng.randint(0, 2))},
        )

    def ri_profile(self) -> RIProfile:
        return RIProfile(
            id=self.identifier(),
            name=self.text(),
            capabilities=self.some(
                lambda: Capability.model_validate(
                    {"category": self.identifier(), "class": self.identifier(), "attributes": self.scalars()}
                )
            ),
            cost=self.rng.choice([self.rng.uniform(0, 1e4), 0.0, math.inf]),
        )

    def plan(self) -> MappingPlan:
        return MappingPlan.model_validate(
            {
                "id": self.identifier(),
                "test_case": self.rng.choice([None, self.reference(), self.test_case()]),
                "subtest_set": self.rng.choice([None, self.reference(), self.subtest_set()]),
                "objective": {"lambda": self.rng.uniform(0, 10)},
                "method": self.rng.choice(["exact", "greedy"]),
                "assignment": {self.identifier(): self.identifier() for _ in range(self.rng.randint(0, 4))},
                "total_cost": self.number(),
                "objective_value": self.number(),
                "dag": self.some(
                    lambda: PlanEdge(
                        producer=self.identifier(),
                        consumer=self.identifier(),
                        artifact_type=self.identifier(),
                        iterative=self.rng.random() < 0.5,
                        max_iterations=self.rng.choice([None, self.rng.randint(1, 9)]),
                    )
                ),
                "stages": self.some(lambda: self.some(self.identifier)),
                "iteration_groups": self.some(
                    lambda: IterationGroup(members=self.some(self.identifier), max_iterations=self.rng.randint(1, 9))
                ),
                "diagnostics": self.some(self.diagnostic),
            }
        )

    def verdict(self) -> HolisticVerdict:
        characterization = self.some(
            lambda: BoundarySummary(
                variability_id=self.identifier(),
                subtest_id=self.rng.choice([None, self.identifier()]),
                boundary=self.rng.choice([None, self.number()]),
            )
        )
        return HolisticVerdict(
            test_case=self.identifier(),
            poi=self.rng.choice(["characterization", "validation", "verification"]),
            values=self.floats(),
            unevaluable=self.some(self.identifier),
            quality={self.identifier(): self.rng.choice(["pass", "fail"]) for _ in range(self.rng.randint(0, 2))},
            overall=self.rng.choice([None, "pass", "fail"]),
            characterization=self.rng.choice([None, characterization]),
            provenance={self.identifier(): self.some(self.identifier) for _ in range(self.rng.randint(0, 2))},
            diagnostics=self.some(self.diagnostic),
        )

    def result_set(self) -> ResultSet:
        return ResultSet(
            id=self.identifier(),
            plan=self.text(),
            records=self.some(
                lambda: ResultRecord(
                    subtest_id=self.identifier(),
                    ri_id=self.text(),
                    status=self.rng.choice(["completed", "failed", "iteration_limit"]),
                    iteration=self.rng.randint(0, 9),
                    metrics=self.floats(),
                    artifacts={self.identifier(): self.text() for _ in range(self.rng.randint(0, 2))},
                    message=self.rng.choice([None, self.text()]),
                )
            ),
            characterizations=self.some(
                lambda: CharacterizationRecord(
                    subtest_id=self.identifier(),
                    variability_id=self.identifier(),
                    quality_id=self.identifier(),
                    mode=self.rng.choice(["grid", "bisection"]),
                    samples=self.some(
                        lambda: Sample(value=self.number(), metrics=self.floats(), quality_pass=self.rng.random() < 0.5)
                    ),
                    boundary=self.rng.choice([None, self.number()]),
                    diagnostics=self.some(self.diagnostic),
                )
            ),
            verdict=self.rng.choice([None, self.verdict()]),
        )

    def taxonomy(self) -> Taxonomy:
        return Taxonomy.model_validate(
            {
                "id": self.identifier(),
                "description": self.text(),
                "categories": [{"id": self.identifier(), "description": self.text()} for _ in range(self.rng.randint(0, 3))],
                "classes": [
                    {
                        "id": self.identifier(),
                        "category": self.identifier(),
                        "attribute_schema": {
                            self.identifier(): self.rng.choice(["numeric", "text", "bool"])
                            for _ in range(self.rng.randint(0, 3))
                        },
                    }
                    for _ in range(self.rng.randint(0, 4))
                ],
                "relations": [
                    {
                        "from": self.identifier(),
                        "to": self.identifier(),
                        "compatible": [[self.identifier(), self.identifier()] for _ in range(self.rng.randint(0, 2))],
                    }
                    for _ in range(self.rng.randint(0, 2))
                ],
            }
        )


@pytest.mark.parametrize("seed", range(1050))
def test__serialize__parse_is_identity_on_generated_documents(seed):
    kind = DocumentFactory.KINDS[seed % len(DocumentFactory.KINDS)]
    model = DocumentFactory(seed).build(kind)
    data = serialize(model)
    assert detect_kind(data) == kind
    assert parse(data, kind) == (model, [])
    assert serialize(parse(data, kind)[0]) == data


def test__serialize__rejects_nan():
    record = ResultRecord(subtest_id="st1", status="completed", metrics={"x": math.nan, "y": 1.0})
    with pytest.raises(DocumentError) as exc_info:
        serialize(ResultSet(id="run", records=(record,)))
    assert exc_info.value.diagnostics[0].path == "/records/0/metrics/x"
    assert b"Infinity" in serialize(ResultSet(id="run", records=(record.model_copy(update={"metrics": {"x": math.inf}}),)))
