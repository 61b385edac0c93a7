from pathlib import Path

import pytest

from ..harness import Workspace
from ..schemas import (
    Decomposition,
    ExecutorSpec,
    HolisticTestCase,
    InterfacePort,
    PoI,
    Requirement,
    RIProfile,
    ScriptedOutputs,
    SubTest,
    SystemConfiguration,
    SystemUnderTest,
    Taxonomy,
)
from ..specio import load_decomposition, load_or_raise, load_system_configuration, load_test_case
from ..taxonomy import load_default_taxonomy, load_taxonomy

FIXTURES = Path(__file__).resolve().parents[5] / "fixtures" / "agc"


@pytest.fixture(autouse=True)
def _fresh_taxonomy_cache():
    load_taxonomy.cache_clear()
    yield
    load_taxonomy.cache_clear()


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture
def sc() -> SystemConfiguration:
    return load_system_configuration(FIXTURES / "system_configuration.holo.json")


@pytest.fixture
def test_case() -> HolisticTestCase:
    return load_test_case(FIXTURES / "test_case.holo.json")


@pytest.fixture
def decomposition() -> Decomposition:
    return load_decomposition(FIXTURES / "subtests.holo.json")


@pytest.fixture
def profiles() -> list[RIProfile]:
    found = []
    for name in ("lab_A", "lab_B"):
        profile = load_or_raise(FIXTURES / f"{name}.holo.json", "ri_profile")
        assert isinstance(profile, RIProfile)
        found.append(profile)
    return found


@pytest.fixture
def taxonomy() -> Taxonomy:
    return load_default_taxonomy()


@pytest.fixture
def workspace(tmp_path) -> Workspace:
    return Workspace(tmp_path / "ws", "agc_split_plan")


def port(port_id: str, direction: str, artifact_type: str, peer: str, max_iterations: int | None = None) -> InterfacePort:
    return InterfacePort(
        id=port_id,
        direction=direction,
        artifact_type=artifact_type,
        peer=peer,
        iterative=max_iterations is not None,
        max_iterations=max_iterations,
    )


def scripted_subtest(
    subtest_id: str,
    *,
    parent: str = "tc",
    components: tuple[str, ...] = ("a",),
    metrics: dict[str, float] | None = None,
    artifacts: dict | None = None,
    interfaces: tuple[InterfacePort, ...] = (),
    requirements: tuple[Requirement, ...] = (),
    params: dict | None = None,
) -> SubTest:
    """A minimal sub-test replaying ``metrics`` and ``artifacts``."""
    metrics = metrics or {}
    produced = {p.artifact_type for p in interfaces if p.direction == "produces"}
    return SubTest.model_validate(
        {
            "id": subtest_id,
            "parent": parent,
            "sut": SystemUnderTest(components=components),
            "oui": components[:1],
            "doi": ("electric_power",),
            "fut": ("f",),
            "fui": ("f",),
            "poi": PoI(kind="validation"),
            "criteria": {"target": [{"id": f"t_{m}", "metric": m} for m in metrics]},
            "requirements": requirements,
            "interfaces": interfaces,
            "executor": ExecutorSpec(
                kind="scripted",
                params=params or {},
                outputs=ScriptedOutputs(
                    metrics=metrics,
                    artifacts=artifacts if artifacts is not None else {t: {"value": 1} for t in produced},
                ),
            ),
        }
    )
