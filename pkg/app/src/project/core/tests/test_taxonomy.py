import json
import random

import pytest

from ..diagnostics import codes
from ..exceptions import DocumentError, TaxonomyMismatch
from ..schemas import AttributeConstraint, Capability, CategoryRelation, Requirement, RIProfile
from ..specio import serialize
from ..taxonomy import (
    SEEDED_CATEGORIES,
    check_profile,
    check_requirements,
    check_taxonomy,
    consistent_test,
    holds,
    load_taxonomy,
    matches,
)


def requirement(category: str, class_id: str, *constraints: tuple[str, str, object]) -> Requirement:
    return Requirement(
        category=category,
        class_=class_id,
        attribute_constraints=tuple(
            AttributeConstraint(attribute=a, predicate=p, value=v) for a, p, v in constraints
        ),
    )


def test__default_taxonomy__is_consistent(taxonomy):
    assert check_taxonomy(taxonomy) == []
    assert [c.id for c in taxonomy.categories] == list(SEEDED_CATEGORIES)
    criteria = sorted(c.id for c in taxonomy.classes if c.category == "test_criteria")
    assert criteria == ["conformance_metric", "sweep_metric", "threshold_metric"]


def test__shipped_fixture_taxonomy__matches_default(fixture_dir, taxonomy):
    assert load_taxonomy(str(fixture_dir / "taxonomy.holo.json")) == taxonomy


def test__check_taxonomy__cycle(taxonomy):
    back = CategoryRelation(from_="test_criteria", to="purpose_of_investigation")
    assert "E_CYCLE" in codes(check_taxonomy(taxonomy.model_copy(update={"relations": (*taxonomy.relations, back)})))


def test__check_taxonomy__bad_references(taxonomy):
    relation = CategoryRelation(
        from_="purpose_of_investigation", to="test_design", compatible=(("characterization", "sweep_metric"),)
    )
    categories = tuple(c for c in taxonomy.categories if c.id != "interfaces")
    found = check_taxonomy(taxonomy.model_copy(update={"relations": (relation,), "categories": categories}))
    assert codes(found).count("E_REF") == 4  # 3 interface classes and one foreign pair member
    assert "W_MISSING_CATEGORY" in codes(found)


def test__check_taxonomy__duplicates(taxonomy):
    found = check_taxonomy(taxonomy.model_copy(update={"classes": (*taxonomy.classes, taxonomy.classes[0])}))
    assert codes(found) == ["E_DUPLICATE_ID"]


def test__load_taxonomy__environment_override(tmp_path, settings, taxonomy):
    path = tmp_path / "tiny.holo.json"
    path.write_bytes(serialize(taxonomy.model_copy(update={"id": "tiny"})))
    settings.HOLOTEST_TAXONOMY = str(path)
    load_taxonomy.cache_clear()
    assert load_taxonomy().id == "tiny"
    assert load_taxonomy(str(path)).id == "tiny"


def test__load_taxonomy__invalid(tmp_path):
    path = tmp_path / "broken.holo.json"
    path.write_text(json.dumps({"kind": "taxonomy", "id": "x", "classes": [{"id": "a"}]}))
    with pytest.raises(DocumentError):
        load_taxonomy(str(path))


def test__matches__fixture_profiles(decomposition, profiles):
    lab_a, lab_b = profiles
    st1, st2 = decomposition.subtests
    physical = st1.requirements[0]
    assert matches(lab_a, physical).satisfied
    result = matches(lab_b, physical)
    assert not result.satisfied
    assert result.explanation == ["class physical_lab absent"]
    assert matches(lab_b, st2.requirements[0]).explanation == ["max_nodes ge 500: pass (actual 1000)"]


def test__matches__constraint_failure_explained():
    profile = RIProfile(
        id="lab_C",
        cost=1,
        capabilities=(Capability(category="test_setup", class_="power_hil", attributes={"max_power_kw": 50}),),
    )
    result = matches(profile, requirement("test_setup", "power_hil", ("max_power_kw", "ge", 100), ("real_time", "eq", True)))
    assert not result.satisfied
    assert result.explanation == [
        "max_power_kw ge 100: fail (actual 50)",
        "real_time eq True: fail (actual missing)",
    ]
    assert matches(profile, requirement("test_setup", "power_hil")).explanation == ["class power_hil present"]


def test__matches__any_capability_may_satisfy():
    profile = RIProfile(
        id="lab_D",
        cost=1,
        capabilities=(
            Capability(category="test_setup", class_="pure_simulation", attributes={"max_nodes": 10}),
            Capability(category="test_setup", class_="pure_simulation", attributes={"max_nodes": 10_000}),
        ),
    )
    result = matches(profile, requirement("test_setup", "pure_simulation", ("max_nodes", "gt", 5000)))
    assert result.satisfied
    assert result.explanation == ["max_nodes gt 5000: pass (actual 10000)"]


def test__matches__taxonomy_mismatch(profiles):
    with pytest.raises(TaxonomyMismatch):
        matches(profiles[0], requirement("test_setup", "physical_lab"), taxonomy_id="other_taxonomy")


@pytest.mark.parametrize(
    "actual,predicate,value,expected",
    [
        (5, "lt", 6, True),
        (6, "lt", 6, False),
        (6, "le", 6, True),
        (7, "gt", 6, True),
        (6, "ge", 6, True),
        ("sim", "eq", "sim", True),
        (True, "eq", 1, False),
        (1, "eq", True, False),
        ("b", "in", ("a", "b"), True),
        ("c", "in", ("a", "b"), False),
        ("5", "lt", 6, False),
        (None, "eq", 1, False),
    ],
)
def test__holds(actual, predicate, value, expected):
    assert holds(actual, AttributeConstraint(attribute="x", predicate=predicate, value=value)) is expected


@pytest.mark.parametrize("seed", range(100))
def test__matches__agrees_with_per_constraint_check(seed):
    rng = random.Random(seed)
    capabilities = tuple(
        Capability(category="test_setup", class_="pure_simulation", attributes={"max_nodes": rng.randint(0, 20)})
        for _ in range(rng.randint(0, 3))
    )
    profile = RIProfile(id="lab", cost=1, capabilities=capabilities)
    constraints = [("max_nodes", rng.choice(["lt", "le", "gt", "ge", "eq"]), rng.randint(0, 20)) for _ in range(2)]
    req = requirement("test_setup", "pure_simulation", *constraints)
    expected = any(all(holds(c.attributes.get("max_nodes"), k) for k in req.attribute_constraints) for c in capabilities)
    assert matches(profile, req).satisfied is expected


def test__check_requirements(taxonomy):
    reqs = [
        requirement("test_setup", "physical_lab", ("has_ict_emulation", "eq", True)),
        requirement("test_setup", "teleporter"),
        requirement("test_setup", "physical_lab", ("max_power_kw", "ge", "lots")),
        requirement("test_setup", "physical_lab", ("colour", "eq", "red")),
        requirement("interfaces", "time_series", ("resolution_s", "in", (1, 0.1))),
    ]
    found = check_requirements(reqs, taxonomy, "requirements")
    assert [(d.code, d.path) for d in found] == [
        ("E_REF", "/requirements/1"),
        ("E_SCHEMA", "/requirements/2/attribute_constraints/0"),
        ("E_REF", "/requirements/3/attribute_constraints/0"),
    ]


def test__check_profile(profiles, taxonomy):
    for profile in profiles:
        assert check_profile(profile, taxonomy) == []
    wrong = profiles[1].model_copy(
        update={"capabilities": (Capability(category="test_setup", class_="controller_hil", attributes={"max_nodes": "many"}),)}
    )
    assert codes(check_profile(wrong, taxonomy)) == ["E_SCHEMA"]
    assert codes(check_profile(profiles[0].model_copy(update={"taxonomy": "other"}), taxonomy)) == ["E_TAXONOMY_MISMATCH"]


def test__consistent_test(taxonomy):
    ok = [requirement("purpose_of_investigation", "characterization"), requirement("test_criteria", "sweep_metric")]
    assert consistent_test(ok, taxonomy.relations) == []
    clash = [requirement("purpose_of_investigation", "verification"), requirement("test_criteria", "sweep_metric")]
    [diagnostic] = consistent_test(clash, taxonomy.relations)
    assert diagnostic.code == "E_INCOMPATIBLE"
    assert "verification" in diagnostic.message and "sweep_metric" in diagnostic.message
