import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import networkx as nx
import structlog
from django.conf import settings

from .diagnostics import Diagnostic, duplicates, error, join_path, warning
from .exceptions import TaxonomyMismatch
from .schemas import (
    AttributeConstraint,
    Capability,
    CategoryRelation,
    Requirement,
    RIProfile,
    Scalar,
    Taxonomy,
)
from .specio import load_or_raise

log = structlog.get_logger(__name__)

SEEDED_CATEGORIES = (
    "purpose_of_investigation",
    "test_setup",
    "test_criteria",
    "test_design",
    "object_of_investigation",
    "interfaces",
)


@dataclass(frozen=True)
class MatchResult:
    satisfied: bool
    explanation: list[str] = field(default_factory=list)


def _is_number(value: object) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool)


def _fits(value: Scalar, attribute_type: str) -> bool:
    match attribute_type:
        case "numeric":
            return _is_number(value)
        case "bool":
            return isinstance(value, bool)
        case _:
            return isinstance(value, str)


def check_taxonomy(tax: Taxonomy) -> list[Diagnostic]:
    diagnostics: list[Diagnostic] = []
    category_ids = [c.id for c in tax.categories]
    diagnostics += [
        error("E_DUPLICATE_ID", join_path("categories", index), f"duplicate category {value!r}")
        for index, value in duplicates(category_ids)
    ]
    for category in SEEDED_CATEGORIES:
        if category not in category_ids:
            diagnostics.append(warning("W_MISSING_CATEGORY", "/categories", f"seeded category {category!r} is missing"))

    keys = [f"{c.category}/{c.id}" for c in tax.classes]
    diagnostics += [
        error("E_DUPLICATE_ID", join_path("classes", index), f"duplicate class {value!r}")
        for index, value in duplicates(keys)
    ]
    for index, taxonomy_class in enumerate(tax.classes):
        if taxonomy_class.category not in category_ids:
            diagnostics.append(
                error(
                    "E_REF",
                    join_path("classes", index, "category"),
                    f"class {taxonomy_class.id!r} belongs to unknown category {taxonomy_class.category!r}",
                )
            )

    graph = nx.DiGraph()
    graph.add_nodes_from(category_ids)
    relation_keys = [f"{r.from_}->{r.to}" for r in tax.relations]
    diagnostics += [
        error("E_DUPLICATE_ID", join_path("relations", index), f"duplicate relation {value!r}")
        for index, value in duplicates(relation_keys)
    ]
    for index, relation in enumerate(tax.relations):
        path = join_path("relations", index)
        for end, category in (("from", relation.from_), ("to", relation.to)):
            if category not in category_ids:
                diagnostics.append(error("E_REF", f"{path}/{end}", f"unknown category {category!r}"))
        graph.add_edge(relation.from_, relation.to)
        for pair_index, (a, b) in enumerate(relation.compatible):
            pair_path = join_path("relations", index, "compatible", pair_index)
            if tax.taxonomy_class(relation.from_, a) is None:
                diagnostics.append(error("E_REF", pair_path, f"{a!r} is not a class of {relation.from_!r}"))
            if tax.taxonomy_class(relation.to, b) is None:
                diagnostics.append(error("E_REF", pair_path, f"{b!r} is not a class of {relation.to!r}"))

    for cycle in sorted(sorted(c) for c in nx.simple_cycles(graph)):
        diagnostics.append(error("E_CYCLE", "/relations", f"category relations form a cycle over {cycle}"))
    return diagnostics


def _check_attribute(
    tax: Taxonomy, category: str, class_id: str, attribute: str, values: Sequence[Scalar], path: str
) -> list[Diagnostic]:
    taxonomy_class = tax.taxonomy_class(category, class_id)
    if taxonomy_class is None:
        return []
    attribute_type = taxonomy_class.attribute_schema.get(attribute)
    if attribute_type is None:
        return [error("E_REF", path, f"class {class_id!r} has no attribute {attribute!r}")]
    return [
        error("E_SCHEMA", path, f"attribute {attribute!r} expects a {attribute_type} value, got {value!r}")
        for value in values
        if not _fits(value, attribute_type)
    ]


def _check_constraint(
    tax: Taxonomy, req: Requirement, constraint: AttributeConstraint, path: str
) -> list[Diagnostic]:
    if constraint.predicate == "in":
        if not isinstance(constraint.value, tuple):
            return [error("E_SCHEMA", path, "predicate 'in' expects a list of values")]
        values = list(constraint.value)
    elif isinstance(constraint.value, tuple):
        return [error("E_SCHEMA", path, f"predicate {constraint.predicate!r} expects a single value")]
    else:
        values = [constraint.value]
    if constraint.predicate in ("lt", "le", "gt", "ge") and not _is_number(constraint.value):
        return [error("E_SCHEMA", path, f"predicate {constraint.predicate!r} needs a numeric value")]
    return _check_attribute(tax, req.category, req.class_, constraint.attribute, values, path)


def check_requirements(reqs: Sequence[Requirement], tax: Taxonomy, *path: str | int) -> list[Diagnostic]:
    diagnostics = []
    for index, req in enumerate(reqs):
        req_path = join_path(*path, index)
        if tax.taxonomy_class(req.category, req.class_) is None:
            diagnostics.append(
                error("E_REF", req_path, f"class {req.class_!r} does not belong to category {req.category!r}")
            )
            continue
        for constraint_index, constraint in enumerate(req.attribute_constraints):
            constraint_path = join_path(*path, index, "attribute_constraints", constraint_index)
            diagnostics += _check_constraint(tax, req, constraint, constraint_path)
    return diagnostics


def check_profile(profile: RIProfile, tax: Taxonomy) -> list[Diagnostic]:
    diagnostics = []
    if profile.taxonomy != tax.id:
        diagnostics.append(
            error("E_TAXONOMY_MISMATCH", "/taxonomy", f"profile uses taxonomy {profile.taxonomy!r}, not {tax.id!r}")
        )
        return diagnostics
    for index, capability in enumerate(profile.capabilities):
        path = join_path("capabilities", index)
        if tax.taxonomy_class(capability.category, capability.class_) is None:
            diagnostics.append(
                error("E_REF", path, f"class {capability.class_!r} does not belong to {capability.category!r}")
            )
            continue
        for attribute, value in capability.attributes.items():
            diagnostics += _check_attribute(
                tax, capability.category, capability.class_, attribute, [value], f"{path}/attributes/{attribute}"
            )
    return diagnostics


def _same(actual: Scalar, expected: Scalar) -> bool:
    return isinstance(actual, bool) == isinstance(expected, bool) and actual == expected


def holds(actual: Scalar | None, constraint: AttributeConstraint) -> bool:
    if actual is None:
        return False
    value = constraint.value
    match constraint.predicate:
        case "eq":
            return not isinstance(value, tuple) and _same(actual, value)
        case "in":
            return isinstance(value, tuple) and any(_same(actual, option) for option in value)
    if not (_is_number(actual) and _is_number(value)):
        return False
    assert isinstance(actual, int | float) and isinstance(value, int | float)
    match constraint.predicate:
        case "lt":
            return actual < value
        case "le":
            return actual <= value
        case "gt":
            return actual > value
    return actual >= value


def _explain(capability: Capability, constraint: AttributeConstraint) -> tuple[bool, str]:
    actual = capability.attributes.get(constraint.attribute)
    outcome = holds(actual, constraint)
    shown = "missing" if actual is None else repr(actual)
    return outcome, (
        f"{constraint.attribute} {constraint.predicate} {constraint.value!r}: "
        f"{'pass' if outcome else 'fail'} (actual {shown})"
    )


def _canonical(capability: Capability) -> str:
    return json.dumps(capability.attributes, sort_keys=True)


def matches(profile: RIProfile, req: Requirement, *, taxonomy_id: str | None = None) -> MatchResult:
    if taxonomy_id is not None and profile.taxonomy != taxonomy_id:
        raise TaxonomyMismatch(f"profile {profile.id!r} uses taxonomy {profile.taxonomy!r}, not {taxonomy_id!r}")

    candidates = sorted(
        (c for c in profile.capabilities if (c.category, c.class_) == (req.category, req.class_)),
        key=_canonical,
    )
    if not candidates:
        return MatchResult(False, [f"class {req.class_} absent"])
    if not req.attribute_constraints:
        return MatchResult(True, [f"class {req.class_} present"])

    reports = []
    for candidate in candidates:
        results = [_explain(candidate, constraint) for constraint in req.attribute_constraints]
        if all(outcome for outcome, _ in results):
            return MatchResult(True, [line for _, line in results])
        reports.append(results)
    return MatchResult(False, [line for _, line in reports[0]])


def consistent_test(reqs: Sequence[Requirement], relations: Sequence[CategoryRelation]) -> list[Diagnostic]:
    classes: dict[str, set[str]] = {}
    for req in reqs:
        classes.setdefault(req.category, set()).add(req.class_)

    diagnostics = []
    for index, relation in enumerate(relations):
        compatible = set(relation.compatible)
        for a in sorted(classes.get(relation.from_, ())):
            for b in sorted(classes.get(relation.to, ())):
                if (a, b) not in compatible:
                    diagnostics.append(
                        error(
                            "E_INCOMPATIBLE",
                            join_path("relations", index),
                            f"{relation.from_}={a} cannot be combined with {relation.to}={b}",
                        )
                    )
    return diagnostics


@lru_cache
def load_taxonomy(path: str | None = None) -> Taxonomy:
    """Taxonomy from ``path``, else ``HOLOTEST_TAXONOMY``, else the shipped default."""
    source = Path(path or settings.HOLOTEST_TAXONOMY or settings.HOLOTEST_DEFAULT_TAXONOMY)
    taxonomy = load_or_raise(source, "taxonomy")
    assert isinstance(taxonomy, Taxonomy)
    log.debug("taxonomy loaded", taxonomy=taxonomy.id, source=str(source))
    return taxonomy


def load_default_taxonomy() -> Taxonomy:
    return load_taxonomy(str(settings.HOLOTEST_DEFAULT_TAXONOMY))
