"""
Structural validation of system configurations, holistic test cases and sub-tests.

Validators never raise: every violation found in one pass is returned as a
``Diagnostic`` so authors can fix a document in a single round trip.
"""

from collections.abc import Iterable, Sequence

import structlog
from django.conf import settings

from .diagnostics import Diagnostic, duplicates, error, join_path, warning
from .exceptions import PathUnresolved
from .executors import check_executor
from .schemas import (
    Decomposition,
    HolisticTestCase,
    Range,
    SignalHandle,
    SubTest,
    SystemConfiguration,
)

log = structlog.get_logger(__name__)

SEEDED_DOMAINS = frozenset({"electric_power", "ict", "thermal", "market"})


def known_domains() -> frozenset[str]:
    return SEEDED_DOMAINS | frozenset(getattr(settings, "HOLOTEST_EXTRA_DOMAINS", ()))


def _duplicate_ids(values: Sequence[str], *path: str | int, what: str) -> list[Diagnostic]:
    return [
        error("E_DUPLICATE_ID", join_path(*path, index), f"duplicate {what} id {value!r}")
        for index, value in duplicates(values)
    ]


def validate_system_configuration(sc: SystemConfiguration) -> list[Diagnostic]:
    diagnostics: list[Diagnostic] = []
    domains = known_domains()

    diagnostics += _duplicate_ids([c.id for c in sc.components], "components", what="component")
    diagnostics += _duplicate_ids([c.id for c in sc.connections], "connections", what="connection")
    diagnostics += _duplicate_ids([f.id for f in sc.functions], "functions", what="function")

    components = {}
    for index, component in enumerate(sc.components):
        components.setdefault(component.id, component)
        path = join_path("components", index, "domains")
        if not component.domains:
            diagnostics.append(error("E_EMPTY_DOMAINS", path, f"component {component.id!r} has no domains"))
        for tag in component.domains:
            if tag not in domains:
                diagnostics.append(
                    warning("W_UNKNOWN_DOMAIN", path, f"component {component.id!r} uses unregistered domain {tag!r}")
                )

    for index, connection in enumerate(sc.connections):
        if connection.domain not in domains:
            diagnostics.append(
                warning(
                    "W_UNKNOWN_DOMAIN",
                    join_path("connections", index, "domain"),
                    f"connection {connection.id!r} uses unregistered domain {connection.domain!r}",
                )
            )
        for field, endpoint in (("from", connection.from_), ("to", connection.to)):
            path = join_path("connections", index, field)
            if endpoint not in components:
                diagnostics.append(
                    error("E_REF", path, f"connection {connection.id!r} references unknown component {endpoint!r}")
                )
            elif connection.domain not in components[endpoint].domains:
                diagnostics.append(
                    error(
                        "E_DOMAIN_MISMATCH",
                        path,
                        f"connection {connection.id!r} domain {connection.domain!r} "
                        f"is not a domain of component {endpoint!r}",
                    )
                )

    for index, function in enumerate(sc.functions):
        path = join_path("functions", index, "actors")
        if not function.actors:
            diagnostics.append(error("E_EMPTY_ACTORS", path, f"function {function.id!r} has no actors"))
        diagnostics += _duplicate_ids(function.actors, "functions", index, "actors", what="actor")
        for actor_index, actor in enumerate(function.actors):
            if actor not in components:
                diagnostics.append(
                    error(
                        "E_REF",
                        join_path("functions", index, "actors", actor_index),
                        f"function {function.id!r} references unknown component {actor!r}",
                    )
                )

    return diagnostics


def _not_in(
    values: Iterable[str], allowed: Iterable[str], code: str, *path: str | int, message: str
) -> list[Diagnostic]:
    allowed = set(allowed)
    return [
        error(code, join_path(*path, index), message.format(value=value))
        for index, value in enumerate(values)
        if value not in allowed
    ]


def _check_scope(item: HolisticTestCase | SubTest, sc: SystemConfiguration | None) -> list[Diagnostic]:
    """Checks shared by holistic test cases and sub-tests."""
    diagnostics: list[Diagnostic] = []
    sut = item.sut.components

    for field, values in (
        ("sut/components", sut),
        ("oui", item.oui),
        ("doi", item.doi),
        ("fut", item.fut),
        ("fui", item.fui),
    ):
        if not values:
            diagnostics.append(error("E_EMPTY_SET", "/" + field, f"{field} must not be empty"))
        diagnostics += _duplicate_ids(values, *field.split("/"), what=field.split("/")[0])
    diagnostics += _duplicate_ids(item.sut.inputs, "sut", "inputs", what="input signal")
    diagnostics += _duplicate_ids(item.sut.outputs, "sut", "outputs", what="output signal")

    diagnostics += _not_in(item.oui, sut, "E_OUI_NOT_IN_SUT", "oui", message="{value!r} is not part of the SuT")
    diagnostics += _not_in(item.fui, item.fut, "E_FUI_NOT_IN_FUT", "fui", message="{value!r} is not listed in fut")

    domains = known_domains()
    for index, tag in enumerate(item.doi):
        if tag not in domains:
            diagnostics.append(warning("W_UNKNOWN_DOMAIN", join_path("doi", index), f"unregistered domain {tag!r}"))

    criteria = item.criteria
    diagnostics += _duplicate_ids([t.id for t in criteria.target], "criteria", "target", what="target")
    diagnostics += _duplicate_ids([v.id for v in criteria.variability], "criteria", "variability", what="variability")
    diagnostics += _duplicate_ids([q.id for q in criteria.quality], "criteria", "quality", what="quality")
    target_ids = {t.id for t in criteria.target}
    for index, quality in enumerate(criteria.quality):
        if quality.target_ref not in target_ids:
            diagnostics.append(
                error(
                    "E_QUALITY_REF",
                    join_path("criteria", "quality", index, "target_ref"),
                    f"quality {quality.id!r} references unknown target {quality.target_ref!r}",
                )
            )
    for index, variability in enumerate(criteria.variability):
        path = join_path("criteria", "variability", index)
        if isinstance(variability.range, Range):
            if variability.range.lo > variability.range.hi:
                diagnostics.append(error("E_RANGE", path + "/range", f"variability {variability.id!r} has lo > hi"))
        elif not variability.range:
            diagnostics.append(error("E_RANGE", path + "/range", f"variability {variability.id!r} has no values"))
        if sc is not None:
            try:
                signal_resolve_in(sc, variability.parameter)
            except PathUnresolved as exc:
                diagnostics.append(error("E_PATH_UNRESOLVED", path + "/parameter", str(exc)))

    if sc is None:
        return diagnostics

    component_ids = {c.id for c in sc.components}
    diagnostics += _not_in(
        sut,
        component_ids,
        "E_SUT_NOT_IN_SC",
        "sut",
        "components",
        message="{value!r} is not a component of the system configuration",
    )

    sut_domains = {tag for c in sc.components if c.id in sut for tag in c.domains}
    for index, tag in enumerate(item.doi):
        if tag not in sut_domains:
            diagnostics.append(error("E_DOI_UNUSED", join_path("doi", index), f"no SuT component carries {tag!r}"))

    functions = {f.id: f for f in sc.functions}
    for index, function_id in enumerate(item.fut):
        path = join_path("fut", index)
        if function_id not in functions:
            diagnostics.append(error("E_REF", path, f"unknown function {function_id!r}"))
        elif not set(functions[function_id].actors) & set(sut):
            diagnostics.append(
                error("E_FUT_OUTSIDE_SUT", path, f"no actor of function {function_id!r} is part of the SuT")
            )

    return diagnostics


def validate_test_case(tc: HolisticTestCase, sc: SystemConfiguration | None = None) -> list[Diagnostic]:
    sc = sc or tc.sc
    diagnostics: list[Diagnostic] = []
    if sc is None:
        diagnostics.append(error("E_REF", "/system_configuration", "system configuration is not available"))
    elif tc.sc is not None and tc.sc.id != sc.id:
        diagnostics.append(error("E_REF", "/system_configuration", f"inline configuration is not {sc.id!r}"))

    diagnostics += _check_scope(tc, sc)

    if not tc.narrative.strip():
        diagnostics.append(warning("W_EMPTY_NARRATIVE", "/narrative", "narrative is empty"))
    if tc.poi.kind == "characterization" and not tc.criteria.variability:
        diagnostics.append(
            warning("W_NO_VARIABILITY", "/criteria/variability", "characterization without variability attributes")
        )
    if tc.poi.kind != "characterization" and not tc.criteria.quality:
        diagnostics.append(
            warning("W_NO_QUALITY", "/criteria/quality", f"{tc.poi.kind} without quality attributes")
        )
    log.debug("test case validated", test_case=tc.id, diagnostics=len(diagnostics))
    return diagnostics


def validate_subtest(st: SubTest, tc: HolisticTestCase, sc: SystemConfiguration | None = None) -> list[Diagnostic]:
    sc = sc or tc.sc
    diagnostics: list[Diagnostic] = []
    if st.parent != tc.id:
        diagnostics.append(error("E_REF", "/parent", f"parent {st.parent!r} is not test case {tc.id!r}"))

    diagnostics += _check_scope(st, sc)
    diagnostics += _not_in(
        st.sut.components,
        tc.sut.components,
        "E_SUT_NOT_IN_PARENT",
        "sut",
        "components",
        message="{value!r} is not part of the parent SuT",
    )

    diagnostics += _duplicate_ids([port.id for port in st.interfaces], "interfaces", what="port")
    for index, port in enumerate(st.interfaces):
        path = join_path("interfaces", index)
        if port.iterative and port.max_iterations is None:
            diagnostics.append(error("E_PORT", path, f"iterative port {port.id!r} needs max_iterations"))
        if not port.iterative and port.max_iterations is not None:
            diagnostics.append(error("E_PORT", path, f"port {port.id!r} sets max_iterations but is not iterative"))
        if port.peer == st.id:
            diagnostics.append(error("E_PORT", path, f"port {port.id!r} names its own sub-test as peer"))

    for message in check_executor(st.executor, st):
        diagnostics.append(error("E_EXECUTOR", "/executor", message))
    return diagnostics


def signal_resolve_in(sc: SystemConfiguration, path: str) -> SignalHandle:
    owner, _, name = path.partition(".")
    if not owner or not name:
        raise PathUnresolved(f"path {path!r} is not of the form owner.name", path=path)
    if (component := sc.component(owner)) is not None:
        if name in component.attributes:
            return SignalHandle(kind="attribute", owner=owner, name=name, value=component.attributes[name])
        raise PathUnresolved(f"component {owner!r} has no attribute {name!r}", path=path)
    if (connection := sc.connection(owner)) is not None:
        if name in connection.attributes:
            return SignalHandle(kind="attribute", owner=owner, name=name, value=connection.attributes[name])
        raise PathUnresolved(f"connection {owner!r} has no attribute {name!r}", path=path)
    raise PathUnresolved(f"{owner!r} is neither a component nor a connection", path=path)


def signal_resolve(
    tc: HolisticTestCase,
    path: str,
    decomposition: Decomposition | None = None,
    *,
    sc: SystemConfiguration | None = None,
) -> SignalHandle:
    """
    Resolve a dotted path to a typed handle.

    Accepted forms are ``component.attribute``, ``connection.attribute``,
    ``subtest.metric`` (when a decomposition is given) and the SuT boundary
    signals ``sut.inputs.<id>`` / ``sut.outputs.<id>``.
    """
    owner, _, name = path.partition(".")
    if not owner or not name:
        raise PathUnresolved(f"path {path!r} is not of the form owner.name", path=path)

    if owner == "sut":
        direction, _, signal = name.partition(".")
        signals = {"inputs": tc.sut.inputs, "outputs": tc.sut.outputs}.get(direction, ())
        if signal in signals:
            return SignalHandle(kind="signal", owner=f"sut.{direction}", name=signal)
        raise PathUnresolved(f"{path!r} is not a SuT boundary signal", path=path)

    if decomposition is not None and (subtest := decomposition.subtest(owner)) is not None:
        if name in subtest.criteria.metrics:
            return SignalHandle(kind="metric", owner=owner, name=name)
        raise PathUnresolved(f"sub-test {owner!r} declares no metric {name!r}", path=path)

    sc = sc or tc.sc
    if sc is None:
        raise PathUnresolved(f"cannot resolve {path!r} without a system configuration", path=path)
    return signal_resolve_in(sc, path)
