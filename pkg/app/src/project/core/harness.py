"""
Sub-test execution, artifact exchange and characterization sweeps.

Workspace layout::

    <workspace>/<plan-id>/plan.holo.json
    <workspace>/<plan-id>/external/<artifact_type>.holo.json
    <workspace>/<plan-id>/<subtest-id>/<iteration>/artifacts/<artifact_type>.holo.json
    <workspace>/<plan-id>/<subtest-id>/<iteration>/result.holo.json
    <workspace>/<plan-id>/<subtest-id>/sweep-<variability-id>.holo.json
    <workspace>/<plan-id>/verdict.holo.json

``run_plan`` clears the directories of its sub-tests and the verdict first, so the
latest record of a sub-test always comes from the most recent run.
"""

import shutil
import threading
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import structlog
from structlog.contextvars import bound_contextvars

from . import specio
from .combiner import predicate_holds
from .diagnostics import Diagnostic, warning
from .exceptions import ExecutorError, HolotestError, MissingArtifact, NonNumericRange, PathUnresolved
from .executors import check_executor, execute
from .mapping import check_plan
from .schemas import (
    EXTERNAL_PEER,
    Artifact,
    CharacterizationRecord,
    Decomposition,
    MappingPlan,
    Range,
    ResultRecord,
    ResultSet,
    Sample,
    Schema,
    SubTest,
    SweepRequest,
)

log = structlog.get_logger(__name__)

SCAN_POINTS = 8


class Workspace:
    """Artifact and result store of one plan; writes are serialized."""

    def __init__(self, root: str | Path, plan_id: str):
        self.root = Path(root)
        self.plan_id = plan_id
        self._lock = threading.Lock()

    @property
    def plan_dir(self) -> Path:
        return self.root / self.plan_id

    def iteration_dir(self, subtest_id: str, iteration: int) -> Path:
        return self.plan_dir / subtest_id / str(iteration)

    def artifact_path(self, subtest_id: str, iteration: int, artifact_type: str) -> Path:
        return self.iteration_dir(subtest_id, iteration) / "artifacts" / f"{artifact_type}{specio.SUFFIX}"

    def sweep_path(self, subtest_id: str, variability_id: str) -> Path:
        return self.plan_dir / subtest_id / f"sweep-{variability_id}{specio.SUFFIX}"

    @property
    def verdict_path(self) -> Path:
        return self.plan_dir / f"verdict{specio.SUFFIX}"

    @property
    def plan_path(self) -> Path:
        return self.plan_dir / f"plan{specio.SUFFIX}"

    def reset(self, subtest_ids: Iterable[str]) -> None:
        """Drop earlier records, artifacts and sweeps of ``subtest_ids`` and the verdict built on them."""
        with self._lock:
            for subtest_id in subtest_ids:
                if (directory := self.plan_dir / subtest_id).is_dir():
                    log.debug("clearing earlier run", subtest=subtest_id)
                    shutil.rmtree(directory)
            self.verdict_path.unlink(missing_ok=True)

    def write(self, model: Schema, path: Path) -> Path:
        with self._lock:
            return specio.dump(model, path)

    def write_artifact(self, artifact: Artifact) -> str:
        path = self.artifact_path(artifact.producer, artifact.iteration, artifact.artifact_type)
        self.write(artifact, path)
        return path.relative_to(self.plan_dir).as_posix()

    def write_record(self, record: ResultRecord) -> Path:
        result = ResultSet(id=f"{record.subtest_id}_result", plan=self.plan_id, records=(record,))
        return self.write(result, self.iteration_dir(record.subtest_id, record.iteration) / f"result{specio.SUFFIX}")

    def read_artifact(self, relative: str) -> Artifact:
        path = self.plan_dir / relative
        if not path.is_file():
            raise MissingArtifact(f"artifact file {relative} is missing")
        return Artifact.model_validate_json(path.read_bytes())

    def external_artifact(self, artifact_type: str) -> Artifact:
        return self.read_artifact(f"external/{artifact_type}{specio.SUFFIX}")

    def latest_record(self, subtest_id: str) -> ResultRecord | None:
        directory = self.plan_dir / subtest_id
        if not directory.is_dir():
            return None
        iterations = sorted(int(p.name) for p in directory.iterdir() if p.is_dir() and p.name.isdigit())
        for iteration in reversed(iterations):
            path = directory / str(iteration) / f"result{specio.SUFFIX}"
            if path.is_file():
                result = specio.load_or_raise(path, "result_set")
                assert isinstance(result, ResultSet)
                return result.records[0]
        return None

    def records(self, subtest_ids: Iterable[str]) -> list[ResultRecord]:
        return [record for st in sorted(subtest_ids) if (record := self.latest_record(st)) is not None]

    def characterizations(self) -> list[CharacterizationRecord]:
        found = []
        for path in sorted(self.plan_dir.glob(f"*/sweep-*{specio.SUFFIX}")):
            result = specio.load_or_raise(path, "result_set")
            assert isinstance(result, ResultSet)
            found.extend(result.characterizations)
        return found

    def inputs_for(self, st: SubTest) -> list[Artifact]:
        """Artifacts consumed by ``st``, read from the last recorded run of each producer."""
        inputs = []
        for port in st.ports("consumes"):
            if port.peer == EXTERNAL_PEER:
                inputs.append(self.external_artifact(port.artifact_type))
                continue
            record = self.latest_record(port.peer)
            if record is None or port.artifact_type not in record.artifacts:
                raise MissingArtifact(f"{port.peer} has no recorded {port.artifact_type!r} artifact")
            inputs.append(self.read_artifact(record.artifacts[port.artifact_type]))
        return inputs


@dataclass
class Execution:
    record: ResultRecord
    artifacts: list[Artifact] = field(default_factory=list)


def _execute(
    st: SubTest,
    inputs: Sequence[Artifact],
    workspace: Workspace | None,
    *,
    ri_id: str = "",
    iteration: int = 0,
    seed: int | None = None,
    optional: Iterable[str] = (),
    status: Literal["completed", "iteration_limit"] = "completed",
) -> Execution:
    by_type = {artifact.artifact_type: artifact for artifact in inputs}
    needed = {p.artifact_type for p in st.ports("consumes")} - set(optional)
    if missing := sorted(needed - set(by_type)):
        raise MissingArtifact(f"{st.id} is missing consumed artifacts {missing}")

    spec = st.executor if seed is None else st.executor.model_copy(update={"seed": seed})
    if problems := check_executor(spec, st):
        raise ExecutorError("; ".join(problems))
    output = execute(spec, by_type)

    if missing := sorted(set(st.criteria.metrics) - set(output.metrics)):
        raise ExecutorError(f"{st.id} did not report declared metrics {missing}")
    artifacts = []
    for port in st.ports("produces"):
        if port.artifact_type not in output.artifacts:
            raise ExecutorError(f"{st.id} did not produce {port.artifact_type!r}")
        artifacts.append(
            Artifact(
                artifact_type=port.artifact_type,
                payload=output.artifacts[port.artifact_type],
                producer=st.id,
                iteration=iteration,
            )
        )
    artifacts = list({a.artifact_type: a for a in artifacts}.values())

    paths = {}
    for artifact in artifacts:
        if workspace is None:
            paths[artifact.artifact_type] = f"{st.id}/{iteration}/artifacts/{artifact.artifact_type}{specio.SUFFIX}"
        else:
            paths[artifact.artifact_type] = workspace.write_artifact(artifact)
    record = ResultRecord(
        subtest_id=st.id,
        ri_id=ri_id,
        status=status,
        iteration=iteration,
        metrics=output.metrics,
        artifacts=paths,
    )
    if workspace is not None:
        workspace.write_record(record)
    return Execution(record, artifacts)


def run_subtest(
    st: SubTest,
    inputs: Sequence[Artifact],
    workspace: Workspace | None = None,
    *,
    ri_id: str = "",
    iteration: int = 0,
    seed: int | None = None,
) -> ResultRecord:
    with bound_contextvars(subtest=st.id, iteration=iteration):
        return _execute(st, inputs, workspace, ri_id=ri_id, iteration=iteration, seed=seed).record


def _failed(st: SubTest, ri_id: str, message: str, workspace: Workspace, iteration: int = 0) -> ResultRecord:
    record = ResultRecord(subtest_id=st.id, ri_id=ri_id, status="failed", iteration=iteration, message=message)
    workspace.write_record(record)
    return record


class PlanRun:
    def __init__(self, plan: MappingPlan, d: Decomposition, workspace: Workspace, seed: int | None):
        self.plan = plan
        self.d = d
        self.workspace = workspace
        self.seed = seed
        self.produced: dict[tuple[str, str], Artifact] = {}
        self.records: dict[str, ResultRecord] = {}

    def subtest(self, subtest_id: str) -> SubTest:
        st = self.d.subtest(subtest_id)
        assert st is not None
        return st

    def upstream_failures(self, st: SubTest, group: Sequence[str] = ()) -> list[str]:
        return sorted(
            {
                port.peer
                for port in st.ports("consumes")
                if port.peer not in group
                and port.peer in self.records
                and self.records[port.peer].status == "failed"
            }
        )

    def inputs(self, st: SubTest, previous: Mapping[tuple[str, str], Artifact], group: Sequence[str] = ()) -> list[Artifact]:
        inputs = []
        for port in st.ports("consumes"):
            if port.peer == EXTERNAL_PEER:
                inputs.append(self.workspace.external_artifact(port.artifact_type))
            elif port.peer in group:
                if (artifact := previous.get((port.peer, port.artifact_type))) is not None:
                    inputs.append(artifact)
            elif (artifact := self.produced.get((port.peer, port.artifact_type))) is not None:
                inputs.append(artifact)
        return inputs

    def run_single(self, subtest_id: str) -> list[Execution]:
        st = self.subtest(subtest_id)
        ri_id = self.plan.assignment[subtest_id]
        with bound_contextvars(subtest=subtest_id, iteration=0):
            if failed := self.upstream_failures(st):
                log.warning("skipping sub-test after upstream failure", upstream=failed)
                return [Execution(_failed(st, ri_id, f"upstream failed: {', '.join(failed)}", self.workspace))]
            try:
                return [
                    _execute(st, self.inputs(st, {}), self.workspace, ri_id=ri_id, seed=self.seed)
                ]
            except HolotestError as exc:
                log.warning("sub-test failed", error=str(exc))
                return [Execution(_failed(st, ri_id, str(exc), self.workspace))]

    def run_group(self, members: Sequence[str], max_iterations: int) -> list[Execution]:
        subtests = [self.subtest(m) for m in members]
        for st in subtests:
            if failed := self.upstream_failures(st, members):
                message = f"upstream failed: {', '.join(failed)}"
                return [Execution(_failed(s, self.plan.assignment[s.id], message, self.workspace)) for s in subtests]

        previous: dict[tuple[str, str], Artifact] = {}
        executions: list[Execution] = []
        for iteration in range(max_iterations):
            last = iteration == max_iterations - 1
            executions = []
            for st in subtests:
                ri_id = self.plan.assignment[st.id]
                with bound_contextvars(subtest=st.id, iteration=iteration):
                    try:
                        executions.append(
                            _execute(
                                st,
                                self.inputs(st, previous, members),
                                self.workspace,
                                ri_id=ri_id,
                                iteration=iteration,
                                seed=self.seed,
                                optional=[] if iteration else [p.artifact_type for p in st.ports("consumes") if p.peer in members],
                                status="iteration_limit" if last else "completed",
                            )
                        )
                    except HolotestError as exc:
                        log.warning("iteration group member failed", error=str(exc))
                        message = f"{st.id} failed in iteration {iteration}: {exc}"
                        return [
                            Execution(_failed(s, self.plan.assignment[s.id], message, self.workspace, iteration))
                            for s in subtests
                        ]
            previous = {(a.producer, a.artifact_type): a for e in executions for a in e.artifacts}
        return executions

    def run_stage(self, stage: Sequence[str], jobs: int) -> None:
        units: list[tuple[str, ...]] = []
        for subtest_id in stage:
            group = self.plan.group_of(subtest_id)
            unit = group.members if group else (subtest_id,)
            if unit not in units:
                units.append(unit)

        def run_unit(unit: tuple[str, ...]) -> list[Execution]:
            group = self.plan.group_of(unit[0])
            if group is None:
                return self.run_single(unit[0])
            return self.run_group(group.members, group.max_iterations)

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            results = list(pool.map(run_unit, units))
        for executions in results:
            for execution in executions:
                self.records[execution.record.subtest_id] = execution.record
                for artifact in execution.artifacts:
                    self.produced[(artifact.producer, artifact.artifact_type)] = artifact


def run_plan(
    plan: MappingPlan,
    d: Decomposition,
    workspace: Workspace | str | Path,
    *,
    jobs: int = 1,
    seed: int | None = None,
) -> list[ResultRecord]:
    check_plan(plan, d)
    if not isinstance(workspace, Workspace):
        workspace = Workspace(workspace, plan.id)
    workspace.write(plan.model_copy(update={"subtest_set": d}), workspace.plan_path)
    workspace.reset(st.id for st in d.subtests)

    run = PlanRun(plan, d, workspace, seed)
    with bound_contextvars(plan=plan.id):
        for index, stage in enumerate(plan.stages):
            log.info(f"running stage {index + 1}/{len(plan.stages)}", subtests=list(stage))
            run.run_stage(stage, jobs)
    return [run.records[st] for st in sorted(run.records)]


# --- sweeps -----------------------------------------------------------------


def _crossing(samples: Sequence[Sample]) -> tuple[Sample, Sample] | None:
    for left, right in zip(samples, samples[1:]):
        if left.quality_pass != right.quality_pass:
            return left, right
    return None


def sweep_values(st: SubTest, req: SweepRequest) -> tuple[float, float, list[float] | None]:
    """Sweep bounds and, for enumerated grids, the explicit sample values."""
    variability = st.criteria.variability_by_id(req.variability_id)
    if variability is None:
        raise PathUnresolved(f"{st.id} has no variability attribute {req.variability_id!r}")
    if isinstance(variability.range, Range):
        return variability.range.lo, variability.range.hi, None
    values = list(variability.range)
    if not values or any(isinstance(v, bool | str) for v in values):
        raise NonNumericRange(f"variability {variability.id!r} has non-numeric values {values}")
    numbers = [float(v) for v in values]
    return min(numbers), max(numbers), numbers


def sweep(
    st: SubTest,
    req: SweepRequest,
    inputs: Sequence[Artifact],
    workspace: Workspace | None = None,
    *,
    seed: int | None = None,
) -> CharacterizationRecord:
    quality = st.criteria.quality_by_id(req.quality_id)
    if quality is None:
        raise PathUnresolved(f"{st.id} has no quality attribute {req.quality_id!r}")
    target = st.criteria.target_by_id(quality.target_ref)
    if target is None:
        raise PathUnresolved(f"quality {quality.id!r} references unknown target {quality.target_ref!r}")
    lo, hi, enumerated = sweep_values(st, req)
    variability = st.criteria.variability_by_id(req.variability_id)
    assert variability is not None
    parameter = variability.parameter.rsplit(".", 1)[-1]
    by_type = {artifact.artifact_type: artifact for artifact in inputs}
    spec = st.executor if seed is None else st.executor.model_copy(update={"seed": seed})

    def sample(value: float) -> Sample:
        output = execute(spec, by_type, {parameter: value})
        if target.metric not in output.metrics:
            raise ExecutorError(f"{st.id} did not report {target.metric!r}")
        passed = predicate_holds(output.metrics[target.metric], quality)
        log.debug("sweep sample", value=value, metric=output.metrics[target.metric], passed=passed)
        return Sample(value=value, metrics=output.metrics, quality_pass=passed)

    diagnostics: list[Diagnostic] = []
    boundary = None
    with bound_contextvars(subtest=st.id, variability=req.variability_id):
        if lo == hi:
            samples = [sample(lo)]
            diagnostics.append(warning("W_DEGENERATE_RANGE", "/range", f"range of {variability.id!r} is a single point"))
        else:
            if req.mode == "grid" and enumerated is not None:
                points = enumerated
            else:
                points = [float(v) for v in np.linspace(lo, hi, req.grid_points if req.mode == "grid" else SCAN_POINTS)]
            samples = [sample(v) for v in points]
            bracket = _crossing(samples)
            if bracket is None:
                diagnostics.append(warning("W_NO_CROSSING", "/samples", "quality outcome never changes over the range"))
            else:
                left, right = bracket
                if req.mode == "bisection":
                    while right.value - left.value > req.tolerance:
                        midpoint = left.value / 2 + right.value / 2
                        if not left.value < midpoint < right.value:
                            # adjacent floats, no finer bracket exists
                            break
                        middle = sample(midpoint)
                        samples.append(middle)
                        if middle.quality_pass == left.quality_pass:
                            left = middle
                        else:
                            right = middle
                boundary = left.value / 2 + right.value / 2
                log.info("quality boundary found", boundary=boundary)

    record = CharacterizationRecord(
        subtest_id=st.id,
        variability_id=req.variability_id,
        quality_id=req.quality_id,
        mode=req.mode,
        samples=tuple(samples),
        boundary=boundary,
        diagnostics=tuple(diagnostics),
    )
    if workspace is not None:
        result = ResultSet(id=f"{st.id}_sweep_{req.variability_id}", plan=workspace.plan_id, characterizations=(record,))
        workspace.write(result, workspace.sweep_path(st.id, req.variability_id))
    return record
