"""
Built-in sub-test executors.

Executors are pure functions of (parameters, consumed artifacts, seed). Real
research-infrastructure connectors are represented by ``scripted``, which
replays a declared output table.
"""

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, TypeVar

import numpy as np
import structlog
from pydantic import BaseModel, Field, ValidationError

from .exceptions import ExecutorError
from .schemas import Artifact, ArtifactPayload, ExecutorSpec, Scalar, SubTest

log = structlog.get_logger(__name__)

AGC_METRICS = ("tracking_rmse", "tracking_max", "tracking_rmse_norm", "avg_household_error")

P = TypeVar("P", bound=BaseModel)


class ScriptedParams(BaseModel, extra="forbid"):
    fail: bool = False
    message: str = "scripted failure"


class IctDisturbanceParams(BaseModel, extra="forbid"):
    availability: float = Field(ge=0, le=1)
    latency_ms: float = Field(ge=0)
    step_ms: float = Field(gt=0)


class AgcTrackingParams(BaseModel, extra="forbid"):
    n_households: int = Field(ge=1)
    capacity_kw: float = Field(gt=0)
    reference_shape: Literal["sine", "square"] = "square"
    reference_amplitude_kw: float = Field(ge=0)
    reference_period_steps: int = Field(ge=1)
    steps: int = Field(ge=1)
    packet_loss: float = Field(default=0.0, ge=0, le=1)
    latency_steps: int = Field(default=0, ge=0)
    emit_time_series: bool = False


@dataclass(frozen=True)
class ExecutionOutput:
    metrics: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, ArtifactPayload] = field(default_factory=dict)


Executor = Callable[[ExecutorSpec, Mapping[str, Artifact], Mapping[str, Scalar]], ExecutionOutput]

EXECUTORS: dict[str, Executor] = {}
PARAMS: dict[str, type[BaseModel]] = {}


def executor(kind: str, params: type[BaseModel]) -> Callable[[Executor], Executor]:
    def register(func: Executor) -> Executor:
        EXECUTORS[kind] = func
        PARAMS[kind] = params
        return func

    return register


def _validated(model: type[P], kind: str, params: Mapping[str, Scalar]) -> P:
    try:
        return model.model_validate(dict(params))
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, e['loc'])) or kind}: {e['msg']}" for e in exc.errors())
        raise ExecutorError(f"invalid {kind} parameters: {problems}", path="/executor/params") from exc


def check_executor(spec: ExecutorSpec, st: SubTest) -> list[str]:
    """Static problems with a sub-test's executor block, as messages."""
    problems = []
    try:
        _validated(PARAMS[spec.kind], spec.kind, spec.params)
    except ExecutorError as exc:
        problems.append(str(exc))

    produced = {port.artifact_type for port in st.ports("produces")}
    declared = set(st.criteria.metrics)
    match spec.kind:
        case "scripted":
            if spec.outputs is None:
                problems.append("scripted executor needs an outputs table")
            else:
                if missing := sorted(declared - set(spec.outputs.metrics)):
                    problems.append(f"scripted outputs lack declared metrics {missing}")
                if missing := sorted(produced - set(spec.outputs.artifacts)):
                    problems.append(f"scripted outputs lack produced artifacts {missing}")
        case "model_ict_disturbance":
            if declared:
                problems.append(f"model_ict_disturbance emits no metrics, but {sorted(declared)} are declared")
            if extra := sorted(produced - {"model_parameters"}):
                problems.append(f"model_ict_disturbance cannot produce {extra}")
        case "model_agc_tracking":
            if spec.seed is None:
                problems.append("model_agc_tracking requires a seed")
            if unknown := sorted(declared - set(AGC_METRICS)):
                problems.append(f"model_agc_tracking does not compute {unknown}")
            if extra := sorted(produced - {"time_series"}):
                problems.append(f"model_agc_tracking cannot produce {extra}")
    if spec.outputs is not None and spec.kind != "scripted":
        problems.append(f"outputs table is only allowed for scripted executors, not {spec.kind}")
    return problems


def execute(
    spec: ExecutorSpec,
    inputs: Mapping[str, Artifact],
    overrides: Mapping[str, Scalar] | None = None,
) -> ExecutionOutput:
    return EXECUTORS[spec.kind](spec, inputs, overrides or {})


@executor("scripted", ScriptedParams)
def run_scripted(spec: ExecutorSpec, inputs: Mapping[str, Artifact], overrides: Mapping[str, Scalar]) -> ExecutionOutput:
    params = _validated(ScriptedParams, spec.kind, spec.params)
    if params.fail:
        raise ExecutorError(params.message)
    if spec.outputs is None:
        raise ExecutorError("scripted executor needs an outputs table")
    return ExecutionOutput(metrics=dict(spec.outputs.metrics), artifacts=dict(spec.outputs.artifacts))


@executor("model_ict_disturbance", IctDisturbanceParams)
def run_ict_disturbance(
    spec: ExecutorSpec, inputs: Mapping[str, Artifact], overrides: Mapping[str, Scalar]
) -> ExecutionOutput:
    params = _validated(IctDisturbanceParams, spec.kind, {**spec.params, **overrides})
    return ExecutionOutput(
        artifacts={
            "model_parameters": {
                "packet_loss_probability": 1.0 - params.availability,
                "latency_steps": round(params.latency_ms / params.step_ms),
            }
        }
    )


# --- AGC tracking model -----------------------------------------------------


def reference_signal(shape: str, amplitude: float, period: int, steps: int) -> np.ndarray:
    t = np.arange(steps)
    if shape == "sine":
        return np.maximum(amplitude * np.sin(2 * np.pi * t / period), 0.0)
    return np.where((t % period) < period / 2, float(amplitude), 0.0)


@lru_cache(maxsize=16)
def uniform_draws(seed: int, n_households: int, steps: int) -> np.ndarray:
    """
    Matrix ``u[i, t]`` of uniform draws.

    Household ``i`` owns the stream seeded by ``SeedSequence(seed, spawn_key=(i,))``,
    so each draw depends only on ``(seed, i, t)``.
    """
    draws = np.stack(
        [
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))).random(steps)
            for i in range(n_households)
        ]
    )
    draws.setflags(write=False)
    return draws


def loss_mask(seed: int, n_households: int, steps: int, packet_loss: float) -> np.ndarray:
    """True where household ``i`` misses the setpoint sent at step ``t``."""
    return uniform_draws(seed, n_households, steps) < packet_loss


def simulate_agc(params: AgcTrackingParams, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference and aggregate household power per step."""
    n, c, d = params.n_households, params.capacity_kw, params.latency_steps
    reference = reference_signal(
        params.reference_shape, params.reference_amplitude_kw, params.reference_period_steps, params.steps
    )
    clamped = reference / n > c
    received = ~loss_mask(seed, n, params.steps, params.packet_loss)

    # held[i]: send step of the setpoint household i currently applies, -1 for the zero initial state
    held = np.full(n, -1)
    aggregate = np.zeros(params.steps)
    for t in range(params.steps):
        sent = t - d
        if sent >= 0:
            held = np.where(received[:, sent], sent, held)
        counts = np.bincount(held[held >= 0], minlength=params.steps)
        active = np.flatnonzero(counts)
        if active.size:
            contributions = np.where(
                clamped[active], counts[active] * c, reference[active] * (counts[active] / n)
            )
            aggregate[t] = float(np.sum(contributions))
    return reference, aggregate


def tracking_metrics(reference: np.ndarray, aggregate: np.ndarray, amplitude: float, n_households: int) -> dict[str, float]:
    error = reference - aggregate
    rmse = float(np.sqrt(np.mean(error**2)))
    if amplitude > 0:
        rmse_norm = rmse / amplitude
    else:
        rmse_norm = 0.0 if rmse == 0 else math.inf
    return {
        "tracking_rmse": rmse,
        "tracking_max": float(np.max(np.abs(error))),
        "tracking_rmse_norm": rmse_norm,
        "avg_household_error": float(np.mean(np.abs(error))) / n_households,
    }


@executor("model_agc_tracking", AgcTrackingParams)
def run_agc_tracking(
    spec: ExecutorSpec, inputs: Mapping[str, Artifact], overrides: Mapping[str, Scalar]
) -> ExecutionOutput:
    if spec.seed is None:
        raise ExecutorError("model_agc_tracking requires a seed")
    merged: dict[str, Scalar] = dict(spec.params)
    if (model_parameters := inputs.get("model_parameters")) is not None:
        payload = model_parameters.payload
        for source, target in (("packet_loss_probability", "packet_loss"), ("latency_steps", "latency_steps")):
            value = payload.get(source)
            if isinstance(value, tuple):
                raise ExecutorError(f"model_parameters.{source} must be a scalar")
            if value is not None:
                merged[target] = value
    merged.update(overrides)
    params = _validated(AgcTrackingParams, spec.kind, merged)

    reference, aggregate = simulate_agc(params, spec.seed)
    metrics = tracking_metrics(reference, aggregate, params.reference_amplitude_kw, params.n_households)
    log.debug(
        "agc tracking simulated",
        packet_loss=params.packet_loss,
        latency_steps=params.latency_steps,
        tracking_rmse=metrics["tracking_rmse"],
    )
    artifacts: dict[str, ArtifactPayload] = {}
    if params.emit_time_series:
        artifacts["time_series"] = {
            "resolution_steps": 1,
            "reference": tuple(float(v) for v in reference),
            "aggregate": tuple(float(v) for v in aggregate),
        }
    return ExecutionOutput(metrics=metrics, artifacts=artifacts)
