#!/usr/bin/env python3
"""
Dry-run Simulator

Runs a Plan on a simulated infrastructure with simpy. Every step is a simpy
process that waits for its predecessors, then takes a sampled number of
logical ticks. Provision, WaitSsh and task steps draw from separate latency
ranges; failures are injected by step id or subject pattern.

A step whose predecessor failed (or was itself skipped) is skipped: it
records neither Begin nor End. Satisfied markers stand for services that
are already running: they record no events and always count as done, even
when a step upstream of them failed.
"""

import fnmatch
import logging
import sys
import zlib
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

import jsonschema
import numpy as np
import simpy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import config
from .errors import SimConfigError
from .planner import Plan, Step, StepAction

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    BEGIN = "Begin"
    END = "End"
    FAIL = "Fail"


class FailureMode(str, Enum):
    SSH_TIMEOUT = "SshTimeout"
    TASK_FAIL = "TaskFail"


class PlanStatus(str, Enum):
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"


PLAN_RECORD = "plan"


# =============================================================================
# Configuration
# =============================================================================

_RANGE = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2}

SIM_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "latency": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "provision": _RANGE,
                "ssh_ready": _RANGE,
                "task": _RANGE,
                "ssh_timeout": {"type": "integer", "minimum": 1},
            },
        },
        "failure": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["step", "mode"],
                "additionalProperties": False,
                "properties": {
                    "step": {"type": "string", "minLength": 1},
                    "mode": {"enum": list(config.SIM_FAILURE_MODES)},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class FailureInjection:
    """Fail steps whose id or subject matches `pattern` (shell-style wildcards)"""
    pattern: str
    mode: FailureMode

    def matches(self, step: Step) -> bool:
        if self.mode == FailureMode.SSH_TIMEOUT and step.action != StepAction.WAIT_SSH:
            return False
        return fnmatch.fnmatchcase(step.id, self.pattern) or fnmatch.fnmatchcase(step.subject, self.pattern)


@dataclass(frozen=True)
class SimConfig:
    seed: int = config.SIM_DEFAULT_SEED
    provision_latency: Tuple[int, int] = config.SIM_PROVISION_LATENCY
    ssh_ready_latency: Tuple[int, int] = config.SIM_SSH_READY_LATENCY
    task_latency: Tuple[int, int] = config.SIM_TASK_LATENCY
    ssh_timeout: int = config.SIM_SSH_TIMEOUT_TICKS
    failures: Tuple[FailureInjection, ...] = ()

    def __post_init__(self):
        for name in ("provision_latency", "ssh_ready_latency", "task_latency"):
            low, high = getattr(self, name)
            if low < 0 or high < low:
                raise SimConfigError(f"{name} must satisfy 0 <= min <= max, got ({low}, {high})")
        if self.ssh_timeout < 1:
            raise SimConfigError("ssh_timeout must be positive")

    def with_seed(self, seed: Optional[int]) -> "SimConfig":
        return self if seed is None else replace(self, seed=seed)

    def with_failure(self, pattern: str, mode: FailureMode) -> "SimConfig":
        return replace(self, failures=self.failures + (FailureInjection(pattern, mode),))

    @classmethod
    def from_dict(cls, data: Dict) -> "SimConfig":
        try:
            jsonschema.validate(data, SIM_CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise SimConfigError(f"invalid simulator config: {e.message}") from None
        latency = data.get("latency", {})
        return cls(
            seed=data.get("seed", config.SIM_DEFAULT_SEED),
            provision_latency=tuple(latency.get("provision", config.SIM_PROVISION_LATENCY)),
            ssh_ready_latency=tuple(latency.get("ssh_ready", config.SIM_SSH_READY_LATENCY)),
            task_latency=tuple(latency.get("task", config.SIM_TASK_LATENCY)),
            ssh_timeout=latency.get("ssh_timeout", config.SIM_SSH_TIMEOUT_TICKS),
            failures=tuple(FailureInjection(f["step"], FailureMode(f["mode"])) for f in data.get("failure", [])),
        )


def load_sim_config(path: Union[str, Path]) -> SimConfig:
    """
    Read a TOML simulator configuration

        seed = 7
        [latency]
        provision = [20, 60]
        [[failure]]
        step = "WaitSsh(ec2_vm)"
        mode = "SshTimeout"
    """
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise SimConfigError(f"{path}: {e}") from None
    return SimConfig.from_dict(data)


# =============================================================================
# Trace
# =============================================================================

@dataclass(frozen=True)
class TraceEvent:
    tick: int
    step: str
    phase: Phase


@dataclass(frozen=True)
class EventTrace:
    events: Tuple[TraceEvent, ...] = ()
    status: PlanStatus = PlanStatus.SUCCEEDED
    end_tick: int = 0

    def to_text(self) -> str:
        lines = [f"{e.tick}\t{e.step}\t{e.phase.value}" for e in self.events]
        lines.append(f"{self.end_tick}\t{PLAN_RECORD}\t{self.status.value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EventTrace":
        events: List[TraceEvent] = []
        status, end_tick = PlanStatus.SUCCEEDED, 0
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected <tick>\\t<step>\\t<phase>")
            tick, step, phase = int(parts[0]), parts[1], parts[2]
            if step == PLAN_RECORD:
                status, end_tick = PlanStatus(phase), tick
            else:
                events.append(TraceEvent(tick, step, Phase(phase)))
        return cls(tuple(events), status, end_tick)

    def phases(self, step: str) -> List[Phase]:
        return [e.phase for e in self.events if e.step == step]

    def began(self, step: str) -> bool:
        return any(e.step == step and e.phase == Phase.BEGIN for e in self.events)


# =============================================================================
# Simulation
# =============================================================================

class DryRunSimulator:
    """Single-threaded discrete-event run of one plan"""

    def __init__(self, plan: Plan, sim_config: SimConfig):
        self.plan = plan
        self.config = sim_config
        self.graph = plan.graph()
        self.env = simpy.Environment()
        self.events: List[TraceEvent] = []
        self.done = {s.id: self.env.event() for s in plan.steps}
        self.outcome: Dict[str, Optional[Phase]] = {}

    def latency(self, step: Step) -> int:
        if step.action == StepAction.PROVISION:
            low, high = self.config.provision_latency
        elif step.action == StepAction.WAIT_SSH:
            low, high = self.config.ssh_ready_latency
        else:
            low, high = self.config.task_latency
        # per-step stream: a step's latency does not depend on which other steps exist
        rng = np.random.default_rng([self.config.seed, zlib.crc32(step.id.encode("utf-8"))])
        return int(rng.integers(low, high + 1))

    def injected(self, step: Step) -> Optional[FailureMode]:
        for failure in self.config.failures:
            if failure.matches(step):
                return failure.mode
        return None

    def record(self, step_id: str, phase: Phase):
        self.events.append(TraceEvent(int(self.env.now), step_id, phase))

    def run_step(self, step: Step):
        preds = list(self.graph.predecessors(step.id))
        if preds:
            yield self.env.all_of([self.done[p] for p in preds])

        # a satisfied marker is already running, whatever happened upstream
        if step.satisfied:
            self.outcome[step.id] = Phase.END
        elif any(self.outcome[p] != Phase.END for p in preds):
            logger.debug(f"skip {step.id}")
            self.outcome[step.id] = None
        else:
            self.record(step.id, Phase.BEGIN)
            failure = self.injected(step)
            if failure == FailureMode.SSH_TIMEOUT:
                yield self.env.timeout(self.config.ssh_timeout)
            else:
                yield self.env.timeout(self.latency(step))
            phase = Phase.FAIL if failure else Phase.END
            self.record(step.id, phase)
            self.outcome[step.id] = phase
        self.done[step.id].succeed()

    def run(self) -> EventTrace:
        for sid in self.plan.linearize():
            self.env.process(self.run_step(self.plan.step(sid)))
        self.env.run()
        failed = any(e.phase == Phase.FAIL for e in self.events)
        status = PlanStatus.FAILED if failed else PlanStatus.SUCCEEDED
        return EventTrace(tuple(self.events), status, int(self.env.now))


def simulate(plan: Plan, sim_config: Optional[SimConfig] = None) -> EventTrace:
    """
    Execute a plan on simulated hosts

    Identical (plan, config) pairs give identical traces.

    Raises:
        CyclicPlan: raised by Plan itself; a Plan cannot hold a cycle
    """
    trace = DryRunSimulator(plan, sim_config or SimConfig()).run()
    logger.info(f"Simulated {len(plan.steps)} steps: {trace.status.value} at tick {trace.end_tick}")
    return trace


# =============================================================================
# Trace checking
# =============================================================================

def check_trace(trace: EventTrace, plan: Plan) -> List[str]:
    """
    Violations of the plan's ordering and skip rules found in a trace

    Returns:
        Human-readable violations; empty when the trace is consistent
    """
    violations: List[str] = []
    steps = {s.id: s for s in plan.steps}
    index: Dict[str, Dict[Phase, Tuple[int, int]]] = {}
    executed_markers: Set[str] = set()

    last_tick = None
    for i, event in enumerate(trace.events):
        if last_tick is not None and event.tick < last_tick:
            violations.append(f"tick goes backwards at event {i} ({event.step})")
        last_tick = event.tick
        if event.step not in steps:
            violations.append(f"unknown step {event.step}")
            continue
        if steps[event.step].satisfied and event.step not in executed_markers:
            executed_markers.add(event.step)
            violations.append(f"satisfied marker {event.step} was executed")
        phases = index.setdefault(event.step, {})
        if event.phase in phases or (event.phase != Phase.BEGIN and (Phase.END in phases or Phase.FAIL in phases)):
            violations.append(f"{event.step}: repeated {event.phase.value}")
            continue
        if event.phase != Phase.BEGIN and Phase.BEGIN not in phases:
            violations.append(f"{event.step}: {event.phase.value} without Begin")
        phases[event.phase] = (i, event.tick)

    for sid, phases in index.items():
        if Phase.BEGIN in phases and Phase.END not in phases and Phase.FAIL not in phases:
            violations.append(f"{sid}: Begin without End or Fail")

    def finished(sid: str) -> bool:
        return steps[sid].satisfied or Phase.END in index.get(sid, {})

    for before, after in plan.edges:
        if steps[before].satisfied:
            continue
        begin = index.get(after, {}).get(Phase.BEGIN)
        if begin is None:
            continue
        end = index.get(before, {}).get(Phase.END)
        if end is None:
            violations.append(f"edge {before} -> {after}: {after} began but {before} never ended")
        elif end[0] > begin[0] or end[1] > begin[1]:
            violations.append(f"edge {before} -> {after}: {after} began before {before} ended")

    graph = plan.graph()
    for sid, step in steps.items():
        if step.satisfied or Phase.BEGIN in index.get(sid, {}):
            continue
        if all(finished(p) for p in graph.predecessors(sid)):
            violations.append(f"{sid}: ready but never began")

    any_fail = any(Phase.FAIL in phases for phases in index.values())
    expected = PlanStatus.FAILED if any_fail else PlanStatus.SUCCEEDED
    if trace.status != expected:
        violations.append(f"status {trace.status.value} but trace implies {expected.value}")
    return violations
