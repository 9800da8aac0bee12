"""Synchronous round executor and execution traces."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from .adversary import Adversary, AdversaryView, make_adversary
from .config import ScenarioConfig, threshold
from .protocol import (
    CONFESSION,
    GARBAGE,
    CollectionMsg,
    ConfessionMsg,
    EmptyAfterTrim,
    NodeState,
    NodeStatus,
    RTable,
    Step,
    VVector,
    build_R,
    collection_compute,
    collection_send,
    confession_compute,
    confession_send,
)

TOLERANCE = 1e-9

HEALTHY, CURED, FAULTY = NodeStatus.HEALTHY, NodeStatus.CURED, NodeStatus.FAULTY


class ScenarioError(RuntimeError):
    """The adversary broke the fault model (too many faults, forged senders)."""


@dataclass(frozen=True)
class TraceHeader:
    n: int
    f: int
    inputs: Tuple[float, ...]
    epsilon: float
    seed: int
    adversary: str
    adversary_params: dict
    initial_cured: Tuple[int, ...]
    initial_faulty: Optional[Tuple[int, ...]]
    name: str = ""

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "TraceHeader":
        return cls(
            n=config.n,
            f=config.f,
            inputs=config.resolved_inputs(),
            epsilon=float(config.epsilon),
            seed=config.seed,
            adversary=config.adversary,
            adversary_params=dict(config.adversary_params),
            initial_cured=tuple(config.initial_cured),
            initial_faulty=config.initial_faulty,
            name=config.name,
        )


@dataclass(frozen=True)
class RoundRecord:
    """Everything that happened in one round.

    ``messages`` maps ``(sender, receiver)`` to the delivered payload; silence
    is a missing key. ``R`` and ``V`` are filled for fault-free receivers of a
    confession round. ``v`` is every node's stored state variable at the end
    of the round.
    """

    round: int
    phase: int
    step: Step
    statuses: Tuple[NodeStatus, ...]
    messages: Mapping[Tuple[int, int], object]
    v: Tuple[float, ...]
    corrupted: Tuple[bool, ...]
    R: Mapping[int, RTable] = field(default_factory=dict)
    V: Mapping[int, VVector] = field(default_factory=dict)

    @property
    def faulty(self) -> FrozenSet[int]:
        return frozenset(i for i, s in enumerate(self.statuses) if s is FAULTY)

    def nodes(self, *wanted: NodeStatus) -> List[int]:
        return [i for i, s in enumerate(self.statuses) if s in wanted]


@dataclass(frozen=True)
class PhaseTrace:
    phase: int
    collection: RoundRecord
    confession: RoundRecord
    v_before: Tuple[float, ...]

    @property
    def v_after(self) -> Tuple[float, ...]:
        return self.confession.v

    def _values(self, *wanted: NodeStatus) -> List[float]:
        return [self.v_after[i] for i in self.confession.nodes(*wanted)]

    @property
    def M(self) -> Optional[float]:
        values = self._values(HEALTHY, CURED)
        return max(values) if values else None

    @property
    def m(self) -> Optional[float]:
        values = self._values(HEALTHY, CURED)
        return min(values) if values else None

    @property
    def range(self) -> Optional[float]:
        if self.M is None:
            return None
        return self.M - self.m

    @property
    def healthy_range(self) -> Optional[float]:
        values = self._values(HEALTHY)
        return max(values) - min(values) if values else None


@dataclass
class Trace:
    header: TraceHeader
    rounds: List[RoundRecord] = field(default_factory=list)

    @property
    def phases(self) -> List[PhaseTrace]:
        out = []
        previous_v = self.header.inputs
        for k in range(0, len(self.rounds) - 1, 2):
            col, conf = self.rounds[k], self.rounds[k + 1]
            out.append(PhaseTrace(col.phase, col, conf, previous_v))
            previous_v = conf.v
        return out

    def input_bounds(self) -> Tuple[float, float]:
        """(m[0], M[0]): the input range of nodes fault-free in round 1."""
        inputs = self.header.inputs
        if self.rounds:
            values = [inputs[i] for i in self.rounds[0].nodes(HEALTHY, CURED)]
        else:
            values = list(inputs)
        values = values or list(inputs)
        return min(values), max(values)

    @property
    def at_threshold(self) -> bool:
        return self.header.n >= threshold(self.header.f)


@dataclass
class RunResult:
    config: ScenarioConfig
    trace: Trace
    convergence_phase: Optional[int]
    failure: Optional[str] = None
    reports: Dict[str, object] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.convergence_phase is not None

    @property
    def valid(self) -> bool:
        report = self.reports.get("validity")
        return bool(report) if report is not None else True

    @property
    def lemmas_hold(self) -> bool:
        return all(bool(r) for name, r in self.reports.items() if name != "validity")

    @property
    def verdict(self) -> str:
        if not self.valid:
            return "invalid"
        if self.failure is not None:
            return "failed"
        if not self.lemmas_hold:
            return "lemma_violation"
        if not self.converged:
            return "non_converged"
        return "ok"


def _normalize(payload: object, step: Step, n: int) -> object:
    """Coerce adversary payloads into the wire vocabulary; junk becomes GARBAGE."""
    if step is Step.COLLECTION:
        if payload is None:
            return None
        if isinstance(payload, (int, float)) and not isinstance(payload, bool) and math.isfinite(payload):
            return float(payload)
        return GARBAGE
    if payload is CONFESSION:
        return CONFESSION
    if isinstance(payload, (tuple, list)) and len(payload) == n:
        out = []
        for u in payload:
            if u is None:
                out.append(None)
            elif isinstance(u, (int, float)) and not isinstance(u, bool) and math.isfinite(u):
                out.append(float(u))
            else:
                return GARBAGE
        return tuple(out)
    return GARBAGE


class Simulator:
    """Drives one scenario; use :func:`run` unless stepping by hand."""

    def __init__(self, config: ScenarioConfig, adversary: Optional[Adversary] = None):
        config.validate()
        self.config = config
        self.n, self.f = config.n, config.f
        self.inputs = config.resolved_inputs()
        if adversary is None:
            adversary = make_adversary(config.adversary, config.adversary_params, random.Random(config.seed))
        adversary.setup(self.n, self.f, self.inputs, config.initial_faulty, config.initial_cured)
        self.adversary = adversary
        cured = set(config.initial_cured)
        self.states = [
            NodeState.initial(i, self.inputs[i], self.n, corrupted=i in cured) for i in range(self.n)
        ]
        self.schedule: List[FrozenSet[int]] = [frozenset(cured)]
        self.trace = Trace(TraceHeader.from_config(config))
        self.previous: Mapping[Tuple[int, int], object] = {}

    def _view(self, t: int, phase: int, step: Step, honest=None) -> AdversaryView:
        return AdversaryView(
            round=t,
            phase=phase,
            step=step,
            n=self.n,
            f=self.f,
            inputs=self.inputs,
            states=tuple(self.states),
            schedule=tuple(self.schedule),
            honest=honest or {},
            previous=self.previous,
        )

    def _select(self, t: int, phase: int, step: Step) -> FrozenSet[int]:
        faulty = frozenset(self.adversary.select_faulty(self._view(t, phase, step)))
        if len(faulty) > self.f:
            raise ScenarioError(f"round {t}: adversary chose {len(faulty)} > f={self.f} faulty nodes")
        if not faulty <= set(range(self.n)):
            raise ScenarioError(f"round {t}: adversary chose unknown nodes {sorted(faulty)}")
        if t == 1 and self.config.initial_faulty is not None and faulty != set(self.config.initial_faulty):
            raise ScenarioError("round 1: adversary ignored initial_faulty")
        return faulty

    def step_round(self, t: int, phase: int, step: Step) -> RoundRecord:
        n = self.n
        faulty = self._select(t, phase, step)
        self.schedule.append(faulty)
        prior = self.schedule[-2]
        statuses = tuple(
            FAULTY if i in faulty else CURED if i in prior else HEALTHY for i in range(n)
        )
        send = collection_send if step is Step.COLLECTION else confession_send
        honest: Dict[Tuple[int, int], object] = {}
        for i in range(n):
            if statuses[i] is not FAULTY:
                payload = send(self.states[i], statuses[i]).payload
                for r in range(n):
                    honest[(i, r)] = payload
        view = self._view(t, phase, step, honest)
        forged = self.adversary.forge_messages(view)
        delivered = dict(honest)
        for (s, r), payload in sorted(forged.items(), key=lambda kv: kv[0]):
            if s not in faulty:
                raise ScenarioError(f"round {t}: adversary forged a message from fault-free node {s}")
            delivered[(s, r)] = _normalize(payload, step, n)

        R_tables: Dict[int, RTable] = {}
        V_vectors: Dict[int, VVector] = {}
        msg_type = CollectionMsg if step is Step.COLLECTION else ConfessionMsg
        cache: Dict[RTable, NodeState] = {}
        for r in range(n):
            if statuses[r] is FAULTY:
                continue
            inbox = [msg_type(s, delivered[(s, r)]) for s in range(n) if (s, r) in delivered]
            state = self.states[r]
            if step is Step.COLLECTION:
                self.states[r] = collection_compute(state, inbox, statuses[r])
            else:
                R = build_R(inbox, n)
                if R not in cache:
                    cache[R] = confession_compute(state, R, n, self.f)
                self.states[r] = replace(cache[R], id=r, E=state.E)
                R_tables[r] = R
                V_vectors[r] = self.states[r].lastV
        for i in sorted(faulty):
            new_v = self.adversary.corrupt(view, i)
            state = self.states[i]
            self.states[i] = replace(state, v=state.v if new_v is None else float(new_v), corrupted=True)

        self.previous = delivered
        record = RoundRecord(
            round=t,
            phase=phase,
            step=step,
            statuses=statuses,
            messages=delivered,
            v=tuple(s.v for s in self.states),
            corrupted=tuple(s.corrupted for s in self.states),
            R=R_tables,
            V=V_vectors,
        )
        self.trace.rounds.append(record)
        return record

    def run(self, checks: bool = True) -> RunResult:
        config = self.config
        convergence_phase = None
        failure = None
        phases = config.budget() // 2
        for phase in range(1, phases + 1):
            try:
                self.step_round(2 * phase - 1, phase, Step.COLLECTION)
                record = self.step_round(2 * phase, phase, Step.CONFESSION)
            except EmptyAfterTrim as exc:
                failure = f"empty_after_trim in phase {phase}: {exc}"
                self.trace.rounds = self.trace.rounds[: 2 * (phase - 1)]
                break
            healthy = [record.v[i] for i in record.nodes(HEALTHY)]
            spread = max(healthy) - min(healthy) if healthy else None
            if convergence_phase is None and spread is not None and spread < config.epsilon:
                convergence_phase = phase
            if convergence_phase is not None and config.stop_at_convergence and phase >= config.min_phases:
                break
        result = RunResult(config, self.trace, convergence_phase, failure)
        if checks:
            from .checks import run_all_checks

            result.reports = run_all_checks(self.trace)
        return result


def run(config: ScenarioConfig, adversary: Optional[Adversary] = None, checks: bool = True) -> RunResult:
    """Execute a scenario until convergence or until the round budget is spent.

    ``EmptyAfterTrim`` ends the run with a failure verdict; an adversary that
    breaks the fault model raises :class:`ScenarioError`.
    """
    return Simulator(config, adversary).run(checks=checks)
