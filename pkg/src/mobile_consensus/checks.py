"""Machine-checkable versions of the protocol's correctness lemmas.

Every checker takes a :class:`~mobile_consensus.harness.Trace` (live or loaded
from JSONL) and returns a :class:`CheckReport`, which is truthy when the
property holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

from .config import threshold
from .harness import CURED, FAULTY, HEALTHY, TOLERANCE, PhaseTrace, Trace
from .protocol import compute_num


@dataclass
class CheckReport:
    name: str
    ok: bool
    violations: List[str] = field(default_factory=list)
    detail: Dict[str, object] = field(default_factory=dict)
    # False when the lemma's hypothesis (n >= ceil(7f/2)+1) does not hold;
    # such reports are informational and never fail a run
    applicable: bool = True

    def __bool__(self) -> bool:
        return self.ok or not self.applicable

    def summary(self) -> str:
        state = "ok" if self.ok else f"{len(self.violations)} violation(s)"
        if not self.applicable:
            state += " (below threshold, informational)"
        return f"{self.name}: {state}"


def _phase(trace: Trace, phase: int) -> PhaseTrace:
    for p in trace.phases:
        if p.phase == phase:
            return p
    raise KeyError(f"trace has no phase {phase}")


def check_validity(trace: Trace) -> CheckReport:
    """Every healthy node's state variable stays within [m[0], M[0]]."""
    low, high = trace.input_bounds()
    violations = []
    for record in trace.rounds:
        for i in record.nodes(HEALTHY):
            v = record.v[i]
            if not low - TOLERANCE <= v <= high + TOLERANCE:
                violations.append(f"round {record.round}: healthy node {i} holds {v!r} outside [{low}, {high}]")
    return CheckReport("validity", not violations, violations, {"m0": low, "M0": high})


def phase_ranges(trace: Trace) -> List[float]:
    """Fault-free range M - m before the first phase and after each phase."""
    low, high = trace.input_bounds()
    ranges = [high - low]
    for p in trace.phases:
        if p.range is not None:
            ranges.append(p.range)
    return ranges


def halving_holds(ranges: Sequence[float], tolerance: float = TOLERANCE) -> List[int]:
    """Indices k at which ranges[k] > ranges[k-1] / 2 + tolerance."""
    return [k for k in range(1, len(ranges)) if ranges[k] > ranges[k - 1] / 2 + tolerance]


def check_halving(trace: Trace) -> CheckReport:
    ranges = phase_ranges(trace)
    bad = halving_holds(ranges)
    violations = [f"phase {k}: range {ranges[k]!r} > {ranges[k - 1]!r}/2" for k in bad]
    return CheckReport("halving", not bad, violations, {"ranges": ranges}, applicable=trace.at_threshold)


def check_integrity(trace: Trace, phase: int) -> CheckReport:
    """Integrity I-IV for every fault-free receiver of one phase."""
    p = _phase(trace, phase)
    col, conf = p.collection, p.confession
    n = trace.header.n
    violations = []
    for j in conf.nodes(HEALTHY, CURED):
        V = conf.V[j]
        for i in range(n):
            first, second = col.statuses[i], conf.statuses[i]
            got = V[i]
            if first is CURED:
                if got is not None:
                    violations.append(f"III: phase {phase}, V_{j}[{i}]={got!r} for sender cured in collection")
            elif second is CURED:
                if got is not None:
                    violations.append(f"IV: phase {phase}, V_{j}[{i}]={got!r} for sender cured in confession")
            elif first is HEALTHY:
                sent = col.messages[(i, j)]
                if second is HEALTHY and got != sent:
                    violations.append(f"I: phase {phase}, V_{j}[{i}]={got!r}, sender sent {sent!r}")
                if second is FAULTY and got is not None and got != sent:
                    violations.append(f"II: phase {phase}, V_{j}[{i}]={got!r}, sender sent {sent!r}")
    return CheckReport(f"integrity[{phase}]", not violations, violations, applicable=trace.at_threshold)


def check_pairwise_limit(trace: Trace, phase: int) -> CheckReport:
    """Count entries where two fault-free V vectors are both non-null and differ.

    Fails when the maximum over pairs exceeds floor(f/2).
    """
    p = _phase(trace, phase)
    f = trace.header.f
    receivers = p.confession.nodes(HEALTHY, CURED)
    worst, worst_pair = 0, None
    for i, j in combinations(receivers, 2):
        Vi, Vj = p.confession.V[i], p.confession.V[j]
        diff = sum(1 for a, b in zip(Vi, Vj) if a is not None and b is not None and a != b)
        if diff > worst:
            worst, worst_pair = diff, (i, j)
    bound = f // 2
    violations = [] if worst <= bound else [f"phase {phase}: nodes {worst_pair} differ in {worst} > {bound} entries"]
    detail = {"max_difference": worst, "pair": worst_pair, "bound": bound, "lemma_bound": bound - 1}
    return CheckReport(f"pairwise[{phase}]", not violations, violations, detail, applicable=trace.at_threshold)


def check_num_bound(trace: Trace, phase: int) -> CheckReport:
    """At most ``compute_num(x, f)`` non-null entries from senders faulty in both rounds."""
    p = _phase(trace, phase)
    f = trace.header.f
    col, conf = p.collection, p.confession
    double = [k for k in range(trace.header.n) if col.statuses[k] is FAULTY and conf.statuses[k] is FAULTY]
    violations = []
    worst = 0
    for i in conf.nodes(HEALTHY):
        V = conf.V[i]
        x = sum(1 for u in V if u is None)
        faulty_values = sum(1 for k in double if V[k] is not None)
        worst = max(worst, faulty_values)
        if faulty_values > compute_num(x, f):
            violations.append(f"phase {phase}: node {i} has {faulty_values} faulty values, num={compute_num(x, f)}")
    return CheckReport(
        f"num[{phase}]", not violations, violations, {"max_faulty_values": worst}, applicable=trace.at_threshold
    )


def _merge(name: str, reports: List[CheckReport], applicable: bool) -> CheckReport:
    violations = [v for r in reports for v in r.violations]
    return CheckReport(name, not violations, violations, applicable=applicable)


def run_all_checks(trace: Trace) -> Dict[str, CheckReport]:
    phases = [p.phase for p in trace.phases]
    applicable = trace.at_threshold
    pairwise = [check_pairwise_limit(trace, k) for k in phases]
    merged_pairwise = _merge("pairwise", pairwise, applicable)
    merged_pairwise.detail["max_difference"] = max((r.detail["max_difference"] for r in pairwise), default=0)
    return {
        "validity": check_validity(trace),
        "halving": check_halving(trace),
        "integrity": _merge("integrity", [check_integrity(trace, k) for k in phases], applicable),
        "pairwise": merged_pairwise,
        "num": _merge("num", [check_num_bound(trace, k) for k in phases], applicable),
    }


def describe(reports: Dict[str, CheckReport]) -> List[str]:
    return [r.summary() for r in reports.values()]
