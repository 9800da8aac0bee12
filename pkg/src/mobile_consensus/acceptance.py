"""The acceptance suite: one function per criterion, each returning a verdict.

Criteria 1-4 share a single randomized sweep over ``f in {1, 2, 3}``, both the
smallest admissible ``n`` and two above it, and every general-purpose built-in
adversary. The sweep is computed once per process and reused.

The reduce/num oracles in this module are written independently of
:mod:`mobile_consensus.protocol` on purpose; do not route them through it.
"""

from __future__ import annotations

import math
import os
import random
import subprocess
import sys
import tempfile
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .adversary import GENERAL_PURPOSE
from .checks import check_integrity, halving_holds, phase_ranges
from .config import BUNDLED, ScenarioConfig, convergence_bound, load_config, threshold
from .harness import HEALTHY, run
from .protocol import EmptyAfterTrim, compute_num, reduce
from .traceio import dumps_trace

RUNS = 1000
EPSILON = 1e-3
SWEEP_F = (1, 2, 3)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str = ""
    failures: List[str] = field(default_factory=list)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number}: {self.title}: {self.detail}"


# -- the shared randomized sweep ----------------------------------------------


def sweep_sizes() -> List[Tuple[int, int]]:
    return [(f, n) for f in SWEEP_F for n in (threshold(f), threshold(f) + 2)]


def sweep_config(f: int, n: int, adversary: str, seed: int) -> ScenarioConfig:
    rng = random.Random(f"{seed}:{n}:{f}:cured")
    cured = sorted(rng.sample(range(n), rng.randint(0, f)))
    return ScenarioConfig.from_dict(
        {
            "name": f"sweep-f{f}-n{n}-{adversary}",
            "n": n,
            "f": f,
            "inputs": {"uniform": [0, 100]},
            "epsilon": EPSILON,
            "adversary": adversary,
            "initial_cured": cured,
            "seed": seed,
            # keep going past convergence so halving is observed over several phases
            "min_phases": 3,
        }
    )


@dataclass
class RunSummary:
    valid: bool
    validity_detail: List[str]
    ranges: List[float]
    halving_bad: List[int]
    convergence_phase: Optional[int]
    bound: int
    failure: Optional[str]
    integrity: List[str]
    max_pairwise: int


def summarize_run(args) -> Tuple[Tuple[int, int, str], int, RunSummary]:
    f, n, adversary, seed = args
    config = sweep_config(f, n, adversary, seed)
    result = run(config)
    trace = result.trace
    # M and m range over every fault-free node; the healthy-only range is not
    # comparable across phases because cured nodes rejoin the healthy set
    ranges = phase_ranges(trace)
    low, high = trace.input_bounds()
    integrity = [v for p in trace.phases for v in check_integrity(trace, p.phase).violations]
    summary = RunSummary(
        valid=result.valid,
        validity_detail=result.reports["validity"].violations[:3],
        ranges=ranges,
        halving_bad=halving_holds(ranges),
        convergence_phase=result.convergence_phase,
        bound=convergence_bound(high - low, config.epsilon),
        failure=result.failure,
        integrity=integrity[:3],
        max_pairwise=result.reports["pairwise"].detail.get("max_difference", 0),
    )
    return (f, n, adversary), seed, summary


@dataclass
class SweepResult:
    runs: int
    by_config: Dict[Tuple[int, int, str], List[Tuple[int, RunSummary]]]

    def items(self):
        for key in sorted(self.by_config):
            yield key, self.by_config[key]


def _workers() -> int:
    env = os.environ.get("MOBILE_CONSENSUS_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


@lru_cache(maxsize=4)
def randomized_sweep(runs: int = RUNS) -> SweepResult:
    jobs = [(f, n, a, seed) for f, n in sweep_sizes() for a in GENERAL_PURPOSE for seed in range(runs)]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(summarize_run, jobs, chunksize=64))
    else:
        results = [summarize_run(job) for job in jobs]
    by_config: Dict[Tuple[int, int, str], List[Tuple[int, RunSummary]]] = defaultdict(list)
    for key, seed, summary in results:
        by_config[key].append((seed, summary))
    return SweepResult(runs, dict(by_config))


def _label(key) -> str:
    f, n, adversary = key
    return f"f={f} n={n} {adversary}"


# -- criteria -----------------------------------------------------------------


def criterion_1(runs: int = RUNS) -> CriterionResult:
    sweep = randomized_sweep(runs)
    failures = []
    total = 0
    for key, entries in sweep.items():
        for seed, s in entries:
            total += 1
            if not s.valid:
                failures.append(f"{_label(key)} seed={seed}: {s.validity_detail[0]}")
    detail = f"{total - len(failures)}/{total} runs valid over {len(sweep.by_config)} configurations"
    return CriterionResult(1, "validity", not failures, detail, failures)


def criterion_2(runs: int = RUNS) -> CriterionResult:
    sweep = randomized_sweep(runs)
    failures = []
    per_config = []
    for key, entries in sweep.items():
        halving = late = 0
        for seed, s in entries:
            if s.halving_bad:
                halving += 1
                k = s.halving_bad[0]
                if halving <= 2:
                    failures.append(
                        f"{_label(key)} seed={seed}: phase {k} range "
                        f"{s.ranges[k]!r} > {s.ranges[k - 1]!r}/2"
                    )
            if s.convergence_phase is None or s.convergence_phase > s.bound:
                late += 1
                if late <= 2:
                    failures.append(
                        f"{_label(key)} seed={seed}: converged at {s.convergence_phase} "
                        f"(bound {s.bound}, failure={s.failure})"
                    )
        if halving or late:
            per_config.append(f"{_label(key)}: {halving} halving, {late} late")
    total = sum(len(e) for e in sweep.by_config.values())
    if per_config:
        detail = f"violations in {len(per_config)} configurations ({'; '.join(per_config)})"
    else:
        detail = f"{total} runs halve every phase and converge within the bound"
    return CriterionResult(2, "convergence rate", not per_config, detail, failures)


def criterion_3(runs: int = RUNS) -> CriterionResult:
    sweep = randomized_sweep(runs)
    failures = []
    for key, entries in sweep.items():
        for seed, s in entries:
            if s.integrity:
                failures.append(f"{_label(key)} seed={seed}: {s.integrity[0]}")
    total = sum(len(e) for e in sweep.by_config.values())
    detail = f"{len(failures)} runs with integrity violations out of {total}"
    return CriterionResult(3, "integrity I-IV", not failures, detail, failures)


def targeted_disagreement(f: int, seeds: int = 20) -> Tuple[int, int]:
    """Largest pairwise disagreement a stay-in-place split adversary reaches.

    Returns ``(n, max_difference)``. At ``n >= ceil(7f/2)+1`` disagreement is
    impossible for ``f`` in {2, 3} (too few faults can stay), so the attack runs
    at ``n = 3f``, where it provably succeeds.
    """
    n = 3 * f
    worst = 0
    for seed in range(seeds):
        config = ScenarioConfig.from_dict(
            {
                "n": n,
                "f": f,
                "inputs": {"uniform": [0, 100]},
                "adversary": "split_endorse",
                "allow_below_threshold": True,
                "round_budget": 6,
                "stop_at_convergence": False,
                "seed": seed,
            }
        )
        result = run(config)
        worst = max(worst, result.reports["pairwise"].detail["max_difference"])
    return n, worst


def criterion_4(runs: int = RUNS) -> CriterionResult:
    sweep = randomized_sweep(runs)
    failures = []
    observed = {}
    for key, entries in sweep.items():
        bound = key[0] // 2
        worst = max(s.max_pairwise for _, s in entries)
        observed[key] = worst
        if worst > bound:
            failures.append(f"{_label(key)}: max pairwise difference {worst} > {bound}")
    power = []
    for f in (2, 3):
        n, worst = targeted_disagreement(f)
        power.append(f"f={f} n={n}: {worst}")
        if worst < 1:
            failures.append(f"stay-in-place split adversary found no disagreement at f={f}, n={n}")
    detail = f"sweep max {max(observed.values())} (bound floor(f/2)); targeted split {', '.join(power)}"
    return CriterionResult(4, "pairwise limit", not failures, detail, failures)


def _lower_bound_config(n: int) -> ScenarioConfig:
    return load_config("theorem2", n=n)


def criterion_5() -> CriterionResult:
    failures = []
    result = run(_lower_bound_config(7))
    trace = result.trace
    if len(trace.rounds) != 200:
        failures.append(f"n=7 ran {len(trace.rounds)} rounds, expected 200")
    for p in trace.phases:
        both = [i for i in p.confession.nodes(HEALTHY) if p.collection.statuses[i] is HEALTHY]
        changed = [i for i in both if p.v_after[i] != p.v_before[i]]
        if changed:
            failures.append(f"n=7 phase {p.phase}: healthy nodes {changed} changed v")
        healthy = [p.v_after[i] for i in p.confession.nodes(HEALTHY)]
        if any(u not in (0.0, 1.0) for u in healthy):
            failures.append(f"n=7 phase {p.phase}: healthy values left {{0, 1}}: {healthy}")
        if p.healthy_range != 1.0:
            failures.append(f"n=7 phase {p.phase}: healthy range {p.healthy_range!r} != 1.0")
    final = trace.phases[-1].healthy_range if trace.phases else None
    big = run(_lower_bound_config(8))
    bound = convergence_bound(1.0, big.config.epsilon)
    if big.convergence_phase is None or big.convergence_phase > bound:
        failures.append(f"n=8 converged at {big.convergence_phase}, bound {bound}")
    detail = (
        f"n=7: {len(trace.rounds)} rounds, final range {final!r}; "
        f"n=8: converged at phase {big.convergence_phase} (bound {bound})"
    )
    return CriterionResult(5, "lower-bound reproduction", not failures, detail, failures[:10])


def _minimal_run(args):
    adversary, seed = args
    config = load_config("minimal_f1", adversary=adversary, seed=seed)
    result = run(config)
    return adversary, seed, result.converged, result.valid, result.failure


def criterion_6(runs: int = RUNS) -> CriterionResult:
    jobs = [(a, seed) for a in GENERAL_PURPOSE for seed in range(runs)]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_minimal_run, jobs, chunksize=64))
    else:
        results = [_minimal_run(job) for job in jobs]
    bad: Dict[str, int] = defaultdict(int)
    failures = []
    for adversary, seed, converged, valid, failure in results:
        if not (converged and valid):
            bad[adversary] += 1
            if bad[adversary] <= 2:
                failures.append(f"{adversary} seed={seed}: converged={converged} valid={valid} {failure or ''}")
    if bad:
        detail = "failing runs: " + ", ".join(f"{a} {k}/{runs}" for a, k in sorted(bad.items()))
    else:
        detail = f"{len(results)} runs converged and stayed valid"
    return CriterionResult(6, "n=4, f=1 small case", not bad, detail, failures)


# independent oracles ----------------------------------------------------------


def num_oracle(x: int, f: int) -> int:
    """Trim count straight from its definition, in exact arithmetic."""
    if x <= f:
        return f
    return max(0, math.ceil(Fraction(f) - Fraction(x - f, 2)))


def reduce_oracle(V: Sequence[Optional[float]], f: int) -> Optional[float]:
    """Peel the minimum and maximum ``num`` times, then take the midpoint.

    Returns ``None`` where the production reduce must raise EmptyAfterTrim.
    """
    x = len([u for u in V if u is None])
    pool = [u for u in V if u is not None]
    for _ in range(num_oracle(x, f)):
        if len(pool) < 2:
            return None
        pool.remove(min(pool))
        pool.remove(max(pool))
    if not pool:
        return None
    return (min(pool) + max(pool)) / 2


def criterion_7(samples: int = 6) -> CriterionResult:
    failures = []
    checked = 0
    rng = random.Random("reduce-oracle")
    for f in range(5):
        for n in range(1, 17):
            for x in range(n + 1):
                checked += 1
                if compute_num(x, f) != num_oracle(x, f):
                    failures.append(f"num(x={x}, f={f}) = {compute_num(x, f)}, oracle {num_oracle(x, f)}")
                for _ in range(samples):
                    values = [rng.choice([rng.uniform(-50, 50), float(rng.randint(-3, 3))]) for _ in range(n - x)]
                    V: List[Optional[float]] = values + [None] * x
                    rng.shuffle(V)
                    expected = reduce_oracle(V, f)
                    try:
                        got: Optional[float] = reduce(V, f)
                    except EmptyAfterTrim:
                        got = None
                    if got != expected:
                        failures.append(f"reduce({V}, f={f}) = {got!r}, oracle {expected!r}")
    detail = f"{checked} (f, n, x) cases with {samples} reduce samples each, {len(failures)} mismatches"
    return CriterionResult(7, "reduce/num oracle", not failures, detail, failures[:10])


def _cli_trace(name: str, hashseed: str, out: Path) -> bytes:
    env = dict(os.environ, PYTHONHASHSEED=hashseed)
    subprocess.run(
        [sys.executable, "-m", "mobile_consensus", "run", name, "--out", str(out)],
        env=env,
        check=False,
        capture_output=True,
    )
    return (out / "trace.jsonl").read_bytes()


def criterion_8() -> CriterionResult:
    failures = []
    configs = [load_config(name) for name in BUNDLED]
    configs += [sweep_config(2, 8, a, 7) for a in GENERAL_PURPOSE]
    for config in configs:
        first, second = dumps_trace(run(config).trace), dumps_trace(run(config).trace)
        if first != second:
            failures.append(f"{config.name}: in-process traces differ")
    # separate interpreters with different hash seeds must agree byte for byte
    with tempfile.TemporaryDirectory() as tmp:
        for name in BUNDLED:
            a = _cli_trace(name, "1", Path(tmp) / f"{name}-a")
            b = _cli_trace(name, "2", Path(tmp) / f"{name}-b")
            if a != b:
                failures.append(f"{name}: traces from two interpreters differ")
    detail = f"{len(configs)} scenarios in process, {len(BUNDLED)} across interpreters"
    return CriterionResult(8, "determinism", not failures, detail, failures)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
}


def run_criteria(numbers: Optional[Sequence[int]] = None, runs: int = RUNS) -> List[CriterionResult]:
    results = []
    for k in numbers or sorted(CRITERIA):
        fn = CRITERIA[k]
        if k in (1, 2, 3, 4, 6):
            results.append(fn(runs))
        else:
            results.append(fn())
    return results
