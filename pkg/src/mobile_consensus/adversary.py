"""Omniscient mobile adversaries.

An adversary decides, at the start of every round, which nodes are faulty
(at most ``f``) and exactly what each faulty node delivers to each receiver.
Strategies are split into a *mobility* policy (where the faults sit in each
round of a phase) and a *behaviour* (what faulty nodes send). Mobility plans a
whole phase at its collection round so a behaviour can prepare attacks that
span both rounds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Mapping, Optional, Tuple

from .config import ConfigError
from .protocol import (
    BOTTOM,
    CONFESSION,
    GARBAGE,
    EVector,
    NodeState,
    NodeStatus,
    Step,
)

ForgeryPlan = Dict[Tuple[int, int], object]


@dataclass(frozen=True)
class AdversaryView:
    """Read-only snapshot of the whole execution handed to the adversary.

    ``schedule[0]`` is the set of nodes faulty before the run starts (the
    initially cured ones); ``schedule[t]`` is the faulty set of round ``t``.
    During ``select_faulty`` the current round is not in ``schedule`` yet and
    ``honest`` is empty.
    """

    round: int
    phase: int
    step: Step
    n: int
    f: int
    inputs: Tuple[float, ...]
    states: Tuple[NodeState, ...]
    schedule: Tuple[FrozenSet[int], ...]
    honest: Mapping[Tuple[int, int], object] = field(default_factory=dict)
    previous: Mapping[Tuple[int, int], object] = field(default_factory=dict)

    @property
    def faulty(self) -> FrozenSet[int]:
        if len(self.schedule) > self.round:
            return self.schedule[self.round]
        return frozenset()

    def status(self, node: int, round_: Optional[int] = None) -> NodeStatus:
        t = self.round if round_ is None else round_
        if node in self.schedule[t]:
            return NodeStatus.FAULTY
        if node in self.schedule[t - 1]:
            return NodeStatus.CURED
        return NodeStatus.HEALTHY

    def input_bounds(self) -> Tuple[float, float]:
        """Range of the inputs of nodes fault-free in round 1 (once known)."""
        first = self.schedule[1] if len(self.schedule) > 1 else frozenset()
        values = [u for i, u in enumerate(self.inputs) if i not in first] or list(self.inputs)
        return min(values), max(values)

    def received_E(self, node: int) -> EVector:
        """The E vector ``node`` would hold from last round's deliveries."""
        out = []
        for j in range(self.n):
            payload = self.previous.get((j, node), BOTTOM)
            out.append(payload if isinstance(payload, float) else BOTTOM)
        return tuple(out)

    def fault_free_values(self) -> list:
        return [s.v for s in self.states if not s.corrupted]


# -- mobility -----------------------------------------------------------------


class Mobility:
    """Plans ``(collection_set, confession_set)`` for each phase."""

    def __init__(self, n: int, f: int, rng: random.Random, initial: Optional[FrozenSet[int]]):
        self.n, self.f, self.rng = n, f, rng
        self.initial = initial

    def start_set(self) -> FrozenSet[int]:
        if self.initial is not None:
            return frozenset(self.initial)
        return frozenset(self.rng.sample(range(self.n), self.f))

    def plan(self, phase: int, previous: FrozenSet[int]) -> Tuple[FrozenSet[int], FrozenSet[int]]:
        raise NotImplementedError


class NoMobility(Mobility):
    def plan(self, phase, previous):
        return frozenset(), frozenset()


class StaticMobility(Mobility):
    def plan(self, phase, previous):
        if phase == 1:
            self.fixed = self.start_set()
        return self.fixed, self.fixed


class FullSwapMobility(Mobility):
    """Every round's faulty set is disjoint from the previous round's."""

    def _swap(self, current: FrozenSet[int]) -> FrozenSet[int]:
        pool = [i for i in range(self.n) if i not in current]
        return frozenset(self.rng.sample(pool, min(self.f, len(pool))))

    def plan(self, phase, previous):
        collection = self.start_set() if phase == 1 else self._swap(previous)
        return collection, self._swap(collection)


class PartialMobility(Mobility):
    """Move ``moves`` faults per round (random 1..f-1 when unset)."""

    def __init__(self, n, f, rng, initial, moves: Optional[int] = None):
        super().__init__(n, f, rng, initial)
        self.moves = moves

    def _move(self, current: FrozenSet[int]) -> FrozenSet[int]:
        if self.moves is None:
            k = self.rng.randint(1, max(1, self.f - 1)) if self.f > 1 else self.rng.randint(0, 1)
        else:
            k = self.moves
        k = min(k, len(current))
        leaving = self.rng.sample(sorted(current), k)
        pool = [i for i in range(self.n) if i not in current]
        arriving = self.rng.sample(pool, min(k, len(pool)))
        return (current - set(leaving)) | frozenset(arriving)

    def plan(self, phase, previous):
        collection = self.start_set() if phase == 1 else self._move(previous)
        return collection, self._move(collection)


class RandomMobility(Mobility):
    """Independent uniformly random fault sets, usually of full size."""

    def _draw(self) -> FrozenSet[int]:
        size = self.f if self.rng.random() < 0.5 else self.rng.randint(0, self.f)
        return frozenset(self.rng.sample(range(self.n), size))

    def plan(self, phase, previous):
        collection = self.start_set() if phase == 1 else self._draw()
        return collection, self._draw()


class StaySplitMobility(Mobility):
    """``stay`` nodes stay faulty forever; the rest move every round.

    The default ``stay`` is the largest number of stayers that can still be
    endorsed differently at two receivers: f - ceil(f/2) - 1, at least 1.
    """

    def __init__(self, n, f, rng, initial, stay: Optional[int] = None):
        super().__init__(n, f, rng, initial)
        if stay is None:
            stay = max(1, f - (f + 1) // 2 - 1)
        self.stay = min(stay, f)

    def plan(self, phase, previous):
        if phase == 1:
            start = sorted(self.start_set())
            self.stayers = frozenset(start[: self.stay])
        others = [i for i in range(self.n) if i not in self.stayers]
        movers = self.f - len(self.stayers)
        if phase == 1 and self.initial is not None:
            collection = frozenset(self.initial)
        else:
            pool = [i for i in others if i not in previous] or others
            collection = self.stayers | frozenset(self.rng.sample(pool, min(movers, len(pool))))
        pool = [i for i in others if i not in collection]
        confession = self.stayers | frozenset(self.rng.sample(pool, min(movers, len(pool))))
        return collection, confession


MOBILITY: Dict[str, Callable[..., Mobility]] = {
    "none": NoMobility,
    "static": StaticMobility,
    "full_swap": FullSwapMobility,
    "partial": PartialMobility,
    "random": RandomMobility,
    "stay_split": StaySplitMobility,
}


# -- behaviours ---------------------------------------------------------------


class Adversary:
    """Base strategy: no faults at all.

    Subclasses override :meth:`forge_messages` and optionally :meth:`corrupt`.
    """

    name = "none"
    default_mobility = "none"

    def __init__(self, rng: random.Random, mobility: Optional[str] = None, **params):
        self.rng = rng
        self.mobility_name = mobility or self.default_mobility
        if self.mobility_name not in MOBILITY:
            raise ConfigError(f"unknown mobility {self.mobility_name!r}")
        self.mobility_params = {k: params.pop(k) for k in ("moves", "stay") if k in params}
        self.params = params
        self._plan: Tuple[FrozenSet[int], FrozenSet[int]] = (frozenset(), frozenset())

    def setup(self, n: int, f: int, inputs, initial_faulty, initial_cured) -> None:
        if self.params:
            raise ConfigError(f"{self.name}: unknown parameters {sorted(self.params)}")
        initial = None if initial_faulty is None else frozenset(initial_faulty)
        self.mobility = MOBILITY[self.mobility_name](n, f, self.rng, initial, **self.mobility_params)

    def select_faulty(self, view: AdversaryView) -> FrozenSet[int]:
        if view.step is Step.COLLECTION:
            self._plan = self.mobility.plan(view.phase, view.schedule[-1])
            return self._plan[0]
        return self._plan[1]

    def forge_messages(self, view: AdversaryView) -> ForgeryPlan:
        return {}

    def corrupt(self, view: AdversaryView, node: int) -> Optional[float]:
        """New stored state variable for a faulty node (``None`` keeps it)."""
        return None


class SilentAdversary(Adversary):
    name = "silent"
    default_mobility = "random"


class ExtremeAdversary(Adversary):
    """Faulty nodes push values ``offset`` beyond the input range."""

    name = "extreme"
    default_mobility = "partial"

    def __init__(self, rng, mobility=None, direction: str = "high", offset: float = 10.0, **params):
        super().__init__(rng, mobility, **params)
        if direction not in ("high", "low", "both"):
            raise ConfigError(f"extreme: direction must be high, low or both, not {direction!r}")
        self.direction = direction
        self.offset = float(offset)

    def _value(self, view: AdversaryView, sender: int) -> float:
        low, high = view.input_bounds()
        if self.direction == "high" or (self.direction == "both" and sender % 2 == 0):
            return high + self.offset
        return low - self.offset

    def forge_messages(self, view):
        plan: ForgeryPlan = {}
        for s in sorted(view.faulty):
            value = self._value(view, s)
            payload = value if view.step is Step.COLLECTION else (value,) * view.n
            for r in range(view.n):
                plan[(s, r)] = payload
        return plan

    def corrupt(self, view, node):
        return self._value(view, node)


class SplitEndorseAdversary(Adversary):
    """Show one half of the fault-free nodes ``low`` and the other half ``high``.

    Nodes faulty in both rounds of a phase send ``low`` to group A and
    ``high`` to group B in the collection round; every faulty node then
    endorses the matching value towards each group in the confession round.
    With ``lie_about_honest`` the confession-round vectors also misreport
    what fault-free senders said.
    """

    name = "split_endorse"
    default_mobility = "static"

    def __init__(self, rng, mobility=None, spread: float = 1.0, lie_about_honest: bool = False, **params):
        super().__init__(rng, mobility, **params)
        self.spread = float(spread)
        self.lie_about_honest = bool(lie_about_honest)
        self.group_a: FrozenSet[int] = frozenset()

    def _values(self, view):
        low, high = view.input_bounds()
        return low - self.spread, high + self.spread

    def select_faulty(self, view):
        chosen = super().select_faulty(view)
        if view.step is Step.COLLECTION:
            collection, confession = self._plan
            healthy_next = [i for i in range(view.n) if i not in collection | confession]
            half = (len(healthy_next) + 1) // 2
            group_b = frozenset(healthy_next[half:])
            self.group_a = frozenset(range(view.n)) - group_b
        return chosen

    def forge_messages(self, view):
        low, high = self._values(view)
        collection, confession = self._plan
        stayers = collection & confession
        plan: ForgeryPlan = {}
        if view.step is Step.COLLECTION:
            for s in sorted(view.faulty):
                for r in range(view.n):
                    plan[(s, r)] = low if (s not in stayers or r in self.group_a) else high
            return plan
        for k in sorted(view.faulty):
            base = list(view.received_E(k))
            for r in range(view.n):
                value = low if r in self.group_a else high
                forged = list(base)
                for j in range(view.n):
                    if j in stayers or (self.lie_about_honest and j not in collection):
                        forged[j] = value
                plan[(k, r)] = tuple(forged)
        return plan


class RandomAdversary(Adversary):
    """Fuzzing behaviour: every (sender, receiver) pair gets a random payload."""

    name = "random"
    default_mobility = "random"

    COLLECTION_MOVES = ("silent", "garbage", "bottom", "real", "echo", "echo")
    CONFESSION_MOVES = ("silent", "garbage", "confession", "malformed", "honest", "perturbed", "perturbed", "consistent")

    def _real(self, view) -> float:
        low, high = view.input_bounds()
        return self.rng.uniform(low - 50.0, high + 50.0)

    def _echo(self, view) -> float:
        pool = view.fault_free_values()
        return self.rng.choice(pool) if pool else self._real(view)

    def _perturb(self, view, E: EVector) -> EVector:
        out = list(E)
        for j in range(view.n):
            if self.rng.random() < 0.3:
                out[j] = self.rng.choice((BOTTOM, self._real(view), self._echo(view)))
        return tuple(out)

    def forge_messages(self, view):
        plan: ForgeryPlan = {}
        rng = self.rng
        for s in sorted(view.faulty):
            if view.step is Step.COLLECTION:
                for r in range(view.n):
                    move = rng.choice(self.COLLECTION_MOVES)
                    if move == "garbage":
                        plan[(s, r)] = GARBAGE
                    elif move == "bottom":
                        plan[(s, r)] = BOTTOM
                    elif move == "real":
                        plan[(s, r)] = self._real(view)
                    elif move == "echo":
                        plan[(s, r)] = self._echo(view)
                continue
            honest = view.received_E(s)
            consistent = self._perturb(view, honest)
            for r in range(view.n):
                move = rng.choice(self.CONFESSION_MOVES)
                if move == "garbage":
                    plan[(s, r)] = GARBAGE
                elif move == "confession":
                    plan[(s, r)] = CONFESSION
                elif move == "malformed":
                    plan[(s, r)] = honest[:-1]
                elif move == "honest":
                    plan[(s, r)] = honest
                elif move == "perturbed":
                    plan[(s, r)] = self._perturb(view, honest)
                elif move == "consistent":
                    plan[(s, r)] = consistent
        return plan

    def corrupt(self, view, node):
        return self._real(view)


class HideSplitAdversary(Adversary):
    """Pull fault-free receivers apart through per-receiver confessions.

    Each phase the faults that sat in the previous confession round stay for
    the collection round and then move to ``f`` fresh nodes that were healthy
    in the collection round (so they sent their true values). In the
    confession round every fresh faulty node confesses to some receivers and
    sends its honest vector to the others. A confession voids the sender's own
    entry at that receiver, so receivers see different numbers of nulls, trim
    different amounts and land on different values. For each receiver the
    strategy picks the hiding pattern that drives its reduce result lowest or
    highest, alternating low/high over the receivers.
    """

    name = "hide_split"

    def setup(self, n, f, inputs, initial_faulty, initial_cured):
        super().setup(n, f, inputs, initial_faulty, initial_cured)
        self.n, self.f = n, f
        self.held: FrozenSet[int] = frozenset(initial_faulty) if initial_faulty is not None else None
        self.movers: FrozenSet[int] = frozenset()
        self.assignment: Dict[int, FrozenSet[int]] = {}

    def _outcome(self, values: Dict[int, float], hidden: FrozenSet[int]) -> Optional[float]:
        from .protocol import EmptyAfterTrim, reduce

        V = [values.get(j) if j not in hidden else None for j in range(self.n)]
        try:
            return reduce(V, self.f)
        except EmptyAfterTrim:
            return None

    def _patterns(self, values, movers):
        from itertools import combinations

        outcomes = {}
        for size in range(len(movers) + 1):
            for hidden in combinations(sorted(movers), size):
                result = self._outcome(values, frozenset(hidden))
                if result is not None:
                    outcomes[frozenset(hidden)] = result
        return outcomes

    def select_faulty(self, view):
        from itertools import combinations

        if view.step is Step.COLLECTION:
            if self.held is None:
                self.held = frozenset(self.rng.sample(range(view.n), self.f))
            elif view.phase > 1:
                self.held = self.movers
            return self.held
        held = self.held
        candidates = [i for i in range(view.n) if i not in held and view.status(i, view.round - 1) is NodeStatus.HEALTHY]
        # the values every receiver will trust: healthy collection senders
        values = {i: view.states[i].v for i in candidates}
        if len(candidates) > 2 * self.f:
            # only nodes holding extreme values are worth moving onto
            ranked = sorted(candidates, key=lambda i: (values[i], i))
            pool = sorted(ranked[: self.f] + ranked[-self.f:])
        else:
            pool = candidates
        best, best_spread = None, -1.0
        for movers in combinations(pool, min(self.f, len(pool))):
            outcomes = self._patterns(values, movers)
            if not outcomes:
                continue
            spread = max(outcomes.values()) - min(outcomes.values())
            if spread > best_spread:
                best, best_spread = (frozenset(movers), outcomes), spread
        self.movers, outcomes = best if best else (frozenset(), {frozenset(): 0.0})
        low = min(outcomes, key=lambda h: (outcomes[h], sorted(h)))
        high = max(outcomes, key=lambda h: (outcomes[h], sorted(h)))
        receivers = [i for i in range(view.n) if i not in self.movers]
        self.assignment = {r: (low if k % 2 == 0 else high) for k, r in enumerate(receivers)}
        return self.movers

    def forge_messages(self, view):
        plan: ForgeryPlan = {}
        if view.step is Step.COLLECTION:
            return plan
        for k in sorted(view.faulty):
            honest = view.received_E(k)
            for r in range(view.n):
                hidden = self.assignment.get(r, frozenset())
                plan[(k, r)] = CONFESSION if k in hidden else honest
        return plan


class LowerBoundAdversary(Adversary):
    """Scripted counterexample for n = 7, f = 2 showing the ceil(7f/2)+1 bound is tight.

    Roles per phase (initial labels a..g = nodes 0..6):

    ====  =========  =======================  ==========================
    role  phase 1    collection round         confession round
    ====  =========  =======================  ==========================
    C1    a          cured, sees m            healthy, sees m
    C2    b          cured, sees m'           healthy, sees m'
    F1    c          faulty                   faulty, endorses split
    F2    d          faulty                   cured, sees m
    H1    e          healthy (value m)        faulty, confesses
    H2    f          healthy (value m)        healthy, sees m
    G     g          healthy (value m')       healthy, sees m'
    ====  =========  =======================  ==========================

    After each phase the roles rotate (C1, C2, F1, F2, H1) <- (F1, H1, C1, C2, F2)
    so the next phase starts in the same configuration with the faults on
    the previous phase's cured pair. Nodes beyond the seventh stay healthy and
    are shown the ``m'`` side.
    """

    name = "theorem2"
    ROLES = ("C1", "C2", "F1", "F2", "H1", "H2", "G")

    def setup(self, n, f, inputs, initial_faulty, initial_cured):
        if self.params:
            raise ConfigError(f"theorem2: unknown parameters {sorted(self.params)}")
        if f != 2 or n < 7:
            raise ConfigError("theorem2 needs f=2 and n>=7")
        if frozenset(initial_cured) != {0, 1} or frozenset(initial_faulty or ()) != {2, 3}:
            raise ConfigError("theorem2 needs initial_cured=[0,1] and initial_faulty=[2,3]")
        self.n = n
        self.roles = dict(zip(self.ROLES, range(7)))
        self.low = self.high = 0.0

    def _rotate(self) -> None:
        r = self.roles
        self.roles = {
            "C1": r["F1"], "C2": r["H1"], "F1": r["C1"], "F2": r["C2"],
            "H1": r["F2"], "H2": r["H2"], "G": r["G"],
        }

    def select_faulty(self, view):
        r = self.roles
        if view.step is Step.COLLECTION:
            if view.phase > 1:
                self._rotate()
                r = self.roles
            return frozenset((r["F1"], r["F2"]))
        return frozenset((r["F1"], r["H1"]))

    def forge_messages(self, view):
        r = self.roles
        plan: ForgeryPlan = {}
        if view.step is Step.COLLECTION:
            self.low = view.states[r["H2"]].v
            self.high = view.states[r["G"]].v
            sees_low = {r["C1"], r["H1"], r["H2"]}
            for s in (r["F1"], r["F2"]):
                for dest in range(view.n):
                    plan[(s, dest)] = self.low if dest in sees_low else self.high
            return plan
        sees_low = {r["C1"], r["F2"], r["H2"]}
        pretend = (r["F1"], r["F2"], r["H1"])
        low_E = list(view.states[r["H2"]].E)
        high_E = list(view.states[r["G"]].E)
        for j in pretend:
            low_E[j] = self.low
            high_E[j] = self.high
        for dest in range(view.n):
            plan[(r["F1"], dest)] = tuple(low_E) if dest in sees_low else tuple(high_E)
            plan[(r["H1"], dest)] = CONFESSION
        return plan


BUILTINS: Dict[str, Tuple[type, dict]] = {
    "none": (Adversary, {}),
    "silent": (SilentAdversary, {}),
    "extreme": (ExtremeAdversary, {}),
    "split_endorse": (SplitEndorseAdversary, {}),
    "static": (RandomAdversary, {"mobility": "static"}),
    "full_swap": (RandomAdversary, {"mobility": "full_swap"}),
    "random": (RandomAdversary, {}),
    "partial_move": (SplitEndorseAdversary, {"mobility": "stay_split", "lie_about_honest": True}),
    "hide_split": (HideSplitAdversary, {}),
    "theorem2": (LowerBoundAdversary, {}),
}

# strategies usable with arbitrary inputs and initial fault placement
GENERAL_PURPOSE = tuple(name for name in BUILTINS if name != "theorem2")


def make_adversary(name: str, params: Optional[dict] = None, rng: Optional[random.Random] = None) -> Adversary:
    try:
        cls, defaults = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown adversary {name!r}; choose from {sorted(BUILTINS)}") from None
    merged = {**defaults, **(params or {})}
    return cls(rng or random.Random(0), **merged)
