"""Per-node behaviour of the confession-based approximate consensus protocol.

Everything here is a pure function over immutable values. A phase is two
synchronous rounds:

* collection: every non-cured node broadcasts its state variable, cured
  nodes broadcast the null value; receivers record what they heard in ``E``.
* confession: every non-cured node broadcasts its ``E`` vector, cured nodes
  broadcast a confession; receivers build the trustworthy vector ``V`` and
  replace their state variable with ``reduce(V)``.

The null value is represented by ``None``.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Tuple, Union

Value = Optional[float]
BOTTOM: Value = None


class NodeStatus(str, enum.Enum):
    HEALTHY = "healthy"
    CURED = "cured"
    FAULTY = "faulty"


class Step(str, enum.Enum):
    COLLECTION = "collection"
    CONFESSION = "confession"


class Marker(str, enum.Enum):
    """Non-vector payloads and table entries."""

    CONFESSION = "confession"
    GARBAGE = "garbage"
    ABSENT = "absent"


CONFESSION = Marker.CONFESSION
GARBAGE = Marker.GARBAGE
ABSENT = Marker.ABSENT

EVector = Tuple[Value, ...]
VVector = Tuple[Value, ...]
REntry = Union[EVector, Marker]
RTable = Tuple[REntry, ...]
CollectionPayload = Union[Value, Marker]
ConfessionPayload = Union[EVector, Marker]


class EmptyAfterTrim(ArithmeticError):
    """Trimming removed every non-null value; the system lacks redundancy."""


class DuplicateSender(ValueError):
    """An inbox held two messages from one sender (a simulator bug)."""


@dataclass(frozen=True)
class CollectionMsg:
    sender: int
    payload: CollectionPayload


@dataclass(frozen=True)
class ConfessionMsg:
    sender: int
    payload: ConfessionPayload


@dataclass(frozen=True)
class NodeState:
    id: int
    v: float
    E: EVector
    lastR: RTable = ()
    lastV: VVector = ()
    corrupted: bool = False

    @classmethod
    def initial(cls, node_id: int, value: float, n: int, corrupted: bool = False) -> "NodeState":
        return cls(id=node_id, v=float(value), E=(BOTTOM,) * n, corrupted=corrupted)


def is_real(value: object) -> bool:
    return type(value) is float and math.isfinite(value)


def as_value(payload: object) -> Value:
    """Map a received collection payload to a Value; anything malformed is null."""
    if isinstance(payload, (int, float)) and not isinstance(payload, bool):
        value = float(payload)
        if math.isfinite(value):
            return value
    return BOTTOM


def is_legit_evector(payload: object, n: int) -> bool:
    if not isinstance(payload, tuple) or len(payload) != n:
        return False
    return all(u is None or is_real(u) for u in payload)


def _require_fault_free(status: NodeStatus) -> None:
    if status is NodeStatus.FAULTY:
        raise ValueError("faulty nodes are driven by the adversary, not the protocol")


def _unique_senders(inbox: Iterable, n: int) -> dict:
    by_sender = {}
    for msg in inbox:
        if not 0 <= msg.sender < n:
            raise ValueError(f"sender {msg.sender} outside 0..{n - 1}")
        if msg.sender in by_sender:
            raise DuplicateSender(f"two messages from sender {msg.sender}")
        by_sender[msg.sender] = msg.payload
    return by_sender


def collection_send(state: NodeState, status: NodeStatus) -> CollectionMsg:
    _require_fault_free(status)
    if status is NodeStatus.CURED:
        return CollectionMsg(state.id, BOTTOM)
    return CollectionMsg(state.id, state.v)


def collection_compute(
    state: NodeState, inbox: Sequence[CollectionMsg], status: NodeStatus
) -> NodeState:
    """Record the received values in ``E``; the state variable is untouched.

    Missing senders and malformed payloads become null entries. A cured node
    keeps its (untrusted) stored value until the next reduce.
    """
    _require_fault_free(status)
    n = len(state.E)
    received = _unique_senders(inbox, n)
    E = tuple(as_value(received.get(j)) for j in range(n))
    return replace(state, E=E)


def confession_send(state: NodeState, status: NodeStatus) -> ConfessionMsg:
    _require_fault_free(status)
    if status is NodeStatus.CURED:
        return ConfessionMsg(state.id, CONFESSION)
    return ConfessionMsg(state.id, state.E)


def build_R(inbox: Sequence[ConfessionMsg], n: int) -> RTable:
    received = _unique_senders(inbox, n)
    table = []
    for k in range(n):
        payload = received.get(k, ABSENT)
        if payload is CONFESSION:
            table.append(CONFESSION)
        elif is_legit_evector(payload, n):
            table.append(payload)
        else:
            table.append(ABSENT)
    return tuple(table)


def evaluate_trustworthy(R: RTable, j: int, n: int, f: int) -> Value:
    """Return the trustworthy value for sender ``j``, or null.

    A value ``u`` qualifies when the endorsers of ``u`` (proper vectors ``E_k``
    with ``E_k[j] == u``) plus the confessors number at least ``n - f``. The
    sender's own entry must be a proper vector. Zero or several qualifying
    values both yield null.
    """
    if not isinstance(R[j], tuple):
        return BOTTOM
    quorum = n - f
    confessions = sum(1 for entry in R if entry is CONFESSION)
    if confessions >= quorum:
        # every conceivable u qualifies, so the candidate is never unique
        return BOTTOM
    endorsements = Counter(entry[j] for entry in R if isinstance(entry, tuple))
    winners = [u for u, count in endorsements.items() if count + confessions >= quorum]
    if len(winners) == 1:
        return winners[0]
    return BOTTOM


def trustworthy_vector(R: RTable, n: int, f: int) -> VVector:
    """``evaluate_trustworthy`` for every sender, sharing one column scan."""
    quorum = n - f
    confessions = sum(1 for entry in R if entry is CONFESSION)
    if confessions >= quorum:
        return (BOTTOM,) * n
    need = quorum - confessions
    rows = [entry for entry in R if isinstance(entry, tuple)]
    if not rows:
        return (BOTTOM,) * n
    V = []
    for j, column in enumerate(zip(*rows)):
        if not isinstance(R[j], tuple):
            V.append(BOTTOM)
            continue
        winners = [u for u, count in Counter(column).items() if count >= need]
        V.append(winners[0] if len(winners) == 1 else BOTTOM)
    return tuple(V)


def compute_num(x: int, f: int) -> int:
    """Number of values trimmed from each end when ``x`` entries of V are null."""
    if x <= f:
        return f
    # ceil(f - (x - f) / 2) == ceil((3f - x) / 2), floored at zero
    return max(0, -((x - 3 * f) // 2))


def reduce(V: Sequence[Value], f: int) -> float:
    x = sum(1 for u in V if u is None)
    num = compute_num(x, f)
    ordered = sorted(u for u in V if u is not None)
    kept = ordered[num:len(ordered) - num]
    if not kept:
        raise EmptyAfterTrim(
            f"{len(ordered)} non-null values, trimming {num} from each end (f={f}, x={x})"
        )
    return (kept[0] + kept[-1]) / 2


def confession_compute(state: NodeState, R: RTable, n: int, f: int) -> NodeState:
    V = trustworthy_vector(R, n, f)
    return replace(state, v=reduce(V, f), lastR=R, lastV=V, corrupted=False)
