"""Trace export and import.

JSON Lines layout: the first line is the run header, then one object per
round. Every object is written with a fixed key order so two runs of the same
scenario produce byte-identical files.

Round record fields, in order:

``round``, ``phase``, ``step``
    round number (1-based), phase number, ``"collection"`` or ``"confession"``.
``statuses``
    per node ``"healthy"``, ``"cured"`` or ``"faulty"``.
``v``, ``corrupted``
    every node's stored state variable and corruption flag after the round.
``messages``
    ``[sender, receiver, payload]`` triples sorted by sender then receiver; a
    silent link has no triple. Collection payloads are a number, ``null`` or
    ``"garbage"``; confession payloads are ``{"E": [...]}``, ``"confession"``
    or ``"garbage"``.
``V``
    ``[receiver, [...]]`` pairs for fault-free receivers of a confession
    round, empty otherwise.

Per-phase CSV columns: ``phase, M, m, range, healthy_range, converged``. Row 0
holds the fault-free input range; ``M``/``m``/``range`` cover fault-free
nodes, ``converged`` compares the healthy range with epsilon.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, List, Union

from .harness import HEALTHY, CURED, RoundRecord, Trace, TraceHeader
from .protocol import CONFESSION, GARBAGE, ConfessionMsg, NodeStatus, Step, build_R

PHASE_COLUMNS = ("phase", "M", "m", "range", "healthy_range", "converged")


def _encode_payload(payload: object) -> object:
    if payload is CONFESSION:
        return "confession"
    if payload is GARBAGE:
        return "garbage"
    if isinstance(payload, tuple):
        return {"E": list(payload)}
    return payload


def _decode_payload(payload: object) -> object:
    if payload == "confession":
        return CONFESSION
    if payload == "garbage":
        return GARBAGE
    if isinstance(payload, dict):
        return tuple(None if u is None else float(u) for u in payload["E"])
    if payload is None:
        return None
    return float(payload)


def header_to_dict(header: TraceHeader) -> dict:
    return {
        "type": "header",
        "name": header.name,
        "n": header.n,
        "f": header.f,
        "epsilon": header.epsilon,
        "seed": header.seed,
        "adversary": header.adversary,
        "adversary_params": header.adversary_params,
        "initial_cured": list(header.initial_cured),
        "initial_faulty": None if header.initial_faulty is None else list(header.initial_faulty),
        "inputs": list(header.inputs),
    }


def record_to_dict(record: RoundRecord) -> dict:
    return {
        "type": "round",
        "round": record.round,
        "phase": record.phase,
        "step": record.step.value,
        "statuses": [s.value for s in record.statuses],
        "v": list(record.v),
        "corrupted": list(record.corrupted),
        "messages": [[s, r, _encode_payload(p)] for (s, r), p in sorted(record.messages.items())],
        "V": [[j, list(V)] for j, V in sorted(record.V.items())],
    }


def dumps_trace(trace: Trace) -> str:
    lines = [json.dumps(header_to_dict(trace.header), allow_nan=False)]
    lines.extend(json.dumps(record_to_dict(r), allow_nan=False) for r in trace.rounds)
    return "\n".join(lines) + "\n"


def write_trace(trace: Trace, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_trace(trace), encoding="utf-8")
    return path


def _header_from_dict(data: dict) -> TraceHeader:
    return TraceHeader(
        n=data["n"],
        f=data["f"],
        inputs=tuple(float(u) for u in data["inputs"]),
        epsilon=float(data["epsilon"]),
        seed=data["seed"],
        adversary=data["adversary"],
        adversary_params=dict(data.get("adversary_params") or {}),
        initial_cured=tuple(data.get("initial_cured") or ()),
        initial_faulty=None if data.get("initial_faulty") is None else tuple(data["initial_faulty"]),
        name=data.get("name", ""),
    )


def _record_from_dict(data: dict, n: int) -> RoundRecord:
    step = Step(data["step"])
    statuses = tuple(NodeStatus(s) for s in data["statuses"])
    messages = {(s, r): _decode_payload(p) for s, r, p in data["messages"]}
    V = {j: tuple(None if u is None else float(u) for u in vec) for j, vec in data["V"]}
    R = {}
    if step is Step.CONFESSION:
        # R is not stored; it is fully determined by what was delivered
        for j in V:
            inbox = [ConfessionMsg(s, p) for (s, r), p in sorted(messages.items()) if r == j]
            R[j] = build_R(inbox, n)
    return RoundRecord(
        round=data["round"],
        phase=data["phase"],
        step=step,
        statuses=statuses,
        messages=messages,
        v=tuple(float(u) for u in data["v"]),
        corrupted=tuple(bool(c) for c in data["corrupted"]),
        R=R,
        V=V,
    )


def loads_trace(text: str) -> Trace:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty trace")
    first = json.loads(lines[0])
    if first.get("type") != "header":
        raise ValueError("trace must start with a header line")
    header = _header_from_dict(first)
    rounds = []
    for number, line in enumerate(lines[1:], start=2):
        data = json.loads(line)
        if data.get("type") != "round":
            raise ValueError(f"line {number}: expected a round record")
        rounds.append(_record_from_dict(data, header.n))
    return Trace(header, rounds)


def read_trace(path: Union[str, Path]) -> Trace:
    return loads_trace(Path(path).read_text(encoding="utf-8"))


def phase_rows(trace: Trace) -> List[dict]:
    eps = trace.header.epsilon
    low, high = trace.input_bounds()
    first = trace.rounds[0] if trace.rounds else None
    healthy0 = [trace.header.inputs[i] for i in first.nodes(HEALTHY)] if first else list(trace.header.inputs)
    h0 = max(healthy0) - min(healthy0) if healthy0 else None
    rows = [{"phase": 0, "M": high, "m": low, "range": high - low, "healthy_range": h0,
             "converged": h0 is not None and h0 < eps}]
    for p in trace.phases:
        h = p.healthy_range
        rows.append({"phase": p.phase, "M": p.M, "m": p.m, "range": p.range, "healthy_range": h,
                     "converged": h is not None and h < eps})
    return rows


def phases_csv(trace: Trace) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=PHASE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in phase_rows(trace):
        writer.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                         for k in PHASE_COLUMNS})
    return buffer.getvalue()


def write_phases_csv(trace: Trace, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(phases_csv(trace), encoding="utf-8")
    return path


def write_rows_csv(rows: Iterable[dict], columns, path: Union[str, Path, None] = None) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if row.get(k) is None else row[k] for k in columns})
    text = buffer.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text
