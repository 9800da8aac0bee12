import csv
import io
import json

import pytest

from mobile_consensus.checks import run_all_checks
from mobile_consensus.config import BUNDLED, ScenarioConfig, load_config
from mobile_consensus.harness import run
from mobile_consensus.traceio import PHASE_COLUMNS, dumps_trace, loads_trace, phases_csv, read_trace, write_trace


@pytest.mark.parametrize("adversary", ["random", "hide_split", "theorem2"])
def test_round_trip_is_exact(adversary):
    config = load_config("theorem2", round_budget=6) if adversary == "theorem2" else ScenarioConfig.from_dict(
        {"n": 8, "f": 2, "inputs": {"uniform": [0, 100]}, "adversary": adversary, "seed": 3, "min_phases": 3}
    )
    trace = run(config).trace
    text = dumps_trace(trace)
    back = loads_trace(text)
    assert dumps_trace(back) == text
    assert [r.R for r in back.rounds] == [r.R for r in trace.rounds]
    assert [r.V for r in back.rounds] == [r.V for r in trace.rounds]
    original, reloaded = run_all_checks(trace), run_all_checks(back)
    assert {k: v.violations for k, v in original.items()} == {k: v.violations for k, v in reloaded.items()}


def test_record_layout():
    text = dumps_trace(run(load_config("canonical")).trace)
    header, first, second = (json.loads(line) for line in text.splitlines()[:3])
    assert header["type"] == "header" and header["n"] == 8
    assert list(first) == ["type", "round", "phase", "step", "statuses", "v", "corrupted", "messages", "V"]
    assert first["step"] == "collection" and first["V"] == []
    assert second["step"] == "confession"
    kinds = {type(p).__name__ for _, _, p in second["messages"]}
    assert kinds <= {"dict", "str"}
    assert [m[:2] for m in first["messages"]] == sorted(m[:2] for m in first["messages"])


def test_phase_csv():
    trace = run(load_config("canonical")).trace
    rows = list(csv.DictReader(io.StringIO(phases_csv(trace))))
    assert tuple(rows[0]) == PHASE_COLUMNS
    assert [int(r["phase"]) for r in rows] == list(range(len(trace.phases) + 1))
    ranges = [float(r["range"]) for r in rows]
    assert all(b <= a / 2 + 1e-9 for a, b in zip(ranges, ranges[1:]))
    assert rows[-1]["converged"] == "True"


def test_write_and_read(tmp_path):
    for name in BUNDLED:
        trace = run(load_config(name, round_budget=4)).trace
        path = write_trace(trace, tmp_path / name / "trace.jsonl")
        assert dumps_trace(read_trace(path)) == path.read_text()


def test_rejects_malformed():
    with pytest.raises(ValueError):
        loads_trace("")
    with pytest.raises(ValueError):
        loads_trace('{"type": "round"}\n')
