import csv
import io
import json
import subprocess
import sys

import pytest

from mobile_consensus.cli import EXIT_CONFIG, EXIT_NON_CONVERGED, EXIT_OK, VERDICT_EXIT, main
from mobile_consensus.sweep import Grid, run_grid


def test_run_canonical(tmp_path, capsys):
    assert main(["run", "canonical", "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "phases.csv").open()))
    ranges = [float(r["range"]) for r in rows]
    assert len(ranges) >= 3
    assert all(b <= a / 2 + 1e-9 for a, b in zip(ranges, ranges[1:]))
    assert (tmp_path / "trace.jsonl").exists()
    assert "verdict: ok" in capsys.readouterr().out


def test_run_lower_bound_scenario_does_not_converge(tmp_path):
    assert main(["run", "theorem2", "--out", str(tmp_path)]) == EXIT_NON_CONVERGED


def test_run_minimal_f1(tmp_path):
    assert main(["run", "minimal_f1", "--out", str(tmp_path)]) == EXIT_OK


def test_config_errors(tmp_path):
    assert main(["run", "canonical", "--adversary", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 7, "f": 2, "inputs": [0] * 7}))
    assert main(["run", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", str(bad), "--allow-below-threshold", "--out", str(tmp_path / "x")]) == EXIT_OK


def test_seed_override_changes_trace(tmp_path):
    main(["run", "canonical", "--seed", "1", "--out", str(tmp_path / "a")])
    main(["run", "canonical", "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() != (tmp_path / "b" / "trace.jsonl").read_bytes()


def test_check_verb(tmp_path, capsys):
    main(["run", "canonical", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["check", str(tmp_path / "trace.jsonl")]) == EXIT_OK
    assert "integrity: ok" in capsys.readouterr().out
    assert main(["check", str(tmp_path / "missing.jsonl")]) != EXIT_OK


def test_exit_codes_are_distinct():
    assert len(set(VERDICT_EXIT.values())) == len(VERDICT_EXIT)
    assert EXIT_CONFIG not in VERDICT_EXIT.values()


def test_module_entry_point(tmp_path):
    done = subprocess.run(
        [sys.executable, "-m", "mobile_consensus", "run", "fixedpoint", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert done.returncode == 0, done.stderr


def test_sweep_lower_bound_grid(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(
        json.dumps(
            {
                "base": "theorem2",
                "n": [7, 8, 9],
                "rules": [{"when": {"n": [8, 9]}, "set": {"adversary": "split_endorse", "round_budget": None}}],
            }
        )
    )
    out = tmp_path / "rows.csv"
    assert main(["sweep", str(grid), "--out", str(out)]) == EXIT_OK
    rows = {int(r["n"]): r for r in csv.DictReader(out.open())}
    assert rows[7]["converged"] == "False" and rows[7]["verdict"] == "non_converged"
    assert rows[8]["converged"] == rows[9]["converged"] == "True"


def test_sweep_lower_bound_script_everywhere():
    rows = run_grid(Grid.from_dict({"base": "theorem2", "n": [7, 8, 9]}))
    assert [r["converged"] for r in rows] == [False, True, True]


def test_sweep_f0_converges_in_one_phase():
    rows = run_grid(Grid.from_dict({"base": "canonical", "f": [0], "n": {"min": 1, "max": 6}, "adversary": ["random", "none"]}))
    assert len(rows) == 12
    assert all(r["phases_to_converge"] == 1 for r in rows)


def test_sweep_repeated_seeds_identical():
    grid = Grid.from_dict({"base": "canonical", "adversary": ["random", "full_swap"], "seeds": [4, 4, 4]})
    rows = run_grid(grid)
    for adversary in ("random", "full_swap"):
        same = [{k: v for k, v in r.items()} for r in rows if r["adversary"] == adversary]
        assert same[0] == same[1] == same[2]
    assert run_grid(grid, workers=2) == rows


def test_sweep_records_bad_cells():
    rows = run_grid(Grid.from_dict({"base": "canonical", "n": [5, 8]}))
    verdicts = {r["n"]: r["verdict"] for r in rows}
    assert verdicts[5] == "error"
    assert verdicts[8] == "ok"


def test_sweep_rejects_bad_grid():
    with pytest.raises(Exception):
        Grid.from_dict({"n": [8]})
    with pytest.raises(Exception):
        Grid.from_dict({"base": "canonical", "bogus": 1})
