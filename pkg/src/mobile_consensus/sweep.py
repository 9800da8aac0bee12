"""Parameter sweeps over scenario grids.

A grid file is JSON::

    {
      "base": "canonical",              # bundled name, path, or inline object
      "n": [7, 8, 9],                   # or {"min": 7, "max": 9}
      "f": [2],
      "adversary": ["theorem2"],
      "seeds": [0, 1, 2],               # or {"count": 100, "start": 0}
      "overrides": {"epsilon": 0.01},   # applied to every cell
      "rules": [{"when": {"n": [8, 9]}, "set": {"adversary": "static"}}],
      "workers": 1
    }

Axes left out fall back to the base scenario. ``rules`` apply in order to the
cells whose axis values match every ``when`` entry (a scalar or a list of
accepted values). Cells that fail to configure or run are recorded with
verdict ``"error"`` and the sweep continues.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .config import BUNDLED, ConfigError, ScenarioConfig, load_config
from .harness import ScenarioError, run

ROW_COLUMNS = (
    "key",
    "n",
    "f",
    "adversary",
    "seed",
    "verdict",
    "converged",
    "phases_to_converge",
    "phases_run",
    "max_pairwise_diff",
    "valid",
    "halving_ok",
    "final_range",
    "error",
)


@dataclass(frozen=True)
class Cell:
    n: int
    f: int
    adversary: str
    seed: int

    @property
    def key(self) -> str:
        # zero padding makes lexicographic order match numeric order
        return f"f={self.f:02d}/n={self.n:03d}/adversary={self.adversary}/seed={self.seed:020d}"


def _axis(spec: Any, name: str) -> Optional[list]:
    if spec is None:
        return None
    if isinstance(spec, dict):
        if name == "seeds":
            start = int(spec.get("start", 0))
            return list(range(start, start + int(spec["count"])))
        return list(range(int(spec["min"]), int(spec["max"]) + 1))
    if isinstance(spec, list):
        return list(spec)
    return [spec]


def _base(spec: Any, root: Path) -> dict:
    if isinstance(spec, dict):
        return dict(spec)
    if spec in BUNDLED:
        return load_config(spec).to_dict()
    path = Path(spec)
    if not path.is_absolute():
        path = root / path
    return load_config(path).to_dict()


def _matches(when: dict, cell: Cell) -> bool:
    for key, accepted in when.items():
        value = getattr(cell, key if key != "seeds" else "seed")
        if isinstance(accepted, list):
            if value not in accepted:
                return False
        elif value != accepted:
            return False
    return True


@dataclass
class Grid:
    base: dict
    cells: List[Cell]
    overrides: dict
    rules: list
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict, root: Union[str, Path] = ".") -> "Grid":
        known = {"base", "n", "f", "adversary", "seeds", "overrides", "rules", "workers"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
        if "base" not in data:
            raise ConfigError("grid needs a 'base' scenario")
        base = _base(data["base"], Path(root))
        base.update(data.get("overrides") or {})
        ns = _axis(data.get("n"), "n") or [base["n"]]
        fs = _axis(data.get("f"), "f") or [base["f"]]
        advs = _axis(data.get("adversary"), "adversary") or [base.get("adversary", "none")]
        seeds = _axis(data.get("seeds"), "seeds") or [base.get("seed", 0)]
        cells = [Cell(n, f, a, s) for f, n, a, s in product(fs, ns, advs, seeds)]
        workers = int(data.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        return cls(base, cells, dict(data.get("overrides") or {}), list(data.get("rules") or []), workers)

    def cell_config(self, cell: Cell) -> dict:
        data = dict(self.base)
        data.update(n=cell.n, f=cell.f, adversary=cell.adversary, seed=cell.seed)
        if isinstance(data["inputs"], list) and len(data["inputs"]) != cell.n:
            # a fixed input list cannot follow n; repeat it as a pattern
            data["inputs"] = {"pattern": data["inputs"]}
        for rule in self.rules:
            if _matches(rule.get("when", {}), cell):
                data.update(rule.get("set", {}))
        data["out"] = None
        return data


def load_grid(path: Union[str, Path]) -> Grid:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from exc
    return Grid.from_dict(data, root=path.parent)


def run_cell(args) -> dict:
    key, cell, data = args
    row: Dict[str, Any] = {"key": key, "n": cell.n, "f": cell.f, "adversary": cell.adversary, "seed": cell.seed}
    try:
        config = ScenarioConfig.from_dict(data)
        result = run(config)
    except (ConfigError, ScenarioError) as exc:
        row.update(verdict="error", converged=False, error=str(exc))
        return row
    reports = result.reports
    phases = result.trace.phases
    row.update(
        verdict=result.verdict,
        converged=result.converged,
        phases_to_converge=result.convergence_phase,
        phases_run=len(phases),
        max_pairwise_diff=reports["pairwise"].detail.get("max_difference", 0),
        valid=result.valid,
        halving_ok=reports["halving"].ok,
        final_range=phases[-1].healthy_range if phases else None,
        error=result.failure,
    )
    return row


def run_grid(grid: Grid, workers: Optional[int] = None) -> List[dict]:
    jobs = []
    for cell in grid.cells:
        data = grid.cell_config(cell)
        # rules may swap the adversary; the key names what actually ran
        final = Cell(data["n"], data["f"], data["adversary"], data["seed"])
        jobs.append((final.key, final, data))
    workers = workers or grid.workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [run_cell(job) for job in jobs]
    return sorted(rows, key=lambda row: row["key"])
