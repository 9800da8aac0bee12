"""Scenario configuration: parsing, validation and the bundled named scenarios."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

InputsSpec = Union[list, dict]

BUNDLED = ("canonical", "theorem2", "minimal_f1", "fixedpoint")


class ConfigError(ValueError):
    pass


def threshold(f: int) -> int:
    """Smallest system size the protocol is designed for: ceil(7f/2) + 1."""
    return (7 * f + 1) // 2 + 1


def default_round_budget(spread: float, epsilon: float) -> int:
    if spread <= epsilon or spread <= 0:
        halvings = 0
    else:
        halvings = math.ceil(math.log2(spread / epsilon))
    return 2 * (halvings + 4)


def convergence_bound(spread: float, epsilon: float) -> int:
    """Phases within which the healthy range must drop below epsilon."""
    if spread < epsilon:
        return 1
    return max(0, math.ceil(math.log2(spread / epsilon))) + 1


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    f: int
    inputs: InputsSpec
    epsilon: float = 1e-3
    adversary: str = "none"
    adversary_params: dict = field(default_factory=dict)
    initial_cured: tuple = ()
    initial_faulty: Optional[tuple] = None
    round_budget: Optional[int] = None
    seed: int = 0
    allow_below_threshold: bool = False
    stop_at_convergence: bool = True
    min_phases: int = 0
    name: str = ""
    out: Optional[str] = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("n", "f", "inputs"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        kwargs = dict(data)
        kwargs["initial_cured"] = tuple(sorted(kwargs.get("initial_cured", ())))
        if kwargs.get("initial_faulty") is not None:
            kwargs["initial_faulty"] = tuple(sorted(kwargs["initial_faulty"]))
        kwargs["adversary_params"] = dict(kwargs.get("adversary_params") or {})
        if isinstance(kwargs["inputs"], list):
            kwargs["inputs"] = list(kwargs["inputs"])
        config = cls(**kwargs)
        config.validate()
        return config

    def to_dict(self) -> dict:
        data = {
            "name": self.name,
            "n": self.n,
            "f": self.f,
            "inputs": self.inputs,
            "epsilon": self.epsilon,
            "adversary": self.adversary,
            "adversary_params": dict(self.adversary_params),
            "initial_cured": list(self.initial_cured),
            "initial_faulty": None if self.initial_faulty is None else list(self.initial_faulty),
            "round_budget": self.round_budget,
            "seed": self.seed,
            "allow_below_threshold": self.allow_below_threshold,
            "stop_at_convergence": self.stop_at_convergence,
            "min_phases": self.min_phases,
            "out": self.out,
        }
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def with_overrides(self, **overrides: Any) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(overrides)
        return ScenarioConfig.from_dict(data)

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if not isinstance(self.f, int) or self.f < 0:
            raise ConfigError("f must be a non-negative integer")
        if not (isinstance(self.epsilon, (int, float)) and self.epsilon > 0):
            raise ConfigError("epsilon must be > 0")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.round_budget is not None:
            if self.round_budget < 2 or self.round_budget % 2:
                raise ConfigError("round_budget must be a positive even number")
        self._validate_inputs()
        nodes = set(range(self.n))
        cured = set(self.initial_cured)
        if not cured <= nodes:
            raise ConfigError("initial_cured names unknown nodes")
        if len(cured) > self.f:
            raise ConfigError("initial_cured may hold at most f nodes")
        if self.initial_faulty is not None:
            faulty = set(self.initial_faulty)
            if not faulty <= nodes:
                raise ConfigError("initial_faulty names unknown nodes")
            if len(faulty) > self.f:
                raise ConfigError("initial_faulty may hold at most f nodes")
            if faulty & cured:
                raise ConfigError("initial_cured and initial_faulty overlap")
        if self.n < threshold(self.f) and not self.allow_below_threshold:
            raise ConfigError(
                f"n={self.n} is below ceil(7f/2)+1={threshold(self.f)}; "
                "set allow_below_threshold to run anyway"
            )

    def _validate_inputs(self) -> None:
        spec = self.inputs
        if isinstance(spec, list):
            if len(spec) != self.n:
                raise ConfigError(f"inputs has {len(spec)} entries, expected n={self.n}")
            _require_finite(spec)
        elif isinstance(spec, dict):
            if "uniform" in spec:
                low, high = spec["uniform"]
                _require_finite([low, high])
                if low > high:
                    raise ConfigError("uniform range is reversed")
            elif "pattern" in spec:
                if not spec["pattern"]:
                    raise ConfigError("pattern must be non-empty")
                _require_finite(spec["pattern"])
            else:
                raise ConfigError("inputs generator needs 'uniform' or 'pattern'")
        else:
            raise ConfigError("inputs must be a list or a generator object")

    # -- derived values ---------------------------------------------------

    def resolved_inputs(self) -> tuple:
        spec = self.inputs
        if isinstance(spec, list):
            return tuple(float(u) for u in spec)
        if "pattern" in spec:
            pattern = spec["pattern"]
            return tuple(float(pattern[i % len(pattern)]) for i in range(self.n))
        low, high = spec["uniform"]
        rng = random.Random(f"{spec.get('seed', self.seed)}:inputs")
        return tuple(rng.uniform(low, high) for _ in range(self.n))

    def budget(self) -> int:
        if self.round_budget is not None:
            return self.round_budget
        inputs = self.resolved_inputs()
        skip = set(self.initial_faulty or ())
        counted = [u for i, u in enumerate(inputs) if i not in skip] or list(inputs)
        return default_round_budget(max(counted) - min(counted), self.epsilon)


def _require_finite(values) -> None:
    for u in values:
        if isinstance(u, bool) or not isinstance(u, (int, float)) or not math.isfinite(u):
            raise ConfigError(f"input {u!r} is not a finite number")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("mobile_consensus") / "scenarios" / f"{name}.json"))


def load_config(source: Union[str, Path], **overrides: Any) -> ScenarioConfig:
    """Load a scenario from a JSON file or a bundled scenario name."""
    source = str(source)
    path = bundled_path(source) if source in BUNDLED else Path(source)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"no scenario file at {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.from_dict(data)


def as_config(source: Union[str, Path, dict, ScenarioConfig]) -> ScenarioConfig:
    if isinstance(source, ScenarioConfig):
        return source
    if isinstance(source, dict):
        return ScenarioConfig.from_dict(source)
    return load_config(source)

