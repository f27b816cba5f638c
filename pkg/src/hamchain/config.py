"""Strict JSON configuration for the command-line tools.

Every section maps one-to-one onto a parameter dataclass; unknown keys
anywhere are an error, so typos fail loudly instead of silently running
with defaults.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .baselines import SaParams
from .gdsim import GdParams
from .pow import DifficultyTarget
from .problem import InstanceSpec


def _build(cls, data, label: str):
    if not isinstance(data, dict):
        raise ValueError(f"{label} section must be an object")
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - fields)
    if unknown:
        raise ValueError(f"unknown {label} keys: {unknown}")
    return cls(**data)


def _default_instance() -> InstanceSpec:
    return InstanceSpec(n=16, density_pct=50.0, j_min=-1.0, j_max=1.0, seed=0)


def _default_sa() -> SaParams:
    return SaParams(sweeps=400, temp_hi=4.0, temp_lo=0.05, restarts=2, seed=0)


def _default_target() -> DifficultyTarget:
    return DifficultyTarget(n=16, density_pct=50, j_min=-1.0, j_max=1.0,
                            mode="qubo", sa_sweeps=150, margin_ppm=0)


@dataclass(frozen=True)
class Config:
    seed: int = 0
    instance: InstanceSpec = field(default_factory=_default_instance)
    gd: GdParams = field(default_factory=GdParams)
    sa: SaParams = field(default_factory=_default_sa)
    target: DifficultyTarget = field(default_factory=_default_target)
    chain_interval: float = 600.0
    chain_window: int = 2016
    scenario: str | None = None  # path to a netsim scenario JSON

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.chain_interval <= 0:
            raise ValueError("chain_interval must be positive")
        if self.chain_window < 2:
            raise ValueError("chain_window must be at least 2")

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - fields)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        kw = dict(data)
        if "instance" in kw:
            kw["instance"] = _build(InstanceSpec, kw["instance"], "instance")
        if "gd" in kw:
            kw["gd"] = _build(GdParams, kw["gd"], "gd")
        if "sa" in kw:
            kw["sa"] = _build(SaParams, kw["sa"], "sa")
        if "target" in kw:
            kw["target"] = _build(DifficultyTarget, kw["target"], "target")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "Config":
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
