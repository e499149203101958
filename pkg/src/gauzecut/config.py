"""Experiment configuration: one flat YAML/JSON mapping covering the
simulator, the MDP, training and the experiment protocol."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, InvalidParamsError
from .mdp import MdpConfig
from .mesh import SimParams
from .trpo import TrainConfig

METHODS = ("no_tension", "fixed", "analytic", "drl_single", "mdrl")


def noise_ladder(lo: float = 1e-4, hi: float = 1e-1, count: int = 10) -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(lo, hi, count))


def gravity_range(stop: float = 3800.0, step: float = 500.0) -> tuple[float, ...]:
    """0, step, 2*step, ... below ``stop``, then ``stop`` itself."""
    vals = [float(v) for v in np.arange(0.0, stop, step)]
    return tuple(vals + [float(stop)])


DEFAULT_RESOLUTIONS = (400, 625, 1225, 2025, 3025, 4000)


@dataclass(frozen=True)
class ExperimentSpec:
    sim: SimParams = field(default_factory=lambda: SimParams(resolution=15, gravity_magnitude=2500.0))
    mdp: MdpConfig = field(default_factory=MdpConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    shapes: tuple[str, ...] = ("v",)
    methods: tuple[str, ...] = METHODS
    trials: int = 20
    sweep_trials: int = 10
    seed: int = 0
    settle_steps: int = 3000
    steps_per_cut: int = 3
    axis: str = "y"
    noise_values: tuple[float, ...] = field(default_factory=noise_ladder)
    gravity_values: tuple[float, ...] = field(default_factory=gravity_range)
    resolutions: tuple[int, ...] = DEFAULT_RESOLUTIONS
    resolution_method: str = "analytic"
    assignment_cap: int = 10_000
    delta_override: float | None = None
    per_segment_cap: int | None = None
    train_all_segments: bool = False
    max_vertices: int = 100_000

    def __post_init__(self):
        problems = []
        if self.trials < 1 or self.sweep_trials < 1:
            problems.append("trials must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            problems.append(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not self.methods:
            problems.append("no methods selected")
        if self.resolution_method not in METHODS:
            problems.append(f"unknown resolution_method {self.resolution_method!r}")
        for name in ("noise_values", "gravity_values", "resolutions"):
            vals = list(getattr(self, name))
            if any(b <= a for a, b in zip(vals, vals[1:])):
                problems.append(f"{name} must be strictly increasing")
        if min(self.noise_values, default=0) < 0 or min(self.gravity_values, default=0) < 0:
            problems.append("sweep values must be >= 0")
        if self.settle_steps < 0:
            problems.append("settle_steps must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)


_GROUPS = {"sim": SimParams, "mdp": MdpConfig, "train": TrainConfig}
# owned by the harness: seeds come from the master seed, the reward scale from the baseline
_RESERVED = {("train", "seed"), ("mdp", "fiducial_seed"), ("mdp", "reward_scale")}
_TUPLE_KEYS = {"shapes", "methods", "noise_values", "gravity_values", "resolutions"}


def _key_owner() -> dict[str, str]:
    owner = {}
    for group, cls in _GROUPS.items():
        for f in fields(cls):
            if (group, f.name) not in _RESERVED:
                owner[f.name] = group
    for f in fields(ExperimentSpec):
        if f.name not in _GROUPS:
            owner[f.name] = "spec"
    return owner


def spec_from_mapping(data: dict, base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Build a spec from flat keys; unknown keys are an error."""
    base = base or ExperimentSpec()
    owner = _key_owner()
    unknown = sorted(k for k in data if k not in owner)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    parts: dict[str, dict] = {"sim": {}, "mdp": {}, "train": {}, "spec": {}}
    for k, v in data.items():
        if k in _TUPLE_KEYS:
            v = (v,) if isinstance(v, (str, int, float)) else tuple(v)
        parts[owner[k]][k] = v
    try:
        sim = replace(base.sim, **parts["sim"]).validate()
        mdp = replace(base.mdp, **parts["mdp"])
        train = replace(base.train, **parts["train"])
        return replace(base, sim=sim, mdp=mdp, train=train, **parts["spec"])
    except (TypeError, ValueError, InvalidParamsError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_spec(path: str | Path | None, base: ExperimentSpec | None = None) -> ExperimentSpec:
    if path is None:
        return base or ExperimentSpec()
    path = Path(path)
    try:
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return spec_from_mapping(data, base)


def spec_dict(spec: ExperimentSpec) -> dict:
    """Flat mapping that :func:`spec_from_mapping` accepts back."""
    out = {}
    for group in _GROUPS:
        obj = getattr(spec, group)
        for f in fields(obj):
            if (group, f.name) not in _RESERVED:
                out[f.name] = getattr(obj, f.name)
    for f in fields(spec):
        if f.name not in _GROUPS:
            v = getattr(spec, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
