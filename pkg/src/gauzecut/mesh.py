"""Mass-spring model of a square gauze sheet clipped at its four corners.

Vertices live on a regular ``resolution x resolution`` grid. Vertex ``(row, col)``
rests at ``(col * spacing, row * spacing, 0)``; springs join 4-connected
neighbours. Cutting removes a vertex from every force sum; tensioning pins one
vertex and drags it around in the x/y plane.
"""
from __future__ import annotations

import copy
import csv
import json
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import _backend
from .errors import ConfigError, CutVertexError, InvalidParamsError, PinnedVertexError

GridIndex = tuple[int, int]


@dataclass(frozen=True)
class SimParams:
    alpha: float = 1.0
    damping: float = 0.9
    tau: float = 0.1
    gravity_magnitude: float = 0.0
    noise_sigma: float = 0.0
    resolution: int = 25
    spacing: float = 1.0
    rng_seed: int = 0
    gravity_scale: float = 1e-5
    mode: str = "corrected"

    def validate(self) -> "SimParams":
        problems = []
        if int(self.resolution) != self.resolution or self.resolution < 3:
            problems.append(f"resolution must be an integer >= 3, got {self.resolution}")
        if not self.spacing > 0:
            problems.append(f"spacing must be > 0, got {self.spacing}")
        if not self.tau > 0:
            problems.append(f"tau must be > 0, got {self.tau}")
        if not self.noise_sigma >= 0:
            problems.append(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.gravity_magnitude >= 0:
            problems.append(f"gravity_magnitude must be >= 0, got {self.gravity_magnitude}")
        if not 0 < self.alpha <= 1:
            problems.append(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.damping < 1:
            problems.append(f"damping must be in [0, 1), got {self.damping}")
        if not self.gravity_scale >= 0:
            problems.append(f"gravity_scale must be >= 0, got {self.gravity_scale}")
        if self.mode not in ("corrected", "literal"):
            problems.append(f"mode must be 'corrected' or 'literal', got {self.mode!r}")
        if problems:
            raise InvalidParamsError("; ".join(problems))
        return self

    @property
    def width(self) -> float:
        return (self.resolution - 1) * self.spacing

    @property
    def gravity_accel(self) -> float:
        """Per-step downward displacement contributed by gravity."""
        return self.gravity_magnitude * self.gravity_scale

    def with_(self, **changes) -> "SimParams":
        return replace(self, **changes).validate()


_PARAM_TYPES = {f.name: f.type for f in fields(SimParams)}


def load_params(path: str | Path, base: SimParams | None = None) -> SimParams:
    """Read SimParams from a flat key/value YAML or JSON file.

    Keys must match the field names exactly; missing keys keep the values of
    ``base`` (defaults when omitted).
    """
    import yaml

    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat key/value mapping")
    sim_keys = {k: v for k, v in data.items() if k in _PARAM_TYPES}
    return params_from_mapping(sim_keys, base)


def params_from_mapping(data: dict, base: SimParams | None = None) -> SimParams:
    base = base or SimParams()
    unknown = sorted(set(data) - set(_PARAM_TYPES))
    if unknown:
        raise ConfigError(f"unknown SimParams keys: {', '.join(unknown)}")
    coerced = {}
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{key}: expected a scalar value")
        kind = _PARAM_TYPES[key]
        try:
            if kind == "int":
                coerced[key] = int(value)
            elif kind == "float":
                coerced[key] = float(value)
            else:
                coerced[key] = str(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: bad value {value!r}") from exc
    return replace(base, **coerced).validate()


@dataclass(frozen=True)
class TensionConstraint:
    pinch_vertex: GridIndex
    displacement: tuple[float, float] = (0.0, 0.0)


class Sheet:
    """Simulator state: positions at t and t-1 plus cut and pin bookkeeping.

    Operations mutate in place and return the sheet, so calls chain;
    use :meth:`copy` for an independent value.
    """

    def __init__(self, params: SimParams):
        self.params = params.validate()
        n = params.resolution
        rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        rest = np.zeros((n, n, 3))
        rest[..., 0] = cols * params.spacing
        rest[..., 1] = rows * params.spacing
        self.rest = rest
        self.pos = rest.copy()
        self.prev = rest.copy()
        self.cut = np.zeros((n, n), dtype=bool)
        self.clips = np.zeros((n, n), dtype=bool)
        for r, c in self.corners:
            self.clips[r, c] = True
        self.targets = rest.copy()
        self.external_force = np.zeros((n, n, 3))
        self.active_constraint: TensionConstraint | None = None
        self.time_step = 0
        self.severed: dict[GridIndex, np.ndarray] = {}
        self.rng = np.random.default_rng(params.rng_seed)
        self._scratch = np.empty_like(rest)

    @property
    def resolution(self) -> int:
        return self.params.resolution

    @property
    def corners(self) -> list[GridIndex]:
        m = self.params.resolution - 1
        return [(0, 0), (0, m), (m, 0), (m, m)]

    @property
    def pinned(self) -> np.ndarray:
        mask = self.clips.copy()
        if self.active_constraint is not None:
            mask[self.active_constraint.pinch_vertex] = True
        return mask

    def is_pinned(self, index: GridIndex) -> bool:
        return bool(self.pinned[index])

    def check_index(self, index) -> GridIndex:
        r, c = int(index[0]), int(index[1])
        n = self.params.resolution
        if not (0 <= r < n and 0 <= c < n):
            raise IndexError(f"grid index {index} outside a {n}x{n} sheet")
        return r, c

    def reseed(self, seed: int) -> "Sheet":
        self.rng = np.random.default_rng(seed)
        return self

    def copy(self) -> "Sheet":
        other = copy.copy(self)
        for name in ("pos", "prev", "cut", "clips", "targets", "external_force"):
            setattr(other, name, getattr(self, name).copy())
        other.severed = {k: v.copy() for k, v in self.severed.items()}
        other.rng = copy.deepcopy(self.rng)
        other._scratch = np.empty_like(self.rest)
        return other

    def xy(self, index: GridIndex) -> np.ndarray:
        return self.pos[index][:2].copy()

    def max_drift(self) -> float:
        return float(np.max(np.abs(self.pos - self.rest)))


def new_sheet(params: SimParams) -> Sheet:
    return Sheet(params)


def step(sheet: Sheet) -> Sheet:
    """Advance one time step with the configured update rule."""
    p = sheet.params
    noise = None
    if p.noise_sigma > 0:
        noise = sheet.rng.normal(0.0, p.noise_sigma, size=sheet.pos.shape)
    _backend.step_into(
        sheet.pos, sheet.prev, sheet.rest,
        (~sheet.cut).view(np.uint8), sheet.pinned.view(np.uint8),
        sheet.targets, sheet.external_force, noise, sheet._scratch,
        p.tau, p.damping, p.alpha, p.gravity_accel, p.mode == "literal",
    )
    # rotate buffers: prev <- pos <- new
    sheet.prev, sheet.pos, sheet._scratch = sheet.pos, sheet._scratch, sheet.prev
    sheet.time_step += 1
    return sheet


def settle(sheet: Sheet, n: int) -> Sheet:
    if n < 0:
        raise ValueError(f"step count must be >= 0, got {n}")
    for _ in range(n):
        step(sheet)
    return sheet


def apply_tension(sheet: Sheet, constraint: TensionConstraint) -> Sheet:
    """Pin ``constraint.pinch_vertex`` at rest x/y plus the displacement.

    The grasp height is the vertex's z when it is first grabbed; the arm then
    moves only in the x/y plane.
    """
    idx = sheet.check_index(constraint.pinch_vertex)
    if sheet.cut[idx]:
        raise CutVertexError(f"pinch vertex {idx} has been cut")
    prior = sheet.active_constraint
    if prior is not None and prior.pinch_vertex != idx:
        release_tension(sheet)
    if prior is None or prior.pinch_vertex != idx:
        grab_z = sheet.pos[idx][2]
    else:
        grab_z = sheet.targets[idx][2]
    dx, dy = (float(v) for v in constraint.displacement)
    sheet.targets[idx] = (sheet.rest[idx][0] + dx, sheet.rest[idx][1] + dy, grab_z)
    sheet.active_constraint = TensionConstraint(idx, (dx, dy))
    return sheet


def release_tension(sheet: Sheet) -> Sheet:
    c = sheet.active_constraint
    if c is not None:
        if not sheet.clips[c.pinch_vertex]:
            sheet.targets[c.pinch_vertex] = sheet.rest[c.pinch_vertex]
        sheet.active_constraint = None
    return sheet


def cut_vertex(sheet: Sheet, index: GridIndex) -> Sheet:
    idx = sheet.check_index(index)
    if sheet.cut[idx]:
        warnings.warn(f"vertex {idx} already cut", RuntimeWarning, stacklevel=2)
        return sheet
    if sheet.clips[idx]:
        raise PinnedVertexError(f"vertex {idx} is held by a corner clip")
    c = sheet.active_constraint
    if c is not None and c.pinch_vertex == idx:
        raise PinnedVertexError(f"vertex {idx} is the active pinch point")
    sheet.cut[idx] = True
    sheet.severed[idx] = sheet.pos[idx].copy()
    return sheet


def trajectory_rows(sheet: Sheet):
    """CSV rows ``(t, row, col, x, y, z, is_cut)`` for the current state."""
    n = sheet.resolution
    for r in range(n):
        for c in range(n):
            x, y, z = sheet.pos[r, c]
            yield (sheet.time_step, r, c, repr(float(x)), repr(float(y)), repr(float(z)),
                   int(sheet.cut[r, c]))


TRAJECTORY_HEADER = ("t", "row", "col", "x", "y", "z", "is_cut")


def simulate_to_csv(sheet: Sheet, n_steps: int, path: str | Path, every: int = 1) -> Sheet:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        writer.writerows(trajectory_rows(sheet))
        for i in range(1, n_steps + 1):
            step(sheet)
            if i % every == 0:
                writer.writerows(trajectory_rows(sheet))
    return sheet


def params_dict(params: SimParams) -> dict:
    return asdict(params)
