"""Tensioning as an episodic MDP over the gauze simulator.

One episode walks the scissors along a cut schedule. Each transition moves the
active pinch by one action, lets the sheet evolve for ``steps_per_cut`` steps
while the blades push on the material just ahead of the tip, then severs the
next scheduled vertex. Only the final transition is rewarded: minus the
symmetric difference of the finished cut.

Scissor model: closing blades drag the uncut material ahead of the tip along
the cutting direction. The next ``blade_reach`` scheduled vertices each feel a
force ``blade_force`` along the local heading while they wait to be cut.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mesh
from .contour import CutSchedule
from .errors import (
    EpisodeFinishedError,
    InsufficientFiducialsError,
    PinchOnTrajectoryError,
)
from .scoring import CutRecord

GridIndex = tuple[int, int]

ACTIONS = ("noop", "+x", "-x", "+y", "-y")
ACTION_VECTORS = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
NOOP = 0
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class MdpConfig:
    fiducial_count: int = 12
    fiducial_seed: int = 0
    action_step: float = 1.0  # in grid spacings
    reward_scale: float = 1.0
    workspace_frac: float = 0.2
    blade_force: float = 0.1
    blade_reach: int = 3
    score_factor: int = 2

    def __post_init__(self):
        if self.fiducial_count < 1:
            raise ValueError("fiducial_count must be >= 1")
        if not self.action_step > 0:
            raise ValueError("action_step must be > 0")
        if not self.reward_scale > 0:
            raise ValueError("reward_scale must be > 0")

    def with_(self, **changes) -> "MdpConfig":
        return replace(self, **changes)

    def state_dim(self) -> int:
        return 1 + 3 * self.fiducial_count + 2


def draw_fiducials(sheet: mesh.Sheet, excluded, count: int, seed: int) -> list[GridIndex]:
    n = sheet.resolution
    blocked = set(excluded) | set(sheet.corners)
    pool = [(r, c) for r in range(n) for c in range(n) if (r, c) not in blocked]
    if len(pool) < count:
        raise InsufficientFiducialsError(f"only {len(pool)} candidate fiducials for {count}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in sorted(chosen.tolist())]


@dataclass
class Episode:
    config: MdpConfig
    sheet: mesh.Sheet
    schedule: CutSchedule
    pinches: dict[int, GridIndex | None]
    fiducials: list[GridIndex]
    cursor: int = 0
    displacement: np.ndarray = field(default_factory=lambda: np.zeros(2))
    done: bool = False
    trace: list = field(default_factory=list)
    score: float | None = None
    pinch_offsets: dict = field(default_factory=dict)

    def __post_init__(self):
        self._seg_start = {}
        self._seg_len = {}
        for i, (sid, _) in enumerate(self.schedule.entries):
            self._seg_start.setdefault(sid, i)
            self._seg_len[sid] = self._seg_len.get(sid, 0) + 1
        sp = self.sheet.params
        self._limit = self.config.workspace_frac * sp.width
        self._step = self.config.action_step * sp.spacing

    @property
    def horizon(self) -> int:
        return len(self.schedule)

    @property
    def current_segment(self) -> int | None:
        if self.cursor >= len(self.schedule):
            return None
        return self.schedule.entries[self.cursor][0]

    @property
    def active_pinch(self) -> GridIndex | None:
        c = self.sheet.active_constraint
        return None if c is None else c.pinch_vertex

    def local_time(self) -> float:
        if self.cursor >= len(self.schedule):
            return 1.0
        sid = self.current_segment
        return (self.cursor - self._seg_start[sid]) / self._seg_len[sid]

    def state(self) -> np.ndarray:
        w = self.sheet.params.width
        fid = np.array([self.sheet.pos[i] for i in self.fiducials]).ravel() / w
        return np.concatenate(([self.local_time()], fid, self.displacement / w))

    def intended_polyline(self) -> np.ndarray:
        return np.array([self.sheet.rest[v][:2] for v in self.schedule.contour_vertices])

    def scissor_tip(self) -> np.ndarray:
        """Current x/y of the vertex the blades are closing on."""
        idx = self.schedule.entries[min(self.cursor, len(self.schedule) - 1)][1]
        return self.sheet.pos[idx][:2].copy()

    def _engage_pinch(self):
        sid = self.current_segment
        want = self.pinches.get(sid) if sid is not None else None
        if want == self.active_pinch:
            return
        mesh.release_tension(self.sheet)
        self.displacement = np.zeros(2)
        if want is not None:
            d = np.clip(np.asarray(self.pinch_offsets.get(want, (0.0, 0.0)), dtype=float),
                        -self._limit, self._limit)
            self.displacement = d
            mesh.apply_tension(self.sheet, mesh.TensionConstraint(want, (d[0], d[1])))

    def _heading(self, k: int) -> np.ndarray:
        entries = self.schedule.entries
        sid, v = entries[k]
        rest = self.sheet.rest
        if k > 0 and entries[k - 1][0] == sid:
            d = rest[v][:2] - rest[entries[k - 1][1]][:2]
        elif k + 1 < len(entries) and entries[k + 1][0] == sid:
            d = rest[entries[k + 1][1]][:2] - rest[v][:2]
        else:
            return np.zeros(2)
        return d / np.linalg.norm(d)

    def _apply_blade(self):
        cfg = self.config
        if cfg.blade_force == 0 or cfg.blade_reach < 1:
            return
        h = self._heading(self.cursor) * cfg.blade_force
        entries = self.schedule.entries
        for sid, v in entries[self.cursor:self.cursor + cfg.blade_reach]:
            if not self.sheet.cut[v]:
                self.sheet.external_force[v][:2] = h

    def cut_record(self) -> CutRecord:
        verts = self.schedule.contour_vertices
        achieved = [self.sheet.severed[v] for v in verts]
        sp = self.sheet.params
        return CutRecord(verts, achieved, sp.resolution, sp.spacing, self.schedule.closed)

    def step(self, action: int):
        return step_env(self, action)


def reset(config: MdpConfig, sheet_template: mesh.Sheet, schedule: CutSchedule,
          pinch_vertex: GridIndex | None = None, *, pinches: dict | None = None,
          fiducials: list[GridIndex] | None = None, seed: int | None = None,
          pinch_offsets: dict | None = None):
    """Start an episode on a copy of ``sheet_template``.

    ``pinch_vertex`` tensions the whole schedule; ``pinches`` maps segment id to
    a pinch vertex (``None`` leaves that segment untensioned).
    """
    sheet = sheet_template.copy()
    if seed is not None:
        sheet.reseed(seed)
    trajectory = set(schedule.vertices)
    if pinches is None:
        pinches = {sid: pinch_vertex for sid, _ in schedule.entries}
    for p in pinches.values():
        if p is not None and tuple(p) in trajectory:
            raise PinchOnTrajectoryError(f"pinch {tuple(p)} lies on the cut trajectory")
    for v in trajectory:
        if sheet.clips[v]:
            raise PinchOnTrajectoryError(f"trajectory crosses corner clip {v}")
    if fiducials is None:
        excluded = trajectory | {tuple(p) for p in pinches.values() if p is not None}
        fiducials = draw_fiducials(sheet, excluded, config.fiducial_count, config.fiducial_seed)
    elif len(fiducials) != config.fiducial_count:
        raise InsufficientFiducialsError("fiducial list does not match fiducial_count")
    ep = Episode(config, sheet, schedule, {k: (None if v is None else tuple(v))
                                           for k, v in pinches.items()},
                 [tuple(f) for f in fiducials],
                 pinch_offsets={tuple(k): tuple(v) for k, v in (pinch_offsets or {}).items()})
    ep._engage_pinch()
    return ep, ep.state()


def step_env(episode: Episode, action: int):
    if episode.done:
        raise EpisodeFinishedError("episode already finished")
    action = int(action)
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action must be in [0, {N_ACTIONS}), got {action}")
    sheet = episode.sheet
    pinch = episode.active_pinch
    if pinch is not None:
        d = episode.displacement + ACTION_VECTORS[action] * episode._step
        d = np.clip(d, -episode._limit, episode._limit)
        episode.displacement = d
        mesh.apply_tension(sheet, mesh.TensionConstraint(pinch, (d[0], d[1])))
    episode._apply_blade()
    mesh.settle(sheet, episode.schedule.steps_per_cut)
    sheet.external_force[...] = 0.0
    mesh.cut_vertex(sheet, episode.schedule.entries[episode.cursor][1])
    episode.cursor += 1
    reward = 0.0
    if episode.cursor >= len(episode.schedule):
        episode.done = True
        episode.score = float(episode.cut_record().score(episode.config.score_factor))
        reward = -episode.score / episode.config.reward_scale
    else:
        episode._engage_pinch()
    state = episode.state()
    return state, reward, episode.done


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    score: float

    def __len__(self):
        return len(self.actions)


def rollout(episode: Episode, policy, rng: np.random.Generator | None = None,
            greedy: bool = False, initial_state: np.ndarray | None = None) -> Trajectory:
    """Run ``policy`` to the end of the episode.

    ``policy`` is either an object with ``probs(state)`` (sampled with ``rng``
    or taken greedily) or a callable ``(state, episode) -> action``. Any
    episode-like object with ``state()``, ``step(a)``, ``done``, ``score`` and
    ``trace`` works.
    """
    state = episode.state() if initial_state is None else initial_state
    states, actions, rewards = [], [], []
    sample = hasattr(policy, "probs")
    while not episode.done:
        if sample:
            p = policy.probs(state)
            a = int(np.argmax(p)) if greedy else int(rng.choice(len(p), p=p))
        else:
            a = int(policy(state, episode))
        states.append(state)
        actions.append(a)
        state, r, _ = episode.step(a)
        rewards.append(r)
        episode.trace.append((states[-1], a, r))
    return Trajectory(np.array(states), np.array(actions, dtype=int), np.array(rewards),
                      float(episode.score))


def noop_policy(state, episode) -> int:
    return NOOP


TRACE_HEADER = ("episode", "step", "action", "reward")


def write_trace_csv(episodes, path: str | Path) -> None:
    """Dump (state, action, reward) traces of finished episodes, one row per step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for e, ep in enumerate(episodes):
            for k, (_, a, r) in enumerate(ep.trace):
                w.writerow((e, k, ACTIONS[a], repr(float(r))))
