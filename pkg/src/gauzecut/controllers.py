"""Non-learned tensioning strategies: no tension, fixed hold, and analytic
error-following."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ACTION_VECTORS, NOOP, Episode

GridIndex = tuple[int, int]


@dataclass(frozen=True)
class NoTension:
    pass


@dataclass(frozen=True)
class Fixed:
    pinch_vertex: GridIndex
    displacement: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Analytic:
    pinch_vertex: GridIndex
    gain: float = 1.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("analytic gain must be > 0")


def nearest_point_on_polyline(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    if len(points) == 1:
        return points[0].copy()
    a, b = points[:-1], points[1:]
    d = b - a
    ll = (d * d).sum(axis=1)
    t = np.where(ll > 0, ((q - a) * d).sum(axis=1) / np.where(ll > 0, ll, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * d
    k = int(np.argmin(((proj - q) ** 2).sum(axis=1)))
    return proj[k]


def analytic_action(error: np.ndarray, gain: float, action_step: float) -> int:
    """Axis-aligned move best aligned with ``gain * error``; no-op inside the dead zone."""
    e = gain * np.asarray(error, dtype=float)
    if np.hypot(*e) < action_step / 2.0:
        return NOOP
    dots = ACTION_VECTORS[1:] @ e
    return 1 + int(np.argmax(dots))


def act(kind, episode: Episode) -> int:
    if isinstance(kind, (NoTension, Fixed)):
        return NOOP
    if isinstance(kind, Analytic):
        tip = episode.scissor_tip()
        target = nearest_point_on_polyline(episode.intended_polyline(), tip)
        step = episode.config.action_step * episode.sheet.params.spacing
        return analytic_action(target - tip, kind.gain, step)
    raise TypeError(f"unknown controller {kind!r}")


class ControllerPolicy:
    """Adapter so a controller can drive :func:`gauzecut.mdp.rollout` (picklable)."""

    def __init__(self, kind):
        self.kind = kind

    def __call__(self, state, episode) -> int:
        return act(self.kind, episode)


def as_policy(kind) -> ControllerPolicy:
    return ControllerPolicy(kind)


def pinch_of(kind) -> GridIndex | None:
    return None if isinstance(kind, NoTension) else tuple(kind.pinch_vertex)


def offsets_of(kind) -> dict:
    if isinstance(kind, Fixed):
        return {tuple(kind.pinch_vertex): tuple(kind.displacement)}
    return {}
