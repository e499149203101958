"""Multiple-pinch-point planning.

Pipeline: segment the contour, list candidate pinch points near each segment,
prune them, train a local tensioning policy per candidate, brute-force the
segment order with no tension, then brute-force one pinch per segment. Every
pinch except the one serving the last segment of the order just holds still;
the last one runs its learned policy.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mesh
from .contour import Contour, Segment, build_schedule, rasterize_to_vertices, segment_contour
from .errors import BudgetExceededError, EmptyCandidateSetError, TooManySegmentsError
from .mdp import NOOP, MdpConfig, noop_policy, reset, rollout
from .policy import MLPPolicy, load_policy, save_policy
from .runtime import derive_seed, parallel_map
from .trpo import TrainConfig, train

log = logging.getLogger(__name__)

GridIndex = tuple[int, int]

CANVAS_WIDTH = 500.0
MAX_ORDER_SEGMENTS = 6


def distance_threshold(n_segments: int, width: float, override: float | None = None) -> float:
    """Candidate radius in sheet units; thresholds are given on a 500-unit canvas."""
    canvas = override if override is not None else (50.0 if n_segments > 2 else 100.0)
    return canvas / CANVAS_WIDTH * width


def default_cap(n_segments: int) -> int:
    return 10 if n_segments > 2 else 30


def merged_segments(contour: Contour) -> list[Segment]:
    """The whole contour as a single segment (single-pinch tensioning)."""
    pts = contour.polyline()
    return [Segment(tuple(range(len(contour))), pts, 0)]


def trajectory_vertices(segments, resolution: int, spacing: float) -> list[GridIndex]:
    out: dict[GridIndex, None] = {}
    for seg in segments:
        for v in rasterize_to_vertices(seg.points, resolution, spacing):
            out.setdefault(v, None)
    return list(out)


@dataclass
class CandidateSet:
    candidates: dict[int, list[GridIndex]]
    distance_threshold: float
    n_segments: int

    def total(self) -> int:
        return sum(len(v) for v in self.candidates.values())

    def product_size(self) -> int:
        return math.prod(len(v) for v in self.candidates.values())


def _min_dist(points: np.ndarray, xy: np.ndarray) -> np.ndarray:
    d = xy[:, None, :] - points[None, :, :]
    return np.sqrt((d * d).sum(axis=2)).min(axis=1)


def select_candidates(segments: list[Segment], sheet: mesh.Sheet,
                      delta_override: float | None = None) -> CandidateSet:
    p = sheet.params
    delta = distance_threshold(len(segments), p.width, delta_override)
    traj = trajectory_vertices(segments, p.resolution, p.spacing)
    traj_set = set(traj)
    n = p.resolution
    free = [(r, c) for r in range(n) for c in range(n)
            if (r, c) not in traj_set and not sheet.clips[r, c]]
    xy = np.array([sheet.rest[v][:2] for v in free])
    traj_xy = np.array([sheet.rest[v][:2] for v in traj])
    # arm conflict: the pinch may not sit within one grid diagonal of the scissor path
    clear = _min_dist(traj_xy, xy) > math.sqrt(2.0) * p.spacing + 1e-9
    out = {}
    for seg in segments:
        near = _min_dist(np.asarray(seg.points, float), xy) <= delta
        picked = [v for v, ok in zip(free, near & clear) if ok]
        if not picked:
            raise EmptyCandidateSetError(
                f"segment {seg.segment_id}: no pinch candidate within {delta:.3f} sheet units")
        out[seg.segment_id] = picked
    return CandidateSet(out, delta, len(segments))


def _adjacent(a: GridIndex, b: GridIndex) -> bool:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def prune_candidates(cset: CandidateSet, per_segment_cap: int | None = None,
                     seed: int = 0) -> CandidateSet:
    """Drop 8-neighbours of kept candidates (row-major scan), then subsample to the cap."""
    cap = default_cap(cset.n_segments) if per_segment_cap is None else per_segment_cap
    out = {}
    for sid, cands in cset.candidates.items():
        kept: list[GridIndex] = []
        for v in sorted(cands):
            if not any(_adjacent(v, k) for k in kept):
                kept.append(v)
        if len(kept) > cap:
            rng = np.random.default_rng(derive_seed(seed, "prune", sid))
            pick = rng.choice(len(kept), size=cap, replace=False)
            kept = sorted(kept[i] for i in pick)
        out[sid] = kept
    return CandidateSet(out, cset.distance_threshold, cset.n_segments)


def find_segment_order(segments, cost, max_segments: int = MAX_ORDER_SEGMENTS) -> tuple[int, ...]:
    """Brute-force the cutting order; ``cost(order)`` scores an order (lower is better).

    Ties go to the lexicographically smallest permutation.
    """
    ids = sorted(s.segment_id if isinstance(s, Segment) else int(s) for s in segments)
    if len(ids) > max_segments:
        raise TooManySegmentsError(f"{len(ids)} segments exceeds the brute-force limit {max_segments}")
    if len(ids) == 1:
        return (ids[0],)
    best, best_cost = None, math.inf
    for perm in itertools.permutations(ids):
        c = cost(perm)
        if c < best_cost:
            best, best_cost = perm, c
    return best


@dataclass
class AssignmentSearch:
    assignment: dict[int, GridIndex]
    score: float
    n_evaluations: int
    evaluated: list[tuple[tuple[GridIndex, ...], float]] = field(default_factory=list)
    subsampled: bool = False


def search_assignments(order, cset: CandidateSet, cost, cap: int = 10_000,
                       seed: int = 0, fallback: bool = True) -> AssignmentSearch:
    """Try every one-pinch-per-segment combination; ``cost(assignment)`` scores one.

    Combinations are enumerated in lexicographic order of the sorted
    per-segment lists, so the first minimum found is the lexicographic tie-break.
    Above ``cap`` combinations a seeded random subset of size ``cap`` is scored
    instead (or :class:`BudgetExceededError` when ``fallback`` is off).
    """
    ids = sorted(cset.candidates)
    if sorted(order) != ids:
        raise ValueError(f"order {tuple(order)} does not cover segments {ids}")
    lists = [sorted(cset.candidates[s]) for s in ids]
    total = math.prod(len(x) for x in lists)
    subsampled = False
    if total > cap:
        if not fallback:
            raise BudgetExceededError(f"{total} assignments exceed the cap of {cap}")
        rng = np.random.default_rng(derive_seed(seed, "assignments"))
        flat = sorted(rng.choice(total, size=cap, replace=False).tolist())
        combos = [_unravel(i, lists) for i in flat]
        subsampled = True
    else:
        combos = itertools.product(*lists)
    best, best_score, evaluated = None, math.inf, []
    for combo in combos:
        assignment = dict(zip(ids, combo))
        s = float(cost(assignment))
        evaluated.append((tuple(combo), s))
        if s < best_score:
            best, best_score = assignment, s
    return AssignmentSearch(best, best_score, len(evaluated), evaluated, subsampled)


def _unravel(i: int, lists) -> tuple:
    out = []
    for lst in reversed(lists):
        i, r = divmod(i, len(lst))
        out.append(lst[r])
    return tuple(reversed(out))


# -- simulator-backed pieces -------------------------------------------------
@dataclass
class PlanContext:
    contour: Contour
    sheet: mesh.Sheet
    mdp: MdpConfig = field(default_factory=MdpConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    steps_per_cut: int = 3
    axis: str = "y"
    assignment_cap: int = 10_000
    delta_override: float | None = None
    per_segment_cap: int | None = None
    train_all_segments: bool = False

    @property
    def resolution(self) -> int:
        return self.sheet.params.resolution

    @property
    def spacing(self) -> float:
        return self.sheet.params.spacing

    def segments(self, single: bool = False) -> list[Segment]:
        return merged_segments(self.contour) if single else segment_contour(self.contour, self.axis)

    def schedule(self, segments, order):
        return build_schedule(segments, order, self.resolution, self.spacing,
                              self.steps_per_cut, self.contour.closed)

    def local_schedule(self, segment: Segment):
        return build_schedule([segment], (segment.segment_id,), self.resolution,
                              self.spacing, self.steps_per_cut, False)

    def train_key(self, single: bool) -> str:
        text = repr((self.mdp, self.train, self.sheet.params, self.steps_per_cut,
                     self.contour.points.tobytes(), self.contour.closed, single))
        return str(derive_seed(self.seed, text))


def no_tension_score(ctx: PlanContext, schedule, seed: int | None = None) -> float:
    ep, _ = reset(ctx.mdp, ctx.sheet, schedule, None, seed=seed)
    return rollout(ep, noop_policy).score


class LocalEnv:
    """Picklable episode factory for training on one segment with one pinch."""

    def __init__(self, ctx: PlanContext, schedule, pinch: GridIndex, mdp_cfg: MdpConfig,
                 fiducials):
        self.ctx, self.schedule, self.pinch = ctx, schedule, pinch
        self.mdp_cfg, self.fiducials = mdp_cfg, fiducials

    def __call__(self, seed: int):
        return reset(self.mdp_cfg, self.ctx.sheet, self.schedule, self.pinch,
                     fiducials=self.fiducials, seed=seed)


def train_local(ctx: PlanContext, segment: Segment, candidate: GridIndex, seed: int,
                reward_scale: float | None = None, exclude=()):
    """Train the tensioning policy for ``candidate`` on ``segment`` alone.

    The episode starts from the uncut template sheet and its horizon is the
    segment's rasterized vertex count.
    """
    sched = ctx.local_schedule(segment)
    if reward_scale is None:
        reward_scale = max(no_tension_score(ctx, sched), 1.0)
    cfg = ctx.mdp.with_(reward_scale=reward_scale,
                        fiducial_seed=derive_seed(seed, "fiducials"))
    from .mdp import draw_fiducials

    excluded = set(sched.vertices) | {tuple(candidate)} | set(exclude)
    fiducials = draw_fiducials(ctx.sheet, excluded, cfg.fiducial_count, cfg.fiducial_seed)
    env = LocalEnv(ctx, sched, tuple(candidate), cfg, fiducials)
    tcfg = TrainConfig(**{**ctx.train.__dict__, "seed": derive_seed(seed, "trpo")})
    result = train(tcfg, env, state_dim=cfg.state_dim())
    pol = result.policy
    pol.metadata.update({
        "segment": segment.segment_id,
        "pinch": list(candidate),
        "fiducials": [list(f) for f in fiducials],
        "fiducial_seed": cfg.fiducial_seed,
        "reward_scale": reward_scale,
        "horizon": len(sched),
        "curve": result.mean_returns(),
    })
    return pol, result


class PlanController:
    """Hold every pinch still except on ``drl_segment``, where the policy acts greedily."""

    def __init__(self, drl_segment: int | None, policy: MLPPolicy | None):
        self.drl_segment = drl_segment
        self.policy = policy

    def __call__(self, state, episode) -> int:
        if self.policy is not None and episode.current_segment == self.drl_segment:
            return int(np.argmax(self.policy.probs(state)))
        return NOOP


def run_assignment(ctx: PlanContext, schedule, assignment: dict, drl_segment: int | None,
                   policy: MLPPolicy | None, seed: int | None = None,
                   sheet: mesh.Sheet | None = None) -> float:
    """Cut the full schedule with one pinch per segment; returns the symmetric difference."""
    fiducials = None
    if policy is not None:
        fiducials = [tuple(f) for f in policy.metadata["fiducials"]]
    template = ctx.sheet if sheet is None else sheet
    ep, _ = reset(ctx.mdp, template, schedule, pinches=dict(assignment),
                  fiducials=fiducials, seed=seed)
    return rollout(ep, PlanController(drl_segment, policy)).score


class PolicyStore:
    """Trained local policies keyed by (segment, pinch), optionally mirrored on disk."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self.policies: dict[tuple[int, GridIndex], MLPPolicy] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def filename(segment: int, pinch: GridIndex) -> str:
        return f"seg{segment}_r{pinch[0]}_c{pinch[1]}.json"

    def path(self, segment: int, pinch: GridIndex) -> Path | None:
        if self.directory is None:
            return None
        return self.directory / self.filename(segment, pinch)

    def get(self, segment: int, pinch: GridIndex, train_key: str | None = None):
        key = (segment, tuple(pinch))
        if key in self.policies:
            return self.policies[key]
        path = self.path(segment, pinch)
        if path is not None and path.exists():
            pol = load_policy(path)
            if train_key is None or pol.metadata.get("train_key") == train_key:
                self.policies[key] = pol
                return pol
        return None

    def put(self, segment: int, pinch: GridIndex, policy: MLPPolicy) -> None:
        self.policies[(segment, tuple(pinch))] = policy
        path = self.path(segment, pinch)
        if path is not None:
            save_policy(policy, path)

    def __contains__(self, key):
        return (key[0], tuple(key[1])) in self.policies

    def __len__(self):
        return len(self.policies)


@dataclass
class PlanResult:
    segment_order: tuple[int, ...]
    assignment: dict[int, GridIndex]
    drl_segment: int
    policies: PolicyStore
    best_score: float
    candidates: CandidateSet
    n_evaluations: int = 0
    single: bool = False
    baseline_score: float | None = None

    @property
    def drl_policy(self) -> MLPPolicy:
        return self.policies.get(self.drl_segment, self.assignment[self.drl_segment])

    def manifest(self) -> dict:
        store = self.policies
        paths = {}
        for (sid, pinch) in store.policies:
            p = store.path(sid, pinch)
            paths[f"{sid}:{pinch[0]},{pinch[1]}"] = None if p is None else p.name
        return {
            "single": self.single,
            "segment_order": list(self.segment_order),
            "assignment": {str(k): list(v) for k, v in sorted(self.assignment.items())},
            "drl_segment": self.drl_segment,
            "best_score": self.best_score,
            "baseline_score": self.baseline_score,
            "n_evaluations": self.n_evaluations,
            "distance_threshold": self.candidates.distance_threshold,
            "candidates": {str(k): [list(v) for v in vs]
                           for k, vs in sorted(self.candidates.candidates.items())},
            "policies": paths,
        }

    def save_manifest(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=1) + "\n")


def load_plan(manifest_path: str | Path, policy_dir: str | Path | None = None) -> PlanResult:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    store = PolicyStore(policy_dir if policy_dir is not None else manifest_path.parent / "policies")
    assignment = {int(k): tuple(v) for k, v in doc["assignment"].items()}
    drl = int(doc["drl_segment"])
    if store.get(drl, assignment[drl]) is None:
        raise FileNotFoundError(f"policy for segment {drl} pinch {assignment[drl]} not found")
    cands = CandidateSet({int(k): [tuple(v) for v in vs] for k, vs in doc["candidates"].items()},
                         doc["distance_threshold"], len(doc["candidates"]))
    return PlanResult(tuple(doc["segment_order"]), assignment, drl, store, doc["best_score"],
                      cands, doc["n_evaluations"], doc["single"], doc.get("baseline_score"))


def _train_job(args):
    ctx, segment, candidate, seed, scale, key = args
    pol, _ = train_local(ctx, segment, candidate, seed, scale)
    pol.metadata["train_key"] = key
    return pol


def plan(ctx: PlanContext, single: bool = False, jobs: int | None = 1,
         store: PolicyStore | None = None) -> PlanResult:
    """Run the full pipeline (``single=True`` treats the contour as one segment)."""
    store = store if store is not None else PolicyStore()
    segments = ctx.segments(single)
    by_id = {s.segment_id: s for s in segments}
    cset = select_candidates(segments, ctx.sheet, ctx.delta_override)
    cset = prune_candidates(cset, ctx.per_segment_cap, derive_seed(ctx.seed, "prune", single))

    def order_cost(order):
        return no_tension_score(ctx, ctx.schedule(segments, order))

    order = find_segment_order(segments, order_cost)
    drl_segment = order[-1]
    to_train = sorted(by_id) if ctx.train_all_segments else [drl_segment]
    key = ctx.train_key(single)
    jobs_list = []
    for sid in to_train:
        seg = by_id[sid]
        scale = max(no_tension_score(ctx, ctx.local_schedule(seg)), 1.0)
        for cand in cset.candidates[sid]:
            if store.get(sid, cand, key) is None:
                seed = derive_seed(ctx.seed, "train", single, sid, cand)
                jobs_list.append((ctx, seg, cand, seed, scale, key))
    log.info("training %d local policies", len(jobs_list))
    for args, pol in zip(jobs_list, parallel_map(_train_job, jobs_list, jobs)):
        store.put(args[1].segment_id, args[2], pol)

    schedule = ctx.schedule(segments, order)

    def assignment_cost(assignment):
        pol = store.get(drl_segment, assignment[drl_segment])
        return run_assignment(ctx, schedule, assignment, drl_segment, pol)

    found = search_assignments(order, cset, assignment_cost, ctx.assignment_cap,
                               derive_seed(ctx.seed, "assign", single))
    baseline = no_tension_score(ctx, schedule)
    return PlanResult(order, found.assignment, drl_segment, store, found.score, cset,
                      found.n_evaluations, single, baseline)


def plan_schedule(ctx: PlanContext, result: PlanResult):
    return ctx.schedule(ctx.segments(result.single), result.segment_order)


def evaluate_plan(ctx: PlanContext, result: PlanResult, seed: int | None = None,
                  sheet: mesh.Sheet | None = None) -> float:
    return run_assignment(ctx, plan_schedule(ctx, result), result.assignment,
                          result.drl_segment, result.drl_policy, seed, sheet)
