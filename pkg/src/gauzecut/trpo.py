"""Trust-region natural policy gradient for the categorical MLP policy.

Each iteration collects whole episodes until ``batch_size`` environment steps
are reached, subtracts a per-timestep mean-return baseline, solves
``F x = g`` with conjugate gradient on Fisher-vector products of the mean KL,
and backtracks along ``x`` until the measured mean KL is within the bound and
the surrogate objective has not decreased.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NonFiniteGradientError
from .mdp import N_ACTIONS, Trajectory, rollout
from .policy import MLPPolicy, softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20
    batch_size: int = 500
    kl_limit: float = 0.01
    discount: float = 1.0
    seed: int = 0
    cg_iters: int = 10
    cg_damping: float = 1e-2
    backtrack_ratio: float = 0.5
    max_backtracks: int = 15

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.kl_limit > 0:
            raise ValueError("kl_limit must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class IterationStats:
    iteration: int
    mean_return: float
    kl: float
    step_size: float
    surrogate_before: float
    surrogate_after: float
    n_episodes: int
    n_steps: int
    accepted: bool


@dataclass
class TrainResult:
    policy: MLPPolicy
    curve: list[IterationStats] = field(default_factory=list)

    def mean_returns(self) -> list[float]:
        return [s.mean_return for s in self.curve]

    def write_curve(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "mean_return", "kl", "step_size"])
            for s in self.curve:
                w.writerow([s.iteration, repr(s.mean_return), repr(s.kl), repr(s.step_size)])


def categorical_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)


def conjugate_gradient(matvec: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
                       iters: int = 10, tol: float = 1e-10) -> np.ndarray:
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = r @ r
    for _ in range(iters):
        if rr < tol:
            break
        Ap = matvec(p)
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def returns_and_advantages(trajs: list[Trajectory], discount: float = 1.0):
    """Reward-to-go per step and its deviation from the per-timestep batch mean."""
    rets = []
    for tr in trajs:
        g = np.zeros(len(tr))
        acc = 0.0
        for t in range(len(tr) - 1, -1, -1):
            acc = tr.rewards[t] + discount * acc
            g[t] = acc
        rets.append(g)
    horizon = max(len(g) for g in rets)
    sums = np.zeros(horizon)
    counts = np.zeros(horizon)
    for g in rets:
        sums[:len(g)] += g
        counts[:len(g)] += 1
    baseline = sums / np.maximum(counts, 1)
    advs = [g - baseline[:len(g)] for g in rets]
    return np.concatenate(rets), np.concatenate(advs)


class TRPO:
    def __init__(self, policy: MLPPolicy, config: TrainConfig):
        self.policy = policy
        self.config = config

    def surrogate(self, theta, states, actions, adv, logp_old) -> float:
        pol = self.policy.with_flat(theta)
        ratio = np.exp(pol.log_prob(states, actions) - logp_old)
        return float(np.mean(ratio * adv))

    def mean_kl(self, theta, states, p_old) -> float:
        p_new = softmax(self.policy.with_flat(theta).logits(states))
        return float(np.mean(categorical_kl(p_old, p_new)))

    def update(self, states, actions, adv) -> tuple[float, float, float, float, bool]:
        """One trust-region step in place. Returns (kl, step fraction, surr0, surr1, accepted)."""
        cfg = self.config
        pol = self.policy
        logits, acts = pol.forward(states)
        p_old = softmax(logits)
        n = len(states)
        logp_old = np.log(p_old[np.arange(n), actions])
        # gradient of mean(adv * log pi) = surrogate gradient at theta_old
        grad_logits = -p_old * adv[:, None]
        grad_logits[np.arange(n), actions] += adv
        g = pol.vjp(acts, grad_logits / n)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"policy gradient has {np.count_nonzero(~np.isfinite(g))} non-finite entries; "
                f"advantage range [{adv.min()}, {adv.max()}]")
        theta0 = pol.flat()
        surr0 = float(np.mean(adv))
        if not np.any(g):
            return 0.0, 0.0, surr0, surr0, False

        def fvp(v):
            jv = pol.jvp(acts, v)
            # Fisher of a categorical in logit space: diag(p) - p p^T
            mjv = p_old * jv - p_old * (p_old * jv).sum(axis=1, keepdims=True)
            return pol.vjp(acts, mjv / n) + cfg.cg_damping * v

        x = conjugate_gradient(fvp, g, cfg.cg_iters)
        shs = float(x @ fvp(x))
        if not np.isfinite(shs) or shs <= 0:
            raise NonFiniteGradientError(f"non-positive curvature x^T F x = {shs}")
        full = np.sqrt(2.0 * cfg.kl_limit / shs) * x
        frac = 1.0
        for _ in range(cfg.max_backtracks):
            theta = theta0 + frac * full
            kl = self.mean_kl(theta, states, p_old)
            surr = self.surrogate(theta, states, actions, adv, logp_old)
            if np.isfinite(kl) and kl <= cfg.kl_limit and surr >= surr0:
                pol.set_flat(theta)
                return kl, frac, surr0, surr, True
            frac *= cfg.backtrack_ratio
        return 0.0, 0.0, surr0, surr0, False


def collect_batch(policy: MLPPolicy, env_factory, batch_size: int,
                  rng: np.random.Generator) -> list[Trajectory]:
    trajs, steps = [], 0
    while steps < batch_size:
        episode_seed = int(rng.integers(2**63))
        episode, state = env_factory(episode_seed)
        tr = rollout(episode, policy, np.random.default_rng(episode_seed), initial_state=state)
        trajs.append(tr)
        steps += len(tr)
    return trajs


def train(config: TrainConfig, env_factory, policy: MLPPolicy | None = None,
          state_dim: int | None = None, callback=None) -> TrainResult:
    """Optimise a policy on episodes from ``env_factory(seed) -> (episode, state)``."""
    rng = np.random.default_rng(config.seed)
    if policy is None:
        if state_dim is None:
            episode, state = env_factory(0)
            state_dim = len(state)
        policy = MLPPolicy.for_dims(state_dim, N_ACTIONS, init_seed=int(rng.integers(2**31)))
    algo = TRPO(policy, config)
    result = TrainResult(policy)
    skipped = 0
    for it in range(config.iterations):
        trajs = collect_batch(policy, env_factory, config.batch_size, rng)
        states = np.vstack([t.states for t in trajs])
        actions = np.concatenate([t.actions for t in trajs])
        _, adv = returns_and_advantages(trajs, config.discount)
        mean_return = float(np.mean([t.rewards.sum() for t in trajs]))
        if np.allclose(adv, 0.0):
            skipped += 1
            kl, frac, s0, s1, ok = 0.0, 0.0, 0.0, 0.0, False
        else:
            kl, frac, s0, s1, ok = algo.update(states, actions, adv)
        stats = IterationStats(it, mean_return, kl, frac, s0, s1, len(trajs), len(actions), ok)
        result.curve.append(stats)
        log.debug("iter %d return %.4f kl %.5f step %.3g", it, mean_return, kl, frac)
        if callback is not None:
            callback(stats, policy)
    if skipped:
        warnings.warn(f"all returns equal in {skipped} of {config.iterations} iterations; "
                      "those updates were skipped", RuntimeWarning)
    return result


@dataclass
class ScoreStats:
    mean: float
    std: float
    min: float
    max: float
    scores: list[float]


def summarize(scores) -> ScoreStats:
    a = np.asarray(scores, dtype=float)
    return ScoreStats(float(a.mean()), float(a.std()), float(a.min()), float(a.max()), a.tolist())


def evaluate(policy, env_factory, n_episodes: int, seed: int = 0) -> ScoreStats:
    """Greedy rollouts; statistics of the terminal symmetric differences."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    scores = []
    for _ in range(n_episodes):
        episode, state = env_factory(int(rng.integers(2**63)))
        tr = rollout(episode, policy, greedy=True, initial_state=state)
        scores.append(tr.score)
    return summarize(scores)
