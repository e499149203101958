"""Categorical MLP policy with hand-written forward/backward passes.

Architecture: ``input -> 32 -> 32 -> 5`` with tanh hidden units and softmax
over action logits. Weights are stored ``(fan_in, fan_out)`` so a batch of
states ``X`` maps as ``X @ W + b``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import (
    ArchitectureMismatchError,
    CorruptPolicyFileError,
    DimensionMismatchError,
)

HIDDEN = (32, 32)
FORMAT = "gauzecut-policy"


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class MLPPolicy:
    def __init__(self, sizes, weights=None, biases=None, init_seed: int = 0,
                 output_scale: float = 0.01, metadata: dict | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.init_seed = int(init_seed)
        self.metadata = dict(metadata or {})
        if weights is None:
            rng = np.random.default_rng(init_seed)
            weights, biases = [], []
            last = len(self.sizes) - 2
            for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
                bound = 1.0 / math.sqrt(a)
                w = rng.uniform(-bound, bound, size=(a, b))
                if i == last:
                    w *= output_scale
                weights.append(w)
                biases.append(np.zeros(b))
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self._check_shapes()

    @classmethod
    def for_dims(cls, n_in: int, n_out: int, init_seed: int = 0, **kw) -> "MLPPolicy":
        return cls((n_in, *HIDDEN, n_out), init_seed=init_seed, **kw)

    def _check_shapes(self):
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ArchitectureMismatchError("layer count does not match sizes")
        for w, b, a, o in zip(self.weights, self.biases, self.sizes[:-1], self.sizes[1:]):
            if w.shape != (a, o) or b.shape != (o,):
                raise ArchitectureMismatchError(
                    f"layer shapes {w.shape}/{b.shape} do not match ({a}, {o})")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    # -- flat parameter view ------------------------------------------------
    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def set_flat(self, theta: np.ndarray) -> "MLPPolicy":
        theta = np.asarray(theta, dtype=float)
        i = 0
        for k in range(len(self.weights)):
            for arr in (self.weights[k], self.biases[k]):
                n = arr.size
                arr[...] = theta[i:i + n].reshape(arr.shape)
                i += n
        if i != theta.size:
            raise DimensionMismatchError(f"flat vector has {theta.size} entries, need {i}")
        return self

    def with_flat(self, theta) -> "MLPPolicy":
        other = self.copy()
        return other.set_flat(theta)

    def copy(self) -> "MLPPolicy":
        return MLPPolicy(self.sizes, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.init_seed,
                         metadata=dict(self.metadata))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    # -- forward / backward -------------------------------------------------
    def _as_batch(self, states) -> np.ndarray:
        X = np.asarray(states, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != self.n_in:
            raise DimensionMismatchError(f"state has dimension {X.shape[-1]}, policy expects {self.n_in}")
        return X

    def forward(self, states):
        """Return (logits, cache) for a batch; the cache feeds jvp/vjp."""
        X = self._as_batch(states)
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def logits(self, states) -> np.ndarray:
        return self.forward(states)[0]

    def probs(self, state) -> np.ndarray:
        p = softmax(self.forward(state)[0])
        return p[0] if np.ndim(state) == 1 else p

    def act(self, state, rng=None, greedy=True) -> int:
        p = self.probs(state)
        if greedy or rng is None:
            return int(np.argmax(p))
        return int(rng.choice(len(p), p=p))

    def vjp(self, acts, grad_logits) -> np.ndarray:
        """Flat gradient of ``sum(grad_logits * logits)`` w.r.t. the parameters."""
        g = np.asarray(grad_logits, dtype=float)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = acts[k]
            grads_w[k] = h_in.T @ g
            grads_b[k] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.weights[k].T) * (1.0 - h_in * h_in)
        return np.concatenate([a.ravel() for pair in zip(grads_w, grads_b) for a in pair])

    def jvp(self, acts, v: np.ndarray) -> np.ndarray:
        """Directional derivative of the logits along flat direction ``v``."""
        dws, dbs = [], []
        i = 0
        for w, b in zip(self.weights, self.biases):
            dws.append(v[i:i + w.size].reshape(w.shape))
            i += w.size
            dbs.append(v[i:i + b.size])
            i += b.size
        last = len(self.weights) - 1
        dh = np.zeros_like(acts[0])
        for k, (w, dw, db) in enumerate(zip(self.weights, dws, dbs)):
            dz = dh @ w + acts[k] @ dw + db
            if k == last:
                return dz
            h = acts[k + 1]
            dh = (1.0 - h * h) * dz
        raise AssertionError("unreachable")

    def log_prob(self, states, actions) -> np.ndarray:
        logits, _ = self.forward(states)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return logp[np.arange(len(logp)), np.asarray(actions, dtype=int)]

    def log_prob_grad(self, state, action: int) -> np.ndarray:
        """Flat gradient of log pi(action | state)."""
        logits, acts = self.forward(state)
        p = softmax(logits)
        g = -p
        g[0, int(action)] += 1.0
        return self.vjp(acts, g)


def policy_forward(policy: MLPPolicy, state) -> np.ndarray:
    """Action distribution for one state."""
    return policy.probs(np.asarray(state, dtype=float))


# -- persistence -------------------------------------------------------------
def save_policy(policy: MLPPolicy, path: str | Path) -> None:
    doc = {
        "format": FORMAT,
        "version": 1,
        "architecture": {
            "sizes": list(policy.sizes),
            "activation": "tanh",
            "output": "categorical",
        },
        "init_seed": policy.init_seed,
        "layers": [{"W": w.tolist(), "b": b.tolist()}
                   for w, b in zip(policy.weights, policy.biases)],
        "metadata": policy.metadata,
    }
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_policy(path: str | Path, expected_sizes=None) -> MLPPolicy:
    try:
        doc = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise CorruptPolicyFileError(f"{path}: not a valid policy document ({exc})") from exc
    try:
        if doc.get("format") != FORMAT:
            raise CorruptPolicyFileError(f"{path}: unknown format {doc.get('format')!r}")
        sizes = tuple(int(s) for s in doc["architecture"]["sizes"])
        layers = doc["layers"]
        weights = [np.array(layer["W"], dtype=float) for layer in layers]
        biases = [np.array(layer["b"], dtype=float) for layer in layers]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptPolicyFileError(f"{path}: malformed policy document ({exc})") from exc
    if expected_sizes is not None and tuple(expected_sizes) != sizes:
        raise ArchitectureMismatchError(f"{path}: file has sizes {sizes}, expected {tuple(expected_sizes)}")
    if any(not np.all(np.isfinite(a)) for a in weights + biases):
        raise CorruptPolicyFileError(f"{path}: non-finite weights")
    return MLPPolicy(sizes, weights, biases, doc.get("init_seed", 0),
                     metadata=doc.get("metadata", {}))
