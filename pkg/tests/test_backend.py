import os
import subprocess
import sys

import numpy as np
import pytest

from gauzecut import _backend, _pykernels

ckernels = pytest.importorskip("gauzecut._ckernels")


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    rest = np.zeros((n, n, 3))
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rest[..., 0], rest[..., 1] = cols, rows
    pos = rest + rng.normal(0, 0.3, rest.shape)
    prev = pos + rng.normal(0, 0.05, rest.shape)
    live = (rng.random((n, n)) > 0.15).astype(np.uint8)
    pinned = (rng.random((n, n)) > 0.9).astype(np.uint8)
    targets = rest + rng.normal(0, 0.1, rest.shape)
    force = rng.normal(0, 0.01, rest.shape)
    noise = rng.normal(0, 0.001, rest.shape)
    return pos, prev, rest, live, pinned, targets, force, noise


@pytest.mark.parametrize("literal", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_backends_bitwise_equal(seed, literal):
    pos, prev, rest, live, pinned, targets, force, noise = random_state(11, seed)
    outs = []
    for kern in (ckernels, _pykernels):
        out = np.empty_like(pos)
        kern.step_into(pos, prev, rest, live, pinned, targets, force,
                       noise if seed % 2 else None, out, 0.1, 0.9, 0.95, 0.025, literal)
        outs.append(out)
    assert np.array_equal(outs[0], outs[1])


def test_backend_registry():
    assert set(_backend.KERNELS) == {"cython", "python"}
    assert _backend.BACKEND in _backend.KERNELS


def test_python_backend_forced_by_env():
    env = dict(os.environ, GAUZECUT_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import gauzecut; print(gauzecut.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
