"""Pure numpy implementation of the mass-spring step.

Every arithmetic operation happens in the same order as in ``_ckernels.pyx``
so the two backends agree bitwise.
"""
import numpy as np

# (row offset, col offset) in the order the compiled kernel visits neighbors
_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _shifted(a, dr, dc):
    """View of ``a`` at (r+dr, c+dc) over the full grid, plus a validity mask."""
    n = a.shape[0]
    out = np.zeros_like(a)
    rs = slice(max(-dr, 0), n - max(dr, 0))
    rd = slice(max(dr, 0), n - max(-dr, 0))
    cs = slice(max(-dc, 0), n - max(dc, 0))
    cd = slice(max(dc, 0), n - max(-dc, 0))
    out[rs, cs] = a[rd, cd]
    return out


def step_into(pos, prev, rest, live, pinned, targets, force, noise, out,
              tau, damping, alpha, gz, literal):
    acc = np.zeros_like(pos)
    live_b = live.astype(bool)
    for dr, dc in _NEIGHBORS:
        nb_live = _shifted(live_b, dr, dc)[..., None]
        pn = _shifted(pos, dr, dc)
        if literal:
            term = pn - pos
        else:
            term = (pn - pos) - (_shifted(rest, dr, dc) - rest)
        acc = np.where(nb_live, acc + term, acc)
    if literal:
        v = alpha * pos + damping * (pos - prev)
        v = v - tau * acc
    else:
        v = pos + damping * (pos - prev)
        v = v + tau * acc
    v = v + force
    v[..., 2] = v[..., 2] - gz
    if noise is not None:
        v = v + noise
    pin_b = pinned.astype(bool)[..., None]
    v = np.where(pin_b, targets, v)
    v = np.where(live_b[..., None], v, pos)
    out[...] = v
