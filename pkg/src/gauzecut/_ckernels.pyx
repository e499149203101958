# cython: language_level=3
"""Compiled mass-spring step. Mirrors ``_pykernels.step_into`` operation for operation."""

cimport cython
import numpy as np


@cython.boundscheck(False)
@cython.wraparound(False)
def step_into(double[:, :, ::1] pos,
              double[:, :, ::1] prev,
              double[:, :, ::1] rest,
              unsigned char[:, ::1] live,
              unsigned char[:, ::1] pinned,
              double[:, :, ::1] targets,
              double[:, :, ::1] force,
              noise,
              double[:, :, ::1] out,
              double tau,
              double damping,
              double alpha,
              double gz,
              bint literal):
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t r, c, k
    cdef double acc, p, v
    cdef double[:, :, ::1] nz
    cdef bint has_noise = noise is not None
    if has_noise:
        nz = noise

    with nogil:
        for r in range(n):
            for c in range(n):
                if not live[r, c]:
                    for k in range(3):
                        out[r, c, k] = pos[r, c, k]
                    continue
                if pinned[r, c]:
                    for k in range(3):
                        out[r, c, k] = targets[r, c, k]
                    continue
                for k in range(3):
                    p = pos[r, c, k]
                    acc = 0.0
                    if literal:
                        if r > 0 and live[r - 1, c]:
                            acc = acc + (pos[r - 1, c, k] - p)
                        if r < n - 1 and live[r + 1, c]:
                            acc = acc + (pos[r + 1, c, k] - p)
                        if c > 0 and live[r, c - 1]:
                            acc = acc + (pos[r, c - 1, k] - p)
                        if c < n - 1 and live[r, c + 1]:
                            acc = acc + (pos[r, c + 1, k] - p)
                        v = alpha * p + damping * (p - prev[r, c, k])
                        v = v - tau * acc
                    else:
                        if r > 0 and live[r - 1, c]:
                            acc = acc + ((pos[r - 1, c, k] - p) - (rest[r - 1, c, k] - rest[r, c, k]))
                        if r < n - 1 and live[r + 1, c]:
                            acc = acc + ((pos[r + 1, c, k] - p) - (rest[r + 1, c, k] - rest[r, c, k]))
                        if c > 0 and live[r, c - 1]:
                            acc = acc + ((pos[r, c - 1, k] - p) - (rest[r, c - 1, k] - rest[r, c, k]))
                        if c < n - 1 and live[r, c + 1]:
                            acc = acc + ((pos[r, c + 1, k] - p) - (rest[r, c + 1, k] - rest[r, c, k]))
                        v = p + damping * (p - prev[r, c, k])
                        v = v + tau * acc
                    v = v + force[r, c, k]
                    if k == 2:
                        v = v - gz
                    if has_noise:
                        v = v + nz[r, c, k]
                    out[r, c, k] = v
