"""Time one simulator step with each available kernel.

    python benchmarks/bench_step.py [--sizes 15 25 45 63] [--number 200]

Prints microseconds per step and the speedup of the compiled kernel over
the numpy fallback. Both kernels are fed identical inputs, and their outputs
are checked for bitwise equality before timing.
"""
import argparse
import timeit

import numpy as np

from gauzecut._backend import BACKEND, KERNELS


def make_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    rest = np.zeros((n, n, 3))
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rest[..., 0], rest[..., 1] = cols, rows
    pos = rest + rng.normal(0, 0.1, rest.shape)
    prev = pos + rng.normal(0, 0.01, rest.shape)
    live = np.ones((n, n), dtype=np.uint8)
    live[n // 2, 1:-1] = 0
    pinned = np.zeros((n, n), dtype=np.uint8)
    pinned[[0, 0, -1, -1], [0, -1, 0, -1]] = 1
    force = np.zeros_like(rest)
    noise = rng.normal(0, 1e-3, rest.shape)
    return pos, prev, rest, live, pinned, rest.copy(), force, noise, np.empty_like(rest)


def run(kernel, args):
    pos, prev, rest, live, pinned, targets, force, noise, out = args
    kernel(pos, prev, rest, live, pinned, targets, force, noise, out,
           0.1, 0.9, 1.0, 0.025, False)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[15, 25, 45, 63])
    ap.add_argument("--number", type=int, default=200, help="steps per timing run")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"active backend: {BACKEND}; available: {', '.join(KERNELS)}")
    names = list(KERNELS)
    print(f"{'grid':>6} " + " ".join(f"{n + ' us/step':>18}" for n in names)
          + ("   speedup" if len(names) > 1 else ""))
    for n in args.sizes:
        inputs = make_inputs(n)
        outs = [run(KERNELS[k], inputs).copy() for k in names]
        if len(outs) > 1 and not np.array_equal(outs[0], outs[1]):
            raise SystemExit(f"kernels disagree on a {n}x{n} grid")
        us = {}
        for k in names:
            t = min(timeit.repeat(lambda: run(KERNELS[k], inputs), number=args.number,
                                  repeat=args.repeat))
            us[k] = 1e6 * t / args.number
        line = f"{n:>3}x{n:<2} " + " ".join(f"{us[k]:>18.2f}" for k in names)
        if "cython" in us:
            line += f"   {us['python'] / us['cython']:7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
