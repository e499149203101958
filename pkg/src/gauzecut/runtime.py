"""Seed derivation and a small order-preserving worker pool."""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor


def derive_seed(master: int, *keys) -> int:
    """Deterministic 63-bit seed from a master seed and any repr-able keys."""
    text = "|".join([str(int(master))] + [repr(k) for k in keys])
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("GAUZE_JOBS")
        jobs = int(env) if env else 1
    return max(1, int(jobs))


def parallel_map(fn, items, jobs: int | None = 1) -> list:
    """``[fn(x) for x in items]`` over a process pool; results keep input order."""
    items = list(items)
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
