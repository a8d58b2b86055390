"""Thread-pool map for episode batches (kernels release the GIL)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items, jobs: int | None = None) -> list:
    """Order-preserving map; falls back to a plain loop for jobs <= 1."""
    items = list(items)
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
