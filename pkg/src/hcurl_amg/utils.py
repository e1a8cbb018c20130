"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["thread_count", "thread_map"]


def thread_count():
    """Kernel parallelism cap from HCURL_AMG_THREADS (default 1 = serial)."""
    try:
        return max(1, int(os.environ.get("HCURL_AMG_THREADS", "1")))
    except ValueError:
        return 1


def thread_map(fn, items):
    """Map preserving order, threaded when HCURL_AMG_THREADS allows it."""
    workers = min(thread_count(), max(len(items), 1))
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
