"""Thread-count policy and a deterministic parallel map."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "CONTACT_RADIUS_THREADS"


def thread_count() -> int:
    """Worker count from the environment; 0 or unset means one per CPU."""
    raw = os.environ.get(ENV_VAR, "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        k = 0
    if k <= 0:
        k = os.cpu_count() or 1
    return k


def pmap(fn, items):
    """Map preserving input order; results never depend on the worker count."""
    items = list(items)
    k = min(thread_count(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))
