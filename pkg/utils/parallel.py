"""
Bounded worker pool for embarrassingly parallel scans.

Results come back in input order regardless of completion order, so
aggregations built on top are deterministic.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from utils.config import get_settings
from utils.logging import get_logger

logger = get_logger(__name__)
settings = get_settings()

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(jobs: Optional[int] = None) -> int:
    """--jobs, else the configured cap, else available parallelism"""
    if jobs is not None and jobs >= 1:
        return int(jobs)
    if settings.MAX_WORKERS:
        return int(settings.MAX_WORKERS)
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def parallel_map(func: Callable[[T], R], items: Iterable[T], jobs: Optional[int] = None, label: str = "scan") -> List[R]:
    items = list(items)
    workers = min(resolve_workers(jobs), max(1, len(items)))
    if workers == 1:
        results = [func(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(func, items))
    logger.log_scan_progress(len(results), len(items), label=label, workers=workers)
    return results
