"""Worker pool helpers for deterministic parallel experiments."""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from noisestab.errors import InvalidParameterError
from noisestab.logger import setup_logger

logger = setup_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "NOISESTAB_WORKERS"


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count from the argument, else NOISESTAB_WORKERS, else 1."""
    if workers is None:
        raw = os.getenv(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            raise InvalidParameterError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if workers < 1:
        raise InvalidParameterError(f"Worker count must be positive, got {workers}")
    return workers


def map_chunks(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply fn to every item, preserving input order.

    Each item carries its own random stream, so results do not depend on the worker count.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Dispatching chunks", extra={"chunks": len(items), "workers": workers})
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
