import asyncio
from typing import Callable, List, Optional, Sequence, TypeVar

from carleman.config import get_settings
from carleman.logging import logger

T = TypeVar("T")
R = TypeVar("R")


async def gather_bounded(
    fn: Callable[[T], R], items: Sequence[T], limit: Optional[int] = None
) -> List[R]:
    """Run ``fn`` over ``items`` in worker threads, at most ``limit`` at a time.

    Results come back in input order whatever the completion order.
    """
    limit = limit or get_settings().threads
    semaphore = asyncio.Semaphore(max(1, limit))

    async def run_one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(fn, item)

    return list(await asyncio.gather(*(run_one(item) for item in items)))


def map_bounded(
    fn: Callable[[T], R], items: Sequence[T], limit: Optional[int] = None
) -> List[R]:
    """Synchronous entry point for ``gather_bounded``."""
    items = list(items)
    limit = limit or get_settings().threads
    if limit <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        logger.debug("Dispatching jobs", jobs=len(items), workers=limit)
        return asyncio.run(gather_bounded(fn, items, limit))
    # Already inside an event loop: stay sequential rather than nest loops
    return [fn(item) for item in items]
