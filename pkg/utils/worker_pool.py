import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from utils import config
from utils.resource_monitor import resource_monitor

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ShotWorkerPool:
    """Bounded process pool for independent shot blocks.

    Results always come back in submission order, so merged counts do not
    depend on which worker finished first.
    """

    def __init__(self, max_workers: Optional[int] = None):
        requested = config.WORKERS if max_workers is None else max_workers
        self.max_workers = resource_monitor.recommended_workers(requested)
        self._executor: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "ShotWorkerPool":
        if self.max_workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.max_workers)
            logger.debug(f"Started process pool with {self.max_workers} workers")
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=exc_type is not None)
            self._executor = None

    def map(self, func: Callable[[T], R], tasks: Iterable[T]) -> List[R]:
        tasks = list(tasks)
        if self._executor is None or len(tasks) <= 1:
            return [func(task) for task in tasks]
        chunksize = max(1, len(tasks) // (4 * self.max_workers))
        return list(self._executor.map(func, tasks, chunksize=chunksize))
