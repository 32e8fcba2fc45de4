"""
Wall-clock timing helpers.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

logger = logging.getLogger(__name__)


@dataclass
class Elapsed:
    """Elapsed wall time filled in when a timer block exits."""

    seconds: float = 0.0

    @property
    def ms(self) -> int:
        return int(self.seconds * 1000)


@contextmanager
def timer(operation_name: str, log: logging.Logger | None = None) -> Iterator[Elapsed]:
    """
    Time a block and log its duration.

    Args:
        operation_name: Label used in the log line (e.g. "phase A training")
        log: Logger to write to; defaults to this module's logger

    Yields:
        Elapsed: populated with the duration once the block exits

    Example:
        >>> with timer("test prediction") as elapsed:
        ...     decisions = predict(graph, params, nodes, sampler, rng)
        >>> elapsed.seconds
    """
    elapsed = Elapsed()
    start = time.perf_counter()
    try:
        yield elapsed
    finally:
        elapsed.seconds = time.perf_counter() - start
        (log or logger).info(f"{operation_name} completed in {elapsed.ms}ms")
