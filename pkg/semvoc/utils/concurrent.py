"""
Concurrent Processing Utilities

Fans per-clip work (encoding, feature extraction, metrics) out over a thread
pool. Results are keyed by input index, so the caller can reassemble them in
input order regardless of completion order; per-clip randomness must be
derived from the index (``seed + index``), never from scheduling.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

# Default configuration
DEFAULT_MAX_WORKERS = 4
DEFAULT_TIMEOUT = None


def default_workers() -> int:
    """Worker count from SEMVOC_MAX_WORKERS, falling back to the default."""
    try:
        return max(1, int(os.getenv('SEMVOC_MAX_WORKERS', DEFAULT_MAX_WORKERS)))
    except ValueError:
        return DEFAULT_MAX_WORKERS


class ConcurrentProcessor:
    """
    Concurrent processor for per-clip batch operations.

    Handles parallel execution with per-item error capture.
    """

    def __init__(self, max_workers: Optional[int] = None, timeout: Optional[float] = DEFAULT_TIMEOUT):
        """
        Initialize concurrent processor.

        Args:
            max_workers: Maximum number of concurrent workers (None = SEMVOC_MAX_WORKERS)
            timeout: Overall timeout in seconds (None = no limit)
        """
        self.max_workers = max_workers if max_workers is not None else default_workers()
        self.timeout = timeout

    def process_indexed(
        self,
        items: Sequence[Any],
        func: Callable,
        *args,
        **kwargs
    ) -> Tuple[Dict[int, Any], Dict[int, Exception]]:
        """
        Apply ``func(item, *args, **kwargs)`` to every item.

        Returns:
            (index -> result, index -> exception)

        Example:
            processor = ConcurrentProcessor(max_workers=4)
            results, errors = processor.process_indexed(clips, provider.encode)
        """
        results: Dict[int, Any] = {}
        errors: Dict[int, Exception] = {}
        if not items:
            return results, errors

        if self.max_workers <= 1:
            for i, item in enumerate(items):
                try:
                    results[i] = func(item, *args, **kwargs)
                except Exception as e:
                    logger.error(f"Error processing item {i}: {e}")
                    errors[i] = e
            return results, errors

        logger.debug(f"Processing {len(items)} items with {self.max_workers} workers")
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_index = {
                executor.submit(func, item, *args, **kwargs): i
                for i, item in enumerate(items)
            }
            for future in as_completed(future_to_index, timeout=self.timeout):
                i = future_to_index[future]
                try:
                    results[i] = future.result()
                except Exception as e:
                    logger.error(f"Error processing item {i}: {e}")
                    errors[i] = e

        logger.debug(
            f"Completed batch processing: {len(results)} successful, {len(errors)} failed"
        )
        return results, errors


def parallel_map(func: Callable, items: Sequence[Any], max_workers: Optional[int] = None) -> List[Any]:
    """
    Ordered parallel map; re-raises the first failure in input order.

    Example:
        feats = parallel_map(judge_features, clips, max_workers=4)
    """
    results, errors = ConcurrentProcessor(max_workers=max_workers).process_indexed(items, func)
    if errors:
        raise errors[min(errors)]
    return [results[i] for i in range(len(items))]
