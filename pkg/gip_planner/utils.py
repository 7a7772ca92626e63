import logging
import os
import time
from functools import wraps
from typing import Callable, ParamSpec, TypeVar

logger = logging.getLogger(__name__)


R = TypeVar('R')
P = ParamSpec('P')


def time_execution_sync(additional_text: str = '') -> Callable[[Callable[P, R]], Callable[P, R]]:
	def decorator(func: Callable[P, R]) -> Callable[P, R]:
		@wraps(func)
		def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
			start_time = time.perf_counter()
			result = func(*args, **kwargs)
			execution_time = time.perf_counter() - start_time
			logger.debug(f'{additional_text} Execution time: {execution_time:.3f} seconds')
			return result

		return wrapper

	return decorator


def oracle_threads() -> int:
	"""Worker count for per-group oracle work, from `GIP_THREADS` (0 = auto)."""
	raw = os.getenv('GIP_THREADS', '0').strip() or '0'
	try:
		requested = int(raw)
	except ValueError:
		logger.warning(f'Ignoring non-integer GIP_THREADS={raw!r}')
		requested = 0
	if requested <= 0:
		return min(4, os.cpu_count() or 1)
	return requested
