import os
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import psutil

logger = logging.getLogger(__name__)

WORKERS_ENV = "LEO_COVERAGE_WORKERS"

_pool_instance: Optional[ProcessPoolExecutor] = None
_pool_workers: int = 0


def resolve_worker_count(requested: Optional[int] = None) -> int:
	"""
	Pick the worker count: explicit request, then LEO_COVERAGE_WORKERS, then physical cores.
	"""
	if requested is not None:
		if requested < 1:
			raise ValueError(f"worker count must be >= 1, got {requested}")
		return requested

	env_val = os.environ.get(WORKERS_ENV)
	if env_val:
		try:
			count = int(env_val)
			if count >= 1:
				logger.info(f"Using {count} workers from {WORKERS_ENV}")
				return count
			logger.warning(f"Ignoring {WORKERS_ENV}={env_val}: must be >= 1")
		except ValueError:
			logger.warning(f"Ignoring {WORKERS_ENV}={env_val}: not an integer")

	cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
	logger.info(f"Using {cores} workers (physical cores)")
	return cores


def create_worker_pool(n_workers: int) -> Optional[ProcessPoolExecutor]:
	"""
	Create a process pool, or None when a single worker means running in-process.
	"""
	if n_workers <= 1:
		logger.info("Running in-process with a single worker")
		return None
	try:
		pool = ProcessPoolExecutor(max_workers=n_workers)
		logger.info(f"Started process pool with {n_workers} workers")
		return pool
	except (OSError, ValueError) as e:
		logger.warning(f"Could not start a process pool ({e}); falling back to in-process execution")
		return None


def get_worker_pool(n_workers: int) -> Optional[ProcessPoolExecutor]:
	"""Return a cached pool sized for n_workers, creating (or resizing) it if necessary."""
	global _pool_instance, _pool_workers
	if _pool_instance is None or _pool_workers != n_workers:
		shutdown_worker_pool()
		_pool_instance = create_worker_pool(n_workers)
		_pool_workers = n_workers if _pool_instance is not None else 0
	return _pool_instance


def shutdown_worker_pool() -> None:
	global _pool_instance, _pool_workers
	if _pool_instance is not None:
		_pool_instance.shutdown(wait=True)
		logger.info("Process pool shut down")
	_pool_instance = None
	_pool_workers = 0
