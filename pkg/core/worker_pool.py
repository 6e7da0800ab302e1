import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

_pool = None
_threads = None
_lock = threading.RLock()


def default_threads() -> int:
    """
    Число потоков: LANGEVIN_THREADS или все ядра.
    """
    value = os.environ.get("LANGEVIN_THREADS")
    if value:
        try:
            threads = int(value)
        except ValueError:
            raise RuntimeError(f"LANGEVIN_THREADS must be an integer, got {value!r}")
        if threads < 1:
            raise RuntimeError(f"LANGEVIN_THREADS must be >= 1, got {threads}")
        return threads
    return os.cpu_count() or 1


def init_pool(threads: int = None):
    """
    Инициализация пула потоков для реплик.
    """
    global _pool, _threads
    threads = threads or default_threads()
    if threads < 1:
        raise RuntimeError(f"Worker pool needs at least one thread, got {threads}")
    with _lock:
        if _pool is not None and _threads == threads:
            return _pool
        shutdown_pool()
        _pool = ThreadPoolExecutor(max_workers=threads, thread_name_prefix="replica")
        _threads = threads
        logger.info(f"Worker pool started with {threads} threads")
        return _pool


def get_pool():
    """
    Возвращает пул, при необходимости создаёт новый.
    """
    with _lock:
        if _pool is not None:
            return _pool
        return init_pool()


def shutdown_pool():
    global _pool, _threads
    with _lock:
        if _pool is not None:
            _pool.shutdown(wait=True)
            logger.info("Worker pool stopped")
        _pool = None
        _threads = None


def map_replicas(fn, replica_ids):
    """
    Применяет fn к каждой реплике; результаты упорядочены по номеру реплики,
    поэтому число потоков не влияет на агрегацию.
    """
    ids = list(replica_ids)
    if len(ids) <= 1:
        return [fn(r) for r in ids]
    return list(get_pool().map(fn, ids))
