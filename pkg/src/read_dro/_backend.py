"""Numba/NumPy backend selection and the shared thread-pool helper.

The hot kernels in :mod:`read_dro._kernels` are compiled with ``numba.njit``
when numba is importable.  Setting the environment variable
``READ_DRO_NO_NUMBA=1`` (or any non-empty value other than ``0``) forces the
pure-NumPy fallback implementations; this is also what happens automatically
when numba is missing.  Both paths compute the same quantities, so test
results differ at most by floating-point rounding.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def _numba_disabled_by_env() -> bool:
    flag = os.environ.get("READ_DRO_NO_NUMBA", "")
    return flag not in ("", "0")


try:
    import numba  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and not _numba_disabled_by_env()


def njit_or_py(func):
    """Compile ``func`` with numba when the numba backend is active."""
    if USE_NUMBA:
        from numba import njit

        return njit(cache=True)(func)
    return func


def resolve_threads(threads: int | None) -> int:
    """Map a ``--threads`` value (None/0 = all cores) to a positive count.

    ``READ_DRO_THREADS`` is the environment fallback when ``threads`` is None.
    """
    if threads is None:
        env = os.environ.get("READ_DRO_THREADS", "")
        threads = int(env) if env else 0
    if threads < 0:
        raise ValueError(f"threads must be >= 0, got {threads}")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def thread_map(fn, items, threads: int | None = None) -> list:
    """Apply ``fn`` over ``items``, preserving order.

    Each item is processed by identical code, and results are assembled by
    index, so the output is bitwise independent of the pool size.
    """
    n_threads = resolve_threads(threads)
    items = list(items)
    if n_threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))
