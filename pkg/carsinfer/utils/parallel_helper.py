from joblib import Parallel, delayed


def chunk_bounds(total, chunk_size):
    """Fixed [begin, end) slices over ``total`` items.

    The split depends only on ``total`` and ``chunk_size`` so the work unit
    seen by each task is the same for any thread count.
    """
    assert chunk_size >= 1
    return [(beg, min(beg + chunk_size, total)) for beg in range(0, total, chunk_size)]


def parallel_map(fn, items, threads=1):
    """Ordered map of ``fn`` over ``items`` on joblib's threading backend."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=threads, prefer="threads")(delayed(fn)(item) for item in items)

