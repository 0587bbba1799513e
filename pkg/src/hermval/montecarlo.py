"""Chunked, substream-seeded Monte-Carlo means.

Work is cut into fixed-size chunks and chunk ``i`` always draws from
``stream.child(i)``, so results do not depend on the thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 256
_threads = None


def set_threads(n):
    global _threads
    _threads = None if n is None else max(1, int(n))


def get_threads():
    if _threads is not None:
        return _threads
    env = os.environ.get("HERMVAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def chunked_samples(sample_fn, N, stream, chunk=CHUNK):
    """Concatenate ``sample_fn(child_stream, m)`` over chunks covering ``N`` draws."""
    if N < 1:
        raise ValueError("sample count must be at least 1")
    sizes = [min(chunk, N - i) for i in range(0, N, chunk)]
    jobs = [(stream.child(i), m) for i, m in enumerate(sizes)]
    threads = get_threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda job: np.asarray(sample_fn(*job), dtype=float), jobs))
    else:
        parts = [np.asarray(sample_fn(*job), dtype=float) for job in jobs]
    return np.concatenate(parts, axis=0)


def mean_and_error(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(values.mean())
    err = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, err
