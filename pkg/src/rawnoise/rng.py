"""Deterministic random-number plumbing.

Every stochastic operation in the package takes a caller-supplied
``numpy.random.Generator``. Generators built here sit on top of the Philox
counter-based bit generator, so a 64-bit seed plus a small integer stream
path fully determines every draw on every platform.

Large-array sampling goes through :func:`chunked_eval`, which spawns one
child stream per fixed-size chunk of the flat output. The chunk layout
depends only on the element count, never on the thread count, so a field
sampled with 1 worker is bit-identical to the same field sampled with 8.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

# Flat chunk size for spawned substreams. Fixed by the stream contract:
# changing it changes every chunked draw, so treat it as part of the format.
CHUNK_ELEMS = 1 << 20

_THREAD_ENV = "RAWNOISE_THREADS"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Build a Philox generator from a seed and an optional stream path.

    ``make_rng(seed, a, b)`` and ``make_rng(seed, a, c)`` are statistically
    independent for ``b != c``; the same arguments always rebuild the same
    stream.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def default_threads() -> int:
    """Worker count requested via the RAWNOISE_THREADS environment variable."""
    raw = os.environ.get(_THREAD_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def chunked_eval(
    rng: np.random.Generator,
    n: int,
    draw: Callable[[np.random.Generator, int, int], np.ndarray],
    threads: int = 1,
) -> np.ndarray:
    """Evaluate ``draw(stream, lo, hi)`` over fixed chunks of ``[0, n)``.

    One ``spawn`` call on ``rng`` fixes all child streams up front, so the
    concatenated result is a pure function of the generator state and ``n``.
    ``threads`` only affects scheduling, never values.
    """
    if n < 0:
        raise ValueError("element count must be nonnegative")
    if n == 0:
        return np.empty(0)
    n_chunks = -(-n // CHUNK_ELEMS)
    streams = rng.spawn(n_chunks)
    spans = [(i * CHUNK_ELEMS, min(n, (i + 1) * CHUNK_ELEMS)) for i in range(n_chunks)]
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: draw(job[0], job[1][0], job[1][1]), zip(streams, spans)))
    else:
        parts = [draw(g, lo, hi) for g, (lo, hi) in zip(streams, spans)]
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts)
