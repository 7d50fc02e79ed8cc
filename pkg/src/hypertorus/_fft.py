"""Per-slice 2D FFTs with a process-wide worker count.

pocketfft splits work over independent transforms, so the worker count changes
scheduling only, never the arithmetic of a single transform.
"""

from __future__ import annotations

import contextlib

import scipy.fft

_WORKERS = 1


def set_threads(n: int) -> None:
    global _WORKERS
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _WORKERS = int(n)


def get_threads() -> int:
    return _WORKERS


@contextlib.contextmanager
def threads(n: int):
    old = _WORKERS
    set_threads(n)
    try:
        yield
    finally:
        set_threads(old)


def fft2(a):
    return scipy.fft.fft2(a, axes=(0, 1), workers=_WORKERS)


def ifft2(a):
    return scipy.fft.ifft2(a, axes=(0, 1), workers=_WORKERS)
