"""Deterministic reductions.

All sums that feed norms, integrals and reports go through ``pairwise_sum``: the
input is flattened, zero-padded to a power of two and folded in halves. The tree
shape depends only on the element count, so the result is bit-identical for any
thread count or memory layout.
"""

from __future__ import annotations

import numpy as np


def pairwise_sum(values) -> complex | float:
    a = np.ascontiguousarray(values).ravel()
    n = a.size
    if n == 0:
        return a.dtype.type(0)
    size = 1 << (n - 1).bit_length()
    if size != n:
        a = np.concatenate([a, np.zeros(size - n, dtype=a.dtype)])
    while a.size > 1:
        half = a.size // 2
        a = a[:half] + a[half:]
    return a[0]


def pairwise_mean(values):
    a = np.asarray(values)
    return pairwise_sum(a) / a.size


def rms(values) -> float:
    """Root mean square of |values|, the grid stand-in for the L2 norm on the unit cube."""
    a = np.asarray(values)
    if a.size == 0:
        return 0.0
    sq = a.real * a.real + a.imag * a.imag if np.iscomplexobj(a) else a * a
    return float(np.sqrt(pairwise_sum(sq) / a.size))
