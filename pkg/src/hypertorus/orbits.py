"""Orbit statistics of the X-flow: Birkhoff phase sums and Weyl sums on fibres."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gluing import HyperbolicGluing
from .reduce import pairwise_sum

TWO_PI = 2.0 * math.pi


def _unit(freq, m):
    x = np.multiply(freq, m)
    return np.exp(1j * TWO_PI * (x - np.rint(x)))


def phase_sums(freq, n: int):
    """(1/n) sum_{j<n} z^j and (1/n) sum_{j<n} j z^j with z = exp(2 pi i freq).

    Evaluated by binary doubling on n, so there is no division by 1 - z and the
    cost is O(log n) array operations for any n.
    """
    if n < 1:
        raise ValueError("n must be positive")
    freq = np.asarray(freq, dtype=float)
    # P_m = sum_{j<m} z^j, Q_m = sum_{j<m} j z^j
    P = np.zeros(freq.shape, dtype=np.complex128)
    Q = np.zeros(freq.shape, dtype=np.complex128)
    m = 0
    for bit in bin(n)[2:]:
        if m:
            zm = _unit(freq, m)
            Q = Q + zm * (Q + m * P)
            P = P + zm * P
            m *= 2
        if bit == "1":
            zm = _unit(freq, m)
            P = P + zm
            Q = Q + m * zm
            m += 1
    return P / n, Q / n


def phase_sums_closed(freq, n: int):
    """Closed-form geometric sum (1/n) sum_{j<n} z^j; a reference for phase_sums."""
    freq = np.asarray(freq, dtype=float)
    r = freq - np.rint(freq)
    out = np.ones(freq.shape, dtype=np.complex128)
    nz = r != 0
    rr = r[nz]
    out[nz] = np.exp(1j * math.pi * (n - 1) * rr) * np.sin(math.pi * n * rr) / (n * np.sin(math.pi * rr))
    return out


@dataclass
class OrbitReport:
    base_point: tuple[float, float, float]
    S: float
    K: int
    samples: int
    max_weyl: float
    worst_mode: tuple[int, int] | None
    weyl: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "base_point": list(self.base_point),
            "S": self.S,
            "K": self.K,
            "samples": self.samples,
            "max_weyl": self.max_weyl,
            "worst_mode": list(self.worst_mode) if self.worst_mode else None,
            "weyl": {f"{k[0]},{k[1]}": v for k, v in sorted(self.weyl.items())},
        }


def orbit_discrepancy(g: HyperbolicGluing, x0, S: float, K: int,
                      samples_per_unit: int = 64, slope: float | None = None) -> OrbitReport:
    """Largest Weyl sum |W_k(S)| over 0 < |k|_inf <= K along the X-orbit of x0.

    W_k(S) = (1/M) sum_m exp(2 pi i k . (p0 + s_m lam^t (1, a))) over M equispaced
    s_m in [0, S]. ``slope`` replaces a for synthetic (e.g. rational) directions.
    """
    x, y, t = (float(v) for v in x0)
    a = g.a if slope is None else float(slope)
    M = int(math.ceil(S * samples_per_unit)) + 1
    s = np.linspace(0.0, S, M)
    lam_t = math.exp(t * g.log_lam)
    weyl = {}
    for k1 in range(-K, K + 1):
        for k2 in range(-K, K + 1):
            if (k1, k2) == (0, 0):
                continue
            freq = (k1 + a * k2) * lam_t
            ph = k1 * x + k2 * y + s * freq
            vals = np.exp(1j * TWO_PI * (ph - np.floor(ph)))
            weyl[(k1, k2)] = float(abs(pairwise_sum(vals)) / M)
    if not weyl:
        return OrbitReport((x, y, t), S, K, M, 0.0, None, {})
    worst = max(sorted(weyl), key=lambda k: weyl[k])
    return OrbitReport((x, y, t), S, K, M, weyl[worst], worst, weyl)
