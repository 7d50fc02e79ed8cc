"""The averaging operator I(w) = int_0^1 (phi_s^X)^* w ds.

Pulling back by the X-flow substitutes frame monomials through the nilpotent
matrix T(s) = sum_m s^m T_m and shifts each coefficient slice-wise, so on mode
kappa of slice t the whole s-dependence is s^m exp(2 pi i s lam^t kappa.(1, a)).
Both evaluation paths reduce to per-mode kernels K_m = int_0^1 s^m e^{i W s} ds:
exactly (``average_I_exact``) or by Gauss-Legendre (``average_I``).

Convention: the componentwise integral, which commutes with d and satisfies
I(L_X w) = gamma^* w - w. ``paper_sign`` multiplies by (-1)^degree, giving the
anticommuting fibre-integration convention instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _fft
from . import field as F
from .forms import (FrameForm, exterior_d, form_norm, gamma_pullback, lie_derivative,
                    nilpotency_terms)

TWO_PI = 2.0 * math.pi
_SERIES_TERMS = 30


class AveragingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on [0, 1]: ``order`` nodes on each of ``panels`` panels.

    ``panels=None`` scales the panel count with the grid so the node count keeps
    up with the largest X-flow frequency (about lam * N / 2 cycles).
    """

    order: int = 16
    panels: int | None = 4

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("quadrature order must be >= 2")
        if self.panels is not None and self.panels < 1:
            raise ValueError("panel count must be >= 1")

    def resolved(self, N: int) -> "QuadratureSpec":
        if self.panels is not None:
            return self
        return QuadratureSpec(self.order, max(4, N // 16))

    @property
    def nodes(self) -> int:
        return self.order * (self.panels or 4)

    def rule(self, a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on [a, b]."""
        P = self.panels or 4
        x, w = np.polynomial.legendre.leggauss(self.order)
        edges = np.linspace(a, b, P + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights


DEFAULT_QUADRATURE = QuadratureSpec(16, None)


def _unit_phase(freq, s):
    x = np.multiply(freq, s)
    return np.exp(1j * TWO_PI * (x - np.rint(x)))


def moment_integrals(freq, m_max: int) -> list[np.ndarray]:
    """[int_0^1 s^m exp(2 pi i freq s) ds for m = 0..m_max], elementwise in freq.

    Small |W| = |2 pi freq| uses the power series; elsewhere the upward
    recurrence E_m = (e^{iW} - m E_{m-1}) / (iW); with |W| > 1 and m <= 3 the
    error amplification is at most m! / |W|^m <= 6.
    """
    freq = np.asarray(freq, dtype=float)
    W = TWO_PI * freq
    small = np.abs(W) <= 1.0
    out = []
    # series part: sum_n (iW)^n / (n! (n + m + 1))
    iw_s = 1j * np.where(small, W, 0.0)
    powers = [np.ones_like(iw_s)]
    for n in range(1, _SERIES_TERMS):
        powers.append(powers[-1] * iw_s / n)
    iw = 1j * np.where(small, 1.0, W)
    e = _unit_phase(freq, 1.0)
    prev = None
    for m in range(m_max + 1):
        ser = np.zeros_like(iw_s)
        for n in range(_SERIES_TERMS - 1, -1, -1):
            ser = ser + powers[n] / (n + m + 1)
        rec = (e - 1.0) / iw if m == 0 else (e - m * prev) / iw
        prev = rec
        out.append(np.where(small, ser, rec))
    return out


def quadrature_moments(freq, m_max: int, q: QuadratureSpec, s_max: float = 1.0) -> list[np.ndarray]:
    """Gauss-Legendre approximations of int_0^{s_max} s^m exp(2 pi i freq s) ds."""
    nodes, weights = q.rule(0.0, s_max)
    freq = np.asarray(freq, dtype=float)
    out = [np.zeros(freq.shape, dtype=np.complex128) for _ in range(m_max + 1)]
    for s, w in zip(nodes, weights):
        ph = _unit_phase(freq, s) * w
        for m in range(m_max + 1):
            out[m] += ph * s ** m
    return out


@lru_cache(maxsize=16)
def _exact_kernels(grid: F.Grid, m_max: int):
    return moment_integrals(grid.freq_x, m_max)


@lru_cache(maxsize=16)
def _quad_kernels(grid: F.Grid, m_max: int, q: QuadratureSpec):
    return quadrature_moments(grid.freq_x, m_max, q)


def _apply(w: FrameForm, kernels, paper_sign: bool) -> FrameForm:
    p = w.degree
    if p == 4:
        return w
    terms = nilpotency_terms(0, p)
    spectra = [_fft.fft2(c.data) for c in w.coeffs]
    out = []
    for r in range(len(w.coeffs)):
        acc = np.zeros(w.grid.shape, dtype=np.complex128)
        used = []
        for m, T in enumerate(terms):
            for c in np.nonzero(T[r])[0]:
                acc = acc + T[r, c] * kernels[m] * spectra[c]
                used.append(w.coeffs[c])
        data = _fft.ifft2(acc)
        if paper_sign and p % 2:
            data = -data
        out.append(used[0]._derived(data, *used[1:]) if used else F.zeros(w.grid))
    return FrameForm(w.grid, p, out)


def average_I(w: FrameForm, q: QuadratureSpec = DEFAULT_QUADRATURE,
              paper_sign: bool = False) -> FrameForm:
    """I(w) by composite Gauss-Legendre in s, evaluated mode by mode."""
    q = q.resolved(w.grid.N)
    m_max = len(nilpotency_terms(0, w.degree)) - 1 if w.degree < 4 else 0
    return _apply(w, _quad_kernels(w.grid, m_max, q), paper_sign)


def average_I_exact(w: FrameForm, paper_sign: bool = False) -> FrameForm:
    """I(w) with the s-integrals done in closed form per mode and slice."""
    m_max = len(nilpotency_terms(0, w.degree)) - 1 if w.degree < 4 else 0
    return _apply(w, _exact_kernels(w.grid, m_max), paper_sign)


def average(w: FrameForm, q: QuadratureSpec | None = None, paper_sign: bool = False) -> FrameForm:
    """Exact path when ``q`` is None, quadrature otherwise."""
    if q is None:
        return average_I_exact(w, paper_sign)
    return average_I(w, q, paper_sign)


def _rel(num: float, den: float) -> float:
    return num / den if den > 0 else num


def coinvariant_image(w: FrameForm, q: QuadratureSpec | None = None,
                      tol: float | None = 1e-6) -> tuple[FrameForm, float]:
    """gamma^* w - w, certified against I(L_X w).

    Returns the form and the relative defect ||I(L_X w) - (gamma^* w - w)|| / ||w||;
    raises AveragingError when ``tol`` is set and the defect exceeds it.
    """
    img = gamma_pullback(w) - w
    defect = _rel(form_norm(average(lie_derivative("X", w), q) - img), form_norm(w))
    if tol is not None and defect > tol:
        raise AveragingError(f"I(L_X w) misses gamma^* w - w by {defect:.3e} (tol {tol:.1e})")
    return img, defect


def chain_defect(w: FrameForm, q: QuadratureSpec | None = None, paper_sign: bool = False) -> float:
    """||I(dw) - d I(w)|| / ||w||, or ||I(dw) + d I(w)|| / ||w|| under ``paper_sign``."""
    lhs = average(exterior_d(w), q, paper_sign)
    rhs = exterior_d(average(w, q, paper_sign))
    diff = lhs + rhs if paper_sign else lhs - rhs
    return _rel(form_norm(diff), form_norm(w))
