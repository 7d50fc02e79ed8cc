"""Scalar fields on the hyperbolic torus sampled on a twisted grid.

A field is stored as complex samples ``data[i, j, l]`` at (i/N, j/N, l/Nt) in the
fundamental cube [0,1)^3. Periodicity in x and y is plain; in t the slice l = Nt
is slice 0 gathered through A^{-1} (mod N), which is exact because A is an
integer matrix of determinant 1. In-slice derivatives and flows are spectral,
the t-derivative is a high-order central difference across the twisted seam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import _fft
from .gluing import HyperbolicGluing, forward_permutation, grid_permutation, mode_orbit
from .reduce import pairwise_mean, rms

TWO_PI = 2.0 * math.pi
SEAM_RTOL = 1e-10


class SlabFieldError(ValueError):
    """An operation that needs the quotient seam received slab data."""


def central_difference_weights(order: int) -> list[float]:
    """Weights c_1..c_r of the order-``order`` central first derivative.

    f'(x) ~ (1/h) sum_m c_m (f(x + m h) - f(x - m h)), r = order // 2.
    """
    if order < 2 or order > 12 or order % 2:
        raise ValueError("fd order must be even and between 2 and 12")
    r = order // 2
    out = []
    for m in range(1, r + 1):
        c = Fraction((-1) ** (m + 1) * math.factorial(r) ** 2,
                     m * math.factorial(r - m) * math.factorial(r + m))
        out.append(float(c))
    return out


class Grid:
    """Resolution, gluing and precomputed spectral/stencil data.

    Use ``make_grid`` so instances are shared; everything here is read-only.
    """

    def __init__(self, gluing: HyperbolicGluing, N: int, Nt: int, fd_order: int = 8):
        if N < 1 or Nt < 1:
            raise ValueError("grid sizes must be positive")
        r = fd_order // 2
        if Nt < r:
            raise ValueError(f"Nt={Nt} is smaller than the stencil half-width {r}")
        self.gluing = gluing
        self.N = int(N)
        self.Nt = int(Nt)
        self.fd_order = int(fd_order)
        self.fd_weights = central_difference_weights(fd_order)

        self.t = np.arange(Nt) / Nt
        self.lam_t = np.exp(self.t * gluing.log_lam)
        k = np.fft.fftfreq(N) * N
        self.k1 = k[:, None]
        self.k2 = k[None, :]
        # Spatial symbols of d/dx + a d/dy and d/dx + b d/dy, in cycles.
        self.sym_a = self.k1 + gluing.a * self.k2
        self.sym_b = self.k1 + gluing.b * self.k2
        nyq = np.zeros((N, N), dtype=bool)
        if N % 2 == 0:
            nyq |= (np.abs(self.k1) == N // 2) | (np.abs(self.k2) == N // 2)
        self.nyquist = nyq
        self.dealias = (np.abs(self.k1) < N / 3.0) & (np.abs(self.k2) < N / 3.0)

        self.perm = grid_permutation(gluing, N)
        self.perm_fwd = forward_permutation(gluing, N)

        self._deriv_x = np.where(nyq, 0.0, TWO_PI * self.sym_a)[:, :, None] * self.lam_t[None, None, :]
        self._deriv_y = np.where(nyq, 0.0, TWO_PI * self.sym_b)[:, :, None] / self.lam_t[None, None, :]
        # Physical flow frequencies per (mode, slice), in cycles per unit flow time.
        self.freq_x = self.sym_a[:, :, None] * self.lam_t[None, None, :]
        self.freq_y = self.sym_b[:, :, None] / self.lam_t[None, None, :]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.Nt)

    @property
    def h(self) -> float:
        return 1.0 / self.Nt

    def coords(self):
        x = np.arange(self.N) / self.N
        return np.meshgrid(x, x, self.t, indexing="ij")

    def same_as(self, other: "Grid") -> bool:
        return (self is other) or (
            self.gluing == other.gluing and self.N == other.N and self.Nt == other.Nt
            and self.fd_order == other.fd_order)

    def __repr__(self):
        return f"Grid(A={self.gluing.entries}, N={self.N}, Nt={self.Nt}, fd_order={self.fd_order})"


@lru_cache(maxsize=32)
def make_grid(gluing: HyperbolicGluing, N: int, Nt: int, fd_order: int = 8) -> Grid:
    return Grid(gluing, N, Nt, fd_order)


class ScalarField:
    """Immutable complex samples on a Grid.

    ``slab`` marks data on the covering slab R^2 x [0,1) with no claim of
    lattice invariance; ``seam_defect`` is the measured seam mismatch when known.
    """

    __slots__ = ("grid", "data", "slab", "seam_defect")

    def __init__(self, grid: Grid, data, slab: bool = False, seam_defect: float | None = None,
                 _owned: bool = False):
        arr = np.asarray(data, dtype=np.complex128)
        if arr.shape != grid.shape:
            raise ValueError(f"data shape {arr.shape} does not match grid {grid.shape}")
        if arr.flags.writeable and not _owned:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "slab", bool(slab))
        object.__setattr__(self, "seam_defect", seam_defect)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    def __repr__(self):
        kind = "slab" if self.slab else "quotient"
        return f"ScalarField({self.grid!r}, {kind}, sup={sup_norm(self):.3g})"

    def _derived(self, data, *others: "ScalarField") -> "ScalarField":
        slab = self.slab or any(o.slab for o in others)
        defects = [f.seam_defect for f in (self, *others)]
        defect = None if any(d is None for d in defects) else max(defects)
        return ScalarField(self.grid, data, slab=slab, seam_defect=defect, _owned=True)

    @property
    def seam_ok(self) -> bool:
        if self.slab:
            return False
        if self.seam_defect is None:
            return True
        return self.seam_defect <= SEAM_RTOL * max(sup_norm(self), 1e-300)

    def _check(self, other: "ScalarField"):
        if not self.grid.same_as(other.grid):
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return self._derived(self.data + other.data, other)
        return self._derived(self.data + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return self._derived(self.data - other.data, other)
        return self._derived(self.data - other)

    def __rsub__(self, other):
        return self._derived(other - self.data)

    def __neg__(self):
        return self._derived(-self.data)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            return product(self, other)
        return self._derived(self.data * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ScalarField):
            raise TypeError("field division is not supported")
        return self._derived(self.data / other)


def constant(grid: Grid, value: complex = 1.0) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, value, dtype=np.complex128), seam_defect=0.0)


def zeros(grid: Grid) -> ScalarField:
    return constant(grid, 0.0)


def from_function(grid: Grid, fn: Callable, slab: bool = False) -> ScalarField:
    """Sample ``fn(x, y, t)`` (vectorised over arrays) on the grid.

    For quotient fields the seam defect is measured exactly: fn at t = 1 is
    compared against slice 0 gathered through the grid permutation.
    """
    x, y, t = grid.coords()
    data = np.broadcast_to(np.asarray(fn(x, y, t), dtype=np.complex128), grid.shape)
    if not np.all(np.isfinite(data)):
        raise ValueError("function produced non-finite samples")
    defect = None
    if not slab:
        top = np.asarray(fn(x[:, :, 0], y[:, :, 0], np.ones_like(x[:, :, 0])), dtype=np.complex128)
        top = np.broadcast_to(top, (grid.N, grid.N))
        I, J = grid.perm
        defect = float(np.max(np.abs(top - data[I, J, 0])))
    return ScalarField(grid, np.array(data), slab=slab, seam_defect=defect)


@dataclass(frozen=True)
class CircleFunction:
    """A function on S^1 = R/Z, as a Fourier mode list or as raw samples.

    ``modes`` holds pairs (m, c) meaning c * exp(2 pi i m t).
    """

    modes: tuple[tuple[int, complex], ...] = ()
    samples: tuple[complex, ...] | None = None

    @classmethod
    def const(cls, c: complex = 1.0) -> "CircleFunction":
        return cls(modes=((0, complex(c)),))

    @classmethod
    def cos(cls, k: int, amp: float = 1.0) -> "CircleFunction":
        if k == 0:
            return cls.const(amp)
        return cls(modes=((k, amp / 2), (-k, amp / 2)))

    @classmethod
    def sin(cls, k: int, amp: float = 1.0) -> "CircleFunction":
        if k == 0:
            return cls()
        return cls(modes=((k, amp / 2j), (-k, -amp / 2j)))

    @classmethod
    def from_samples(cls, values: Sequence[complex]) -> "CircleFunction":
        return cls(samples=tuple(complex(v) for v in values))

    @classmethod
    def parse(cls, text: str) -> "CircleFunction":
        """Parse ``1``, ``cos2pi3t``/``cos:3``, ``sin:2``, ``0``."""
        s = text.strip().lower().replace(" ", "")
        for name in ("cos", "sin"):
            if s.startswith(name):
                rest = s[len(name):].lstrip(":")
                rest = rest.removeprefix("2pi").removesuffix("t") or "1"
                return getattr(cls, name)(int(rest))
        return cls.const(complex(s)) if s not in ("0", "zero") else cls()

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.samples is not None:
            n = len(self.samples)
            idx = np.rint(t * n).astype(np.int64)
            if not np.allclose(idx / n, t, atol=1e-12):
                raise ValueError("sampled circle function evaluated off its sample points")
            return np.asarray(self.samples, dtype=np.complex128)[idx % n]
        out = np.zeros(t.shape, dtype=np.complex128)
        for m, c in self.modes:
            out = out + c * np.exp(1j * TWO_PI * m * t)
        return out

    def is_zero(self) -> bool:
        if self.samples is not None:
            return all(v == 0 for v in self.samples)
        return all(c == 0 for _, c in self.modes)


def pullback_circle(grid: Grid, phi: CircleFunction) -> ScalarField:
    """p*(phi): constant on every t-slice, so invariant under the seam exactly."""
    vals = phi(grid.t)
    data = np.broadcast_to(vals[None, None, :], grid.shape)
    return ScalarField(grid, np.array(data), seam_defect=0.0)


# ---------------------------------------------------------------- derivatives

def _spectral(f: ScalarField, mult) -> ScalarField:
    out = _fft.ifft2(_fft.fft2(f.data) * mult)
    return f._derived(out)


def deriv_X(f: ScalarField) -> ScalarField:
    """X f = lam^t (d/dx + a d/dy) f, per slice."""
    return _spectral(f, 1j * f.grid._deriv_x)


def deriv_Y(f: ScalarField) -> ScalarField:
    """Y f = lam^{-t} (d/dx + b d/dy) f, per slice."""
    return _spectral(f, 1j * f.grid._deriv_y)


def deriv_XY(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """X f and Y f sharing one forward transform."""
    F = _fft.fft2(f.data)
    return (f._derived(_fft.ifft2(F * (1j * f.grid._deriv_x))),
            f._derived(_fft.ifft2(F * (1j * f.grid._deriv_y))))


def pad_t(grid: Grid, data: np.ndarray, r: int) -> np.ndarray:
    """Append r ghost slices on each side of the t axis through the twisted seam."""
    N, Nt = grid.N, grid.Nt
    ext = np.empty((N, N, Nt + 2 * r), dtype=data.dtype)
    ext[:, :, r:r + Nt] = data
    I, J = grid.perm
    Ip, Jp = grid.perm_fwd
    for m in range(r):
        # slice Nt + m is slice m read at A^{-1}(i, j)
        ext[:, :, r + Nt + m] = data[I, J, m]
        # slice -1 - m is slice Nt - 1 - m read at A(i, j)
        ext[:, :, r - 1 - m] = data[Ip, Jp, Nt - 1 - m]
    return ext


def dt_fd(grid: Grid, data: np.ndarray) -> np.ndarray:
    """Central-difference d/dt of raw samples across the twisted seam."""
    w = grid.fd_weights
    r = len(w)
    ext = pad_t(grid, data, r)
    Nt = grid.Nt
    out = np.zeros_like(data)
    for m, c in enumerate(w, start=1):
        out += c * (ext[:, :, r + m:r + m + Nt] - ext[:, :, r - m:r - m + Nt])
    return out * grid.Nt


def deriv_Z(f: ScalarField) -> ScalarField:
    """Z f = -(1/log lam) df/dt; refuses slab fields (no seam to wrap through)."""
    if f.slab:
        raise SlabFieldError("deriv_Z needs a quotient field; slab data has no twisted wrap")
    return f._derived(dt_fd(f.grid, f.data) * (-1.0 / f.grid.gluing.log_lam))


# ---------------------------------------------------------------------- flows

def _phase(freq: np.ndarray, s: float) -> np.ndarray:
    x = s * freq
    # Reduce before exponentiating so large s keeps full phase accuracy.
    x = x - np.rint(x)
    return np.exp(1j * TWO_PI * x)


def pullback_flow_X(f: ScalarField, s: float) -> ScalarField:
    """(phi_s^X)^* f: slice t is shifted by s lam^t (1, a)."""
    if s == 0:
        return f
    return _spectral(f, _phase(f.grid.freq_x, s))


def pullback_flow_Y(f: ScalarField, u: float) -> ScalarField:
    """(phi_u^Y)^* f: slice t is shifted by u lam^{-t} (1, b)."""
    if u == 0:
        return f
    return _spectral(f, _phase(f.grid.freq_y, u))


def birkhoff_average(f: ScalarField, n: int) -> ScalarField:
    """(1/n) sum_{j<n} (gamma^j)^* f, evaluated per mode as a geometric phase sum."""
    from .orbits import phase_sums

    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return f
    s0, _ = phase_sums(f.grid.freq_x, n)
    return _spectral(f, s0)


def bracket_residuals(f: ScalarField) -> dict[str, float]:
    """Relative residuals of [X,Y] = 0, [Z,X] = -X and [Z,Y] = Y applied to f."""
    n = l2_norm(f)
    n = n if n > 0 else 1.0
    x, y, z = deriv_X(f), deriv_Y(f), deriv_Z(f)
    return {
        "XY": l2_norm(deriv_X(y) - deriv_Y(x)) / n,
        "ZX": l2_norm(deriv_Z(x) - deriv_X(z) + x) / n,
        "ZY": l2_norm(deriv_Z(y) - deriv_Y(z) - y) / n,
    }


def flow_lemma_residual(f: ScalarField, s: float) -> float:
    """||Z(phi_s^* f) + s phi_s^*(X f) - phi_s^*(Z f)|| / ||f|| for the X-flow phi_s."""
    n = l2_norm(f)
    lhs = deriv_Z(pullback_flow_X(f, s))
    rhs = pullback_flow_X(deriv_Z(f), s) - pullback_flow_X(deriv_X(f), s) * s
    r = l2_norm(lhs - rhs)
    return r / n if n > 0 else r


# ------------------------------------------------------------ integration etc.

def integrate(f: ScalarField) -> complex:
    """Integral of f alpha^beta^theta over the torus."""
    if f.slab:
        raise SlabFieldError("integration over the quotient needs a quotient field")
    return complex(f.grid.gluing.volume_factor * pairwise_mean(f.data))


def sup_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.data))) if f.data.size else 0.0


def l2_norm(f: ScalarField) -> float:
    """RMS over the grid: the L2 norm on the unit cube, resolution independent."""
    return rms(f.data)


def inner(f: ScalarField, h: ScalarField) -> complex:
    return complex(pairwise_mean(np.conj(f.data) * h.data))


def scale(f: ScalarField, c: complex) -> ScalarField:
    return f * c


def axpy(a: complex, x: ScalarField, y: ScalarField) -> ScalarField:
    return x * a + y


def _slice_constant(data: np.ndarray) -> bool:
    return bool(np.all(data == data[:1, :1, :]))


def dealias_truncate(f: ScalarField) -> ScalarField:
    m = f.grid.dealias[:, :, None]
    return _spectral(f, m)


def product(f: ScalarField, h: ScalarField, dealias: bool = True) -> ScalarField:
    """Pointwise product; 2/3-rule dealiased unless a factor is slice-constant."""
    f._check(h)
    if not dealias or _slice_constant(f.data) or _slice_constant(h.data):
        return f._derived(f.data * h.data, h)
    m = f.grid.dealias[:, :, None]
    fa = _fft.ifft2(_fft.fft2(f.data) * m)
    ha = _fft.ifft2(_fft.fft2(h.data) * m)
    out = _fft.ifft2(_fft.fft2(fa * ha) * m)
    return f._derived(out, h)


def slice_means(f: ScalarField) -> np.ndarray:
    """The k = 0 spatial mode per slice (the fibre average over T^2)."""
    return f.data.mean(axis=(0, 1))


# ----------------------------------------------------------- random fields

@dataclass(frozen=True)
class Packet:
    """One lattice-invariant wave packet along the A^T orbit of ``k``.

    Contributes sum_{n in [n_lo, n_hi]} c(t + n) exp(2 pi i k_n . (x, y)) with
    k_n = (A^T)^n k and a Gaussian envelope c in the orbit time t + n.
    """

    k: tuple[int, int]
    amp: complex
    center: float
    width: float
    n_lo: int
    n_hi: int

    def envelope(self, tau):
        return self.amp * np.exp(-0.5 * ((tau - self.center) / self.width) ** 2)


@dataclass(frozen=True)
class SmoothField:
    """Closed-form smooth field on the torus: wave packets plus a pulled-back circle part."""

    gluing: HyperbolicGluing
    packets: tuple[Packet, ...]
    circle: CircleFunction

    def __call__(self, x, y, t):
        out = np.zeros(np.broadcast(x, y, t).shape, dtype=np.complex128)
        out = out + self.circle(t)
        for p in self.packets:
            for n, (k1, k2) in mode_orbit(self.gluing, p.k, p.n_lo, p.n_hi).items():
                out = out + p.envelope(t + n) * np.exp(1j * TWO_PI * (k1 * x + k2 * y))
        return out

    def max_mode(self) -> int:
        best = 0
        for p in self.packets:
            for k in mode_orbit(self.gluing, p.k, p.n_lo, p.n_hi).values():
                best = max(best, abs(k[0]), abs(k[1]))
        return best

    def sample(self, grid: Grid) -> ScalarField:
        return from_function(grid, self)


def _orbit_range(g: HyperbolicGluing, k, max_mode: int, reach: int = 40) -> tuple[int, int] | None:
    orbit = mode_orbit(g, k, -reach, reach)
    ok = [n for n, kk in orbit.items() if max(abs(kk[0]), abs(kk[1])) <= max_mode]
    if not ok:
        return None
    n0 = min(orbit, key=lambda n: max(abs(orbit[n][0]), abs(orbit[n][1])))
    if n0 not in ok:
        return None
    lo = hi = n0
    while lo - 1 in ok:
        lo -= 1
    while hi + 1 in ok:
        hi += 1
    return lo, hi


def packet_window(g: HyperbolicGluing, k, max_mode: int, x_cap: float | None,
                  tail: float = 1e-13, width: float = 0.3, x_reach: float = 2.0):
    """Orbit range and Gaussian envelope (center, width) for base mode k, or None.

    The envelope is below ``tail`` wherever the orbit leaves |k|_inf <= max_mode,
    and sits as low in orbit time as that allows, which keeps the X-flow
    frequency lam^tau |k.(1,a)| small. With ``x_cap`` set, that frequency must
    stay below x_cap up to ``x_reach`` widths above the center (``x_reach=None``
    means out to the ``tail`` cutoff).
    """
    rng_ = _orbit_range(g, k, max_mode)
    if rng_ is None:
        return None
    n_lo, n_hi = rng_
    lo, hi = float(n_lo), float(n_hi + 1)
    z = math.sqrt(2.0 * math.log(1.0 / tail))
    center = lo + z * width
    if center + z * width > hi:
        return None
    if x_cap is not None:
        u0 = abs(k[0] + g.a * k[1])
        reach = z if x_reach is None else x_reach
        if u0 * math.exp((center + reach * width) * g.log_lam) > x_cap:
            return None
    return n_lo, n_hi, center, width


def random_smooth_field(g: HyperbolicGluing, rng: np.random.Generator, max_mode: int,
                        n_packets: int = 3, circle_modes: int = 2,
                        x_cap: float | None = 1.0, tail: float = 1e-13,
                        width: float = 0.3, circle_amp: float = 0.5,
                        x_reach: float | None = 2.0) -> SmoothField:
    """Seeded random lattice-invariant smooth field resolved by |k|_inf <= max_mode."""
    cands = []
    for k1 in range(-2, 3):
        for k2 in range(-2, 3):
            if (k1, k2) == (0, 0):
                continue
            w = packet_window(g, (k1, k2), max_mode, x_cap, tail, width, x_reach)
            if w is not None:
                cands.append(((k1, k2), w))
    packets = []
    if cands and n_packets:
        picks = rng.choice(len(cands), size=n_packets, replace=True)
        for idx in picks:
            k, (n_lo, n_hi, center, width) = cands[int(idx)]
            amp = complex(rng.normal(), rng.normal())
            packets.append(Packet(k, amp, center, width, n_lo, n_hi))
    modes = [(0, complex(rng.normal(), rng.normal()) * circle_amp)]
    for m in range(1, circle_modes + 1):
        for sgn in (1, -1):
            modes.append((sgn * m, complex(rng.normal(), rng.normal()) * circle_amp / m))
    return SmoothField(g, tuple(packets), CircleFunction(modes=tuple(modes)))


def default_max_mode(N: int) -> int:
    """Largest |k|_inf kept clear of 2/3-rule truncation."""
    return max(1, int(math.ceil(N / 3.0)) - 1)


def random_field(grid: Grid, rng: np.random.Generator, **kw) -> ScalarField:
    kw.setdefault("max_mode", default_max_mode(grid.N))
    return random_smooth_field(grid.gluing, rng, **kw).sample(grid)


def random_circle(rng: np.random.Generator, n_modes: int = 3) -> CircleFunction:
    modes = [(0, complex(rng.normal(), rng.normal()))]
    for m in range(1, n_modes + 1):
        for sgn in (1, -1):
            modes.append((sgn * m, complex(rng.normal(), rng.normal()) / m))
    return CircleFunction(modes=tuple(modes))
