"""Arithmetic of the hyperbolic monodromy A in SL(2, Z).

The hyperbolic torus is the quotient of R^2 x R by (v, t) ~ (m + A^n v, t + n).
Everything downstream needs the eigen-data of A (lambda, the slopes a, b of the
expanding and contracting eigenvectors) and the integer action of A^{-1} on the
grid (Z/N)^2, which makes the seam identification f(w, 1) = f(A^{-1} w, 0) exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GluingError(ValueError):
    """Raised when a matrix violates the hypotheses (det 1, trace > 2)."""


def _is_perfect_square(n: int) -> bool:
    if n < 0:
        return False
    r = math.isqrt(n)
    return r * r == n


@dataclass(frozen=True)
class HyperbolicGluing:
    """Validated eigen-data of a hyperbolic A with trace >= 3.

    ``lam`` is the expanding eigenvalue, ``a`` and ``b`` the slopes of the
    eigenvectors (1, a) for lam and (1, b) for 1/lam.
    """

    A: tuple[tuple[int, int], tuple[int, int]]
    lam: float
    a: float
    b: float
    log_lam: float = field(repr=False)

    @property
    def trace(self) -> int:
        return self.A[0][0] + self.A[1][1]

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.A, dtype=np.int64)

    @property
    def inverse(self) -> np.ndarray:
        (p, q), (r, s) = self.A
        return np.array([[s, -q], [-r, p]], dtype=np.int64)

    @property
    def entries(self) -> tuple[int, int, int, int]:
        return (self.A[0][0], self.A[0][1], self.A[1][0], self.A[1][1])

    @property
    def volume_factor(self) -> float:
        """alpha^beta^theta = volume_factor * dx^dy^dt."""
        return self.log_lam / (self.a - self.b)


def build_gluing(A) -> HyperbolicGluing:
    """Validate an integer 2x2 matrix and return its eigen-data.

    Raises GluingError unless det(A) == 1 and trace(A) > 2.
    """
    arr = np.asarray(A)
    if arr.shape != (2, 2):
        raise GluingError(f"expected a 2x2 matrix, got shape {arr.shape}")
    entries = []
    for v in arr.ravel().tolist():
        if isinstance(v, float):
            if not v.is_integer():
                raise GluingError(f"matrix entry {v!r} is not an integer")
            v = int(v)
        if not isinstance(v, (int, np.integer)):
            raise GluingError(f"matrix entry {v!r} is not an integer")
        entries.append(int(v))
    p, q, r, s = entries
    det = p * s - q * r
    tr = p + s
    if det != 1:
        raise GluingError(f"det(A) = {det}, expected 1")
    if tr <= 2:
        raise GluingError(f"trace(A) = {tr} <= 2; A is not hyperbolic with positive eigenvalues")
    disc = tr * tr - 4
    # Never fires for tr >= 3; kept so the irrationality of lam is checked, not assumed.
    if _is_perfect_square(disc):
        raise GluingError(f"trace^2 - 4 = {disc} is a perfect square; eigenvalues are rational")
    # q != 0 is forced by det 1 and tr > 2.
    root = math.sqrt(disc)
    lam = (tr + root) / 2.0
    # (tr - root) / 2 written without cancellation.
    lam_inv = 2.0 / (tr + root)
    a = (lam - p) / q
    b = (lam_inv - p) / q
    g = HyperbolicGluing(A=((p, q), (r, s)), lam=lam, a=a, b=b, log_lam=math.log(lam))
    _check_eigen(g, lam_inv)
    return g


def _check_eigen(g: HyperbolicGluing, lam_inv: float) -> None:
    (p, q), (r, s) = g.A
    if abs(g.lam * lam_inv - 1.0) > 1e-14:
        raise GluingError("lam * lam^-1 does not reconstruct 1")
    if abs(g.lam + lam_inv - g.trace) > 1e-12 * max(1, g.trace):
        raise GluingError("lam + 1/lam does not reconstruct the trace")
    for slope, ev in ((g.a, g.lam), (g.b, lam_inv)):
        res0 = p + q * slope - ev
        res1 = r + s * slope - ev * slope
        scale = max(1.0, abs(ev) * max(1.0, abs(slope)))
        if abs(res0) > 1e-12 * scale or abs(res1) > 1e-12 * scale:
            raise GluingError("eigenvector equation residual too large")
    if g.a == g.b:
        raise GluingError("degenerate eigenvector slopes")


def parse_matrix(text: str) -> HyperbolicGluing:
    """Parse the CLI form ``"2,1,1,1"`` (row-major)."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise GluingError(f"expected four comma-separated integers, got {text!r}")
    try:
        vals = [int(p) for p in parts]
    except ValueError as exc:
        raise GluingError(f"non-integer matrix entry in {text!r}") from exc
    return build_gluing([vals[:2], vals[2:]])


def lambda_pow(g: HyperbolicGluing, t):
    """lam**t evaluated as exp(t log lam); accepts scalars or arrays."""
    return np.exp(np.multiply(t, g.log_lam))


def grid_permutation(g: HyperbolicGluing, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (I, J) with (I[i, j], J[i, j]) = A^{-1} (i, j) mod N.

    Gathering ``slice0[I, J]`` gives the samples of the t = 1 slice.
    """
    if N < 1:
        raise ValueError("N must be positive")
    return _apply_int_matrix(g.inverse, N)


def forward_permutation(g: HyperbolicGluing, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays for (i, j) -> A (i, j) mod N, the inverse of grid_permutation."""
    if N < 1:
        raise ValueError("N must be positive")
    return _apply_int_matrix(g.matrix, N)


def _apply_int_matrix(M: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.meshgrid(np.arange(N, dtype=np.int64), np.arange(N, dtype=np.int64), indexing="ij")
    I = (M[0, 0] * i + M[0, 1] * j) % N
    J = (M[1, 0] * i + M[1, 1] * j) % N
    return I, J


def mode_orbit(g: HyperbolicGluing, k, n_lo: int, n_hi: int) -> dict[int, tuple[int, int]]:
    """Integer modes (A^T)^n k for n in [n_lo, n_hi].

    A function sum_n c(t + n) exp(2 pi i (A^T)^n k . v) is invariant under the
    lattice, so orbits of A^T organise the spectrum of smooth fields.
    """
    At = g.matrix.T
    Ait = g.inverse.T
    k0 = np.array(k, dtype=np.int64)
    out = {0: (int(k0[0]), int(k0[1]))}
    cur = k0.copy()
    for n in range(1, n_hi + 1):
        cur = At @ cur
        out[n] = (int(cur[0]), int(cur[1]))
    cur = k0.copy()
    for n in range(-1, n_lo - 1, -1):
        cur = Ait @ cur
        out[n] = (int(cur[0]), int(cur[1]))
    return {n: out[n] for n in sorted(out) if n_lo <= n <= n_hi}
