"""Cohomology of the co-invariant complex: generators, exactness probes, vanishing checks.

Everything in degrees 1 and 2 here is evidence-grade: an OBSTRUCTED verdict or a
full Gram rank is consistent with the non-vanishing theorems but proves nothing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import _fft
from . import field as F
from .averaging import QuadratureSpec, quadrature_moments
from .field import CircleFunction, Grid, ScalarField
from .forms import (MONOMIALS, _INDEX, FrameForm, d_matrix, exterior_d, flow_substitution,
                    form_norm, function_form, gamma_pullback, lie_derivative, make_form,
                    nilpotency_terms, perm_sign)
from .gluing import HyperbolicGluing
from .orbits import phase_sums
from .reduce import pairwise_sum

EXACT_LIKE = "EXACT-LIKE"
OBSTRUCTED = "OBSTRUCTED"
INCONCLUSIVE = "INCONCLUSIVE"
EVIDENCE = "evidence-grade"


class CertificateError(AssertionError):
    pass


class H3Error(ArithmeticError):
    pass


# ------------------------------------------------------------- generators

@dataclass
class GeneratorCertificate:
    degree: int
    closed_defect: float
    coinvariant_defect: float
    closed_tol: float
    coinvariant_tol: float

    @property
    def passed(self) -> bool:
        return self.closed_defect <= self.closed_tol and self.coinvariant_defect <= self.coinvariant_tol

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _rel(x: float, ref: float) -> float:
    return x / ref if ref > 0 else x


def _generator(grid: Grid, phi: CircleFunction, degree: int):
    psi = F.pullback_circle(grid, phi)
    if degree == 1:
        eta = make_form(grid, 1, {"theta": psi})
        pre = make_form(grid, 1, {"alpha": psi})
    else:
        # theta ^ beta = -beta ^ theta
        eta = make_form(grid, 2, {"theta^beta": psi})
        pre = make_form(grid, 2, {"alpha^beta": psi})
    return eta, pre


def certify_generator(grid: Grid, phi: CircleFunction, degree: int,
                      closed_tol: float = 1e-8, coinvariant_tol: float = 1e-10):
    """The generator and its two certificates: ||d eta|| and ||eta - (w - gamma^* w)||.

    Both defects are relative to ||eta|| (absolute when eta = 0). The witness w
    is p*(phi) alpha in degree 1 and p*(phi) alpha^beta in degree 2.
    """
    if degree not in (1, 2):
        raise ValueError("generators live in degree 1 or 2")
    eta, pre = _generator(grid, phi, degree)
    n = form_norm(eta)
    closed = _rel(form_norm(exterior_d(eta)), n)
    co = _rel(form_norm(eta - (pre - gamma_pullback(pre))), n)
    return eta, GeneratorCertificate(degree, closed, co, closed_tol, coinvariant_tol)


def _checked(grid, phi, degree, **tol):
    eta, cert = certify_generator(grid, phi, degree, **tol)
    if not cert.passed:
        raise CertificateError(f"degree-{degree} generator failed its certificates: {cert.to_dict()}")
    return eta


def generator_h1(grid: Grid, phi: CircleFunction, **tol) -> FrameForm:
    """p*(phi) theta, certified closed and equal to psi alpha - gamma^*(psi alpha)."""
    return _checked(grid, phi, 1, **tol)


def generator_h2(grid: Grid, phi: CircleFunction, **tol) -> FrameForm:
    """p*(phi) theta^beta, certified closed and equal to psi alpha^beta - gamma^*(psi alpha^beta)."""
    return _checked(grid, phi, 2, **tol)


# ------------------------------------------- the coboundary operator, raw

def _stack(w: FrameForm) -> np.ndarray:
    return np.stack([c.data for c in w.coeffs])


def _unstack(grid: Grid, degree: int, U: np.ndarray) -> FrameForm:
    return FrameForm(grid, degree, [ScalarField(grid, u) for u in U])


def _d_terms(p: int):
    """(c, v, k, sign): coefficient c hit by E_v lands on monomial k of degree p+1."""
    out = []
    for c, I in enumerate(MONOMIALS[p]):
        for v in range(3):
            s = perm_sign((v,) + I)
            if s:
                out.append((c, v, _INDEX[p + 1][tuple(sorted((v,) + I))], s))
    return out


def _derivs(grid: Grid, u: np.ndarray):
    Fu = _fft.fft2(u)
    return (_fft.ifft2(Fu * (1j * grid._deriv_x)),
            _fft.ifft2(Fu * (1j * grid._deriv_y)),
            F.dt_fd(grid, u) * (-1.0 / grid.gluing.log_lam))


def d_raw(grid: Grid, p: int, U: np.ndarray) -> np.ndarray:
    """exterior_d on stacked coefficient arrays."""
    out = np.zeros((len(MONOMIALS[p + 1]),) + grid.shape, dtype=np.complex128)
    D = d_matrix(p)
    ders = [_derivs(grid, u) for u in U]
    for c, v, k, s in _d_terms(p):
        out[k] += s * ders[c][v]
    for k, c in zip(*np.nonzero(D)):
        out[k] += D[k, c] * U[c]
    return out


def d_adjoint_raw(grid: Grid, p: int, V: np.ndarray) -> np.ndarray:
    """Adjoint of d_raw for the grid inner product.

    X and Y are anti-Hermitian spectral multipliers; Z is an antisymmetric
    stencil composed with a permutation of slices, so also anti-Hermitian.
    """
    out = np.zeros((len(MONOMIALS[p]),) + grid.shape, dtype=np.complex128)
    D = d_matrix(p)
    ders = [_derivs(grid, v) for v in V]
    for c, v, k, s in _d_terms(p):
        out[c] -= s * ders[k][v]
    for k, c in zip(*np.nonzero(D)):
        out[c] += D[k, c] * V[k]
    return out


def gamma_raw(grid: Grid, p: int, U: np.ndarray, s: float = 1.0) -> np.ndarray:
    T = flow_substitution(0, p, s)
    ph = F._phase(grid.freq_x, s)
    pulled = [_fft.ifft2(_fft.fft2(u) * ph) for u in U]
    out = np.zeros_like(U)
    for r, c in zip(*np.nonzero(T)):
        out[r] += T[r, c] * pulled[c]
    return out


def gamma_adjoint_raw(grid: Grid, p: int, U: np.ndarray, s: float = 1.0) -> np.ndarray:
    T = flow_substitution(0, p, s)
    ph = F._phase(grid.freq_x, -s)
    out = np.zeros_like(U)
    for r, c in zip(*np.nonzero(T)):
        out[c] += T[r, c] * U[r]
    return np.stack([_fft.ifft2(_fft.fft2(u) * ph) for u in out])


def coboundary_raw(grid: Grid, p: int, U: np.ndarray) -> np.ndarray:
    return d_raw(grid, p, U - gamma_raw(grid, p, U))


def coboundary_adjoint_raw(grid: Grid, p: int, V: np.ndarray) -> np.ndarray:
    W = d_adjoint_raw(grid, p, V)
    return W - gamma_adjoint_raw(grid, p, W)


def coboundary_T(w: FrameForm) -> FrameForm:
    """d(w - gamma^* w): the co-invariant coboundary of w."""
    return exterior_d(w - gamma_pullback(w))


def vdot(u: np.ndarray, v: np.ndarray) -> complex:
    """<u, v> = mean(conj(u) v), reduced by the fixed pairwise tree."""
    return complex(pairwise_sum(np.conj(u) * v) / u[0].size)


def vnorm(u: np.ndarray) -> float:
    return math.sqrt(max(vdot(u, u).real, 0.0))


class Coboundary:
    """T = d (I - gamma^*) on degree-p forms, right-preconditioned as T P.

    Per mode and slice, gamma^* acts on the coefficient vector as z (I + M) with
    z = exp(2 pi i freq) and M the nilpotent Lie matrix of X, so
    (I - gamma^*)^{-1} = (1/(1-z)) (I + z M / (1-z)). P applies that inverse, with
    1/(1-z) regularized by ``eps``, times 1/sqrt(|X|^2 + |Y|^2 + zeta^2), zeta the
    Z-symbol of the lowest t-harmonic. Then T P is d composed with a diagonal
    scaling. P vanishes on the k = 0 mode, where no degree-0, 1 or 2 form has a
    nonzero coboundary.
    """

    def __init__(self, grid: Grid, p: int, precondition: bool = True, eps: float = 1e-6,
                 gauge: float | None = None, resonance_tol: float = 1e-9):
        self.grid = grid
        self.p = p
        self.n = len(MONOMIALS[p])
        self.shape = (self.n,) + grid.shape
        self.n_out = len(MONOMIALS[p + 1])
        self.gauge = gauge if (gauge and p >= 1) else None
        self.n_gauge = len(MONOMIALS[p - 1]) if self.gauge else 0
        self.out_shape = (self.n_out + self.n_gauge,) + grid.shape
        self.precondition = precondition
        terms = nilpotency_terms(0, p)
        self.M = terms[1] if len(terms) > 1 else np.zeros((self.n, self.n))
        z = F._phase(grid.freq_x, 1.0)
        self.sx = 1j * grid._deriv_x
        self.sy = 1j * grid._deriv_y
        if precondition:
            one_minus = 1.0 - z
            inv = np.conj(one_minus) / (np.abs(one_minus) ** 2 + eps * eps)
            rho = one_minus * inv
            # P = (p0 I + p1 M) diag(S) ;  (I - gamma^*) P = (w0 I + w1 M) diag(S)
            self.p0 = inv
            self.p1 = z * inv * inv
            self.w0 = rho
            self.w1 = z * inv * (rho - 1.0)
            # exact grid resonances (z = 1 at k != 0, e.g. modes (k1, 0) on slice t = 0):
            # there I - gamma^* = -z M, so keep P = I rather than dropping the mode
            res = np.abs(one_minus) < resonance_tol
            res[0, 0, :] = False
            self.p0 = np.where(res, 1.0, self.p0)
            self.p1 = np.where(res, 0.0, self.p1)
            self.w0 = np.where(res, one_minus, self.w0)
            self.w1 = np.where(res, -z, self.w1)
            self.resonant = int(res.sum())
            self.S = self._scales(grid, p)
        else:
            self.p0 = np.ones(grid.shape)
            self.p1 = np.zeros(grid.shape)
            self.w0 = 1.0 - z
            self.w1 = -z
            self.S = [np.ones(grid.shape)] * self.n
            self.resonant = 0
        self.terms = _d_terms(p)
        self.D = d_matrix(p)
        self._norm = None

    @staticmethod
    def _scales(grid: Grid, p: int):
        """1/sqrt(sum |symbol|^2) over the frame vectors that d applies to each monomial."""
        zeta = 2.0 * math.pi / grid.gluing.log_lam
        sq = (grid._deriv_x ** 2, grid._deriv_y ** 2, np.full(grid.shape, zeta ** 2))
        out = []
        for I in MONOMIALS[p]:
            tot = sum(sq[v] for v in range(3) if v not in I)
            S = 1.0 / np.sqrt(tot + 1.0)
            S[0, 0, :] = 0.0
            out.append(S)
        return out

    def _mix(self, Yh, a0, a1, adjoint=False):
        S = self.S
        if not adjoint:
            out = [a0 * S[r] * Yh[r] for r in range(self.n)]
            for r, c in zip(*np.nonzero(self.M)):
                out[r] = out[r] + (a1 * S[c] * self.M[r, c]) * Yh[c]
            return out
        out = [np.conj(a0 * S[c]) * Yh[c] for c in range(self.n)]
        for r, c in zip(*np.nonzero(self.M)):
            out[c] = out[c] + np.conj(a1 * S[c] * self.M[r, c]) * Yh[r]
        return out

    def P(self, Y: np.ndarray) -> np.ndarray:
        Yh = [_fft.fft2(y) for y in Y]
        return np.stack([_fft.ifft2(u) for u in self._mix(Yh, self.p0, self.p1)])

    def augment(self, b: np.ndarray) -> np.ndarray:
        """Right-hand side padded with zeros for the gauge rows."""
        if not self.n_gauge:
            return b
        return np.concatenate([b, np.zeros((self.n_gauge,) + self.grid.shape, dtype=b.dtype)])

    def matvec(self, Y: np.ndarray) -> np.ndarray:
        g = self.grid
        Kh = self._mix([_fft.fft2(y) for y in Y], self.w0, self.w1)
        out = np.zeros(self.out_shape, dtype=np.complex128)
        phys = {}
        for c, v, k, s in self.terms:
            if v == 0:
                term = _fft.ifft2(Kh[c] * self.sx)
            elif v == 1:
                term = _fft.ifft2(Kh[c] * self.sy)
            else:
                if c not in phys:
                    phys[c] = _fft.ifft2(Kh[c])
                term = F.dt_fd(g, phys[c]) * (-1.0 / g.gluing.log_lam)
            out[k] += s * term
        for k, c in zip(*np.nonzero(self.D)):
            if c not in phys:
                phys[c] = _fft.ifft2(Kh[c])
            out[k] += self.D[k, c] * phys[c]
        if self.n_gauge:
            K = np.stack([phys[c] if c in phys else _fft.ifft2(Kh[c]) for c in range(self.n)])
            out[self.n_out:] = self.gauge * d_adjoint_raw(g, self.p - 1, K)
        return out

    def rmatvec(self, V: np.ndarray) -> np.ndarray:
        g = self.grid
        Vh = {}
        Zh = {}

        def vh(k):
            if k not in Vh:
                Vh[k] = _fft.fft2(V[k])
            return Vh[k]

        acc = [np.zeros(g.shape, dtype=np.complex128) for _ in range(self.n)]
        for c, v, k, s in self.terms:
            # X and Y are anti-Hermitian multipliers, Z an anti-Hermitian stencil
            if v == 0:
                acc[c] -= s * self.sx * vh(k)
            elif v == 1:
                acc[c] -= s * self.sy * vh(k)
            else:
                if k not in Zh:
                    Zh[k] = _fft.fft2(F.dt_fd(g, V[k]) * (-1.0 / g.gluing.log_lam))
                acc[c] -= s * Zh[k]
        for k, c in zip(*np.nonzero(self.D)):
            acc[c] += self.D[k, c] * vh(k)
        if self.n_gauge:
            G = d_raw(g, self.p - 1, V[self.n_out:])
            for c in range(self.n):
                acc[c] += self.gauge * _fft.fft2(G[c])
        return np.stack([_fft.ifft2(u) for u in self._mix(acc, self.w0, self.w1, adjoint=True)])

    def norm(self, iters: int = 6, seed: int = 0) -> float:
        """Power-iteration estimate of ||T P||, enough for the stationarity test."""
        if self._norm is None:
            rng = np.random.default_rng(seed)
            x = rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)
            x /= vnorm(x)
            est = 0.0
            for _ in range(iters):
                y = self.rmatvec(self.matvec(x))
                est = vnorm(y)
                if est == 0:
                    break
                x = y / est
            self._norm = math.sqrt(est)
        return self._norm


# ---------------------------------------------------------------- probes

@dataclass(frozen=True)
class ProbeThresholds:
    exact: float = 1e-6
    plateau: float = 0.1
    ratio: float = 0.9


@dataclass(frozen=True)
class ProbeBudget:
    max_iter: int = 400
    stationary_rtol: float = 1e-10


@dataclass
class ProbeLevel:
    N: int
    Nt: int
    residual: float
    iterations: int
    stop: str
    target_norm: float


@dataclass
class ProbeReport:
    target_norm: float
    levels: list[ProbeLevel]
    iterations: int
    stopping_reason: str
    verdict: str
    thresholds: ProbeThresholds
    grade: str = EVIDENCE

    @property
    def residuals(self) -> list[float]:
        return [lv.residual for lv in self.levels]

    def to_dict(self):
        return {
            "target_norm": self.target_norm,
            "levels": [asdict(lv) for lv in self.levels],
            "iterations": self.iterations,
            "stopping_reason": self.stopping_reason,
            "verdict": self.verdict,
            "thresholds": asdict(self.thresholds),
            "grade": self.grade,
        }

    def csv_rows(self):
        return [(i, lv.N, lv.residual) for i, lv in enumerate(self.levels)]


@dataclass
class LstsqResult:
    x: np.ndarray
    r: np.ndarray
    residual: float
    iterations: int
    stop: str


def cgls(op: Coboundary, b: np.ndarray, budget: ProbeBudget = ProbeBudget(),
         rtol: float = 1e-6) -> LstsqResult:
    """Conjugate gradients on the normal equations of (T P) y = b; returns x = P y.

    Stops on relative residual ||T x - b|| <= rtol ||b|| ("converged"), on a
    vanishing normal-equation residual ||(TP)^H r|| <= stationary_rtol ||TP|| ||r||
    ("stationary"), or on the iteration budget ("budget"). Gauge rows, when the
    operator has them, take part in the minimization but not in ``residual``.
    """
    bn = vnorm(b)
    y = np.zeros(op.shape, dtype=np.complex128)
    if bn == 0:
        return LstsqResult(y, b.copy(), 0.0, 0, "converged")
    tnorm = op.norm()
    nb = b.shape[0]
    r = op.augment(b).copy()
    s = op.rmatvec(r)
    d = s.copy()
    gam = vdot(s, s).real
    stop = "budget"
    it = 0
    while True:
        if vnorm(r[:nb]) <= rtol * bn:
            stop = "converged"
            break
        if math.sqrt(gam) <= budget.stationary_rtol * tnorm * vnorm(r):
            stop = "stationary"
            break
        if it >= budget.max_iter:
            break
        q = op.matvec(d)
        qq = vdot(q, q).real
        if qq == 0:
            stop = "stationary"
            break
        a = gam / qq
        y += a * d
        r -= a * q
        s = op.rmatvec(r)
        gnew = vdot(s, s).real
        d = s + (gnew / gam) * d
        gam = gnew
        it += 1
    return LstsqResult(op.P(y), r[:nb], vnorm(r[:nb]) / bn, it, stop)


def probe_verdict(levels: Sequence[ProbeLevel], th: ProbeThresholds) -> tuple[str, str]:
    """(verdict, stopping reason of the finest level)."""
    if not levels:
        return INCONCLUSIVE, "empty"
    res = [lv.residual for lv in levels]
    finest = levels[-1]
    if finest.residual <= th.exact:
        return EXACT_LIKE, finest.stop
    if any(lv.stop == "budget" for lv in levels):
        return INCONCLUSIVE, finest.stop
    plateau = all(r >= th.plateau for r in res)
    steady = all(res[i] > 0 and res[i + 1] / res[i] >= th.ratio for i in range(len(res) - 1))
    if plateau and steady:
        return OBSTRUCTED, finest.stop
    return INCONCLUSIVE, finest.stop


DEFAULT_LEVELS = (16, 32, 64)


def exactness_probe(target, levels: Sequence[int] = DEFAULT_LEVELS, *, gluing: HyperbolicGluing | None = None,
                    fd_order: int = 8, budget: ProbeBudget = ProbeBudget(),
                    thresholds: ProbeThresholds = ProbeThresholds(),
                    precondition: bool = True) -> ProbeReport:
    """Least-squares search for w with d(w - gamma^* w) = eta, at each refinement level.

    ``target`` is a FrameForm (probed on its own grid only) or a callable
    grid -> FrameForm, evaluated on N x N x N grids for N in ``levels``.
    """
    if isinstance(target, FrameForm):
        builds = [(target.grid, lambda grid, t=target: t)]
    else:
        if gluing is None:
            raise ValueError("a target builder needs the gluing")
        if list(levels) != sorted(set(levels)):
            raise ValueError("levels must be strictly increasing")
        builds = [(F.make_grid(gluing, N, N, fd_order), target) for N in levels]
    out = []
    total = 0
    for grid, build in builds:
        eta = build(grid)
        if eta.degree not in (1, 2, 3):
            raise ValueError("exactness probes take forms of degree 1 to 3")
        b = _stack(eta)
        res = cgls(Coboundary(grid, eta.degree - 1, precondition), b, budget, rtol=thresholds.exact)
        out.append(ProbeLevel(grid.N, grid.Nt, res.residual, res.iterations, res.stop, vnorm(b)))
        total += res.iterations
    verdict, reason = probe_verdict(out, thresholds)
    return ProbeReport(out[-1].target_norm, out, total, reason, verdict, thresholds)


def h1_target(phi: CircleFunction):
    return lambda grid: generator_h1(grid, phi)


def h2_target(phi: CircleFunction):
    return lambda grid: generator_h2(grid, phi)


def exact_control_target(source: Sequence[F.SmoothField], degree: int):
    """Builder for eta = T(w0): w0 of the given degree with closed-form coefficients."""
    if len(source) != len(MONOMIALS[degree]):
        raise ValueError("one smooth field per monomial")

    def build(grid):
        w0 = FrameForm(grid, degree, [sf.sample(grid) for sf in source])
        return coboundary_T(w0)
    return build


def random_control_source(g: HyperbolicGluing, rng: np.random.Generator, degree: int,
                          max_mode: int = 5):
    """Smooth coefficient fields resolvable on every probe level (N >= 16)."""
    return [F.random_smooth_field(g, rng, max_mode, width=0.25) for _ in MONOMIALS[degree]]


# ------------------------------------------------- independence evidence

@dataclass
class IndependenceReport:
    degree: int
    labels: list[str]
    gram: list[list[float]]
    eigenvalues: list[float]
    rank: int
    threshold: float
    deflated_fraction: list[float]
    grade: str = EVIDENCE

    def to_dict(self):
        return asdict(self)


def default_family(m: int) -> list[tuple[str, CircleFunction]]:
    out = []
    for k in range(1, m + 1):
        out.append((f"cos:{k}", CircleFunction.cos(k)))
        out.append((f"sin:{k}", CircleFunction.sin(k)))
    return out


def independence_report(m: int, degree: int, grid: Grid | None = None, *, gluing=None,
                        N: int = 32, family=None, budget: ProbeBudget = ProbeBudget(),
                        threshold: float = 1e-6) -> IndependenceReport:
    """Gram rank of generators after removing what the coboundary image can explain.

    Each generator is deflated by its own least-squares probe: the final CGLS
    residual is the generator minus its projection onto T applied to the Krylov
    space the probe built. The Gram matrix of normalized residuals is real
    symmetric; its rank counts eigenvalues above ``threshold``.
    """
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    if family is None:
        family = default_family(m)
    if grid is None:
        if gluing is None:
            raise ValueError("need a grid or a gluing")
        grid = F.make_grid(gluing, N, N)
    if not family:
        return IndependenceReport(degree, [], [], [], 0, threshold, [])
    op = Coboundary(grid, degree - 1)
    vecs, fracs = [], []
    for _, phi in family:
        eta = generator_h1(grid, phi) if degree == 1 else generator_h2(grid, phi)
        b = _stack(eta)
        res = cgls(op, b, budget, rtol=0.0)
        bn = vnorm(b)
        vecs.append(res.r / bn if bn > 0 else res.r)
        fracs.append(res.residual)
    n = len(vecs)
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = vdot(vecs[i], vecs[j]).real
    ev = np.linalg.eigvalsh(G)[::-1]
    rank = int(np.sum(ev > threshold))
    return IndependenceReport(degree, [lab for lab, _ in family], G.tolist(), ev.tolist(), rank,
                              threshold, fracs)


# ------------------------------------------------------------------ H^0

@dataclass
class H0Report:
    integral: float
    integral_rel: float
    df_norm: float
    f_norm: float
    g_norm: float
    locally_constant: bool
    vanishes: bool

    def to_dict(self):
        return asdict(self)


def h0_vanishing_check(g: ScalarField, const_tol: float = 1e-8) -> H0Report:
    """f = g - gamma^* g integrates to zero; if f is also locally constant it is zero."""
    if g.slab:
        raise F.SlabFieldError("H^0 check needs a quotient field")
    f = g - F.pullback_flow_X(g, 1.0)
    I = abs(F.integrate(f))
    gn = F.l2_norm(g)
    fn = F.l2_norm(f)
    dfn = form_norm(exterior_d(function_form(f)))
    loc = dfn <= const_tol * max(gn, 1e-300) or fn == 0
    return H0Report(I, _rel(I, gn), dfn, fn, gn, loc, loc and fn <= const_tol * max(gn, 1e-300) + 1e-300)


# ------------------------------------------------------------------ H^3

@dataclass
class SmallDenominatorStats:
    K: int
    min_abs: float
    worst_mode: tuple[int, int]
    histogram: dict[int, int]
    min_max_symbol: float

    def to_dict(self):
        d = asdict(self)
        d["worst_mode"] = list(self.worst_mode)
        d["histogram"] = {str(k): v for k, v in sorted(self.histogram.items())}
        return d


def small_denominator_stats(g: HyperbolicGluing, K: int) -> SmallDenominatorStats:
    """Statistics of |k1 + a k2| over 0 < |k|_inf <= K.

    Also reports min over modes of max(|k1 + a k2|, |k1 + b k2|), which stays
    bounded below: the two differ by (a - b) k2 with |a - b| >= sqrt(5).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    k = np.arange(-K, K + 1)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    mask = (k1 != 0) | (k2 != 0)
    va = np.abs(k1 + g.a * k2)[mask]
    vb = np.abs(k1 + g.b * k2)[mask]
    i = int(np.argmin(va))
    if not va[i] > 0:
        raise H3Error("vanishing small denominator: the eigen-slope is not irrational in floating point")
    hist: dict[int, int] = {}
    for e in np.floor(np.log10(va)).astype(int):
        hist[int(e)] = hist.get(int(e), 0) + 1
    worst = (int(k1[mask][i]), int(k2[mask][i]))
    return SmallDenominatorStats(K, float(va[i]), worst, hist, float(np.min(np.maximum(va, vb))))


@dataclass
class H3Report:
    c: complex
    residual: float
    split: str
    x_modes: int
    y_modes: int
    flagged_modes: int
    unresolved_modes: int
    stats: SmallDenominatorStats

    def to_dict(self):
        d = asdict(self)
        d["c"] = [self.c.real, self.c.imag]
        d["stats"] = self.stats.to_dict()
        return d


def _t_antiderivative(r0: np.ndarray) -> np.ndarray:
    """Spectral int_0^t r0 for a periodic zero-mean sample sequence r0 on [0, 1)."""
    Nt = r0.size
    R = np.fft.fft(r0)
    n = np.fft.fftfreq(Nt) * Nt
    out = np.zeros_like(R)
    nz = n != 0
    if Nt % 2 == 0:
        nz &= np.abs(n) != Nt // 2
    out[nz] = R[nz] / (2j * math.pi * n[nz])
    prim = np.fft.ifft(out)
    return prim - prim[0]


def circle_primitive(phi: CircleFunction, t, log_lam: float) -> np.ndarray:
    """Closed-form alpha^beta coefficient of the primitive for p*(phi): w(0) = 0, Z w = phi - mean."""
    if phi.samples is not None:
        raise ValueError("needs a mode-list circle function")
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=np.complex128)
    for m, c in phi.modes:
        if m:
            out = out + c * (np.exp(2j * math.pi * m * t) - 1.0) / (2j * math.pi * m)
    return -log_lam * out


def h3_primitive(f: ScalarField, split: str = "max", floor: float = 1e-8):
    """(c, w, report) with d w = (f - c) vol, w = u beta^theta + v theta^alpha + w_0 alpha^beta.

    Per slice and mode k != 0 the equation X u + Y v = f_k is solved with one
    symbol: the larger of the X- and Y-symbol (``split="max"``), or the
    minimum-norm blend of both (``split="blend"``). Symbols below ``floor`` are
    flagged; a mode with both below the floor and nonzero content aborts. The
    k = 0 mode solves Z w_0 = mean part by a t-antiderivative fixed by w_0(0) = 0.
    """
    if f.slab:
        raise F.SlabFieldError("the H^3 primitive needs a quotient field")
    if split not in ("max", "blend"):
        raise ValueError("split must be 'max' or 'blend'")
    grid = f.grid
    g = grid.gluing
    c = F.integrate(f) / g.volume_factor
    r = f.data - c
    R = _fft.fft2(r)
    sx = 1j * grid._deriv_x
    sy = 1j * grid._deriv_y
    ax, ay = np.abs(sx), np.abs(sy)
    k0 = np.zeros(grid.shape, dtype=bool)
    k0[0, 0, :] = True
    dead = (ax < floor) & (ay < floor) & ~k0
    flagged = ((ax < floor) | (ay < floor)) & ~dead & ~k0
    scale = float(np.max(np.abs(R))) if R.size else 0.0
    if np.any(np.abs(R[dead]) > 1e-12 * max(scale, 1e-300)):
        raise H3Error("a mode has content but both frame symbols are below the floor")
    U = np.zeros_like(R)
    V = np.zeros_like(R)
    live = ~dead & ~k0
    if split == "max":
        use_x = live & (ax >= ay)
        use_y = live & ~use_x
        U[use_x] = R[use_x] / sx[use_x]
        V[use_y] = R[use_y] / sy[use_y]
        nx, ny = int(use_x.sum()), int(use_y.sum())
    else:
        den = ax ** 2 + ay ** 2
        U[live] = np.conj(sx[live]) * R[live] / den[live]
        V[live] = np.conj(sy[live]) * R[live] / den[live]
        nx = ny = int(live.sum())
    u = _fft.ifft2(U)
    v = _fft.ifft2(V)
    # Z w0 = mean part:  -(1/log lam) dw0/dt = r0
    r0 = R[0, 0, :] / (grid.N * grid.N)
    w0 = -g.log_lam * _t_antiderivative(r0)
    w = np.broadcast_to(w0[None, None, :], grid.shape)
    omega = make_form(grid, 2, {
        "beta^theta": ScalarField(grid, u, seam_defect=f.seam_defect),
        "theta^alpha": ScalarField(grid, v, seam_defect=f.seam_defect),
        "alpha^beta": ScalarField(grid, np.array(w), seam_defect=f.seam_defect),
    })
    rhs = ScalarField(grid, r, seam_defect=f.seam_defect)
    resid = exterior_d(omega) - make_form(grid, 3, {"alpha^beta^theta": rhs})
    rn = F.l2_norm(rhs)
    report = H3Report(complex(c), _rel(form_norm(resid), rn), split, nx, ny,
                      int(flagged.sum()), int(dead.sum()),
                      small_denominator_stats(g, max(1, grid.N // 2)))
    return complex(c), omega, report


# ------------------------------------------------- injectivity checks

@dataclass
class IsoReport:
    status: str
    gamma_defect: float
    gamma_defect_rel: float
    lie_rel: float | None
    tol: float

    def to_dict(self):
        return asdict(self)


def iso_injectivity_check(w: FrameForm, pre_tol: float = 1e-6, tol: float = 1e-6) -> IsoReport:
    """If gamma^* w = w then L_X w = 0: PASS when ||L_X w|| <= tol ||w||.

    A form failing the precondition is reported NOT-INVARIANT with its gamma-defect
    ||gamma^* w - w|| (absolute and relative to ||w||).
    """
    n = form_norm(w)
    gd = form_norm(gamma_pullback(w) - w)
    gdr = _rel(gd, n)
    if gdr > pre_tol:
        return IsoReport("NOT-INVARIANT", gd, gdr, None, tol)
    lie = _rel(form_norm(lie_derivative("X", w)), n)
    return IsoReport("PASS" if lie <= tol else "FAIL", gd, gdr, lie, tol)


def birkhoff_project_form(w: FrameForm, n: int) -> FrameForm:
    """(1/n) sum_{j<n} (gamma^j)^* w in closed form.

    (gamma^j)^* substitutes monomials by T_0 + j T_1 and shifts coefficients by j,
    so each mode needs the two phase sums (1/n) sum z^j and (1/n) sum j z^j.
    The second grows like n/2 on the k = 0 mode, so forms with an alpha
    (degree 1) or alpha^beta (degree 2) component do not converge.
    """
    p = w.degree
    if p == 4:
        return w
    if n < 1:
        raise ValueError("n must be positive")
    terms = nilpotency_terms(0, p)
    if len(terms) > 2:
        raise ValueError("unexpected nilpotency degree")
    P, Q = phase_sums(w.grid.freq_x, n)
    kernels = [P, Q]
    spectra = [_fft.fft2(c.data) for c in w.coeffs]
    out = []
    for r in range(len(w.coeffs)):
        acc = np.zeros(w.grid.shape, dtype=np.complex128)
        used = []
        for m, T in enumerate(terms):
            for c in np.nonzero(T[r])[0]:
                acc = acc + T[r, c] * kernels[m] * spectra[c]
                used.append(w.coeffs[c])
        out.append(used[0]._derived(_fft.ifft2(acc), *used[1:]))
    return FrameForm(w.grid, p, out)


INVARIANT_MONOMIALS = {0: ("1",), 1: ("beta", "theta"), 2: ("alpha^theta", "beta^theta"),
                       3: ("alpha^beta^theta",)}


def random_invariant_span_form(grid: Grid, degree: int, rng: np.random.Generator) -> FrameForm:
    """Random smooth coefficients on the monomials fixed by the X-flow, zero elsewhere."""
    terms = {name: F.random_field(grid, rng) for name in INVARIANT_MONOMIALS[degree]}
    if degree == 0:
        return function_form(terms["1"])
    return make_form(grid, degree, terms)


NONRESONANT = {"x_cap": 0.9, "x_reach": None, "width": 0.2}


def nonresonant_form(grid: Grid, degree: int, rng: np.random.Generator) -> FrameForm:
    """Random smooth form whose X-flow frequencies stay below 0.9 out to the packet tails.

    Every nonzero X-frequency is then at distance >= 0.1 from the integers, so
    Birkhoff averages converge uniformly in the mode: the grid has exact
    resonances (modes (k1, 0) on slice t = 0) that a generic packet would hit.
    """
    cs = [F.random_smooth_field(grid.gluing, rng, F.default_max_mode(grid.N), **NONRESONANT).sample(grid)
          for _ in MONOMIALS[degree]]
    return FrameForm(grid, degree, cs)


def birkhoff_test_form(grid: Grid, degree: int, rng: np.random.Generator, n: int = 1 << 26) -> FrameForm:
    """Birkhoff projection of a nonresonant random form, scaled to unit norm."""
    w = birkhoff_project_form(nonresonant_form(grid, degree, rng), n)
    nrm = form_norm(w)
    return w * (1.0 / nrm) if nrm > 0 else w


@dataclass
class ModelEqReport:
    n: list[int]
    sup: list[float]
    bound_stated: list[float]
    bound_grid: list[float]
    holds_stated: list[bool]
    holds_grid: list[bool]
    slope: float | None

    def to_dict(self):
        return asdict(self)


def modeleq_check(h: ScalarField, n_list: Sequence[int]) -> ModelEqReport:
    """f_n = (h - (gamma^n)^* h) / n against ||f_n|| <= (2/n) ||h||.

    The stated bound uses grid sup norms of h only; the grid bound
    (||h|| + ||(gamma^n)^* h||) / n is the exact pointwise triangle inequality
    on samples (a shifted trigonometric polynomial may overshoot its samples).
    ``slope`` fits log sup against log n where sup > 0.
    """
    hs = F.sup_norm(h)
    sups, bs, bg = [], [], []
    for n in n_list:
        if n < 1:
            raise ValueError("n must be positive")
        shifted = F.pullback_flow_X(h, float(n))
        fn = (h - shifted) / float(n)
        sups.append(F.sup_norm(fn))
        bs.append(2.0 * hs / n)
        bg.append((hs + F.sup_norm(shifted)) / n)
    slack = 1e-12 * max(hs, 1e-300)
    hold_s = [s <= b + slack for s, b in zip(sups, bs)]
    hold_g = [s <= b + slack for s, b in zip(sups, bg)]
    pts = [(math.log(n), math.log(s)) for n, s in zip(n_list, sups) if s > 0]
    slope = None
    if len(pts) >= 2 and len({x for x, _ in pts}) >= 2:
        xs, ys = zip(*pts)
        slope = float(np.polyfit(xs, ys, 1)[0])
    return ModelEqReport(list(n_list), sups, bs, bg, hold_s, hold_g, slope)


def flow_average(f: ScalarField, s: float, which: str = "X", q: QuadratureSpec | None = None) -> ScalarField:
    """int_0^s (phi_t)^* f dt for the X- or Y-flow, by Gauss-Legendre per mode."""
    if which not in ("X", "Y"):
        raise ValueError("which must be 'X' or 'Y'")
    if s == 0:
        return f * 0.0
    if q is None:
        q = QuadratureSpec(16, max(4, int(math.ceil(4 * abs(s)))))
    freq = f.grid.freq_x if which == "X" else f.grid.freq_y
    K = quadrature_moments(freq, 0, q, s_max=s)[0]
    return f._derived(_fft.ifft2(_fft.fft2(f.data) * K))
