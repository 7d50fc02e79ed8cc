"""Differential forms in the invariant coframe (alpha, beta, theta).

A degree-p form is a tuple of coefficient fields over the ordered monomials

    p = 1: alpha, beta, theta
    p = 2: alpha^beta, alpha^theta, beta^theta
    p = 3: alpha^beta^theta

All signs come from one place, ``perm_sign``; the only hardcoded geometry is
d alpha = -alpha^theta, d beta = beta^theta, d theta = 0. Everything else (d on
higher monomials, Lie derivatives, flow substitution tables) is derived.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Mapping

import numpy as np

from . import field as F
from .field import Grid, ScalarField
from .reduce import pairwise_mean

NAMES = ("alpha", "beta", "theta")
VECTORS = ("X", "Y", "Z")
MONOMIALS = {p: tuple(combinations(range(3), p)) for p in range(5)}
_INDEX = {p: {m: i for i, m in enumerate(MONOMIALS[p])} for p in range(5)}

# d alpha = -alpha^theta, d beta = beta^theta, d theta = 0
STRUCTURE = {
    0: {(0, 2): -1.0},
    1: {(1, 2): 1.0},
    2: {},
}


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an index repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def monomial_name(m) -> str:
    return "^".join(NAMES[i] for i in m) if m else "1"


def _vector_index(V) -> int:
    if isinstance(V, int):
        return V
    try:
        return VECTORS.index(str(V).upper())
    except ValueError:
        raise ValueError(f"unknown frame vector {V!r}") from None


# ------------------------------------------------ constant-coefficient algebra

def wedge_matrix_entries(p: int, q: int):
    """(i, j, k, sign): monomial i of degree p wedge monomial j of degree q."""
    out = []
    if p + q > 3:
        return out
    for i, I in enumerate(MONOMIALS[p]):
        for j, J in enumerate(MONOMIALS[q]):
            s = perm_sign(I + J)
            if s:
                out.append((i, j, _INDEX[p + q][tuple(sorted(I + J))], s))
    return out


def interior_matrix(v: int, p: int) -> np.ndarray:
    """Matrix of i_{E_v} from degree p to degree p - 1 on constant monomials."""
    if p == 0:
        return np.zeros((0, 1))
    M = np.zeros((len(MONOMIALS[p - 1]), len(MONOMIALS[p])))
    for c, I in enumerate(MONOMIALS[p]):
        for pos, idx in enumerate(I):
            if idx == v:
                rest = I[:pos] + I[pos + 1:]
                M[_INDEX[p - 1][rest], c] += (-1) ** pos
    return M


def d_matrix(p: int) -> np.ndarray:
    """d on constant-coefficient monomials of degree p (Leibniz over STRUCTURE)."""
    rows = len(MONOMIALS[p + 1]) if p + 1 <= 3 else 0
    M = np.zeros((rows, len(MONOMIALS[p])))
    if rows == 0:
        return M
    for c, I in enumerate(MONOMIALS[p]):
        for pos, idx in enumerate(I):
            # d(e^I) = sum_pos (-1)^pos e^{I<pos} ^ d e^{idx} ^ e^{I>pos}
            for dm, coef in STRUCTURE[idx].items():
                seq = I[:pos] + dm + I[pos + 1:]
                s = perm_sign(seq)
                if s:
                    M[_INDEX[p + 1][tuple(sorted(seq))], c] += (-1) ** pos * s * coef
    return M


def lie_matrix(v: int, p: int) -> np.ndarray:
    """L_{E_v} on constant monomials of degree p via Cartan's formula."""
    n = len(MONOMIALS[p])
    M = np.zeros((n, n))
    if p + 1 <= 3:
        M += interior_matrix(v, p + 1) @ d_matrix(p)
    if p >= 1:
        M += d_matrix(p - 1) @ interior_matrix(v, p)
    return M


def flow_substitution(v: int, p: int, s: float) -> np.ndarray:
    """exp(s L_{E_v}) on constant monomials: the pullback table of the flow of E_v.

    For X and Y the Lie matrix is nilpotent, so the series terminates exactly.
    """
    L = lie_matrix(v, p)
    n = L.shape[0]
    T = np.eye(n)
    term = np.eye(n)
    for k in range(1, n + 2):
        term = term @ L * (s / k)
        if not term.any():
            return T
        T = T + term
    raise ValueError(f"Lie matrix of {VECTORS[v]} in degree {p} is not nilpotent")


def nilpotency_terms(v: int, p: int) -> list[np.ndarray]:
    """[L^0/0!, L^1/1!, ...] up to the last nonzero power, so exp(sL) = sum_k s^k T_k."""
    L = lie_matrix(v, p)
    out = [np.eye(L.shape[0])]
    term = np.eye(L.shape[0])
    for k in range(1, L.shape[0] + 2):
        term = term @ L / k
        if not term.any():
            return out
        out.append(term)
    raise ValueError(f"Lie matrix of {VECTORS[v]} in degree {p} is not nilpotent")


# ------------------------------------------------------------------ FrameForm

class FrameForm:
    """An immutable degree-p form: coefficient fields over MONOMIALS[p]."""

    __slots__ = ("grid", "degree", "coeffs")

    def __init__(self, grid: Grid, degree: int, coeffs):
        if degree < 0 or degree > 4:
            raise ValueError("degree must be between 0 and 4")
        coeffs = tuple(coeffs)
        if len(coeffs) != len(MONOMIALS[degree]):
            raise ValueError(f"degree {degree} needs {len(MONOMIALS[degree])} coefficients")
        slabs = set()
        for c in coeffs:
            if not isinstance(c, ScalarField) or not c.grid.same_as(grid):
                raise ValueError("coefficients must be ScalarFields on the form's grid")
            slabs.add(c.slab)
        if len(slabs) > 1:
            raise ValueError("coefficients mix slab and quotient fields")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("FrameForm is immutable")

    @property
    def slab(self) -> bool:
        return bool(self.coeffs) and self.coeffs[0].slab

    def coeff(self, monomial) -> ScalarField:
        if isinstance(monomial, str):
            monomial = parse_monomial(monomial)
        return self.coeffs[_INDEX[self.degree][tuple(monomial)]]

    def __repr__(self):
        parts = [f"{monomial_name(m)}:{form_norm_field(c):.3g}" for m, c in zip(MONOMIALS[self.degree], self.coeffs)]
        return f"FrameForm(deg={self.degree}, {', '.join(parts)})"

    def _same(self, other: "FrameForm"):
        if not isinstance(other, FrameForm) or other.degree != self.degree:
            raise ValueError("forms must have equal degree")

    def __add__(self, other):
        self._same(other)
        return FrameForm(self.grid, self.degree, [a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other):
        self._same(other)
        return FrameForm(self.grid, self.degree, [a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __neg__(self):
        return FrameForm(self.grid, self.degree, [-a for a in self.coeffs])

    def __mul__(self, c):
        if isinstance(c, (FrameForm, ScalarField)):
            return NotImplemented
        return FrameForm(self.grid, self.degree, [a * c for a in self.coeffs])

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)


def form_norm_field(f: ScalarField) -> float:
    return F.l2_norm(f)


def parse_monomial(name: str) -> tuple[int, ...]:
    name = name.strip()
    if name in ("", "1"):
        return ()
    idx = [NAMES.index(p.strip()) for p in name.replace("∧", "^").split("^")]
    if perm_sign(idx) == 0:
        raise ValueError(f"repeated factor in {name!r}")
    return tuple(idx)


def zero_form(grid: Grid, degree: int, slab: bool = False) -> FrameForm:
    z = F.zeros(grid)
    if slab:
        z = ScalarField(grid, z.data, slab=True)
    return FrameForm(grid, degree, [z] * len(MONOMIALS[degree]))


def make_form(grid: Grid, degree: int, terms: Mapping) -> FrameForm:
    """Form from {monomial: coefficient}; monomials by name ("alpha^theta") or index tuple.

    A monomial given out of order picks up its permutation sign.
    """
    slab = any(isinstance(v, ScalarField) and v.slab for v in terms.values())
    coeffs = list(zero_form(grid, degree, slab).coeffs)
    for key, val in terms.items():
        idx = parse_monomial(key) if isinstance(key, str) else tuple(key)
        if len(idx) != degree:
            raise ValueError(f"monomial {key!r} has the wrong degree")
        s = perm_sign(idx)
        if s == 0:
            raise ValueError(f"monomial {key!r} vanishes")
        if not isinstance(val, ScalarField):
            val = F.constant(grid, val)
            if slab:
                val = ScalarField(grid, val.data, slab=True)
        k = _INDEX[degree][tuple(sorted(idx))]
        coeffs[k] = coeffs[k] + val * s
    return FrameForm(grid, degree, coeffs)


def function_form(f: ScalarField) -> FrameForm:
    return FrameForm(f.grid, 0, [f])


def alpha(grid: Grid) -> FrameForm:
    return make_form(grid, 1, {"alpha": 1.0})


def beta(grid: Grid) -> FrameForm:
    return make_form(grid, 1, {"beta": 1.0})


def theta(grid: Grid) -> FrameForm:
    return make_form(grid, 1, {"theta": 1.0})


def volume(grid: Grid) -> FrameForm:
    return make_form(grid, 3, {"alpha^beta^theta": 1.0})


def form_norm(w: FrameForm) -> float:
    """sqrt of the summed squared RMS norms of the coefficients."""
    return math.sqrt(sum(F.l2_norm(c) ** 2 for c in w.coeffs))


def form_inner(u: FrameForm, w: FrameForm) -> complex:
    u._same(w)
    return sum(F.inner(a, b) for a, b in zip(u.coeffs, w.coeffs))


def linear_combination(pairs) -> FrameForm:
    pairs = list(pairs)
    out = pairs[0][1] * pairs[0][0]
    for c, w in pairs[1:]:
        out = out + w * c
    return out


def is_zero(w: FrameForm, tol: float = 1e-13) -> bool:
    return form_norm(w) <= tol


# ------------------------------------------------------------------ operators

def exterior_d(w: FrameForm) -> FrameForm:
    """d w by Leibniz: d(c e^I) = dc ^ e^I + c d(e^I), dc = Xc alpha + Yc beta + Zc theta."""
    if w.slab:
        raise F.SlabFieldError("exterior_d needs quotient coefficients (Z wraps through the seam)")
    p = w.degree
    grid = w.grid
    if p >= 3:
        return FrameForm(grid, 4, [])
    out = [None] * len(MONOMIALS[p + 1])

    def acc(k, term):
        out[k] = term if out[k] is None else out[k] + term

    D = d_matrix(p)
    for c, (I, coef) in enumerate(zip(MONOMIALS[p], w.coeffs)):
        Xc, Yc = F.deriv_XY(coef)
        Zc = F.deriv_Z(coef)
        for v, dc in enumerate((Xc, Yc, Zc)):
            s = perm_sign((v,) + I)
            if s:
                acc(_INDEX[p + 1][tuple(sorted((v,) + I))], dc * s if s != 1 else dc)
        for k in np.nonzero(D[:, c])[0]:
            acc(int(k), coef * D[k, c])
    zero = F.zeros(grid)
    return FrameForm(grid, p + 1, [z if z is not None else zero for z in out])


def wedge(u: FrameForm, w: FrameForm, dealias: bool = True) -> FrameForm:
    """Graded-commutative product; p + q > 3 gives the zero form of that degree."""
    p, q = u.degree, w.degree
    grid = u.grid
    if p + q > 3:
        return FrameForm(grid, 4, [])
    out = [None] * len(MONOMIALS[p + q])
    for i, j, k, s in wedge_matrix_entries(p, q):
        a, b = u.coeffs[i], w.coeffs[j]
        if not a.data.any() or not b.data.any():
            continue
        term = F.product(a, b, dealias=dealias)
        term = term if s == 1 else -term
        out[k] = term if out[k] is None else out[k] + term
    zero = F.zeros(grid)
    if u.slab or w.slab:
        zero = ScalarField(grid, zero.data, slab=True)
    return FrameForm(grid, p + q, [z if z is not None else zero for z in out])


def scalar_mul(f: ScalarField, w: FrameForm) -> FrameForm:
    """f * w, using the dealiased product."""
    return FrameForm(w.grid, w.degree, [F.product(f, c) for c in w.coeffs])


def interior(V, w: FrameForm) -> FrameForm:
    """i_V w, an antiderivation with i_X alpha = i_Y beta = i_Z theta = 1."""
    v = _vector_index(V)
    p = w.degree
    if p == 0:
        return w * 0.0
    if p == 4:
        return zero_form(w.grid, 3, w.slab)
    M = interior_matrix(v, p)
    out = []
    zero = w.coeffs[0] * 0.0
    for r in range(M.shape[0]):
        acc = None
        for c in np.nonzero(M[r])[0]:
            term = w.coeffs[c] if M[r, c] == 1 else w.coeffs[c] * M[r, c]
            acc = term if acc is None else acc + term
        out.append(acc if acc is not None else zero)
    return FrameForm(w.grid, p - 1, out)


def lie_derivative(V, w: FrameForm) -> FrameForm:
    """L_V w = i_V d w + d i_V w."""
    if w.degree == 0:
        return interior(V, exterior_d(w))
    a = interior(V, exterior_d(w))
    b = exterior_d(interior(V, w))
    return a + b


def _pullback(w: FrameForm, v: int, s: float) -> FrameForm:
    flow = F.pullback_flow_X if v == 0 else F.pullback_flow_Y
    p = w.degree
    if s == 0 or p == 4:
        return w
    T = flow_substitution(v, p, s)
    pulled = [flow(c, s) for c in w.coeffs]
    out = []
    for r in range(T.shape[0]):
        acc = None
        for c in np.nonzero(T[r])[0]:
            term = pulled[c] if T[r, c] == 1 else pulled[c] * T[r, c]
            acc = term if acc is None else acc + term
        out.append(acc)
    return FrameForm(w.grid, p, out)


def pullback_form_flow_X(w: FrameForm, s: float) -> FrameForm:
    """(phi_s^X)^* w: alpha -> alpha - s theta, beta and theta fixed; coefficients flowed."""
    return _pullback(w, 0, s)


def pullback_form_flow_Y(w: FrameForm, u: float) -> FrameForm:
    """(phi_u^Y)^* w: beta -> beta + u theta, alpha and theta fixed; coefficients flowed."""
    return _pullback(w, 1, u)


def gamma_pullback(w: FrameForm) -> FrameForm:
    """gamma^* with gamma the time-one map of X."""
    return pullback_form_flow_X(w, 1.0)


# -------------------------------------------------------------- random forms

def random_form(grid: Grid, degree: int, rng: np.random.Generator, **kw) -> FrameForm:
    return FrameForm(grid, degree, [F.random_field(grid, rng, **kw) for _ in MONOMIALS[degree]])


# --------------------------------------------- structure equations, measured

def measured_brackets(grid: Grid, fields) -> np.ndarray:
    """Structure constants c[i, j, k] with [E_i, E_j] = sum_k c[i, j, k] E_k.

    Fitted by least squares from the numerical commutators of the derivative
    operators applied to the given quotient fields.
    """
    ops = (F.deriv_X, F.deriv_Y, F.deriv_Z)
    c = np.zeros((3, 3, 3), dtype=complex)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        rows, rhs = [], []
        for f in fields:
            comm = ops[i](ops[j](f)) - ops[j](ops[i](f))
            rows.append(np.stack([op(f).data.ravel() for op in ops], axis=1))
            rhs.append(comm.data.ravel())
        A = np.concatenate(rows)
        b = np.concatenate(rhs)
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        c[i, j] = sol
        c[j, i] = -sol
    return c


def structure_from_brackets(c: np.ndarray) -> dict[str, np.ndarray]:
    """d of each coframe form from brackets: de^k(E_i, E_j) = -e^k([E_i, E_j])."""
    out = {}
    for k, name in enumerate(NAMES):
        out[name] = np.array([-c[i, j, k] for (i, j) in MONOMIALS[2]])
    return out


def structure_from_d(grid: Grid) -> dict[str, np.ndarray]:
    """d alpha, d beta, d theta as produced by exterior_d on unit-coefficient forms."""
    out = {}
    for k, name in enumerate(NAMES):
        dw = exterior_d(make_form(grid, 1, {name: 1.0}))
        out[name] = np.array([complex(pairwise_mean(c.data)) for c in dw.coeffs])
    return out
