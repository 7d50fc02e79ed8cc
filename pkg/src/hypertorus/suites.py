"""Identity and evidence suites. Each returns a SuiteReport of named checks."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import cohomology as C
from . import field as F
from . import forms as W
from .averaging import (DEFAULT_QUADRATURE, QuadratureSpec, average, average_I, average_I_exact,
                        chain_defect)
from .gluing import HyperbolicGluing, build_gluing
from .orbits import orbit_discrepancy

CAT_MAP = ((2, 1), (1, 1))

# FD-limited identity tolerances at Nt = 64 by stencil order; scaled by (64 / Nt)^p.
FD_TOL_64 = {2: 0.5, 4: 1e-2, 6: 2e-4, 8: 1e-6, 10: 1e-6, 12: 1e-6}


def fd_tolerance(order: int, Nt: int) -> float:
    base = FD_TOL_64.get(order, 1e-6)
    return base * (64.0 / Nt) ** order if Nt < 64 else base


@dataclass(frozen=True)
class SuiteConfig:
    gluing: HyperbolicGluing = field(default_factory=lambda: build_gluing(CAT_MAP))
    N: int = 64
    Nt: int = 64
    fd_order: int = 8
    quad: QuadratureSpec = DEFAULT_QUADRATURE
    seed: int = 0
    paper_sign: bool = False
    exact_average: bool = False
    probe_levels: tuple[int, ...] = C.DEFAULT_LEVELS
    birkhoff_n: int = 1 << 26

    @property
    def grid(self) -> F.Grid:
        return F.make_grid(self.gluing, self.N, self.Nt, self.fd_order)

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def inputs(self) -> dict:
        return {
            "matrix": list(self.gluing.entries),
            "N": self.N,
            "Nt": self.Nt,
            "fd_order": self.fd_order,
            "quad": {"order": self.quad.order, "panels": self.quad.resolved(self.N).panels},
            "seed": self.seed,
            "paper_sign": self.paper_sign,
            "exact_average": self.exact_average,
        }


@dataclass
class Check:
    name: str
    value: float
    bound: float
    relation: str = "<="
    note: str = ""

    @property
    def passed(self) -> bool:
        v = self.value
        if isinstance(v, float) and math.isnan(v):
            return False
        if self.relation == "<=":
            return v <= self.bound
        if self.relation == ">=":
            return v >= self.bound
        if self.relation == "<":
            return v < self.bound
        if self.relation == "==":
            return v == self.bound
        raise ValueError(self.relation)

    def to_dict(self):
        d = {"name": self.name, "value": _num(self.value), "bound": _num(self.bound),
             "relation": self.relation, "passed": self.passed}
        if self.note:
            d["note"] = self.note
        return d


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, str):
        return x
    return float(x)


@dataclass
class SuiteReport:
    name: str
    checks: list[Check] = field(default_factory=list)
    data: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget_seconds: float | None = None
    grade: str = "identity"

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name, value, bound, relation="<=", note=""):
        self.checks.append(Check(name, value, bound, relation, note))

    def to_dict(self, timings: bool = True):
        d = {
            "name": self.name,
            "grade": self.grade,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "data": self.data,
        }
        if timings:
            d["timings"] = {"seconds": self.seconds, "budget_seconds": self.budget_seconds,
                            "within_budget": (self.budget_seconds is None
                                              or self.seconds < self.budget_seconds)}
        return d

    def csv_rows(self):
        return [(self.name, c.name, _num(c.value), _num(c.bound), c.relation, c.passed)
                for c in self.checks]


def _rel(x, ref):
    return x / ref if ref > 0 else x


def _timed(name: str, budget: float | None = None, grade: str = "identity"):
    def wrap(fn: Callable[[SuiteConfig, SuiteReport], None]):
        def run(cfg: SuiteConfig) -> SuiteReport:
            rep = SuiteReport(name, budget_seconds=budget, grade=grade)
            t0 = time.perf_counter()
            fn(cfg, rep)
            rep.seconds = time.perf_counter() - t0
            return rep
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# ----------------------------------------------------------- 1: structure

@_timed("structure", budget=30.0)
def structure_suite(cfg: SuiteConfig, rep: SuiteReport, n_fields: int = 20):
    """Commutators on random fields and the structure equations as computed outputs."""
    grid = cfg.grid
    rng = cfg.rng(1)
    worst = {"XY": 0.0, "ZX": 0.0, "ZY": 0.0}
    fields = []
    for _ in range(n_fields):
        f = F.random_field(grid, rng)
        fields.append(f)
        for k, v in F.bracket_residuals(f).items():
            worst[k] = max(worst[k], v)
    tol = fd_tolerance(cfg.fd_order, cfg.Nt)
    rep.add("[X,Y]f", worst["XY"], 1e-9)
    rep.add("[Z,X]f+Xf", worst["ZX"], tol)
    rep.add("[Z,Y]f-Yf", worst["ZY"], tol)
    expected = {"alpha": np.array([0, -1, 0]), "beta": np.array([0, 0, 1]), "theta": np.zeros(3)}
    got = W.structure_from_d(grid)
    for name in W.NAMES:
        rep.add(f"d{name}", float(np.max(np.abs(got[name] - expected[name]))), 1e-9)
    fitted = W.structure_from_brackets(W.measured_brackets(grid, fields[:4]))
    rep.add("brackets->structure", max(float(np.max(np.abs(fitted[n] - expected[n]))) for n in W.NAMES), tol)
    seam = max(_rel(f.seam_defect, F.sup_norm(f)) for f in fields)
    rep.add("seam_defect", seam, F.SEAM_RTOL)
    rep.data = {"n_fields": n_fields, "bracket_residuals": worst}


# --------------------------------------------------------------- 2: lemma

LEMMA_S = (0.3, 1.0, 2.0, 5.0)


def lemma_residual(grid: F.Grid, rng: np.random.Generator, n_fields: int, s_list=LEMMA_S) -> dict:
    out = {s: 0.0 for s in s_list}
    for _ in range(n_fields):
        f = F.random_field(grid, rng)
        for s in s_list:
            out[s] = max(out[s], F.flow_lemma_residual(f, s))
    return out


@_timed("lemma")
def lemma_suite(cfg: SuiteConfig, rep: SuiteReport, n_fields: int = 10,
                nt_levels=(32, 64, 128), n_conv: int = 3):
    """Z(phi_s^* f) = -s phi_s^*(X f) + phi_s^*(Z f), and its O(Nt^-p) convergence."""
    res = lemma_residual(cfg.grid, cfg.rng(2), n_fields)
    tol = fd_tolerance(cfg.fd_order, cfg.Nt)
    for s, r in res.items():
        rep.add(f"residual s={s:g}", r, tol)
    conv = []
    for Nt in nt_levels:
        g = F.make_grid(cfg.gluing, cfg.N, Nt, cfg.fd_order)
        conv.append(max(lemma_residual(g, cfg.rng(20), n_conv).values()))
    orders = [math.log2(conv[i] / conv[i + 1]) if conv[i + 1] > 0 else math.inf
              for i in range(len(conv) - 1)]
    rep.add("observed order (min)", min(orders), 0.75 * cfg.fd_order, ">=")
    rep.data = {"residual_by_s": {f"{s:g}": r for s, r in res.items()},
                "convergence": [{"Nt": n, "residual": r} for n, r in zip(nt_levels, conv)],
                "observed_orders": orders}


# ----------------------------------------------------------- 3: operator I

@_timed("averaging")
def averaging_suite(cfg: SuiteConfig, rep: SuiteReport, n_forms: int = 10):
    """Surjectivity identity, chain defect, fixed invariant monomials, I(alpha), quadrature."""
    grid = cfg.grid
    rng = cfg.rng(3)
    q = None if cfg.exact_average else cfg.quad
    ps = cfg.paper_sign
    worst_img = {}
    worst_chain = {}
    worst_quad = 0.0
    for p in range(4):
        wi = wc = 0.0
        for _ in range(n_forms):
            w = W.random_form(grid, p, rng)
            n = W.form_norm(w)
            lhs = average(W.lie_derivative("X", w), q, ps)
            img = W.gamma_pullback(w) - w
            if ps and p % 2:
                img = -img
            wi = max(wi, _rel(W.form_norm(lhs - img), n))
            if p < 3:
                wc = max(wc, chain_defect(w, q, ps))
            if p in (1, 2):
                diff = average_I(w, cfg.quad, ps) - average_I_exact(w, ps)
                worst_quad = max(worst_quad, _rel(W.form_norm(diff), n))
        worst_img[p] = wi
        if p < 3:
            worst_chain[p] = wc
    for p, v in worst_img.items():
        rep.add(f"I(L_X w)=gamma*w-w deg{p}", v, 1e-6)
    for p, v in worst_chain.items():
        rep.add(f"chain defect deg{p}", v, 1e-7)
    fixed = 0.0
    psi = F.pullback_circle(grid, F.CircleFunction.cos(2))
    for p, names in C.INVARIANT_MONOMIALS.items():
        for name in names:
            for coef in (1.0, psi):
                w = W.make_form(grid, p, {name: coef}) if p else W.function_form(
                    coef if isinstance(coef, F.ScalarField) else F.constant(grid, coef))
                sign = -1.0 if (ps and p % 2) else 1.0
                fixed = max(fixed, _rel(W.form_norm(average(w, q, ps) - w * sign), W.form_norm(w)))
    rep.add("I fixes invariant monomials", fixed, 1e-9)
    a = W.alpha(grid)
    target = a - W.theta(grid) * 0.5
    ia = average(a, q, ps)
    rep.add("I(alpha)=alpha-theta/2", W.form_norm(ia - (-target if ps else target)), 1e-10)
    rep.add("quadrature vs exact", worst_quad, 1e-10,
            note=f"{cfg.quad.resolved(cfg.N).nodes} nodes")
    rep.data = {"path": "exact" if q is None else "quadrature", "paper_sign": ps}


# ---------------------------------------------------- 4: generators, probes

GENERATOR_FAMILY = [("1", F.CircleFunction.const(1.0))] + [
    (f"{name}:{k}", getattr(F.CircleFunction, name)(k)) for k in range(1, 5) for name in ("cos", "sin")]


@_timed("generators", budget=600.0, grade=C.EVIDENCE)
def generators_suite(cfg: SuiteConfig, rep: SuiteReport, n_controls: int = 10, degrees=(1, 2)):
    """Certificates for every generator, probe verdicts on generators and exact controls."""
    grid = cfg.grid
    worst_closed = worst_co = 0.0
    for deg in degrees:
        for _, phi in GENERATOR_FAMILY:
            _, cert = C.certify_generator(grid, phi, deg)
            worst_closed = max(worst_closed, cert.closed_defect)
            worst_co = max(worst_co, cert.coinvariant_defect)
    rep.add("closedness", worst_closed, 1e-8)
    rep.add("co-invariant representation", worst_co, 1e-10)
    levels = cfg.probe_levels
    gen_rows = []
    n_obs = 0
    n_gen = 0
    for deg in degrees:
        make = C.h1_target if deg == 1 else C.h2_target
        for label, phi in GENERATOR_FAMILY[1:]:
            r = C.exactness_probe(make(phi), levels, gluing=cfg.gluing, fd_order=cfg.fd_order)
            n_gen += 1
            n_obs += r.verdict == C.OBSTRUCTED
            gen_rows.append({"degree": deg, "phi": label, "verdict": r.verdict,
                             "residuals": r.residuals, "iterations": r.iterations})
    rep.add("generators OBSTRUCTED", n_obs, n_gen, "==")
    rng = cfg.rng(4)
    ctrl_rows = []
    n_exact = 0
    worst_ctrl = 0.0
    for _ in range(n_controls):
        src = C.random_control_source(cfg.gluing, rng, 0)
        r = C.exactness_probe(C.exact_control_target(src, 0), levels, gluing=cfg.gluing,
                              fd_order=cfg.fd_order)
        n_exact += r.verdict == C.EXACT_LIKE
        worst_ctrl = max(worst_ctrl, r.levels[-1].residual)
        ctrl_rows.append({"verdict": r.verdict, "residuals": r.residuals, "iterations": r.iterations})
    rep.add("controls EXACT-LIKE", n_exact, n_controls, "==")
    rep.add("control residual", worst_ctrl, 1e-6)
    rep.data = {"levels": list(levels), "generators": gen_rows, "controls": ctrl_rows,
                "control_degree": 0}


# --------------------------------------------------------- 5: independence

@_timed("independence", grade=C.EVIDENCE)
def independence_suite(cfg: SuiteConfig, rep: SuiteReport, m: int = 4, N: int = 32):
    """Deflated Gram rank of the first 2m generators in degrees 1 and 2."""
    grid = F.make_grid(cfg.gluing, N, N, cfg.fd_order)
    for deg in (1, 2):
        r = C.independence_report(m, deg, grid)
        rep.add(f"gram rank deg{deg}", r.rank, 2 * m, "==")
        rep.data[f"deg{deg}"] = {"eigenvalues": r.eigenvalues, "deflated_fraction": r.deflated_fraction,
                                 "labels": r.labels}


# ---------------------------------------------------------- 6: H0 and H3

def volume_oracle(A) -> float:
    """Frame volume of the fundamental cube by 3D Gauss-Legendre quadrature.

    Rebuilds the frame from a generic eigen-solve of A and integrates
    1 / |det(X, Y, Z)| over [0,1]^3 in (x, y, t) coordinates.
    """
    evals, evecs = np.linalg.eig(np.asarray(A, dtype=float))
    i = int(np.argmax(evals.real))
    lam = float(evals[i].real)
    va, vb = evecs[:, i].real, evecs[:, 1 - i].real
    a, b = va[1] / va[0], vb[1] / vb[0]
    x, w = np.polynomial.legendre.leggauss(12)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    total = 0.0
    for xi, wx in zip(x, w):
        for yi, wy in zip(x, w):
            for ti, wt in zip(x, w):
                lt = lam ** ti
                E = np.array([[lt, 1.0 / lt, 0.0],
                              [a * lt, b / lt, 0.0],
                              [0.0, 0.0, -1.0 / math.log(lam)]])
                total += wx * wy * wt / abs(np.linalg.det(E))
    return float(total)


@_timed("vanishing")
def vanishing_suite(cfg: SuiteConfig, rep: SuiteReport, n_h0: int = 20, n_h3: int = 10):
    """H0 integral argument, H3 primitives, analytic primitive and the volume."""
    grid = cfg.grid
    g = cfg.gluing
    rng = cfg.rng(6)
    worst = 0.0
    for _ in range(n_h0):
        r = C.h0_vanishing_check(F.random_field(grid, rng))
        worst = max(worst, r.integral_rel)
    rep.add("integral(g-gamma*g)", worst, 1e-11)
    worst3 = 0.0
    stats = None
    for _ in range(n_h3):
        _, _, r = C.h3_primitive(F.random_field(grid, rng))
        worst3 = max(worst3, r.residual)
        stats = r.stats
    rep.add("h3 residual", worst3, 1e-6)
    c, om, r = C.h3_primitive(F.pullback_circle(grid, F.CircleFunction.sin(1)))
    ana = g.log_lam / (2 * math.pi) * (np.cos(2 * math.pi * grid.t) - 1.0)
    ab = om.coeff("alpha^beta").data
    err = max(float(np.max(np.abs(ab - ana[None, None, :]))),
              float(np.max(np.abs(om.coeff("beta^theta").data))),
              float(np.max(np.abs(om.coeff("alpha^theta").data))), abs(c))
    rep.add("analytic primitive p*(sin)", err, 1e-8)
    vol = F.integrate(F.constant(grid, 1.0)).real
    oracle = volume_oracle(g.A)
    rep.add("volume vs oracle", abs(vol - oracle), 1e-10)
    rep.add("volume vs log(lam)/(a-b)", abs(vol - g.log_lam / (g.a - g.b)), 1e-12)
    rep.data = {"volume": vol, "volume_oracle": oracle, "small_denominators": stats.to_dict()}


# ------------------------------------------------------ 7: injectivity

@_timed("injectivity")
def injectivity_suite(cfg: SuiteConfig, rep: SuiteReport, n_forms: int = 10):
    """gamma-fixed forms from Birkhoff projection have L_X w = 0; alpha is refused."""
    grid = cfg.grid
    rng = cfg.rng(7)
    for p in (1, 2):
        statuses = []
        worst = 0.0
        for _ in range(n_forms):
            r = C.iso_injectivity_check(C.birkhoff_test_form(grid, p, rng, cfg.birkhoff_n))
            statuses.append(r.status)
            worst = max(worst, r.lie_rel if r.lie_rel is not None else math.inf)
        rep.add(f"PASS count deg{p}", statuses.count("PASS"), n_forms, "==")
        rep.add(f"|L_X w|/|w| deg{p}", worst, 1e-6)
    r = C.iso_injectivity_check(W.alpha(grid))
    rep.add("alpha NOT-INVARIANT", r.status, "NOT-INVARIANT", "==")
    rep.add("alpha defect - |theta|", abs(r.gamma_defect - W.form_norm(W.theta(grid))), 1e-12)
    rep.data = {"birkhoff_n": cfg.birkhoff_n}


# ------------------------------------------------- 8: equidistribution

@_timed("equidistribution")
def equidistribution_suite(cfg: SuiteConfig, rep: SuiteReport, n_points: int = 5,
                           s_short: float = 50.0, s_long: float = 400.0, K: int = 3):
    """Weyl sums along X-orbits shrink: max at s_long < half the max at s_short."""
    rng = cfg.rng(8)
    rows = []
    for _ in range(n_points):
        x0 = tuple(float(v) for v in rng.random(3))
        a = orbit_discrepancy(cfg.gluing, x0, s_short, K)
        b = orbit_discrepancy(cfg.gluing, x0, s_long, K)
        rep.add(f"ratio x0=({x0[0]:.3f},{x0[1]:.3f},{x0[2]:.3f})", b.max_weyl / a.max_weyl, 0.5, "<")
        rows.append({"x0": list(x0), "short": a.max_weyl, "long": b.max_weyl})
    rep.data = {"K": K, "S": [s_short, s_long], "points": rows}


SUITES = {
    "structure": structure_suite,
    "lemma": lemma_suite,
    "averaging": averaging_suite,
    "generators": generators_suite,
    "independence": independence_suite,
    "vanishing": vanishing_suite,
    "injectivity": injectivity_suite,
    "equidistribution": equidistribution_suite,
}

GROUPS = {
    "identities": ("structure", "lemma", "averaging"),
    "quick": ("structure", "averaging", "vanishing", "injectivity", "equidistribution"),
    "all": tuple(SUITES),
}


def resolve_suites(name: str) -> tuple[str, ...]:
    if name in SUITES:
        return (name,)
    if name in GROUPS:
        return GROUPS[name]
    raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + sorted(GROUPS)}")


def run_suites(names, cfg: SuiteConfig) -> list[SuiteReport]:
    return [SUITES[n](cfg) for n in names]


def with_overrides(cfg: SuiteConfig, **kw) -> SuiteConfig:
    return replace(cfg, **kw)
