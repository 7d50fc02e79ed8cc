import math

import numpy as np
import pytest

from hypertorus import field as F
from hypertorus.orbits import phase_sums_closed
from hypertorus.reduce import pairwise_sum

TWO_PI = 2 * math.pi


def test_from_function_constant(grid16):
    f = F.from_function(grid16, lambda x, y, t: np.ones_like(x))
    assert np.all(f.data == 1)
    assert f.seam_defect == 0.0


def test_from_function_t_only_is_seamless(grid16):
    f = F.from_function(grid16, lambda x, y, t: np.sin(TWO_PI * t))
    assert f.seam_defect <= 1e-15


def test_single_mode_has_seam_defect(grid16):
    fn = lambda x, y, t: np.exp(1j * TWO_PI * x)
    assert F.from_function(grid16, fn, slab=True).slab
    f = F.from_function(grid16, fn)
    assert f.seam_defect > 0.1
    assert not f.seam_ok


def test_from_function_rejects_nonfinite(grid16):
    with pytest.raises(ValueError):
        F.from_function(grid16, lambda x, y, t: np.full(x.shape, np.nan))


def test_fields_are_immutable(grid16):
    f = F.constant(grid16, 1.0)
    with pytest.raises((AttributeError, ValueError)):
        f.data[0, 0, 0] = 2
    with pytest.raises(AttributeError):
        f.slab = True


def test_pullback_circle_killed_by_X_and_Y(grid32):
    for phi in (F.CircleFunction.const(1.0), F.CircleFunction.sin(1), F.CircleFunction.cos(1)):
        f = F.pullback_circle(grid32, phi)
        assert f.seam_defect == 0.0
        assert np.all(F.deriv_X(f).data == 0)
        assert np.all(F.deriv_Y(f).data == 0)


def test_deriv_X_Y_analytic(grid32, cat):
    f = F.from_function(grid32, lambda x, y, t: np.sin(TWO_PI * x), slab=True)
    lt = grid32.lam_t[None, None, :]
    x = np.arange(32)[:, None, None] / 32
    assert np.max(np.abs(F.deriv_X(f).data - lt * TWO_PI * np.cos(TWO_PI * x))) <= 1e-10
    g = F.from_function(grid32, lambda x, y, t: np.sin(TWO_PI * y), slab=True)
    y = np.arange(32)[None, :, None] / 32
    assert np.max(np.abs(F.deriv_Y(g).data - cat.b / lt * TWO_PI * np.cos(TWO_PI * y))) <= 1e-10


def test_leibniz(grid32, rng):
    f = F.random_field(grid32, rng, max_mode=5)
    h = F.random_field(grid32, rng, max_mode=5)
    for D in (F.deriv_X, F.deriv_Y):
        lhs = D(f * h)
        rhs = D(f) * h + f * D(h)
        assert F.l2_norm(lhs - rhs) <= 1e-10 * F.l2_norm(lhs)


def test_deriv_Z_analytic(grid64, cat):
    f = F.pullback_circle(grid64, F.CircleFunction.sin(1))
    expect = -(TWO_PI / cat.log_lam) * np.cos(TWO_PI * grid64.t)
    assert np.max(np.abs(F.deriv_Z(f).data - expect[None, None, :])) <= 1e-9
    assert np.all(F.deriv_Z(F.constant(grid64, 3.0)).data == 0)


def test_deriv_Z_rejects_slab(grid16):
    f = F.from_function(grid16, lambda x, y, t: np.exp(1j * TWO_PI * x), slab=True)
    with pytest.raises(F.SlabFieldError):
        F.deriv_Z(f)
    with pytest.raises(F.SlabFieldError):
        F.integrate(f)


def test_commutators(grid64, rng):
    f = F.random_field(grid64, rng)
    r = F.bracket_residuals(f)
    assert r["XY"] <= 1e-10
    assert r["ZX"] <= 1e-6 and r["ZY"] <= 1e-6


def test_commutator_convergence_order(cat, rng):
    sf = F.random_smooth_field(cat, rng, 21)
    errs = [F.bracket_residuals(sf.sample(F.make_grid(cat, 64, Nt)))["ZY"] for Nt in (32, 64)]
    assert math.log2(errs[0] / errs[1]) >= 6


def test_flow_lemma(grid64, rng):
    f = F.random_field(grid64, rng)
    for s in (0.3, 1.0, 2.0, 5.0):
        assert F.flow_lemma_residual(f, s) <= 1e-6


def test_flow_group_law(grid32, rng):
    f = F.random_field(grid32, rng)
    assert F.pullback_flow_X(f, 0.0) is not None
    assert F.l2_norm(F.pullback_flow_X(f, 0.0) - f) == 0.0
    for P in (F.pullback_flow_X, F.pullback_flow_Y):
        lhs = P(P(f, 0.7), 1.9)
        rhs = P(f, 2.6)
        assert F.l2_norm(lhs - rhs) <= 1e-12 * F.l2_norm(f)


def test_flow_phase(grid16):
    f = F.from_function(grid16, lambda x, y, t: np.exp(1j * TWO_PI * x), slab=True)
    s = 0.37
    out = F.pullback_flow_X(f, s)
    ratio = out.data / f.data
    expect = np.exp(1j * TWO_PI * s * grid16.lam_t)
    assert np.max(np.abs(ratio - expect[None, None, :])) <= 1e-12


def test_integrate_values(grid32, cat, rng):
    assert F.integrate(F.constant(grid32, 1.0)).real == pytest.approx(cat.log_lam / math.sqrt(5), abs=1e-14)
    assert abs(F.integrate(F.pullback_circle(grid32, F.CircleFunction.sin(1)))) <= 1e-12
    g = F.random_field(grid32, rng)
    assert abs(F.integrate(g - F.pullback_flow_X(g, 1.0))) <= 1e-11 * F.l2_norm(g)
    assert abs(F.integrate(F.pullback_flow_X(g, 1.0)) - F.integrate(g)) <= 1e-11 * F.l2_norm(g)


def test_birkhoff_average(grid16, rng):
    f = F.random_field(grid16, rng)
    assert F.birkhoff_average(f, 1) is f
    p = F.pullback_circle(grid16, F.CircleFunction.cos(2))
    assert F.l2_norm(F.birkhoff_average(p, 37) - p) <= 1e-14
    # brute force against the definition
    n = 7
    brute = sum((F.pullback_flow_X(f, float(j)) for j in range(1, n)), F.pullback_flow_X(f, 0.0)) / n
    assert F.l2_norm(F.birkhoff_average(f, n) - brute) <= 1e-12 * F.l2_norm(f)


def test_birkhoff_single_mode_decays(grid16):
    f = F.from_function(grid16, lambda x, y, t: np.exp(1j * TWO_PI * x), slab=True)
    for n in (10, 100, 1000):
        got = F.birkhoff_average(f, n).data[0, 0, :]
        oracle = phase_sums_closed(grid16.lam_t, n)
        assert np.max(np.abs(got - oracle)) <= 1e-9
    sups = [F.sup_norm(F.birkhoff_average(f, n)) for n in (10, 1000)]
    # slice t = 0 has frequency exactly 1 and never decays; other slices do
    decayed = [np.max(np.abs(F.birkhoff_average(f, n).data[:, :, 1:])) for n in (10, 1000)]
    assert sups[1] == pytest.approx(1.0)
    assert decayed[1] < decayed[0] / 10


def test_norms(grid16, rng):
    assert F.sup_norm(F.zeros(grid16)) == 0.0
    assert F.sup_norm(F.pullback_circle(grid16, F.CircleFunction.sin(1))) == pytest.approx(1.0, abs=1e-12)
    f = F.random_field(grid16, rng)
    serial = math.sqrt(sum(abs(v) ** 2 for v in f.data.ravel()) / f.data.size)
    assert F.l2_norm(f) == pytest.approx(serial, rel=1e-13)


def test_pairwise_sum_vs_fsum(rng):
    v = rng.standard_normal(10007)
    assert pairwise_sum(v) == pytest.approx(math.fsum(v), rel=1e-13, abs=1e-12)


def test_dealiased_product(grid16):
    # e^{2 pi i 5 x} squared lands on mode 10, above the 2/3 cutoff of N=16
    f = F.from_function(grid16, lambda x, y, t: np.exp(1j * TWO_PI * 5 * x), slab=True)
    assert F.sup_norm(f * f) <= 1e-12
    raw = F.product(f, f, dealias=False)
    assert F.sup_norm(raw) == pytest.approx(1.0)


def test_arithmetic(grid16, rng):
    f = F.random_field(grid16, rng)
    h = F.random_field(grid16, rng)
    assert F.l2_norm(F.axpy(2.0, f, h) - (f * 2.0 + h)) == 0.0
    assert F.l2_norm(F.scale(f, 3.0) - 3.0 * f) == 0.0


def test_gamma_fixed_implies_X_invariant(grid32):
    f = F.pullback_circle(grid32, F.CircleFunction.cos(3))
    assert F.l2_norm(F.pullback_flow_X(f, 1.0) - f) <= 1e-12
    assert F.l2_norm(F.deriv_X(f)) <= 1e-10


def test_seam_twice_is_identity(grid16, rng):
    f = F.random_field(grid16, rng)
    I, J = grid16.perm
    Fi, Fj = grid16.perm_fwd
    s0 = f.data[:, :, 0]
    assert np.array_equal(s0[I, J][Fi, Fj], s0)


def test_circle_parse():
    assert F.CircleFunction.parse("cos2pi3t") == F.CircleFunction.cos(3)
    assert F.CircleFunction.parse("sin:2") == F.CircleFunction.sin(2)
    assert F.CircleFunction.parse("1") == F.CircleFunction.const(1.0)
    assert F.CircleFunction.parse("0").is_zero()


def test_random_field_resolved(grid64, rng):
    sf = F.random_smooth_field(grid64.gluing, rng, F.default_max_mode(64))
    assert sf.max_mode() <= F.default_max_mode(64)
    f = sf.sample(grid64)
    assert f.seam_defect <= 1e-10 * F.sup_norm(f)
