import math

import numpy as np
import pytest

from hypertorus.gluing import (GluingError, build_gluing, forward_permutation, grid_permutation,
                               lambda_pow, mode_orbit, parse_matrix)


def eig_oracle(A):
    """Brute-force eigen solve: (lam, a, b) from numpy's general routine."""
    w, v = np.linalg.eig(np.asarray(A, dtype=float))
    i = int(np.argmax(w.real))
    return w[i].real, v[1, i].real / v[0, i].real, v[1, 1 - i].real / v[0, 1 - i].real


@pytest.mark.parametrize("A", [[[2, 1], [1, 1]], [[1, 1], [1, 2]], [[3, 1], [2, 1]], [[5, 2], [2, 1]]])
def test_eigen_data_matches_oracle(A):
    g = build_gluing(A)
    lam, a, b = eig_oracle(A)
    assert g.lam == pytest.approx(lam, rel=1e-13)
    assert g.a == pytest.approx(a, rel=1e-12)
    assert g.b == pytest.approx(b, rel=1e-12)
    assert g.lam * (1 / g.lam) == pytest.approx(1.0, abs=1e-14)
    assert g.lam + 1 / g.lam == pytest.approx(g.trace, abs=1e-12)


def test_cat_map_values():
    g = build_gluing([[2, 1], [1, 1]])
    # roots of x^2 - 3x + 1
    assert g.lam == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-10)
    assert g.lam == pytest.approx(2.6180339887, abs=1e-10)
    assert g.a == pytest.approx(0.6180339887, abs=1e-10)
    assert g.b == pytest.approx(-1.6180339887, abs=1e-10)


def test_second_example_slope():
    g = build_gluing([[1, 1], [1, 2]])
    assert g.lam == pytest.approx(2.6180339887, abs=1e-10)
    assert g.a == pytest.approx(1.6180339887, abs=1e-10)
    assert 1 + g.a == pytest.approx(g.lam, abs=1e-12)


@pytest.mark.parametrize("A", [[[1, 0], [0, 1]], [[2, 1], [1, 2]], [[0, 1], [-1, 0]],
                               [[-2, 1], [-1, 0]], [[-3, 1], [-1, 0]]])
def test_rejects_non_hyperbolic_or_det(A):
    with pytest.raises(GluingError):
        build_gluing(A)


def test_rejects_non_integer():
    with pytest.raises(GluingError):
        build_gluing([[2.5, 1], [1, 1]])


def test_eigen_equations(cat):
    A = cat.matrix.astype(float)
    for slope, ev in ((cat.a, cat.lam), (cat.b, 1 / cat.lam)):
        v = np.array([1.0, slope])
        assert np.max(np.abs(A @ v - ev * v)) <= 1e-12


def test_lambda_pow(cat):
    assert lambda_pow(cat, 0) == 1.0
    assert lambda_pow(cat, 1) == pytest.approx(cat.lam, rel=1e-15)
    assert lambda_pow(cat, 0.5) == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-10)
    for s, t in ((0.3, 0.9), (-1.2, 2.5), (3.0, -0.25)):
        assert lambda_pow(cat, s + t) == pytest.approx(lambda_pow(cat, s) * lambda_pow(cat, t), rel=1e-13)


def test_grid_permutation_examples(cat):
    I, J = grid_permutation(cat, 1)
    assert I.tolist() == [[0]] and J.tolist() == [[0]]
    I, J = grid_permutation(cat, 2)
    # A^-1 = [[1,-1],[-1,2]]: (1,0) -> (1,-1) = (1,1) mod 2
    assert (int(I[1, 0]), int(J[1, 0])) == (1, 1)


@pytest.mark.parametrize("N", [1, 2, 3, 8, 17, 64])
def test_permutation_bijective_and_inverse(cat, N):
    I, J = grid_permutation(cat, N)
    flat = (I * N + J).ravel()
    assert sorted(flat.tolist()) == list(range(N * N))
    Fi, Fj = forward_permutation(cat, N)
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    assert np.array_equal(Fi[I, J], i) and np.array_equal(Fj[I, J], j)


def test_permutation_orbits_close(cat):
    N = 16
    I, J = grid_permutation(cat, N)
    for start in [(1, 0), (3, 5), (7, 2)]:
        p = start
        for n in range(1, 10 * N * N):
            p = (int(I[p]), int(J[p]))
            if p == start:
                break
        else:
            pytest.fail("orbit did not close")


def test_parse_matrix():
    assert parse_matrix("2,1,1,1").entries == (2, 1, 1, 1)
    with pytest.raises(GluingError):
        parse_matrix("2,1,1")
    with pytest.raises(GluingError):
        parse_matrix("2,x,1,1")


def test_mode_orbit_invertible(cat):
    orb = mode_orbit(cat, (1, 2), -3, 3)
    At = cat.matrix.T
    for n in range(-3, 3):
        assert tuple(At @ np.array(orb[n])) == orb[n + 1]


def test_volume_factor(cat):
    assert cat.volume_factor == pytest.approx(math.log(cat.lam) / math.sqrt(5), rel=1e-14)
