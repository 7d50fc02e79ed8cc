import csv
import io
import math
import struct

import numpy as np
import pytest

from hypertorus import field as F
from hypertorus import forms as W
from hypertorus import serialize as S


@pytest.fixture
def grid8(cat):
    return F.make_grid(cat, 8, 8, 4)


def test_field_round_trip_complex128(grid16, rng, tmp_path):
    f = F.random_field(grid16, rng)
    path = tmp_path / "f.bin"
    S.save_field(path, f, "complex128")
    g = S.load_field(path)
    assert np.array_equal(g.data, f.data)
    assert g.grid.same_as(f.grid) and g.slab == f.slab
    assert g.seam_defect == f.seam_defect


def test_field_round_trip_complex64(grid16, rng):
    f = F.random_field(grid16, rng)
    g = S.field_from_bytes(S.field_to_bytes(f))
    assert np.max(np.abs(g.data - f.data)) <= 1e-6 * np.max(np.abs(f.data))
    assert np.array_equal(g.data, f.data.astype(np.complex64).astype(np.complex128))


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_form_round_trip(grid16, rng, degree):
    w = W.random_form(grid16, degree, rng)
    v = S.form_from_bytes(S.form_to_bytes(w, "complex128"))
    assert v.degree == degree
    assert W.form_norm(v - w) == 0


def test_slab_flag_and_unknown_seam(grid8):
    f = F.from_function(grid8, lambda x, y, t: np.exp(2j * np.pi * x), slab=True)
    g = S.field_from_bytes(S.field_to_bytes(f))
    assert g.slab
    u = F.ScalarField(grid8, np.ones(grid8.shape))
    assert S.field_from_bytes(S.field_to_bytes(u)).seam_defect is None
    head = struct.unpack_from("<4sHBBb3xII4qId", S.field_to_bytes(u))
    assert math.isnan(head[-1])


def test_header_contents(grid8):
    buf = S.field_to_bytes(F.constant(grid8, 1.0), "complex128")
    magic, ver, code, slab, deg, N, Nt, *A, fd, seam = struct.unpack_from("<4sHBBb3xII4qId", buf)
    assert (magic, ver, code, slab, deg, N, Nt, fd) == (b"HTF1", 1, 2, 0, -1, 8, 8, 4)
    assert A == [2, 1, 1, 1] and seam == 0.0
    assert len(buf) == struct.calcsize("<4sHBBb3xII4qId") + 16 * 8 ** 3


def test_field_decodes_as_zero_form(grid8):
    w = S.form_from_bytes(S.field_to_bytes(F.constant(grid8, 2.0)))
    assert w.degree == 0 and np.all(w.coeffs[0].data == 2.0)


def test_form_is_not_field(grid8):
    with pytest.raises(S.FormatError):
        S.field_from_bytes(S.form_to_bytes(W.alpha(grid8)))


def test_rejects_corrupt(grid8):
    buf = S.field_to_bytes(F.constant(grid8))
    with pytest.raises(S.FormatError, match="magic"):
        S.field_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(S.FormatError, match="truncated"):
        S.field_from_bytes(buf[:10])
    with pytest.raises(S.FormatError, match="expected"):
        S.field_from_bytes(buf[:-1])
    bad_ver = bytearray(buf)
    bad_ver[4] = 9
    with pytest.raises(S.FormatError, match="version"):
        S.field_from_bytes(bytes(bad_ver))
    bad_code = bytearray(buf)
    bad_code[6] = 7
    with pytest.raises(S.FormatError, match="dtype"):
        S.field_from_bytes(bytes(bad_code))
    bad_deg = bytearray(buf)
    bad_deg[8] = 5
    with pytest.raises(S.FormatError, match="degree"):
        S.form_from_bytes(bytes(bad_deg))
    with pytest.raises(ValueError):
        S.field_to_bytes(F.constant(grid8), "float32")


def test_rejects_bad_matrix(grid8):
    buf = bytearray(S.field_to_bytes(F.constant(grid8)))
    struct.pack_into("<4q", buf, 20, 1, 0, 0, 1)
    with pytest.raises(ValueError):
        S.field_from_bytes(bytes(buf))


def test_csv(grid8, rng):
    f = F.random_field(grid8, rng)
    rows = list(csv.reader(io.StringIO(S.field_to_csv(f))))
    assert rows[0] == ["i", "j", "l", "re", "im"]
    assert len(rows) == 1 + 8 ** 3
    i, j, l, re, im = rows[5]
    assert complex(float(re), float(im)) == f.data[int(i), int(j), int(l)]
    w = W.random_form(grid8, 1, rng)
    rows = list(csv.reader(io.StringIO(S.form_to_csv(w))))
    assert rows[0][0] == "monomial"
    assert len(rows) == 1 + 3 * 8 ** 3
    assert {r[0] for r in rows[1:]} == {W.monomial_name(m) for m in W.MONOMIALS[1]}
