"""Flat binary layout for fields and forms, plus CSV export for small grids.

Layout (little-endian):
    magic    4s   b"HTF1"
    version  u16
    dtype    u8   1 = complex64, 2 = complex128
    slab     u8
    degree   i8   -1 for a bare scalar field, 0..3 for a form
    pad      3x
    N, Nt    u32, u32
    matrix   4 x i64 (row-major A)
    fd_order u32
    seam     f64  largest stored seam defect over the coefficients (NaN if unknown)
followed by one row-major (N, N, Nt) sample block per coefficient.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from pathlib import Path

import numpy as np

from . import field as F
from .field import Grid, ScalarField
from .forms import MONOMIALS, FrameForm, monomial_name
from .gluing import build_gluing

MAGIC = b"HTF1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBb3xII4qId")
_DTYPES = {1: np.dtype("<c8"), 2: np.dtype("<c16")}
_CODES = {"complex64": 1, "complex128": 2}


class FormatError(ValueError):
    pass


def _pack(grid: Grid, degree: int, slab: bool, seam: float, blocks, dtype: str) -> bytes:
    if dtype not in _CODES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    code = _CODES[dtype]
    A = grid.gluing.A
    head = _HEADER.pack(MAGIC, VERSION, code, int(slab), degree, grid.N, grid.Nt,
                        int(A[0][0]), int(A[0][1]), int(A[1][0]), int(A[1][1]),
                        grid.fd_order, float(seam))
    body = b"".join(np.ascontiguousarray(b, dtype=_DTYPES[code]).tobytes() for b in blocks)
    return head + body


def _seam(fields) -> float:
    ds = [f.seam_defect for f in fields]
    if not ds or any(d is None for d in ds):
        return math.nan
    return max(ds)


def field_to_bytes(f: ScalarField, dtype: str = "complex64") -> bytes:
    return _pack(f.grid, -1, f.slab, _seam([f]), [f.data], dtype)


def form_to_bytes(w: FrameForm, dtype: str = "complex64") -> bytes:
    return _pack(w.grid, w.degree, w.slab, _seam(w.coeffs), [c.data for c in w.coeffs], dtype)


def _unpack(buf: bytes):
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    (magic, version, code, slab, degree, N, Nt, a11, a12, a21, a22,
     fd_order, seam) = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError("bad magic")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    if degree < -1 or degree > 3:
        raise FormatError(f"bad degree tag {degree}")
    n_blocks = 1 if degree < 0 else len(MONOMIALS[degree])
    dt = _DTYPES[code]
    size = N * N * Nt
    need = _HEADER.size + n_blocks * size * dt.itemsize
    if len(buf) != need:
        raise FormatError(f"expected {need} bytes, got {len(buf)}")
    grid = F.make_grid(build_gluing([[a11, a12], [a21, a22]]), N, Nt, fd_order)
    blocks = []
    off = _HEADER.size
    for _ in range(n_blocks):
        arr = np.frombuffer(buf, dtype=dt, count=size, offset=off).reshape(N, N, Nt)
        blocks.append(arr.astype(np.complex128))
        off += size * dt.itemsize
    return grid, degree, bool(slab), (None if math.isnan(seam) else seam), blocks


def field_from_bytes(buf: bytes) -> ScalarField:
    grid, degree, slab, seam, blocks = _unpack(buf)
    if degree != -1:
        raise FormatError("payload is a form, not a scalar field")
    return F.ScalarField(grid, blocks[0], slab=slab, seam_defect=seam)


def form_from_bytes(buf: bytes) -> FrameForm:
    """Decode a form; a bare scalar field decodes as a 0-form."""
    grid, degree, slab, seam, blocks = _unpack(buf)
    return FrameForm(grid, max(degree, 0), [F.ScalarField(grid, b, slab=slab, seam_defect=seam) for b in blocks])


def save_field(path, f: ScalarField, dtype: str = "complex64") -> None:
    Path(path).write_bytes(field_to_bytes(f, dtype))


def load_field(path) -> ScalarField:
    return field_from_bytes(Path(path).read_bytes())


def save_form(path, w: FrameForm, dtype: str = "complex64") -> None:
    Path(path).write_bytes(form_to_bytes(w, dtype))


def load_form(path) -> FrameForm:
    return form_from_bytes(Path(path).read_bytes())


def field_to_csv(f: ScalarField) -> str:
    """Rows i,j,l,re,im in row-major order; meant for small debugging grids."""
    out = io.StringIO()
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(["i", "j", "l", "re", "im"])
    for (i, j, l), v in np.ndenumerate(f.data):
        wr.writerow([i, j, l, repr(float(v.real)), repr(float(v.imag))])
    return out.getvalue()


def form_to_csv(w: FrameForm) -> str:
    out = io.StringIO()
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(["monomial", "i", "j", "l", "re", "im"])
    for m, c in zip(MONOMIALS[w.degree], w.coeffs):
        name = monomial_name(m)
        for (i, j, l), v in np.ndenumerate(c.data):
            wr.writerow([name, i, j, l, repr(float(v.real)), repr(float(v.imag))])
    return out.getvalue()
