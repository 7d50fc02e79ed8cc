"""Command-line entry point: ``python3 -m hypertorus.cli <command> [options]``.

Exit codes: 0 success or expected verdict, 1 usage/config error, 2 identity
failure, 3 unexpected probe verdict or failed evidence suite.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _fft
from . import cohomology as C
from . import field as F
from . import serialize
from . import suites as S
from .averaging import QuadratureSpec
from .forms import MONOMIALS, monomial_name
from .gluing import GluingError, parse_matrix
from .orbits import orbit_discrepancy

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_IDENTITY, EXIT_VERDICT = 0, 1, 2, 3

DEFAULTS = {
    "matrix": "2,1,1,1",
    "grid": 64,
    "tslices": 64,
    "fd_order": 8,
    "quad_order": 16,
    "quad_panels": None,
    "seed": 0,
    "out": None,
    "suite": "identities",
    "paper_sign": False,
    "no_timings": False,
    "threads": 1,
    "exact_average": False,
}
BOOL_KEYS = {"paper_sign", "no_timings", "exact_average"}
INT_KEYS = {"grid", "tslices", "fd_order", "quad_order", "quad_panels", "seed", "threads",
            "max_iter", "K", "samples_per_unit", "control_degree"}
FLOAT_KEYS = {"S"}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------- config file

def read_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; keys use '-' or '_' interchangeably."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in BOOL_KEYS:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if key in INT_KEYS:
            return None if value.lower() in ("none", "auto") else int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def merge_config(args: argparse.Namespace, known: set[str]) -> dict:
    """Flags win over the config file, which wins over built-in defaults."""
    file_vals = read_config_file(args.config) if args.config else {}
    for k in file_vals:
        if k not in known:
            raise ConfigError(f"unknown config key {k!r}")
    merged = {}
    for k in known:
        flag = getattr(args, k, None)
        if k in BOOL_KEYS and flag is False:
            flag = None
        if flag is not None:
            merged[k] = flag
        elif k in file_vals:
            merged[k] = _coerce(k, file_vals[k])
        else:
            merged[k] = DEFAULTS.get(k)
    return merged


def _power_of_two(name: str, v: int) -> int:
    if not isinstance(v, int) or v < 8 or v > 256 or v & (v - 1):
        raise ConfigError(f"{name} must be a power of two between 8 and 256, got {v}")
    return v


def suite_config(c: dict) -> S.SuiteConfig:
    try:
        g = parse_matrix(str(c["matrix"]))
    except GluingError as exc:
        raise ConfigError(f"bad matrix: {exc}") from exc
    N = _power_of_two("grid", c["grid"])
    Nt = _power_of_two("tslices", c["tslices"])
    p = c["fd_order"]
    if p not in S.FD_TOL_64:
        raise ConfigError(f"fd-order must be an even number from 2 to 12, got {p}")
    if c["threads"] is None or c["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    try:
        q = QuadratureSpec(c["quad_order"], c["quad_panels"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return S.SuiteConfig(gluing=g, N=N, Nt=Nt, fd_order=p, quad=q, seed=int(c["seed"]),
                         paper_sign=bool(c["paper_sign"]), exact_average=bool(c["exact_average"]))


# ------------------------------------------------------------------ output

def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, (complex, np.complexfloating)):
        return [_clean(x.real), _clean(x.imag)]
    return x


def emit(doc: dict, rows: list, header: list[str], out: str | None) -> None:
    text = json.dumps(_clean(doc), indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_clean(v) for v in r])
    path.with_suffix(".csv").write_text(buf.getvalue())


def _doc(command: str, cfg: S.SuiteConfig, timings: bool, seconds: float, **body) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "inputs": cfg.inputs()}
    doc.update(body)
    if timings:
        doc["timings"] = {"seconds": seconds, "threads": _fft.get_threads()}
    return doc


# ---------------------------------------------------------------- commands

MIN_VERIFY_GRID = 32


def cmd_verify(c: dict, cfg: S.SuiteConfig) -> int:
    if cfg.N < MIN_VERIFY_GRID:
        # below this no packet fits the resolved band and random fields collapse to p*(phi)
        raise ConfigError(f"verify needs grid >= {MIN_VERIFY_GRID}, got {cfg.N}")
    try:
        names = S.resolve_suites(c["suite"])
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    t0 = time.perf_counter()
    reports = S.run_suites(names, cfg)
    timings = not c["no_timings"]
    passed = all(r.passed for r in reports)
    doc = _doc("verify", cfg, timings, time.perf_counter() - t0, suite=c["suite"], passed=passed,
               suites=[r.to_dict(timings) for r in reports])
    rows = [row for r in reports for row in r.csv_rows()]
    emit(doc, rows, ["suite", "check", "value", "bound", "relation", "passed"], c["out"])
    if passed:
        return EXIT_OK
    if any(not r.passed and r.grade != C.EVIDENCE for r in reports):
        return EXIT_IDENTITY
    return EXIT_VERDICT


def _levels(text, cfg: S.SuiteConfig) -> tuple[int, ...]:
    if text is None:
        return cfg.probe_levels
    try:
        lv = tuple(int(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"bad levels {text!r}") from exc
    for v in lv:
        _power_of_two("probe level", v)
    if list(lv) != sorted(set(lv)):
        raise ConfigError("probe levels must be strictly increasing")
    return lv


EXPECTED = {"h1": C.OBSTRUCTED, "h2": C.OBSTRUCTED, "exact-control": C.EXACT_LIKE}


def cmd_probe(c: dict, cfg: S.SuiteConfig) -> int:
    target = c["target"]
    if target not in EXPECTED:
        raise ConfigError(f"unknown probe target {target!r}; choose from {sorted(EXPECTED)}")
    levels = _levels(c.get("levels"), cfg)
    budget = C.ProbeBudget(max_iter=c.get("max_iter") or C.ProbeBudget().max_iter)
    detail = {"target": target}
    if target == "exact-control":
        deg = c.get("control_degree") or 0
        if deg not in (0, 1, 2):
            raise ConfigError("control-degree must be 0, 1 or 2")
        src = C.random_control_source(cfg.gluing, cfg.rng(100), deg)
        build = C.exact_control_target(src, deg)
        detail["control_degree"] = deg
    else:
        try:
            phi = F.CircleFunction.parse(c.get("phi") or "cos:1")
        except ValueError as exc:
            raise ConfigError(f"bad phi: {exc}") from exc
        build = C.h1_target(phi) if target == "h1" else C.h2_target(phi)
        detail["phi"] = c.get("phi") or "cos:1"
    t0 = time.perf_counter()
    rep = C.exactness_probe(build, levels, gluing=cfg.gluing, fd_order=cfg.fd_order, budget=budget)
    expected = EXPECTED[target]
    doc = _doc("probe", cfg, not c["no_timings"], time.perf_counter() - t0, **detail,
               expected=expected, report=rep.to_dict())
    emit(doc, rep.csv_rows(), ["level", "N", "residual"], c["out"])
    return EXIT_OK if rep.verdict == expected else EXIT_VERDICT


def cmd_primitive(c: dict, cfg: S.SuiteConfig) -> int:
    grid = cfg.grid
    phi = None
    if c.get("input"):
        try:
            f = serialize.load_field(c["input"])
        except (OSError, serialize.FormatError) as exc:
            raise ConfigError(f"cannot load field: {exc}") from exc
        if f.slab:
            raise ConfigError("the H^3 primitive needs a quotient field; input is a slab field")
        grid = f.grid
    else:
        try:
            phi = F.CircleFunction.parse(c.get("phi") or "sin:1")
        except ValueError as exc:
            raise ConfigError(f"bad phi: {exc}") from exc
        f = F.pullback_circle(grid, phi)
    t0 = time.perf_counter()
    try:
        const, omega, rep = C.h3_primitive(f, split=c.get("split") or "max")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    body = {"c": const, "report": rep.to_dict(),
            "omega_norms": {monomial_name(m): F.l2_norm(c) for m, c in zip(MONOMIALS[2], omega.coeffs)}}
    if phi is not None:
        ana = C.circle_primitive(phi, grid.t, grid.gluing.log_lam)
        err = float(np.max(np.abs(omega.coeff("alpha^beta").data - ana[None, None, :])))
        err = max(err, F.sup_norm(omega.coeff("beta^theta")), F.sup_norm(omega.coeff("alpha^theta")))
        body["analytic_error"] = err
        body["phi"] = c.get("phi") or "sin:1"
    if c.get("omega_out"):
        serialize.save_form(c["omega_out"], omega, "complex128")
    doc = _doc("primitive", cfg, not c["no_timings"], time.perf_counter() - t0, **body)
    rows = [("residual", rep.residual), ("c_re", const.real), ("c_im", const.imag)]
    emit(doc, rows, ["quantity", "value"], c["out"])
    return EXIT_OK if rep.residual <= 1e-6 else EXIT_IDENTITY


def cmd_orbit(c: dict, cfg: S.SuiteConfig) -> int:
    K = c.get("K")
    K = 3 if K is None else K
    if K < 0:
        raise ConfigError("K must be >= 0")
    Ssum = 100.0 if c.get("S") is None else c["S"]
    if not Ssum > 0:
        raise ConfigError("S must be positive")
    if c.get("x0"):
        try:
            x0 = tuple(float(v) for v in c["x0"].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad x0 {c['x0']!r}") from exc
        if len(x0) != 3:
            raise ConfigError("x0 needs three comma-separated numbers")
    else:
        x0 = tuple(float(v) for v in cfg.rng(200).random(3))
    spu = 64 if c.get("samples_per_unit") is None else c["samples_per_unit"]
    if spu < 1:
        raise ConfigError("samples-per-unit must be >= 1")
    t0 = time.perf_counter()
    rep = orbit_discrepancy(cfg.gluing, x0, Ssum, K, spu)
    doc = _doc("orbit", cfg, not c["no_timings"], time.perf_counter() - t0, report=rep.to_dict())
    rows = [(k[0], k[1], v) for k, v in sorted(rep.weyl.items())]
    emit(doc, rows, ["k1", "k2", "weyl"], c["out"])
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "probe": cmd_probe, "primitive": cmd_primitive, "orbit": cmd_orbit}


# ------------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--matrix", help="A row-major as a,b,c,d (default 2,1,1,1)")
    p.add_argument("--grid", type=int, help="spatial resolution N (power of two, 8..256)")
    p.add_argument("--tslices", type=int, help="number of t-slices Nt (power of two, 8..256)")
    p.add_argument("--fd-order", dest="fd_order", type=int, help="finite-difference order in t (2..12)")
    p.add_argument("--quad-order", dest="quad_order", type=int, help="Gauss-Legendre nodes per panel")
    p.add_argument("--quad-panels", dest="quad_panels", type=int, help="panels on [0,1] (default scales with N)")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--out", help="JSON report path; CSV goes next to it")
    p.add_argument("--paper-sign", dest="paper_sign", action="store_true", default=False,
                   help="use the anticommuting (-1)^degree sign for I")
    p.add_argument("--no-timings", dest="no_timings", action="store_true", default=False,
                   help="omit timings so reports are byte-reproducible")
    p.add_argument("--threads", type=int, help="FFT worker cap")
    p.add_argument("--exact-average", dest="exact_average", action="store_true", default=False,
                   help="closed-form per-mode I instead of quadrature")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypertorus", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run identity and evidence suites")
    _common(v)
    v.add_argument("--suite", help=f"suite or group: {', '.join(list(S.SUITES) + list(S.GROUPS))}")
    p = sub.add_parser("probe", help="exactness probe on a generator or exact control")
    _common(p)
    p.add_argument("--target", required=True, help="h1, h2 or exact-control")
    p.add_argument("--phi", help="circle function: 1, cos:k, sin:k")
    p.add_argument("--levels", help="comma-separated N levels (default 16,32,64)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="CGLS iteration budget per level")
    p.add_argument("--control-degree", dest="control_degree", type=int, help="degree of the control source")
    q = sub.add_parser("primitive", help="H^3 primitive of a field file or of p*(phi)")
    _common(q)
    q.add_argument("--input", help="field file in the binary layout")
    q.add_argument("--phi", help="use p*(phi) instead of a file (default sin:1)")
    q.add_argument("--split", choices=("max", "blend"), help="per-mode symbol choice")
    q.add_argument("--omega-out", dest="omega_out", help="write the primitive as a form file")
    o = sub.add_parser("orbit", help="Weyl sums along an X-orbit")
    _common(o)
    o.add_argument("--S", dest="S", type=float, help="orbit length")
    o.add_argument("--K", dest="K", type=int, help="mode cutoff")
    o.add_argument("--x0", help="base point x,y,t (default seeded random)")
    o.add_argument("--samples-per-unit", dest="samples_per_unit", type=int)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    known = set(DEFAULTS) | {k for k in vars(args) if k not in ("command", "config")}
    try:
        c = merge_config(args, known)
        cfg = suite_config(c)
        with _fft.threads(c["threads"]):
            return COMMANDS[args.command](c, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
