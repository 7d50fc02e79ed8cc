import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hypertorus import field as F
from hypertorus import serialize
from hypertorus.gluing import build_gluing


def run(*args, cwd=None):
    p = subprocess.run([sys.executable if sys.executable.endswith("python3") else "python3",
                        "-m", "hypertorus.cli", *args], capture_output=True, text=True, cwd=cwd)
    doc = None
    if p.returncode in (0, 2, 3) and p.stdout.strip():
        doc = json.loads(p.stdout)
    return p.returncode, doc, p.stderr


SMALL = ["--grid", "32", "--tslices", "32"]


def test_verify_structure():
    code, doc, _ = run("verify", "--suite", "structure", *SMALL)
    assert code == 0
    assert doc["schema_version"] == 1 and doc["command"] == "verify" and doc["passed"] is True
    assert doc["inputs"]["N"] == 32 and doc["inputs"]["matrix"] == [2, 1, 1, 1]
    assert "timings" in doc
    names = [c["name"] for c in doc["suites"][0]["checks"]]
    assert "[X,Y]f" in names and "dalpha" in names


def test_verify_lemma_low_order():
    code, doc, _ = run("verify", "--suite", "lemma", "--fd-order", "2", *SMALL)
    assert code == 0
    assert doc["inputs"]["fd_order"] == 2


@pytest.mark.parametrize("flag", ["--paper-sign", "--exact-average"])
def test_verify_averaging_variants(flag):
    code, doc, _ = run("verify", "--suite", "averaging", flag, *SMALL, "--no-timings")
    assert code == 0
    assert "timings" not in doc


@pytest.mark.parametrize("args", [
    ["verify", "--grid", "16"],
    ["verify", "--grid", "48"],
    ["verify", "--tslices", "512"],
    ["verify", "--matrix", "1,1,0,1"],
    ["verify", "--matrix", "2,1,1"],
    ["verify", "--fd-order", "3"],
    ["verify", "--suite", "nope"],
    ["verify", "--threads", "0"],
    ["verify", "--quad-order", "1"],
    ["verify", "--grid", "abc"],
    ["frobnicate"],
    [],
    ["probe", "--target", "h4"],
    ["probe", "--target", "h1", "--levels", "32,16"],
    ["probe", "--target", "h1", "--phi", "tan:1"],
    ["probe", "--target", "exact-control", "--control-degree", "3"],
    ["orbit", "--S", "0"],
    ["orbit", "--K", "-1"],
    ["orbit", "--x0", "0.1,0.2"],
    ["primitive", "--input", "/nonexistent/field.bin"],
])
def test_config_errors(args):
    code, _, err = run(*args)
    assert code == 1


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("grid = 32\ncolour = blue\n")
    code, _, err = run("orbit", "--config", str(cfg))
    assert code == 1 and "colour" in err


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# orbit settings\nseed = 3\nK = 1\nS = 5\nno-timings = yes\n")
    code, doc, _ = run("orbit", "--config", str(cfg), "--K", "2")
    assert code == 0
    assert doc["inputs"]["seed"] == 3
    assert doc["report"]["K"] == 2 and doc["report"]["S"] == 5.0
    assert "timings" not in doc


def test_probe_h1():
    code, doc, _ = run("probe", "--target", "h1", "--phi", "sin:2", "--levels", "16,32")
    assert code == 0
    assert doc["report"]["verdict"] == "OBSTRUCTED" and doc["expected"] == "OBSTRUCTED"


def test_probe_h2():
    code, doc, _ = run("probe", "--target", "h2", "--levels", "16,32")
    assert code == 0 and doc["report"]["verdict"] == "OBSTRUCTED"


def test_probe_exact_control():
    code, doc, _ = run("probe", "--target", "exact-control", "--levels", "16,32")
    assert code == 0
    assert doc["report"]["verdict"] == "EXACT-LIKE"
    assert doc["report"]["levels"][-1]["residual"] <= 1e-6


def test_probe_unexpected_verdict_exit():
    code, doc, _ = run("probe", "--target", "exact-control", "--levels", "16", "--max-iter", "2")
    assert code == 3 and doc["report"]["verdict"] == "INCONCLUSIVE"


def test_primitive_analytic():
    code, doc, _ = run("primitive", "--phi", "sin:1")
    assert code == 0
    assert doc["analytic_error"] <= 1e-8
    assert doc["report"]["residual"] <= 1e-6


def test_primitive_from_file(tmp_path):
    grid = F.make_grid(build_gluing([[2, 1], [1, 1]]), 32, 32)
    src = tmp_path / "const.bin"
    serialize.save_field(src, F.constant(grid, 2.5), "complex128")
    om = tmp_path / "omega.bin"
    code, doc, _ = run("primitive", "--input", str(src), "--omega-out", str(om))
    assert code == 0
    assert doc["c"] == [2.5, 0.0]
    assert all(v == 0 for v in doc["omega_norms"].values())
    w = serialize.load_form(om)
    assert w.degree == 2 and w.grid.N == 32


def test_primitive_random_file_blend(tmp_path):
    grid = F.make_grid(build_gluing([[2, 1], [1, 1]]), 32, 32)
    src = tmp_path / "f.bin"
    serialize.save_field(src, F.random_field(grid, np.random.default_rng(4)), "complex128")
    code, doc, _ = run("primitive", "--input", str(src), "--split", "blend")
    assert code == 0 and doc["report"]["split"] == "blend"


def test_primitive_rejects_slab_and_garbage(tmp_path):
    grid = F.make_grid(build_gluing([[2, 1], [1, 1]]), 16, 16)
    slab = tmp_path / "slab.bin"
    serialize.save_field(slab, F.from_function(grid, lambda x, y, t: np.exp(2j * np.pi * x), slab=True))
    assert run("primitive", "--input", str(slab))[0] == 1
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not a field")
    assert run("primitive", "--input", str(junk))[0] == 1


def test_orbit_envelope():
    # |W_k(S)| <= 1 / (M sin(pi f / spu)) ~ 1 / (pi f S) for the smallest |f| with |k| <= 3
    g = build_gluing([[2, 1], [1, 1]])
    lt = g.lam ** 0.1
    fmin = min(abs(k1 + g.a * k2) * lt for k1 in range(-3, 4) for k2 in range(-3, 4) if (k1, k2) != (0, 0))
    for S in (50, 400):
        code, doc, _ = run("orbit", "--S", str(S), "--K", "3", "--x0", "0.2,0.3,0.1")
        assert code == 0
        M = doc["report"]["samples"]
        bound = 1.0 / (M * np.sin(np.pi * fmin / 64))
        assert doc["report"]["max_weyl"] <= bound
    assert bound < 0.2 * (1.0 / (np.pi * fmin * 50))


def test_orbit_empty():
    code, doc, _ = run("orbit", "--K", "0", "--S", "3")
    assert code == 0
    assert doc["report"]["weyl"] == {} and doc["report"]["worst_mode"] is None


def test_out_writes_json_and_csv(tmp_path):
    out = tmp_path / "sub" / "orbit.json"
    code, doc, _ = run("orbit", "--K", "1", "--S", "4", "--out", str(out))
    assert code == 0 and doc is None
    doc = json.loads(out.read_text())
    assert doc["command"] == "orbit"
    rows = list(csv.reader(out.with_suffix(".csv").open()))
    assert rows[0] == ["k1", "k2", "weyl"] and len(rows) == 9


def test_seed_changes_default_base_point():
    a = run("orbit", "--K", "1", "--S", "2", "--seed", "1")[1]["report"]["base_point"]
    b = run("orbit", "--K", "1", "--S", "2", "--seed", "2")[1]["report"]["base_point"]
    assert a != b
