from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from overdet_lab.cli import main
from overdet_lab.config import OUTPUT_ENV, ConfigError, eval_number, parse_config, parse_domain_spec
from overdet_lab.geometry import read_mesh

SMALL_POINCARE = """\
[experiment]
kind = poincare_constants
output = small

[domain]
type = fourier
base_radius = 1.0

[mesh]
h = {h}

[sweep]
alpha = {alpha}
quantities = scalar, trace
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_config_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "empty.ini", "")
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 2
    assert "missing required field [experiment] kind" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_missing_config_file_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == 2


def test_error_messages_point_at_lines():
    text = "[experiment]\nkind = poincare_constants\n\n[domain]\ntype = fourier\n\n[mesh]\nh = -0.1\n[sweep]\nalpha = 0\n"
    with pytest.raises(ConfigError, match=r"cfg\.ini:8: \[mesh\] h"):
        parse_config(text, "cfg.ini")
    with pytest.raises(ConfigError, match=r":2: \[experiment\] kind: unknown kind"):
        parse_config("[experiment]\nkind = nonsense\n", "x.ini")
    with pytest.raises(ConfigError, match=r":5: \[domain\] type"):
        parse_config("[experiment]\nkind = poincare_constants\n[domain]\n\ntype = blob\n[mesh]\nh=0.1\n[sweep]\nalpha=0\n", "y.ini")
    with pytest.raises(ConfigError, match="not a number"):
        cfg = parse_config(SMALL_POINCARE.format(h=0.1, alpha="0, x"), "z.ini")
        cfg.get_list("alpha")


def test_number_expressions():
    assert eval_number("pi/2") == pytest.approx(1.5707963267948966)
    assert eval_number("2pi/3") == pytest.approx(2.0943951023931953)
    assert eval_number("2*pi/3") == eval_number("2pi/3")
    with pytest.raises(ValueError):
        eval_number("__import__('os')")


def test_domain_spec():
    table, h = parse_domain_spec("fourier:cos=0;0;0.1,h=0.05")
    assert table["type"] == "fourier" and table["cos"] == "0,0,0.1" and h == 0.05
    with pytest.raises(ConfigError):
        parse_domain_spec("fourier:cos=0")
    with pytest.raises(ConfigError):
        parse_domain_spec("blob:h=0.1")


def test_run_is_deterministic_and_schema_matches(tmp_path):
    cfg = _write(tmp_path, "p.ini", SMALL_POINCARE.format(h=0.1, alpha="0, 0.2"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "-o", str(a)]) == 0
    assert main(["run", str(cfg), "-o", str(b)]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert Path("results.csv") in files and Path("schema.json") in files
    assert any(f.suffix == ".svg" for f in files)
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    header = next(csv.reader(open(a / "results.csv")))
    schema = json.loads((a / "schema.json").read_text())
    assert header == [c["name"] for c in schema["columns"]]
    assert "status" in header


def test_compare_identical_and_mismatch(tmp_path, capsys):
    cfg = _write(tmp_path, "p.ini", SMALL_POINCARE.format(h=0.1, alpha="0, 0.2"))
    other = _write(tmp_path, "q.ini", SMALL_POINCARE.format(h=0.1, alpha="0, 0.3"))
    for name, c in (("a", cfg), ("b", cfg), ("c", other)):
        assert main(["run", str(c), "-o", str(tmp_path / name)]) == 0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b"), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["flags"] == [] and all(d["rel_diff"] == 0.0 for d in rep["diffs"])
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "c")]) == 2
    assert "mismatch" in capsys.readouterr().err


def test_compare_kind_mismatch(tmp_path):
    cfg = _write(tmp_path, "p.ini", SMALL_POINCARE.format(h=0.1, alpha="0"))
    ident = _write(tmp_path, "i.ini", "[experiment]\nkind = identity_checks\n[domain]\ntype = ellipse\n"
                                      "a = 1.2\nb = 0.8\n[mesh]\nh = 0.1\n[sweep]\nn_radii = 3\n")
    assert main(["run", str(cfg), "-o", str(tmp_path / "a")]) == 0
    assert main(["run", str(ident), "-o", str(tmp_path / "b")]) == 0
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 2


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "root"))
    cfg = _write(tmp_path, "p.ini", SMALL_POINCARE.format(h=0.1, alpha="0"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "root" / "small" / "results.csv").exists()


def test_mesh_subcommand(tmp_path):
    out = tmp_path / "m" / "tref.npz"
    assert main(["mesh", "fourier:cos=0;0;0.1,h=0.1", "-o", str(out)]) == 0
    mesh = read_mesh(out)
    assert mesh.n_vertices > 100
    assert main(["mesh", "fourier:cos=0;0;0.1", "-o", str(out)]) == 2
