import json
import os
import subprocess
import sys

import numpy as np
import pytest

from surfdom import io
from surfdom.cli import EXIT_DATA, EXIT_USAGE, main
from surfdom.harmonic import identity_init, solve_any, solve_harmonic
from surfdom.surface import RelatorViolation, axis_rep

J = "fn:2,2.2,1.8/0.1,-0.2,0.3"


def test_rep_round_trip(tmp_path, ref_rep):
    p = tmp_path / "j.rep"
    io.write_rep(p, ref_rep, comment="reference")
    back = io.read_rep(p)
    for a, b in zip(ref_rep.images, back.images):
        np.testing.assert_allclose(a.m, b.m, atol=1e-15)


def test_rep_parse_errors_carry_line(tmp_path, ref_rep):
    p = tmp_path / "j.rep"
    io.write_rep(p, ref_rep)
    lines = p.read_text().splitlines()
    idx = next(k for k, l in enumerate(lines) if l.startswith("b1"))
    lines[idx] = "b1 1.0 oops 0.0 1.0"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.ParseError) as info:
        io.read_rep(p)
    assert info.value.line == idx + 1
    assert f":{idx + 1}:" in str(info.value)


def test_rep_bad_header(tmp_path):
    p = tmp_path / "x.rep"
    p.write_text("surfdom-rep 99\ngenus 2\n")
    with pytest.raises(io.ParseError) as info:
        io.read_rep(p)
    assert info.value.line == 1


def test_rep_relator_violation(tmp_path, ref_rep):
    p = tmp_path / "bad.rep"
    io.write_rep(p, ref_rep)
    text = p.read_text().splitlines()
    idx = next(k for k, l in enumerate(text) if l.startswith("a1"))
    tok = text[idx].split()
    tok[2] = repr(float(tok[2]) + 0.1)
    text[idx] = " ".join(tok)
    p.write_text("\n".join(text) + "\n")
    with pytest.raises(RelatorViolation):
        io.read_rep(p)
    assert io.read_rep(p, allow_residual=True).genus == 2


def test_mesh_round_trip(tmp_path, ref_mesh, ref_rep):
    p = tmp_path / "m.txt"
    io.write_mesh(p, ref_mesh)
    back = io.read_mesh(p)
    np.testing.assert_allclose(back.vertices, ref_mesh.vertices, atol=1e-15)
    np.testing.assert_array_equal(back.faces, ref_mesh.faces)
    assert back.pairings == ref_mesh.pairings
    e1 = solve_harmonic(ref_mesh, ref_rep, init=identity_init(ref_mesh, ref_rep))[1].total
    e2 = solve_harmonic(back, ref_rep, init=identity_init(back, ref_rep))[1].total
    assert e1 == pytest.approx(e2, rel=1e-12)


def test_mesh_parse_error_line(tmp_path, ref_mesh):
    p = tmp_path / "m.txt"
    io.write_mesh(p, ref_mesh)
    lines = p.read_text().splitlines()
    idx = lines.index(next(l for l in lines if l.startswith("[faces]"))) + 1
    lines[idx] = "0 1"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.ParseError) as info:
        io.read_mesh(p)
    assert info.value.line == idx + 1


@pytest.mark.parametrize("rho", ["plane", "line"])
def test_map_round_trip(tmp_path, ref_mesh, ref_rep, rho):
    rep = ref_rep if rho == "plane" else axis_rep(2, [0.3, -0.1, 0.2, 0.05])
    emap, _ = solve_any(ref_mesh, rep)
    p = tmp_path / "map.txt"
    io.write_map(p, emap)
    back = io.read_map(p)
    assert back.target == emap.target
    np.testing.assert_allclose(back.values, emap.values, atol=1e-12)


def test_fn_format_round_trip():
    X = io.parse_fn("2,2.2,1.8/0.1,-0.2,0.3")
    assert io.parse_fn(io.format_fn(X)).as_vector().tolist() == X.as_vector().tolist()
    with pytest.raises(ValueError):
        io.parse_fn("2,2.2,1.8")


def test_config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[experiment]\ngenus = 2\nj0 = fn:2,2,2/0,0,0\nrho = trivial\npath =\n    axis:0.1,0,0,0\n    axis:0.2,0,0,0\n")
    cfg = io.read_config(p)
    assert cfg.path == ["axis:0.1,0,0,0", "axis:0.2,0,0,0"]
    p.write_text("[experiment]\nbogus = 1\n")
    with pytest.raises(ValueError):
        io.read_config(p)
    p.write_text("[experiment]\ntarget_edge = 3\n")
    with pytest.raises(ValueError):
        io.read_config(p)


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(io.OUTPUT_ENV, str(tmp_path / "envdir"))
    assert io.output_dir() == tmp_path / "envdir"
    assert io.output_dir(tmp_path / "explicit") == tmp_path / "explicit"


def test_csv_and_json_headers(tmp_path):
    io.write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 2.5]], kind="demo")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == f"# surfdom-demo {io.FORMAT_VERSION}"
    assert lines[1] == "a,b"
    io.write_json(tmp_path / "t.json", "demo", {"x": 1.0})
    data = json.loads((tmp_path / "t.json").read_text())
    assert data["format"] == "surfdom-demo" and data["version"] == io.FORMAT_VERSION


# --- command line -----------------------------------------------------------


def _run(tmp_path, *args):
    return main(["--output-dir", str(tmp_path), *args])


def test_dominate_exit_codes(tmp_path):
    assert _run(tmp_path, "dominate", J, "trivial", "--radius", "3", "--edge", "0.3") == 0
    data = json.loads((tmp_path / "dominate.json").read_text())
    assert data["verdict"] == "StrictlyDominated"
    assert _run(tmp_path, "dominate", J, J, "--radius", "3", "--edge", "0.3") == 1
    assert json.loads((tmp_path / "dominate.json").read_text())["witness_word"]
    # rho = j against a barely scaled target: lower bound below 1, upper above 1 - 1e-3
    assert _run(tmp_path, "dominate", J, J, "--radius", "3", "--edge", "0.3", "--alpha", "1.0005") == 2
    assert json.loads((tmp_path / "dominate.json").read_text())["verdict"] == "Inconclusive"


def test_usage_and_data_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        _run(tmp_path, "dominate", J)
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        _run(tmp_path, "no-such-command")
    assert info.value.code == EXIT_USAGE
    assert _run(tmp_path, "--threads", "0", "rep-info", "trivial") == EXIT_USAGE
    assert _run(tmp_path, "rep-info", "nonsense:1") == EXIT_DATA
    bad = tmp_path / "bad.rep"
    bad.write_text("surfdom-rep 1\ngenus two\n")
    assert _run(tmp_path, "rep-info", str(bad)) == EXIT_DATA
    assert f"{bad}:2:" in capsys.readouterr().err


def test_rep_info_outputs(tmp_path, capsys):
    assert _run(tmp_path, "rep-info", J) == 0
    data = json.loads((tmp_path / "rep_info.json").read_text())
    assert data["euler_class"] in (-2, 2) and data["parabolic"] is None
    assert _run(tmp_path, "rep-info", "sigma-" + J) == 0
    assert json.loads((tmp_path / "rep_info.json").read_text())["euler_class"] == -data["euler_class"]
    assert _run(tmp_path, "rep-info", "axis:0.3,-0.1,0.2,0.05") == 0
    assert json.loads((tmp_path / "rep_info.json").read_text())["parabolic"]["boundary"]


def test_harmonic_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run(d, "harmonic", J, "fn:2.1,2.2,1.8/0.1,-0.2,0.3", "--edge", "0.4") == 0
    for name in ("mesh.txt", "map.txt", "iterations.csv", "harmonic.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    mesh = io.read_mesh(a / "mesh.txt")
    assert _run(tmp_path / "c", "harmonic", J, "trivial", "--mesh", str(a / "mesh.txt")) == 0
    assert json.loads((tmp_path / "c" / "harmonic.json").read_text())["faces"] == mesh.n_faces


def test_verify_cli(tmp_path):
    assert _run(tmp_path, "verify", "angles", "--seed", "3") == 0
    rows = (tmp_path / "verify_angles.csv").read_text().splitlines()
    assert rows[0].startswith("# surfdom-verify")
    assert all(",pass," in r for r in rows[2:])


def test_continuity_cli(tmp_path):
    path = [f"axis:{0.1 * (1 + 0.02 * k)},0.05,-0.08,0.02" for k in range(3)]
    assert _run(tmp_path, "continuity", J, *path, "--radius", "3", "--edge", "0.4") == 0
    data = json.loads((tmp_path / "continuity.json").read_text())
    assert data["steps"] == 3


def test_console_script_env_and_threads(tmp_path):
    env = dict(os.environ, SURFDOM_OUTPUT_DIR=str(tmp_path / "env-out"))
    r = subprocess.run([sys.executable, "-m", "surfdom.cli", "--threads", "1", "rep-info", "trivial"],
                       env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "env-out" / "rep_info.json").exists()
    assert "euler class      0" in r.stdout
