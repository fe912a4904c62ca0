import math
import subprocess
import sys

import numpy as np
import pytest

from magsource import cli
from magsource import quantum as q
from magsource.scaling import build_context, params_for_epsilon

SMALL = ["--px", "8x12", "--rho-max", "1.1", "--z-min", "0.5", "--z-max", "3.3"]


def _csv_rows(path):
    lines = path.read_text().splitlines()
    head = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return head, body[0].split(","), [l.split(",") for l in body[1:]]


def test_density_map_outputs(tmp_path, capsys):
    img, csv = tmp_path / "d.pgm", tmp_path / "d.csv"
    code = cli.run(["density-map", "--epsilon", "50", "--method", "quantum", *SMALL,
                    "--out", str(img), "--csv", str(csv)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("magsource density-map: epsilon=50 method=quantum N=- wall=")
    assert img.read_bytes().startswith(b"P5\n8 12\n255\n")
    head, cols, rows = _csv_rows(csv)
    assert head[0] == "# magsource v1"
    assert "# epsilon=50.0" in head and "# command: density-map" in head
    assert cols == ["rho_hat", "z_hat", "value"]
    assert len(rows) == 96
    assert "wall=" not in csv.read_text()


def test_echoed_config_reproduces_outputs(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ia, ib = tmp_path / "a.ppm", tmp_path / "b.ppm"
    assert cli.run(["current-map", "--epsilon", "12.3", "--method", "uniform", "--orbits", "30",
                    *SMALL, "--out", str(ia), "--csv", str(a)]) == 0
    text = a.read_text()
    # the header names every effective setting, so it can be fed back
    assert cli.run(["current-map", "--config", str(a), "--out", str(ib), "--csv", str(b)]) == 0
    assert b.read_text() == text.replace(str(ia), str(ib)).replace(str(a), str(b))
    assert ia.read_bytes() == ib.read_bytes()


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# profile settings\nepsilon=50\nz=3.3\nsamples=5  # few\n")
    out = tmp_path / "p.csv"
    assert cli.run(["profile", "--config", str(cfg), "--epsilon", "51.01", "--out", str(out)]) == 0
    head, _, rows = _csv_rows(out)
    assert "# epsilon=51.01" in head and "# samples=5" in head
    assert len(rows) == 5


def test_empty_file_with_flags(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("")
    out = tmp_path / "p.csv"
    assert cli.run(["profile", "--config", str(cfg), "--epsilon", "4.5", "--samples", "3",
                    "--out", str(out)]) == 0


def test_malformed_line_and_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epsilon=50\nfoo\n")
    assert cli.run(["profile", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3
    assert "bad.cfg:2" in capsys.readouterr().err
    cfg.write_text("epsilon=50\ncolour=blue\n")
    assert cli.run(["profile", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3
    assert "'colour'" in capsys.readouterr().err


def test_unknown_flag_prints_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["density-map", "--epsilon", "50", "--bogus", "1"])
    assert exc.value.code == 3
    assert "usage:" in capsys.readouterr().err


def test_threshold_exit_code(tmp_path, capsys):
    code = cli.run(["density-map", "--epsilon", "51", *SMALL, "--out", str(tmp_path / "t.pgm")])
    assert code == 2
    assert "l=25" in capsys.readouterr().err
    # orbit sums are defined on the threshold
    code = cli.run(["profile", "--epsilon", "3", "--method", "uniform", "--orbits", "50",
                    "--samples", "4", "--z", "2", "--out", str(tmp_path / "t.csv")])
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["density-map", "--epsilon", "-1", "--out", "x.pgm"],
    ["density-map", "--epsilon", "50"],
    ["density-map", "--epsilon", "50", "--px", "12by4", "--out", "x.pgm"],
    ["density-map", "--epsilon", "50", "--charge", "1e-19", "--out", "x.pgm"],
    ["density-map", "--charge", "1e-19", "--out", "x.pgm"],
    ["profile", "--epsilon", "50", "--method", "exact", "--out", "x.csv"],
    ["profile", "--epsilon", "50", "--orbits", "0", "--method", "uniform", "--out", "x.csv"],
    ["spectrum", "--eps-min", "5", "--eps-max", "2", "--out", "x.csv"],
])
def test_invalid_configs(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.run(argv) == 3


def test_physical_parameters(tmp_path):
    p = params_for_epsilon(12.3, field=2.0)
    out = tmp_path / "p.csv"
    code = cli.run(["profile", "--charge", repr(p.charge), "--mass", repr(p.mass),
                    "--field", repr(p.field), "--energy", repr(p.energy),
                    "--samples", "3", "--out", str(out)])
    assert code == 0
    head, _, _ = _csv_rows(out)
    derived = [l for l in head if l.startswith("# derived: epsilon=")]
    assert float(derived[0].split("=")[1]) == pytest.approx(12.3, rel=1e-12)
    assert build_context(p).epsilon == pytest.approx(12.3, rel=1e-12)


def test_spectrum_gaps(tmp_path):
    out = tmp_path / "j.csv"
    assert cli.run(["spectrum", "--eps-min", "1.5", "--eps-max", "9.5", "--steps", "400",
                    "--out", str(out)]) == 0
    head, cols, rows = _csv_rows(out)
    gaps = [l for l in head if l.startswith("# gap:")]
    assert [int(g.split("=")[1].split()[0]) for g in gaps] == [3, 5, 7, 9]
    assert cols == ["epsilon", "J_over_Jfree"]
    e = np.array([float(r[0]) for r in rows])
    j = np.array([float(r[1]) for r in rows])
    assert len(rows) == 400
    assert j[np.argmin(abs(e - 2.0))] == pytest.approx(q.total_current(e[np.argmin(abs(e - 2.0))]))
    # the current jumps up just above each threshold
    for g in (3, 5, 7, 9):
        below, above = j[e < g][-1], j[e > g][0]
        assert above > below


def test_caustics_csv(tmp_path):
    out = tmp_path / "c.csv"
    assert cli.run(["caustics", "--nu-max", "2", "--samples", "11", "--out", str(out)]) == 0
    _, cols, rows = _csv_rows(out)
    assert cols == ["nu", "tau", "rho_hat", "z_hat"]
    assert len(rows) == 33
    assert rows[0][2:] == ["1", "0"]
    assert float(rows[-1][3]) == pytest.approx(3 * math.pi)


def test_trajectories_csv(tmp_path):
    out = tmp_path / "t.csv"
    assert cli.run(["trajectories", "--epsilon", "50", "--rho", "0.5", "--z", "5",
                    "--orbits", "6", "--out", str(out)]) == 0
    _, cols, rows = _csv_rows(out)
    assert cols == ["nu", "kind", "tau_re", "tau_im", "maslov", "amplitude", "phase"]
    # six orbits span three intervals; the first two are dark here
    assert [r[1] for r in rows] == ["ghost", "ghost", "fast", "slow"]
    assert [int(r[4]) for r in rows[2:]] == [4, 5]
    assert float(rows[2][2]) == pytest.approx(7.0689, abs=1e-4)
    assert all(float(r[3]) < 0 for r in rows[:2])


def test_flow_map_and_flags_file(tmp_path):
    img, fl = tmp_path / "f.ppm", tmp_path / "flags.csv"
    assert cli.run(["flow-map", "--epsilon", "50", "--method", "primitive", "--orbits", "20",
                    "--px", "20x20", "--rho-max", "1.1", "--z-min", "2.5", "--z-max", "3.5",
                    "--out", str(img), "--flags-out", str(fl)]) == 0
    assert img.read_bytes().startswith(b"P6\n20 20\n255\n")
    lines = fl.read_text().splitlines()
    assert lines[1] == "rho_hat,z_hat,reason"
    assert any("caustic" in l for l in lines[2:])


def test_thread_count_does_not_change_output(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["density-map", "--epsilon", "50", "--method", "uniform", "--orbits", "20", *SMALL]
    assert cli.run(args + ["--csv", str(a), "--threads", "1"]) == 0
    monkeypatch.setenv("MAGSOURCE_THREADS", "2")
    assert cli.run(args + ["--csv", str(b)]) == 0
    strip = lambda t: [l for l in t.splitlines() if not l.startswith("# csv=")]
    assert strip(a.read_text().replace("# threads=1\n", "")) == strip(b.read_text())


def test_selfcheck(capsys):
    assert cli.run(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "magsource", "caustics", "--out",
                        str(tmp_path / "c.csv")], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith("magsource caustics:")
    r = subprocess.run([sys.executable, "-m", "magsource", "nonsense"], capture_output=True, text=True)
    assert r.returncode == 3
