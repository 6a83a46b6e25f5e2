"""End-to-end CLI behavior: config parsing, subcommands, exit codes,
deterministic outputs."""

import json
import math

import numpy as np
import pytest

from wqflow import cli
from wqflow.config import build_run_config, parse_config_text
from wqflow.fields import Grid, read_field, write_field
from wqflow.verify import CheckResult

TORUS_CFG = """
# smoke configuration
regime = geodesic
p = 2.0
c = inf
n = 1
N = 128
topology = torus
t0 = 1.0
T = 1.1
dt = 2.5e-3
diag-every = 4
seed = 7
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "torus.cfg"
    path.write_text(TORUS_CFG)
    return str(path)


class TestConfig:
    def test_shipped_configs_parse(self):
        import pathlib

        cfg_dir = pathlib.Path(__file__).resolve().parent.parent / "configs"
        for path in sorted(cfg_dir.glob("*.cfg")):
            rc = build_run_config(parse_config_text(path.read_text()))
            assert rc.T > rc.t0

    def test_parse_and_defaults(self):
        cfg = parse_config_text(TORUS_CFG)
        rc = build_run_config(cfg)
        assert rc.grid.shape == (128,)
        assert rc.grid.periodic
        assert rc.params.p == 2.0
        assert math.isinf(rc.params.c)
        assert rc.ic == "perturbed"

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_text("bogus = 1\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_config_text("just some words\n")

    def test_box_needs_extent(self):
        cfg = parse_config_text("topology = box\nN = 64\n")
        with pytest.raises(ValueError, match="hi"):
            build_run_config(cfg)

    def test_box_with_extent(self):
        cfg = parse_config_text("topology = box\nN = 64\nhi = 12.0\nic = special\n")
        rc = build_run_config(cfg)
        assert rc.grid.lo == (-12.0,) and rc.grid.hi == (12.0,)
        assert not rc.grid.periodic

    def test_2d_lists(self):
        cfg = parse_config_text("n = 2\nN = 64,32\nlo = 0,0\nhi = 6.28,3.14\n")
        rc = build_run_config(cfg)
        assert rc.grid.shape == (64, 32)
        assert rc.grid.hi == (6.28, 3.14)


class TestSimulate:
    def test_outputs(self, cfg_file, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["simulate", "--config", cfg_file, "--out", str(out)]) == 0
        csv = (out / "diagnostics.csv").read_text().splitlines()
        assert csv[0].startswith("t,mass,Ent")
        assert len(csv) > 5
        meta = json.loads((out / "run.json").read_text())
        assert meta["regime"] == "geodesic"
        assert "derived-dt" in meta

    def test_bit_identical_reruns(self, cfg_file, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert cli.main(["simulate", "--config", cfg_file, "--out", str(out)]) == 0
            outs.append((out / "diagnostics.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_dump_fields(self, cfg_file, tmp_path):
        out = tmp_path / "dump"
        assert cli.main(["simulate", "--config", cfg_file, "--set", "dump-fields=1", "--out", str(out)]) == 0
        grid, rho = read_field(out / "fields" / "rec0000_rho.bin")
        assert grid.shape == (128,)
        assert rho.min() > 0.0
        # 1D velocity has one component; it reads back in scalar layout
        _, u = read_field(out / "fields" / "rec0000_u.bin")
        assert u.shape == (128,)

    def test_missing_config_no_output(self, tmp_path):
        out = tmp_path / "never"
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--out", str(out)]) == 1
        assert not out.exists()

    def test_set_override(self, cfg_file, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", cfg_file, "--set", "T=1.05", "--out", str(out)]) == 0
        meta = json.loads((out / "run.json").read_text())
        assert meta["T"] == "1.05"


class TestVerify:
    def test_pass_exit_zero(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "v"
        code = cli.main(["verify", "--check", "conservation", "--config", cfg_file,
                         "--set", "N=256", "--out", str(out)])
        captured = capsys.readouterr().out
        assert code == 0
        assert "PASS" in captured and "FAIL" not in captured
        assert (out / "verify.json").exists()
        assert (out / "diagnostics.csv").exists()

    def test_breach_exit_two(self, cfg_file, tmp_path, monkeypatch, capsys):
        def fake_check(name, params, N=None):
            return [CheckResult("forced failure", False, 1.0, 0.5)], []

        monkeypatch.setattr(cli, "run_check", fake_check)
        code = cli.main(["verify", "--check", "wentropy", "--config", cfg_file,
                         "--out", str(tmp_path / "vf")])
        assert code == 2
        assert "FAIL forced failure" in capsys.readouterr().out

    def test_usage_error(self):
        assert cli.main(["verify", "--check", "notacheck"]) == 1


class TestOde:
    def test_csv_and_residuals(self, tmp_path):
        out = tmp_path / "ode"
        assert cli.main(["ode", "--p", "3", "--c", "1", "--t0", "1", "--T", "2",
                         "--dt", "1e-3", "--out", str(out)]) == 0
        lines = (out / "ode.csv").read_text().splitlines()
        assert lines[0] == "t,w,wdot,alpha,beta,eta,pode_residual,alphaeq_residual,eta_residual"
        body = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]])
        interior = body[2:-2]
        assert np.nanmax(np.abs(interior[:, 6:9])) <= 1e-7
        # endpoint residual cells are nan (stencil needs two neighbors)
        assert math.isnan(body[0, 6]) and math.isnan(body[-1, 8])

    def test_infinite_c(self, tmp_path):
        out = tmp_path / "odeinf"
        assert cli.main(["ode", "--p", "2", "--c", "inf", "--t0", "1", "--T", "1.5",
                         "--dt", "1e-3", "--out", str(out)]) == 0
        lines = (out / "ode.csv").read_text().splitlines()[1:]
        first = [float(tok) for tok in lines[0].split(",")]
        assert first[1] == 1.0 and first[5] == 1.0  # w = t and eta = t at t0 = 1


class TestSpecial:
    def test_geodesic_fields(self, tmp_path, capsys):
        out = tmp_path / "sp"
        assert cli.main(["special", "--regime", "geodesic", "--p", "2", "--n", "1",
                         "--t", "1.0", "--N", "1024", "--L", "14", "--out", str(out)]) == 0
        grid, rho = read_field(out / "rho.bin")
        assert rho.sum() * grid.h[0] == pytest.approx(1.0, abs=1e-6)
        line = (out / "special.csv").read_text().splitlines()[1].split(",")
        assert float(line[4]) == pytest.approx(float(line[5]), abs=1e-5)

    def test_langevin_special(self, tmp_path):
        out = tmp_path / "spl"
        assert cli.main(["special", "--regime", "langevin", "--p", "3", "--c", "1",
                         "--n", "1", "--t", "1.2", "--N", "2048", "--L", "16", "--out", str(out)]) == 0
        assert (out / "u.bin").exists()


class TestDistance1d:
    def test_translation(self, tmp_path, capsys):
        g = Grid((-20.0,), (20.0,), (2000,), periodic=False)
        x = g.axis(0)
        rho0 = np.exp(-x * x / 2.0) / math.sqrt(2.0 * math.pi)
        rho1 = np.roll(rho0, 50)
        write_field(tmp_path / "r0.bin", g, rho0)
        write_field(tmp_path / "r1.bin", g, rho1)
        assert cli.main(["distance1d", "--rho0", str(tmp_path / "r0.bin"),
                         "--rho1", str(tmp_path / "r1.bin"), "--q", "2"]) == 0
        val = float(capsys.readouterr().out.strip())
        assert val == pytest.approx(50 * g.h[0], abs=1e-6)

    def test_grid_mismatch(self, tmp_path):
        g1 = Grid((-20.0,), (20.0,), (2000,), periodic=False)
        g2 = Grid((-20.0,), (20.0,), (1000,), periodic=False)
        write_field(tmp_path / "a.bin", g1, np.ones(g1.shape) / 40.0)
        write_field(tmp_path / "b.bin", g2, np.ones(g2.shape) / 40.0)
        assert cli.main(["distance1d", "--rho0", str(tmp_path / "a.bin"),
                         "--rho1", str(tmp_path / "b.bin"), "--q", "2"]) == 1
