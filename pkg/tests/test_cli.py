"""Command-line surface checks: artifact headers, column contracts,
byte-identical reruns, grid expansion, config files, and exit codes."""

import json
import math

import numpy as np
import pytest

import ballpiston as bp
from ballpiston import cli
from ballpiston.errors import NumericalError

RHO = 0.52955


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _read(path):
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return meta, body[0].split(","), [ln.split(",") for ln in body[1:]]


# ------------------------------------------------------------ artifact shape


def test_geometry_csv_header_and_values(tmp_path):
    out = tmp_path / "geo.csv"
    assert _run("geometry", "--rho", RHO, "--delta", 0.1, "-o", out) == 0
    meta, cols, rows = _read(out)
    assert meta[0] == f"# ballpiston {bp.__version__}"
    assert meta[1].startswith("# config: subcommand=geometry rho=")
    assert "seed" not in meta[1]
    geom = bp.derive_geometry(bp.GeometryParams(RHO, 0.1))
    assert cols == list(geom.__dataclass_fields__)
    assert len(rows) == 1
    for name, cell in zip(cols, rows[0]):
        assert cell == format(getattr(geom, name), ".17g")


def test_geometry_json(tmp_path):
    out = tmp_path / "geo.json"
    assert _run("geometry", "--rho", RHO, "--delta", 0.1,
                "--format", "json", "-o", out) == 0
    payload = json.loads(out.read_text())
    assert payload["artifact_version"] == bp.__version__
    assert payload["config"]["subcommand"] == "geometry"
    geom = bp.derive_geometry(bp.GeometryParams(RHO, 0.1))
    for name in geom.__dataclass_fields__:
        assert payload[name] == getattr(geom, name)


def test_stdout_default(capsys):
    assert _run("kernel", "--rho", RHO, "--delta", 0.1,
                "--report", "moments", "--eb", 0.3, "--ep", 0.2) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("# ballpiston")
    assert out[2] == "eb,ep,f,j,h"


# ------------------------------------------------------------ determinism


def test_rerun_byte_identical(tmp_path):
    out = tmp_path / "scan.csv"
    args = ("phi-scan", "--rho", RHO, "--delta", 0.1, "--ep-grid", "0.1,0.3",
            "--samples", 1200, "--seed", 7, "-o", out)
    assert _run(*args) == 0
    first = out.read_bytes()
    assert _run(*args) == 0
    assert out.read_bytes() == first


def test_threads_do_not_change_data(tmp_path):
    common = ("phi-scan", "--rho", RHO, "--delta", "0.1,0.05", "--ep-grid",
              "0.1,0.3", "--samples", 1200, "--seed", 7)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(*common, "-o", a) == 0
    assert _run(*common, "--threads", 3, "-o", b) == 0
    # headers record the thread count; the data must not depend on it
    assert _read(a)[1:] == _read(b)[1:]


def test_cond_mft_matches_library_call(tmp_path):
    out = tmp_path / "c.csv"
    assert _run("cond-mft", "--rho", RHO, "--delta", 0.1, "--ep", 0.2,
                "--samples", 1500, "--seed", 9, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["ep", "window", "mft", "mft_stderr", "samples"]
    est = bp.estimate_cond_mft(bp.GeometryParams(RHO, 0.1), 0.2, 0.0, 1500,
                               bp.seeded_rng(9))
    assert rows[0][2] == format(est.value, ".17g")
    assert rows[0][3] == format(est.standard_error, ".17g")
    assert int(rows[0][4]) == est.sample_count


def test_mft_matches_library_call(tmp_path):
    out = tmp_path / "m.csv"
    assert _run("mft", "--rho", RHO, "--delta", 0.1, "--events", 20_000,
                "--seed", 7, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["kind", "mft", "mft_stderr", "count"]
    params = bp.GeometryParams(RHO, 0.1)
    log = bp.simulate(params, bp.sample_flow(params, bp.seeded_rng(7)),
                      max_events=20_000)
    table = bp.estimate_mft(log)
    assert len(rows) == len(table)
    by_kind = {r[0]: r for r in rows}
    for kind, est in table.items():
        assert by_kind[kind][1] == format(est.value, ".17g")
    assert rows[-1][0] == "total"


# ------------------------------------------------------------ phi-scan


def test_phi_scan_columns_and_content(tmp_path):
    out = tmp_path / "scan.csv"
    assert _run("phi-scan", "--rho", RHO, "--delta", "0.1,0.05", "--ep-grid",
                "0.1,0.3", "--samples", 1500, "--seed", 3, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["delta", "ep", "tau_bp_analytic", "nu_emp", "nu_stderr",
                    "phi_analytic", "phi_emp"]
    assert len(rows) == 4
    assert [r[0] for r in rows] == [format(d, ".17g")
                                    for d in (0.1, 0.1, 0.05, 0.05)]
    for r in rows:
        geom = bp.derive_geometry(bp.GeometryParams(RHO, float(r[0])))
        assert r[2] == format(geom.tau_bp, ".17g")
        _, phi = bp.conditional_rate(geom, float(r[1]))
        assert float(r[5]) == pytest.approx(phi, rel=1e-15)
        # product estimate built from the row's own fields
        assert float(r[6]) == pytest.approx(float(r[2]) * float(r[3]),
                                            rel=1e-12)
        assert abs(float(r[6]) - phi) < 6.0 * float(r[4]) * float(r[2])


def test_paper_grids_expand_without_running():
    config = cli._build_config(["phi-scan", "--rho", str(RHO), "--delta-grid",
                                "paper", "--seed", "1"])
    assert config.deltas == cli.PAPER_DELTAS
    assert len(config.eps) == 59  # --ep-grid defaults to the paper grid
    np.testing.assert_allclose(config.eps, bp.paper_energy_grid())
    assert set(bp.paper_delta_grid()) <= set(config.deltas)
    assert all(d <= 0.2 for d in config.deltas
               if d not in set(bp.paper_delta_grid()))


# ------------------------------------------------------------ relax


def test_relax_csv_and_histograms(tmp_path):
    out = tmp_path / "relax.csv"
    hdir = tmp_path / "hists"
    assert _run("relax", "--rho", RHO, "--delta", 0.325, "--ep-grid",
                "0.125,0.25", "--samples", 1500, "--bins", 64, "--seed", 11,
                "--histogram-dir", hdir, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["delta", "ep", "n", "kl", "kl_floor", "samples"]
    assert len(rows) == 2
    params = bp.GeometryParams(RHO, 0.325)
    hist, kl = bp.relaxation_experiment(params, 0.125, 0, 1500, 64,
                                        bp.seeded_rng(11, stream=0))
    assert rows[0][3] == format(kl, ".17g")
    assert int(rows[0][2]) == 0 and int(rows[0][5]) == 1500
    assert float(rows[0][4]) > 0.0

    hist_files = sorted(p.name for p in hdir.iterdir())
    assert hist_files == ["hist_delta0.325_ep0.125_n0.csv",
                          "hist_delta0.325_ep0.25_n0.csv"]
    meta, hcols, hrows = _read(hdir / hist_files[0])
    assert any(ln.startswith("# point: delta=0.325") and "ep=0.125" in ln
               for ln in meta)
    assert hcols == ["branch", "bin_left", "bin_right", "count", "density",
                     "reference_density"]
    assert len(hrows) == 2 * 64  # two branches below ep = 1/4
    counts = np.array([int(r[3]) for r in hrows])
    assert counts.sum() == hist.total
    widths = np.array([float(r[2]) - float(r[1]) for r in hrows])
    dens = np.array([float(r[4]) for r in hrows])
    ref = np.array([float(r[5]) for r in hrows])
    assert (dens * widths).sum() == pytest.approx(1.0, rel=1e-12)
    assert (ref * widths).sum() == pytest.approx(1.0, rel=1e-12)
    branches = {r[0] for r in hrows}
    assert branches == {"1", "-1"}


# ------------------------------------------------------------ kernel reports


def test_kernel_canonical_report(tmp_path):
    out = tmp_path / "canon.csv"
    assert _run("kernel", "--rho", RHO, "--delta", 0.1, "--report",
                "canonical", "--beta", 1.0, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["beta", "avg_f", "avg_j", "avg_h", "closed_form",
                    "max_rel_spread"]
    geom = bp.derive_geometry(bp.GeometryParams(RHO, 0.1))
    vals = bp.canonical_check(1.0, geom)
    for cell, want in zip(rows[0][1:5], vals):
        assert cell == format(want, ".17g")
    assert float(rows[0][5]) < 1e-6


def test_kernel_density_report(tmp_path):
    out = tmp_path / "w.csv"
    assert _run("kernel", "--rho", RHO, "--delta", 0.1, "--report", "density",
                "--eb", 0.3, "--ep", 0.2, "--points", 16, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["ep_out", "w"]
    assert len(rows) == 16
    geom = bp.derive_geometry(bp.GeometryParams(RHO, 0.1))
    pair = bp.EnergyPair(0.3, 0.2)
    for r in rows:
        x = float(r[0])
        assert 0.0 < x < 0.3
        assert float(r[1]) == pytest.approx(
            bp.kernel_density(pair, x, geom), rel=1e-15)


# ------------------------------------------------------------ jump process


def test_gillespie_log_matches_library(tmp_path):
    out = tmp_path / "jumps.csv"
    assert _run("gillespie", "--rho", RHO, "--delta", 0.1, "--eb", 0.5,
                "--ep", 0.0, "--tmax", 2000, "--seed", 5, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["t", "zeta", "eb", "ep"]
    geom = bp.derive_geometry(bp.GeometryParams(RHO, 0.1))
    log = bp.gillespie(bp.EnergyPair(0.5, 0.0), 2000.0, geom,
                       bp.seeded_rng(5))
    assert len(rows) == len(log)
    eps = log.ep_series()
    for i in (0, len(rows) - 1):
        assert rows[i][0] == format(log.times[i], ".17g")
        assert rows[i][3] == format(eps[i], ".17g")
        assert float(rows[i][2]) + float(rows[i][3]) == pytest.approx(
            0.5, rel=1e-12)


def test_gillespie_ensemble_output(tmp_path):
    out = tmp_path / "finals.csv"
    assert _run("gillespie", "--rho", RHO, "--delta", 0.1, "--eb", 0.3,
                "--ep", 0.2, "--tmax", 500, "--seed", 6, "--paths", 40,
                "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["path", "ep_final"]
    assert [int(r[0]) for r in rows] == list(range(40))
    assert all(0.0 <= float(r[1]) <= 0.5 for r in rows)


# ------------------------------------------------------------ master


def test_master_stationary_fixed_point(tmp_path):
    out = tmp_path / "grid.csv"
    assert _run("master", "--rho", RHO, "--delta", 0.1, "--cells", 16,
                "--tfin", 100, "-o", out) == 0
    _, cols, rows = _read(out)
    assert cols == ["cell_left", "cell_right", "probability"]
    assert len(rows) == 16
    probs = np.array([float(r[2]) for r in rows])
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    want = bp.EnergyGridDensity.stationary(0.5, 16).probs
    np.testing.assert_allclose(probs, want, atol=1e-9)
    assert float(rows[0][1]) == pytest.approx(0.5 / 16, rel=1e-15)


def test_master_point_init_json(tmp_path):
    out = tmp_path / "grid.json"
    assert _run("master", "--rho", RHO, "--delta", 0.1, "--cells", 8,
                "--tfin", 100, "--init", "point", "--ep", 0.3,
                "--format", "json", "-o", out) == 0
    payload = json.loads(out.read_text())
    probs = [r["probability"] for r in payload["rows"]]
    assert sum(probs) == pytest.approx(1.0, abs=1e-9)
    assert payload["config"]["init"] == "point"


# ------------------------------------------------------------ configuration


def test_config_file_defaults_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("rho=0.52955\ndelta=0.1\n# a comment\n\n"
                   "samples=1200\nseed=3\n")
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run("cond-mft", "--config", cfg, "--ep", 0.2, "-o", out1) == 0
    assert _run("cond-mft", "--rho", RHO, "--delta", 0.1, "--ep", 0.2,
                "--samples", 1200, "--seed", 3, "-o", out2) == 0
    assert _read(out1)[2] == _read(out2)[2]
    # an explicit flag wins over the file entry
    out3 = tmp_path / "c.csv"
    assert _run("cond-mft", f"--config={cfg}", "--ep", 0.2,
                "--samples", 1500, "-o", out3) == 0
    assert int(_read(out3)[2][0][4]) == 1500


def test_config_file_errors(tmp_path, capsys):
    assert _run("cond-mft", "--config", tmp_path / "missing.cfg",
                "--ep", 0.2) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("rho 0.52955\n")
    assert _run("cond-mft", "--config", bad, "--ep", 0.2) == 1
    err = capsys.readouterr().err
    assert "config error" in err and "key=value" in err


def test_outdir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BALLPISTON_OUTDIR", str(tmp_path / "artifacts"))
    assert _run("geometry", "--rho", RHO, "--delta", 0.1,
                "-o", "nested/geo.csv") == 0
    assert (tmp_path / "artifacts" / "nested" / "geo.csv").exists()
    absolute = tmp_path / "direct.csv"
    assert _run("geometry", "--rho", RHO, "--delta", 0.1, "-o", absolute) == 0
    assert absolute.exists()


def test_runconfig_invariants():
    with pytest.raises(cli.ConfigError):
        cli.RunConfig("geometry", RHO, (0.1,), fmt="yaml")
    with pytest.raises(cli.ConfigError):
        cli.RunConfig("geometry", RHO, (0.1,), threads=0)
    with pytest.raises(cli.ConfigError):
        cli.RunConfig("relax", RHO, (0.1,), seed=None)
    config = cli.RunConfig("relax", RHO, (0.1,), seed=4,
                           extras=(("max_events", 100),))
    assert config.extra("max_events") == 100
    assert config.extra("absent", "fallback") == "fallback"


# ------------------------------------------------------------ exit codes


def test_exit_codes(tmp_path, capsys, monkeypatch):
    assert _run("geometry", "--rho", RHO) == 1  # missing --delta
    assert _run("nonsense") == 1
    assert _run() == 1
    assert _run("relax", "--rho", RHO, "--delta", 0.1,
                "--ep-grid", "0.2") == 1  # stochastic without seed
    assert _run("phi-scan", "--rho", RHO, "--delta", 0.1, "--delta-grid",
                "paper", "--seed", 1) == 1  # conflicting delta flags
    assert _run("kernel", "--rho", RHO, "--delta", 0.1,
                "--report", "canonical") == 1  # canonical without beta
    capsys.readouterr()

    assert _run("geometry", "--rho", 0.9, "--delta", 0.1) == 2
    err = capsys.readouterr().err
    assert "ParameterError" in err and "rho" in err
    assert _run("cond-mft", "--rho", RHO, "--delta", 0.1, "--ep", 0.2,
                "--samples", 10, "--seed", 1) == 2

    def boom(beta, geom, tol=1e-6):
        raise NumericalError("quadrature failed to converge")

    monkeypatch.setattr(cli, "canonical_check", boom)
    assert _run("kernel", "--rho", RHO, "--delta", 0.1, "--report",
                "canonical", "--beta", 1.0) == 3
    assert "NumericalError" in capsys.readouterr().err


def test_delta_paper_keyword_rejected_for_single():
    # 'paper' only expands for --delta-grid, not the plain list flag
    assert _run("phi-scan", "--rho", RHO, "--delta", "paper",
                "--seed", 1) == 1
