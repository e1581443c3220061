"""End-to-end tests of the command-line interface.

Everything goes through ``main(argv)`` so exit codes, config handling, and
file outputs are exercised exactly as a shell user would hit them.
"""

import os

import numpy as np
import pytest

from waverom import cli
from waverom.forward1d import TransferSeries
from waverom.invert1d import read_result_csv


def _run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    """A finished synthesize + invert experiment on the constant model."""
    out = str(tmp_path_factory.mktemp("exp1d"))
    code = _run(
        "synthesize", "--model", "constant", "--sigma", "0.05",
        "--tau-over-sigma", "2.5", "--n", "6", "--m", "400", "--output", out,
    )
    assert code == 0
    code = _run(
        "invert", "--data", os.path.join(out, "data.csv"),
        "--v0", "1.0", "--m", "400", "--output", out,
    )
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def test_synthesize_writes_data_with_provenance(experiment):
    loaded = TransferSeries.from_csv(os.path.join(experiment, "data.csv"))
    assert loaded.series.values.size == 12  # 2n
    assert loaded.series.sigma == 0.05
    assert loaded.series.tau == pytest.approx(0.125)
    assert loaded.provenance["model"] == "constant"
    assert len(loaded.provenance["model_sha256"]) == 64
    assert float(loaded.provenance["xmax"]) == 1.0


def test_synthesize_is_deterministic(tmp_path):
    args = ["synthesize", "--model", "two-layer", "--sigma", "0.05",
            "--tau-over-sigma", "2.5", "--n", "4", "--m", "300"]
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert _run(*args, "--output", a) == 0
    assert _run(*args, "--output", b) == 0
    bytes_a = open(os.path.join(a, "data.csv"), "rb").read()
    bytes_b = open(os.path.join(b, "data.csv"), "rb").read()
    assert bytes_a == bytes_b


def test_synthesize_rejects_bad_sigma(tmp_path, capsys):
    code = _run("synthesize", "--sigma", "-0.01", "--output", str(tmp_path))
    assert code == 2
    assert "sigma must be positive" in capsys.readouterr().err


def test_synthesize_warns_on_long_window(tmp_path, capsys):
    code = _run(
        "synthesize", "--model", "constant", "--sigma", "0.05",
        "--tau-over-sigma", "2.5", "--n", "10", "--m", "300",
        "--output", str(tmp_path),
    )
    assert code == 0
    assert "round-trip" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# invert
# ---------------------------------------------------------------------------


def test_invert_identity_recovers_reference(experiment):
    rows = read_result_csv(os.path.join(experiment, "result.csv"))
    for kind in ("primary", "dual"):
        assert np.abs(np.array(rows[f"{kind}_v_estimate"]) - 1.0).max() <= 1e-9


def test_invert_outputs(experiment):
    lines = [ln for ln in open(os.path.join(experiment, "result.csv")) if ln.strip()]
    assert len(lines) == 1 + 12  # header + 2n node rows
    sidecar = open(os.path.join(experiment, "result_diagnostics.txt")).read()
    assert "cond_uu" in sidecar
    assert "monotone" in sidecar
    assert "v0 = 1.0" in sidecar


def test_invert_missing_data_flag(capsys):
    assert _run("invert") == 2
    assert "--data" in capsys.readouterr().err


def test_invert_accepts_experiment_directory(experiment, tmp_path):
    out = str(tmp_path / "from_dir")
    assert _run("invert", "--data", experiment, "--m", "400", "--output", out) == 0
    assert os.path.exists(os.path.join(out, "result.csv"))


def test_invert_data_path_errors(tmp_path, capsys):
    # a nonexistent file and a directory without data.csv both fail with advice
    assert _run("invert", "--data", str(tmp_path / "nope.csv")) == 4
    assert "synthesize" in capsys.readouterr().err
    assert _run("invert", "--data", str(tmp_path)) == 4
    assert "no experiment found" in capsys.readouterr().err


def test_invert_warns_when_ill_conditioned(tmp_path, capsys):
    out = str(tmp_path)
    assert _run(
        "synthesize", "--model", "constant", "--sigma", "0.03",
        "--tau-over-sigma", "0.5", "--n", "15", "--m", "800", "--output", out,
    ) == 0
    capsys.readouterr()
    assert _run(
        "invert", "--data", os.path.join(out, "data.csv"), "--m", "800",
        "--output", out,
    ) == 0
    err = capsys.readouterr().err
    assert "warning:" in err and "tau" in err


def test_invert_maps_breakdown_to_exit_3(experiment, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise ArithmeticError("synthetic breakdown")

    monkeypatch.setattr(cli, "invert", boom)
    code = _run(
        "invert", "--data", os.path.join(experiment, "data.csv"),
        "--m", "400", "--output", str(tmp_path),
    )
    assert code == 3
    err = capsys.readouterr().err
    assert "numerical breakdown" in err
    assert "tau" in err  # remediation guidance follows the error


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def test_config_file_supplies_flags(tmp_path):
    out = str(tmp_path / "run")
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "# small smoke experiment\n"
        "model = constant\n"
        "sigma = 0.05\n"
        "tau_over_sigma = 3.0\n"
        "n = 5\n"
        "m = 300\n"
        f"output = {out}\n"
    )
    assert _run("synthesize", "--config", str(cfg)) == 0
    loaded = TransferSeries.from_csv(os.path.join(out, "data.csv"))
    assert loaded.series.sigma == 0.05
    assert loaded.series.tau == pytest.approx(0.15)
    assert loaded.series.values.size == 10


def test_explicit_flag_overrides_config(tmp_path):
    out = str(tmp_path / "run")
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"sigma = 0.05\ntau-over-sigma = 3.0\nn = 5\nm = 300\noutput = {out}\n")
    assert _run("synthesize", "--config", str(cfg), "--sigma", "0.04") == 0
    loaded = TransferSeries.from_csv(os.path.join(out, "data.csv"))
    assert loaded.series.sigma == 0.04
    assert loaded.series.tau == pytest.approx(0.12)


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("bogus = 1\n")
    assert _run("synthesize", "--config", str(cfg)) == 2
    assert "not a recognized option" in capsys.readouterr().err


def test_missing_config_file_is_io_error(tmp_path, capsys):
    assert _run("synthesize", "--config", str(tmp_path / "nope.cfg")) == 4
    assert "cannot read config file" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# tau-sweep
# ---------------------------------------------------------------------------


def test_tau_sweep_table_and_csv(tmp_path, capsys):
    out = str(tmp_path)
    code = _run(
        "tau-sweep", "--model", "two-layer", "--sigma", "0.03",
        "--taus", "0.5,2.5,3.5", "--n", "8", "--m", "600",
        "--workers", "2", "--output", out,
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "cond_uu" in text and "recon_error" in text
    lines = [ln for ln in open(os.path.join(out, "sweep.csv")) if ln.strip()]
    assert lines[0].startswith("tau,cond_uu,interp_residual,monotone,recon_error,status")
    assert len(lines) == 4
    conds = [float(ln.split(",")[1]) for ln in lines[1:]]
    # conditioning improves monotonically as the step grows
    assert conds[0] > conds[1] > conds[2]
    assert all(ln.rstrip().endswith("ok") for ln in lines[1:])
    # all three runs interpolate their own data to near rounding
    residuals = [float(ln.split(",")[2]) for ln in lines[1:]]
    assert max(residuals) < 1e-6


def test_tau_sweep_requires_taus(capsys):
    assert _run("tau-sweep") == 2
    assert "--taus" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# plot-data
# ---------------------------------------------------------------------------


def test_plot_data_emits_panels(experiment, tmp_path):
    out = str(tmp_path)
    code = _run(
        "plot-data", "--results", experiment, "--model", "constant",
        "--m", "400", "--output", out,
    )
    assert code == 0
    snaps = [ln for ln in open(os.path.join(out, "panel_snapshots.csv")) if ln.strip()]
    assert len(snaps) == 400  # one row per grid point
    assert len(snaps[0].split(",")) == 6  # one column per snapshot
    ortho = [ln for ln in open(os.path.join(out, "panel_ortho_snapshots.csv")) if ln.strip()]
    assert len(ortho) == 400
    assert len(ortho[0].split(",")) == 6
    nodes = [ln.strip() for ln in open(os.path.join(out, "panel_nodes.csv")) if ln.strip()]
    assert nodes[0] == "node_type,traveltime_pos,physical_pos,v_estimate"
    assert len(nodes) == 1 + 12
    com = [ln.strip() for ln in open(os.path.join(out, "panel_centers_of_mass.csv")) if ln.strip()]
    assert com[0].endswith(",true")
    assert len(com) == 1 + 12
    # identity experiment: reference, approximated, and true positions agree
    for ln in com[1:]:
        _, _, ref, approx, true = ln.split(",")
        assert abs(float(ref) - float(approx)) <= 1e-6
        assert abs(float(ref) - float(true)) <= 1e-6


def test_plot_data_without_result_csv(tmp_path, experiment):
    # only data.csv present: node/center panels are skipped, not an error
    import shutil

    solo = tmp_path / "solo"
    solo.mkdir()
    shutil.copy(os.path.join(experiment, "data.csv"), solo / "data.csv")
    assert _run("plot-data", "--results", str(solo), "--m", "300") == 0
    assert (solo / "panel_snapshots.csv").exists()
    assert not (solo / "panel_nodes.csv").exists()


def test_plot_data_empty_directory(tmp_path, capsys):
    assert _run("plot-data", "--results", str(tmp_path)) == 4
    assert "no experiment found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# 2D pipeline through the CLI
# ---------------------------------------------------------------------------


def test_synthesize_and_invert_2d(tmp_path, capsys):
    out = str(tmp_path)
    code = _run(
        "synthesize", "--mode", "2d", "--model", "constant",
        "--sources=-0.3,0.2", "--sigma", "0.05", "--tau-over-sigma", "2.5",
        "--n", "4", "--nx", "60", "--ny", "31", "--output", out,
    )
    assert code == 0
    blocks_dir = os.path.join(out, "blocks")
    assert os.path.exists(os.path.join(blocks_dir, "manifest.csv"))
    code = _run(
        "invert2d", "--data", blocks_dir, "--v0", "1.0", "--m", "400",
        "--output", out,
    )
    assert code == 0
    assert "2 lines x 4 nodes" in capsys.readouterr().out
    lines = [ln for ln in open(os.path.join(out, "result2d.csv")) if ln.strip()]
    assert len(lines) == 1 + 2 * 2 * 4  # header + both lattices per line
    ests = [float(ln.split(",")[4]) for ln in lines[1:]]
    assert np.abs(np.array(ests) - 1.0).max() <= 1e-9
    # --data also resolves the parent experiment directory to blocks/
    out2 = str(tmp_path / "from_parent")
    assert _run("invert2d", "--data", out, "--m", "400", "--output", out2) == 0
    assert os.path.exists(os.path.join(out2, "result2d.csv"))


def test_invert2d_missing_blocks(tmp_path, capsys):
    assert _run("invert2d", "--data", str(tmp_path)) == 4
    assert "no block series found" in capsys.readouterr().err


def test_synthesize_2d_requires_sources(tmp_path, capsys):
    assert _run("synthesize", "--mode", "2d", "--output", str(tmp_path)) == 2
    assert "--sources" in capsys.readouterr().err
