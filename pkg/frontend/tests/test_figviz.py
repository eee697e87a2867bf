import json
import math
from pathlib import Path

import numpy as np
import pytest

from figviz import (
    SchemaError,
    plot_signal,
    plot_spectrum,
    read_matrix_csv,
    ridge_distance_bins,
)
from figviz.cli import main


def write_csv(path: Path, header: str, rows) -> Path:
    lines = [header] + [",".join("%.12e" % v for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def synthetic_outputs(tmp_path: Path, gap=2.0, coupling=0.12, n_omega=15,
                      n_tau=160, n_bins=80):
    """Emulate the simulator's CSV/JSON interface with a clean dispersion."""
    omegas = np.linspace(0.8 * gap, 1.2 * gap, n_omega)
    taus = np.linspace(0.0, 40.0, n_tau)
    sig_rows = []
    for w in omegas:
        freq = math.hypot(coupling, w - gap)
        for t in taus:
            sig_rows.append((w, t, 1.0 + 0.5 * (1 - math.cos(freq * t))))
    signal_csv = write_csv(tmp_path / "signal.csv", "omega,tau,expectation", sig_rows)

    bins = np.linspace(0.0, 1.2, n_bins)
    bin_w = bins[1] - bins[0]
    spec_rows = []
    for w in omegas:
        freq = math.hypot(coupling, w - gap)
        for b in bins:
            power = math.exp(-((b - freq) / (0.7 * bin_w)) ** 2)
            spec_rows.append((w, b, power))
    spectrum_csv = write_csv(tmp_path / "spectrum.csv", "omega,Omega,power", spec_rows)

    dense = np.linspace(omegas[0], omegas[-1], 101)
    summary = {
        "gap_exact": gap,
        "value_exact": coupling / gap ** 2,
        "overlays": {
            "target": [[float(w), math.hypot(coupling, w - gap)] for w in dense],
            "excited_pair": [[float(w), math.hypot(0.2, w - 1.5 * gap)] for w in dense],
            "two_photon": [[float(w), abs(2.6 * gap - 2 * w)] for w in dense],
        },
    }
    summary_path = tmp_path / "oracle_summary.json"
    summary_path.write_text(json.dumps(summary), encoding="utf-8")
    return signal_csv, spectrum_csv, summary_path


def test_read_matrix_csv_roundtrip(tmp_path):
    rows = [(0.1, 0.0, 1.0), (0.1, 1.0, 2.0), (0.2, 0.0, 3.0), (0.2, 1.0, 4.0)]
    path = write_csv(tmp_path / "m.csv", "omega,tau,expectation", rows)
    surf = read_matrix_csv(path, ("omega", "tau", "expectation"))
    assert surf.values.shape == (2, 2)
    assert surf.values[0, 1] == pytest.approx(3.0)


def test_missing_column_is_schema_error(tmp_path):
    path = write_csv(tmp_path / "bad.csv", "omega,time,expectation",
                     [(0.1, 0.0, 1.0)])
    with pytest.raises(SchemaError):
        read_matrix_csv(path, ("omega", "tau", "expectation"))


def test_incomplete_grid_is_schema_error(tmp_path):
    rows = [(0.1, 0.0, 1.0), (0.2, 1.0, 4.0)]
    path = write_csv(tmp_path / "holes.csv", "omega,tau,expectation", rows)
    with pytest.raises(SchemaError):
        read_matrix_csv(path, ("omega", "tau", "expectation"))


def test_plot_signal_produces_png(tmp_path):
    signal_csv, _, summary = synthetic_outputs(tmp_path)
    out = plot_signal(signal_csv, tmp_path / "sig.png", summary_path=summary)
    assert out.exists() and out.stat().st_size > 5000


def test_plot_signal_single_cell(tmp_path):
    path = write_csv(tmp_path / "one.csv", "omega,tau,expectation",
                     [(1.0, 0.0, 0.5)])
    out = plot_signal(path, tmp_path / "one.png")
    assert out.exists()


def test_plot_spectrum_with_overlays(tmp_path):
    _, spectrum_csv, summary = synthetic_outputs(tmp_path)
    out, distances = plot_spectrum(spectrum_csv, tmp_path / "spec.png",
                                   summary_path=summary,
                                   overlays=("target", "pair", "twophoton"))
    assert out.exists() and out.stat().st_size > 5000
    assert distances["target"] <= 2.0


def test_overlay_requires_summary(tmp_path):
    _, spectrum_csv, _ = synthetic_outputs(tmp_path)
    with pytest.raises(SchemaError):
        plot_spectrum(spectrum_csv, tmp_path / "x.png", overlays=("target",))


def test_ridge_distance_detects_misplaced_overlay(tmp_path):
    _, spectrum_csv, summary = synthetic_outputs(tmp_path)
    surf = read_matrix_csv(spectrum_csv, ("omega", "Omega", "power"))
    wrong = np.array([[surf.x[0], 0.9], [surf.x[-1], 0.9]])
    dist = ridge_distance_bins(surf, wrong, [])
    assert dist > 2.0


def test_cli_signal_and_spectrum(tmp_path):
    signal_csv, spectrum_csv, summary = synthetic_outputs(tmp_path)
    rc = main(["signal", "--csv", str(signal_csv), "--summary", str(summary),
               "--out", str(tmp_path / "cli_sig.png")])
    assert rc == 0
    rc = main(["spectrum", "--csv", str(spectrum_csv), "--summary", str(summary),
               "--overlay", "target", "--out", str(tmp_path / "cli_spec.png"),
               "--max-ridge-bins", "2.0"])
    assert rc == 0
    assert (tmp_path / "cli_spec.png").exists()


def test_cli_ridge_check_fails_on_bad_summary(tmp_path):
    _, spectrum_csv, summary = synthetic_outputs(tmp_path)
    doc = json.loads(Path(summary).read_text())
    doc["overlays"]["target"] = [[w, 0.9] for w, _ in doc["overlays"]["target"]]
    bad = tmp_path / "bad_summary.json"
    bad.write_text(json.dumps(doc), encoding="utf-8")
    rc = main(["spectrum", "--csv", str(spectrum_csv), "--summary", str(bad),
               "--overlay", "target", "--out", str(tmp_path / "bad.png"),
               "--max-ridge-bins", "2.0"])
    assert rc == 3


def test_cli_unknown_overlay_rejected(tmp_path):
    _, spectrum_csv, summary = synthetic_outputs(tmp_path)
    rc = main(["spectrum", "--csv", str(spectrum_csv), "--summary", str(summary),
               "--overlay", "ghost", "--out", str(tmp_path / "g.png")])
    assert rc == 2


def test_cli_malformed_csv_exit_code(tmp_path):
    bad = tmp_path / "broken.csv"
    bad.write_text("omega,tau\n1,2\n", encoding="utf-8")
    rc = main(["signal", "--csv", str(bad), "--out", str(tmp_path / "b.png")])
    assert rc == 2


@pytest.mark.integration
def test_against_miniature_simulator_outputs(tmp_path):
    # exercise the actual file interface end to end with a miniature run;
    # the coarse dwell record cannot pin ridges to bins, so no ridge gate
    kposim_cli = pytest.importorskip("kposim.cli")
    cfg = {
        "params": {"chi": [1.0], "detuning": [1.0], "pump": [1.0],
                   "coherent_drive": [1.0], "gamma": 0.0},
        "schedule": {"t_ann": 500.0, "s1": 0.5, "tau_max": 300.0, "lambda": 0.1},
        "cutoffs": [12],
        "observable": "n1",
        "target_level": 1,
        "sweep": {"omega_lo": 0.85, "omega_hi": 1.15, "omega_points": 9,
                  "omega_units": "gap", "tau_points": 601},
        "integrator": {"method": "split", "dt": 0.01},
        "threads": 1,
    }
    cfg_path = tmp_path / "mini.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    out = tmp_path / "run"
    assert kposim_cli.main(["oracle", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert kposim_cli.main(["sweep", "--config", str(cfg_path), "--out", str(out)]) == 0
    rc = main(["signal", "--csv", str(out / "signal.csv"),
               "--summary", str(out / "oracle_summary.json"),
               "--out", str(tmp_path / "real_sig.png")])
    assert rc == 0
    rc = main(["spectrum", "--csv", str(out / "spectrum.csv"),
               "--summary", str(out / "oracle_summary.json"),
               "--overlay", "target", "--out", str(tmp_path / "real_spec.png")])
    assert rc == 0
    assert (tmp_path / "real_spec.png").stat().st_size > 5000


@pytest.mark.integration
@pytest.mark.slow
def test_benchmark_figures_and_ridge_smoke(tmp_path):
    # full bundled benchmark: render the figure analogues and require every
    # overlay to sit within 2 bins of the measured ridge it annotates
    kposim_cli = pytest.importorskip("kposim.cli")
    from importlib import resources

    with resources.as_file(resources.files("kposim") / "configs" /
                           "one_kpo.json") as cfg_path:
        out = tmp_path / "bench"
        assert kposim_cli.main(["oracle", "--config", str(cfg_path),
                                "--out", str(out)]) == 0
        assert kposim_cli.main(["sweep", "--config", str(cfg_path),
                                "--out", str(out), "--threads", "2"]) == 0
    rc = main(["signal", "--csv", str(out / "signal.csv"),
               "--summary", str(out / "oracle_summary.json"),
               "--out", str(tmp_path / "bench_sig.png")])
    assert rc == 0
    rc = main(["spectrum", "--csv", str(out / "spectrum.csv"),
               "--summary", str(out / "oracle_summary.json"),
               "--overlay", "target,pair,twophoton",
               "--out", str(tmp_path / "bench_spec.png"),
               "--max-ridge-bins", "2.0"])
    assert rc == 0
    rc = main(["spectrum", "--csv", str(out / "spectrum.csv"),
               "--summary", str(out / "oracle_summary.json"),
               "--out", str(tmp_path / "bench_spec_plain.png")])
    assert rc == 0
