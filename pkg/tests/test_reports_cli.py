import csv
import json

import numpy as np
import pytest

from vblast import analytic as an
from vblast import cli, reports
from vblast.curves import AnalyticCurve, EstimatedCurve


def _bodies(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_csv_schema_for_both_curve_kinds(tmp_path):
    est = EstimatedCurve.from_counts([-10.0, 0.0], [3, 400], 1000, "mc_demo", unit="x_db")
    ana = AnalyticCurve([-10.0, 0.0], [1 / 3, 0.123456789012345], "ana_demo", unit="x_db")
    reports.write_curve_csv(est, tmp_path / "a.csv")
    reports.write_curve_csv(ana, tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "abscissa,abscissa_unit,value,ci_low,ci_high,trials,label"
    assert lines[1] == "-10.0000,x_db,0.3333333333,,,,ana_demo"
    assert lines[2] == "0.0000,x_db,0.123456789,,,,ana_demo"
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert rows[0]["value"] == "0.003" and rows[0]["trials"] == "1000"
    assert float(rows[0]["ci_low"]) <= 0.003 <= float(rows[0]["ci_high"])


def test_csv_round_trip(tmp_path):
    est = EstimatedCurve.from_counts([0.0, 5.0], [30, 4], 1000, "mc", unit="gamma0_db")
    back = reports.read_curve_csv(reports.write_curve_csv(est, tmp_path / "c.csv"))
    assert isinstance(back, EstimatedCurve)
    np.testing.assert_allclose(back.estimates, est.estimates)
    assert back.unit == "gamma0_db" and back.label == "mc"
    ana = AnalyticCurve([0.1, 1.0], [0.01, 0.1], "lin", unit="x")
    back = reports.read_curve_csv(reports.write_curve_csv(ana, tmp_path / "d.csv"))
    assert isinstance(back, AnalyticCurve) and back.unit == "x"


def _write_ini(path, text):
    path.write_text(text)
    return path


def test_minimal_config_runs_with_defaults(tmp_path):
    ini = _write_ini(tmp_path / "min.ini", "[dims]\nn = 2\nm = 2\n")
    cfg, tasks, threads = reports.load_config(ini)
    assert cfg.channel_trials == 10**6 and cfg.seed == 0 and tasks == ("outage",) and threads == 1
    bundle = reports.run_custom(ini, tmp_path / "out")
    assert bundle.integrity_ok
    assert (tmp_path / "out" / "mc_step1_2x2_zf-sic_optimal.csv").exists()


def test_invalid_dims_names_field(tmp_path):
    ini = _write_ini(tmp_path / "bad.ini", "[dims]\nn = 2\nm = 3\n")
    with pytest.raises(reports.ConfigError, match="^dims"):
        reports.load_config(ini)
    assert cli.main(["run", str(ini), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("text,field", [
    ("[dims]\nn = 3\nm = 3\n[simulation]\nchannel_trials = 0\n", "channel_trials"),
    ("[dims]\nn = 3\nm = 3\n[receiver]\nmod = qpsk\n", "mod"),
    ("[dims]\nn = 3\nm = 3\n[simulation]\nsnr_grid_db = 5, 1\n", "snr_grid_db"),
    ("[dims]\nn = 3\nm = 3\n[bogus]\nx = 1\n", "bogus"),
    ("[dims]\nn = 3\nm = 3\n[run]\ntasks = plot\n", "run.tasks"),
    ("[receiver]\nmod = bpsk\n", "dims"),
])
def test_config_errors_name_fields(tmp_path, text, field):
    with pytest.raises(reports.ConfigError, match=field):
        reports.load_config(_write_ini(tmp_path / "c.ini", text))


def test_cli_flags_override_file(tmp_path):
    ini = _write_ini(tmp_path / "c.ini", "[dims]\nn = 3\nm = 2\n[simulation]\nseed = 5\nchannel_trials = 900\n")
    cfg, _, _ = reports.load_config(ini, {"seed": 11, "channel_trials": None})
    assert cfg.seed == 11 and cfg.channel_trials == 900


CUSTOM = """[dims]
n = 3
m = 3
[receiver]
ordering = optimal
mod = bpsk
[simulation]
channel_trials = 3000
noise_trials_per_channel = 4
seed = 17
snr_grid_db = 0, 5, 10
x_grid_db = -20, -10, 0
[run]
tasks = outage, error
threads = 2
"""


def test_same_config_twice_gives_identical_csv(tmp_path):
    ini = _write_ini(tmp_path / "c.ini", CUSTOM)
    a = reports.run_custom(ini, tmp_path / "a")
    b = reports.run_custom(ini, tmp_path / "b")
    assert _bodies(tmp_path / "a") == _bodies(tmp_path / "b")
    assert set(a.manifest.outputs) == {p.name for p in (tmp_path / "a").iterdir()}
    assert "mc_tber_3x3_zf-sic_optimal.csv" in a.manifest.outputs


def test_manifest_contents_and_replay(tmp_path):
    bundle = reports.run_custom(_write_ini(tmp_path / "c.ini", CUSTOM), tmp_path / "a")
    man = json.loads(bundle.manifest_path.read_text())
    assert man["seed"] == 17 and man["config"]["experiment"]["channel_trials"] == 3000
    assert man["formula_versions"]["f1_bound_closedform"]
    assert man["wall_clock_s"] >= 0 and man["discrepancies"] == []
    assert cli.main(["run", str(bundle.manifest_path), "--out-dir", str(tmp_path / "r")]) == cli.EXIT_OK
    assert _bodies(tmp_path / "a") == _bodies(tmp_path / "r")


def test_every_emitted_probability_in_unit_interval(tmp_path):
    reports.run_custom(_write_ini(tmp_path / "c.ini", CUSTOM), tmp_path / "a")
    for path in (tmp_path / "a").glob("mc_*.csv"):
        rows = list(csv.DictReader(open(path)))
        assert all(r["ci_low"] != "" and r["ci_high"] != "" for r in rows)
        for r in rows:
            assert 0 <= float(r["ci_low"]) <= float(r["value"]) <= float(r["ci_high"]) <= 1


def test_fig4_analytic_only_bundle(tmp_path):
    b = reports.run_figure("fig4", tmp_path, trials=0)
    assert not any(label.startswith("mc_") for label in b.curves)
    for n, m in reports.FIG4_SIZES:
        assert f"bound_asymptote_{n}x{m}" in b.curves and f"highsnr_{n}x{m}" in b.curves


def test_fig4_has_three_curves_per_size(tmp_path):
    b = reports.run_figure("fig4", tmp_path, trials=2000, seed=1)
    for n, m in reports.FIG4_SIZES:
        tags = [label for label in b.curves if label.endswith(f"_{n}x{m}")]
        assert sorted(tags) == sorted([f"bound_asymptote_{n}x{m}", f"highsnr_{n}x{m}", f"mc_step1_{n}x{m}"])
    assert (tmp_path / "offsets.csv").exists()


def test_fig6_covers_all_sizes(tmp_path):
    b = reports.run_figure("fig6", tmp_path, trials=0)
    for m in (2, 3, 4, 5, 10):
        assert f"bler_mrc_gain_{m}x{m}" in b.curves and f"bler_power_law_{m}x{m}" in b.curves


@pytest.mark.parametrize("fig", ["fig2", "fig3", "fig5"])
def test_other_figures_small_budget(tmp_path, fig):
    b = reports.run_figure(fig, tmp_path, trials=300, noise_trials=2, seed=4)
    assert any(label.startswith("mc_") for label in b.curves)
    assert all((tmp_path / name).exists() for name in b.manifest.outputs)


def test_unknown_figure(tmp_path):
    with pytest.raises(reports.ConfigError):
        reports.run_figure("fig9", tmp_path)
    assert cli.main(["figure", "fig9", "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG


def test_cli_simulate_and_compare(tmp_path, capsys):
    out = tmp_path / "sim"
    assert cli.main(["simulate-outage", "--n", "3", "--m", "3", "--trials", "5000", "--seed", "2",
                     "--x-grid-db=-20:0:5", "--out-dir", str(out)]) == 0
    assert cli.main(["simulate-error", "--n", "2", "--m", "2", "--trials", "500", "--noise-trials", "2",
                     "--snr-grid-db", "0,5", "--estimator", "semi-analytic", "--out-dir", str(tmp_path / "e")]) == 0
    capsys.readouterr()
    a = out / "mc_step1_3x3_zf-sic_optimal.csv"
    assert cli.main(["compare", str(a), str(a), "--levels", "0.1,0.01", "--out-dir", str(tmp_path / "cmp")]) == 0
    text = capsys.readouterr().out
    assert "0.0000" in text and text.startswith("curve_a,curve_b,level")


def test_cli_analytic_and_integrity_exit(tmp_path):
    an.clear_discrepancy_log()
    assert cli.main(["analytic", "f1-bound", "--n", "4", "--m", "3", "--out-dir", str(tmp_path / "ok")]) == 0
    assert cli.main(["analytic", "bler-two-step", "--n", "4", "--m", "3", "--out-dir", str(tmp_path / "b")]) == 0
    with pytest.warns(an.FormulaIntegrityWarning):
        code = cli.main(["analytic", "f1-bound", "--n", "5", "--m", "4", "--convention", "printed",
                         "--out-dir", str(tmp_path / "bad")])
    assert code == cli.EXIT_INTEGRITY
    # outputs are still written, from quadrature
    man = json.loads((tmp_path / "bad" / "manifest.json").read_text())
    assert man["discrepancies"] and (tmp_path / "bad" / "f1-bound_5x4.csv").exists()
    an.clear_discrepancy_log()
    assert cli.main(["analytic", "f1-bound", "--n", "2", "--m", "3", "--out-dir", str(tmp_path / "x")]) == 2


def test_cli_coeff_table(capsys):
    assert cli.main(["coeff-table", "3", "3"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["exponential_polynomials"]["2"] == ["3", "15/8", "3/8"]
    assert info["integrity_ok"] is True
    assert cli.main(["coeff-table", "2", "5"]) == 2
