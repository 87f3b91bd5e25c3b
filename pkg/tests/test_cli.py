import csv
import json

import numpy as np
import pytest

from cimmcmc.cli import main
from cimmcmc.stats import Histogram, tv_distance

GMM8 = '{"type": "gmm", "bits": 8}'
TABLE4 = json.dumps({"type": "table", "table": [3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8, 9, 7, 9, 3]})


def cli(tmp_path, *args, out="out"):
    return main([*args, "--out", str(tmp_path / out), "--no-plots"])


def read_csv(path):
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load(path):
    return json.loads(path.read_text())


def test_sample_flat_outputs(tmp_path):
    assert cli(tmp_path, "sample", "--iterations", "10000", "--burn-in", "9900",
               "--compartments", "4") == 0
    out = tmp_path / "out"
    summary = load(out / "summary.json")
    assert summary["schema_version"] == 1
    assert summary["acceptance_rate"] == 1.0
    assert summary["ledger"]["total_energy_fj"] > 0
    assert summary["throughput_samples_per_s"] == pytest.approx(166.7e6 / 16, rel=0.005)
    rows = read_csv(out / "samples.csv")
    assert list(rows[0]) == ["compartment", "iteration", "candidate", "accepted", "value", "u8"]
    assert len(rows) == 4 * 100
    assert len(summary["per_compartment"]) == 4
    hist = read_csv(out / "histogram.csv")
    assert sum(int(r["count"]) for r in hist) == 400


def test_sample_gmm_tv(tmp_path):
    assert cli(tmp_path, "sample", "--target", GMM8, "--iterations", str(1000 + 3125),
               "--seed", "3") == 0
    summary = load(tmp_path / "out" / "summary.json")
    assert summary["n_samples"] == 200_000
    assert summary["tv"] < 0.03
    assert 0.5 < summary["acceptance_rate"] < 0.7


def test_sample_writes_figure(tmp_path):
    assert main(["sample", "--target", GMM8, "--iterations", "200", "--burn-in", "100",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "histogram.png").stat().st_size > 1000


def test_sample_deterministic_bytes(tmp_path):
    args = ["sample", "--target", GMM8, "--iterations", "400", "--burn-in", "100",
            "--compartments", "12", "--seed", "5"]
    assert cli(tmp_path, *args, out="a") == 0
    assert cli(tmp_path, *args, "--workers", "5", out="b") == 0
    for name in ("samples.csv", "summary.json", "histogram.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reference_flat_and_format(tmp_path):
    assert cli(tmp_path, "reference", "--iterations", "300", "--burn-in", "200") == 0
    summary = load(tmp_path / "out" / "summary.json")
    assert summary["acceptance_rate"] == 1.0
    rows = read_csv(tmp_path / "out" / "samples.csv")
    assert list(rows[0])[-1] == "u"
    assert all(0.0 <= float(r["u"]) < 1.0 for r in rows[:100])


def test_hardware_matches_reference(tmp_path):
    common = ["--target", TABLE4, "--iterations", str(1000 + 15625), "--seed", "1"]
    assert cli(tmp_path, "sample", *common, out="hw") == 0
    assert cli(tmp_path, "reference", *common, out="ref") == 0
    hw_sum, ref_sum = load(tmp_path / "hw" / "summary.json"), load(tmp_path / "ref" / "summary.json")
    assert hw_sum["n_samples"] == ref_sum["n_samples"] == 10 ** 6
    hw = np.array([int(r["count"]) for r in read_csv(tmp_path / "hw" / "histogram.csv")])
    ref = np.array([int(r["count"]) for r in read_csv(tmp_path / "ref" / "histogram.csv")])
    assert tv_distance(Histogram.from_counts(hw), ref) < 0.02
    assert abs(hw_sum["acceptance_rate"] - ref_sum["acceptance_rate"]) < 0.02


def test_rng_test_outputs(tmp_path):
    assert cli(tmp_path, "rng-test", "--draws", "50000", "--seed", "2") == 0
    summary = load(tmp_path / "out" / "rng_summary.json")
    assert summary["lambda_analytic"] == pytest.approx(0.5, abs=1e-7)
    assert len(summary["bit_frequency"]) == 8
    assert summary["chi_square"]["dof"] == 255
    rows = read_csv(tmp_path / "out" / "rng.csv")
    assert list(rows[0]) == ["draw_index", "u8_value"] and len(rows) == 50000


def test_transfer_matrix_outputs(tmp_path):
    assert cli(tmp_path, "transfer-matrix", "--trials", "20000") == 0
    summary = load(tmp_path / "out" / "transfer_summary.json")
    assert summary["symmetry_error"] < 1e-12 and summary["row_sum_error"] < 1e-12
    assert len(summary["row_p_values"]) == 16
    rows = read_csv(tmp_path / "out" / "transfer_matrix.csv")
    assert len(rows) == 256
    assert float(rows[0]["analytic"]) == pytest.approx(0.55 ** 4)


def test_perf_report(tmp_path):
    assert main(["perf-report", "--iterations", "500", "--burn-in", "0",
                 "--out", str(tmp_path)]) == 0
    rep = load(tmp_path / "perf_report.json")
    for key in ("energy_constants", "timing", "totals", "per_sample", "throughput_curve", "area"):
        assert key in rep
    assert [c["n_bits"] for c in rep["throughput_curve"]] == [4, 8, 16, 32]
    by_bits = rep["per_sample"]["by_bits"][0]
    assert by_bits["accepted_pj"] == pytest.approx(0.5065, rel=0.01)
    totals = rep["totals"]
    assert totals["ledger"]["total_energy_fj"] == pytest.approx(totals["model_total_fj"], rel=1e-3)
    assert (tmp_path / "energy_breakdown.png").exists() and (tmp_path / "throughput.png").exists()


def test_sweep_p_bfr(tmp_path):
    assert cli(tmp_path, "sweep", "--sweep", "p_bfr", "--start", "0.40", "--stop", "0.50",
               "--step", "0.01", "--iterations", "150", "--burn-in", "50") == 0
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert len(rows) == 11
    assert list(rows[0]) == ["param", "value", "p_bfr", "lambda3", "acceptance_rate", "tv"]
    assert all(abs(float(r["lambda3"]) - 0.5) <= 1.28e-6 for r in rows)


def test_sweep_temperature(tmp_path):
    assert cli(tmp_path, "sweep", "--sweep", "temperature", "--start", "-40", "--stop", "85",
               "--step", "5", "--cvdd", "0.5", "--iterations", "60", "--burn-in", "10",
               "--compartments", "4") == 0
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert float(rows[0]["p_bfr"]) == pytest.approx(0.40)
    for r in rows:
        if float(r["value"]) >= -20:
            assert float(r["p_bfr"]) == pytest.approx(0.45)


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "iterations": 50, "burn_in": 10, "compartments": 2,
                               "target": {"type": "gmm", "bits": 4}}))
    assert cli(tmp_path, "sample", "--config", str(cfg), "--seed", "7") == 0
    echoed = load(tmp_path / "out" / "summary.json")["config"]
    assert echoed["seed"] == 7 and echoed["iterations"] == 50


@pytest.mark.parametrize("args", [
    ["sweep", "--sweep", "cvdd", "--start", "0.6", "--stop", "0.5", "--step", "0.01"],
    ["sweep", "--sweep", "cvdd", "--start", "0.5", "--stop", "0.6", "--step", "0"],
    ["sample", "--bits", "6"],
    ["sample", "--iterations", "10", "--burn-in", "20"],
    ["sample", "--target", '{"type": "nope"}'],
    ["sample", "--target", "{broken"],
    ["sample", "--bits", "8", "--target", '{"type": "gmm", "bits": 4}'],
    ["sample", "--config", "/nonexistent/cfg.json"],
    ["transfer-matrix", "--bits", "12"],
])
def test_config_errors_exit_2(tmp_path, args, capsys):
    assert cli(tmp_path, *args) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"sed": 1}')
    assert cli(tmp_path, "sample", "--config", str(cfg)) == 2


def test_runtime_error_exit_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sample", "--iterations", "10", "--burn-in", "0", "--no-plots",
                 "--out", str(blocker / "sub")]) == 3
    assert "runtime error" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--seed", "notanint"])
    assert exc.value.code == 2
