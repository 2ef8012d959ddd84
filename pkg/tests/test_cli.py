import json

import pandas as pd
import pytest

from main import main, point_stream
from services.export_service import RESULT_COLUMNS, export_service
from services.montecarlo_service import sample


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_point_streams_differ():
    assert point_stream(3, 3, 1e-3) == point_stream(3, 3, 1e-3)
    assert point_stream(3, 3, 1e-3) != point_stream(5, 5, 1e-3)


def test_enumerate_without_valid_schedules(capsys):
    code, out, _ = run(capsys, "enumerate-schedules", "--length", "6")
    assert code == 0
    assert out.startswith("# colorcode-concat-mwpm")
    assert out.count("\n") == 1


def test_enumerate_reduced(tmp_path, capsys):
    path = tmp_path / "schedules.txt"
    code, _, _ = run(capsys, "enumerate-schedules", "--reduce", "--out", str(path))
    assert code == 0
    header, *schedules = path.read_text().splitlines()
    assert '"command": "enumerate-schedules"' in header
    assert len(schedules) == 292


def test_validate_schedule(capsys):
    code, out, _ = run(capsys, "validate-schedule", "--schedule", "2,3,6,5,4,1;3,4,7,6,5,2", "--d", "3")
    assert code == 0
    report = json.loads(out)
    assert report["valid"]
    assert report["artifact"] == "colorcode-concat-mwpm"
    assert report["config"]["command"] == "validate-schedule"

    code, out, err = run(capsys, "validate-schedule", "--schedule", "1,1,2,3,4,5;6,7,2,3,4,5", "--d", "3")
    assert code == 2
    assert not json.loads(out)["valid"]
    assert "INVALID_SCHEDULE" in err


def test_malformed_schedule_argument(capsys):
    code, _, err = run(capsys, "validate-schedule", "--schedule", "1,2,3")
    assert code == 2
    assert "INPUT_FORMAT_ERROR" in err


def test_simulate_is_reproducible(capsys):
    argv = ("simulate", "--mode", "bitflip", "--d", "3,5", "--p", "0.06:0.10:5", "--shots", "1000", "--seed", "3")
    code, first, _ = run(capsys, *argv)
    assert code == 0
    _, second, _ = run(capsys, *argv)
    assert first == second
    rows = [line for line in first.splitlines() if not line.startswith("#")]
    assert rows[0] == ",".join(RESULT_COLUMNS)
    assert len(rows) == 11


def test_simulate_needs_a_shot_rule(capsys):
    code, _, err = run(capsys, "simulate", "--mode", "bitflip", "--d", "3", "--p", "0.05")
    assert code == 2
    assert "USAGE_ERROR" in err


def test_simulate_rejects_even_distance(capsys):
    code, _, err = run(capsys, "simulate", "--mode", "bitflip", "--d", "4", "--p", "0.05", "--shots", "10")
    assert code == 2
    assert "INVALID_DISTANCE" in err


def test_simulate_budget_exhaustion(tmp_path, capsys):
    path = tmp_path / "results.csv"
    code, _, err = run(
        capsys, "simulate", "--mode", "bitflip", "--d", "3", "--p", "0.05",
        "--ci", "1e-6", "--max-shots", "300", "--out", str(path),
    )
    assert code == 4
    assert "BUDGET_EXCEEDED" in err
    frame = export_service.read_results_csv(path)
    assert list(frame["shots"]) == [300]


def test_simulate_excel(tmp_path, capsys):
    path = tmp_path / "results.xlsx"
    code, _, _ = run(capsys, "simulate", "--mode", "bitflip", "--d", "3", "--p", "0.05", "--shots", "500", "--out", str(path))
    assert code == 0
    assert path.stat().st_size > 0


def test_noiseless_dem_is_empty(tmp_path, capsys):
    path = tmp_path / "empty.dem"
    code, _, _ = run(capsys, "export-dem", "--d", "3", "--T", "2", "--p", "0", "--out", str(path))
    assert code == 0
    assert path.read_text() == ""


def test_restricted_dem_avoids_its_color(tmp_path, capsys):
    path = tmp_path / "r.dem"
    code, _, _ = run(
        capsys, "export-dem", "--d", "3", "--T", "2", "--p", "0.001",
        "--color", "r", "--part", "restricted", "--out", str(path),
    )
    assert code == 0
    dem = export_service.read_dem(path)
    red = set(dem.detectors_of_color("r").tolist())
    assert dem.num_mechanisms > 0
    assert all(not red & set(m.detectors) for m in dem.mechanisms)


def test_part_needs_color(capsys):
    code, _, _ = run(capsys, "export-dem", "--d", "3", "--T", "2", "--p", "0.001", "--part", "only")
    assert code == 2


def test_decode_command(tmp_path, capsys, dem_d3_t2, decoder_d3_t2):
    dem_path, events_path, out_path = tmp_path / "model.dem", tmp_path / "shots.b8", tmp_path / "pred.csv"
    export_service.write_dem(dem_d3_t2, dem_path)
    batch = sample(dem_d3_t2, 50, seed=2)
    export_service.write_events(batch.events, events_path)

    code, _, _ = run(capsys, "decode", "--dem", str(dem_path), "--events", str(events_path), "--out", str(out_path))
    assert code == 0
    frame = pd.read_csv(out_path, comment="#")
    assert list(frame.columns) == ["shot", "prediction", "color", "w_r", "w_g", "w_b"]
    flips, _, _ = decoder_d3_t2.decode_batch(batch.events)
    assert list(frame["prediction"]) == flips[:, 0].astype(int).tolist()


def test_decode2d_command(capsys):
    code, out, _ = run(capsys, "decode2d", "--d", "3", "--error", "0")
    assert code == 0
    result = json.loads(out)
    assert result["prediction"] == [0]
    assert result["config"]["command"] == "decode2d"

    code, _, _ = run(capsys, "decode2d", "--d", "3")
    assert code == 2


def test_circuit_command(capsys):
    code, out, _ = run(capsys, "circuit", "--d", "3", "--T", "1", "--p", "0.001")
    assert code == 0
    assert out.startswith("# colorcode-concat-mwpm")
    assert "DEPOLARIZE1(0.001)" in out


def fit_table(path):
    rows = []
    for d, exponent in ((3, 2), (5, 3), (7, 4)):
        for p in (0.004, 0.007, 0.013, 0.02):
            rate = 1e-2 * (p / 0.01) ** exponent
            rows.append((d, 1, p, "", "ZX", 10 ** 6, int(rate * 10 ** 6), rate, rate * 0.9, rate * 1.1, 0))
    pd.DataFrame(rows, columns=RESULT_COLUMNS).to_csv(path, index=False)


def test_fit_command(tmp_path, capsys):
    table, report_path = tmp_path / "results.csv", tmp_path / "report.json"
    fit_table(table)
    code, _, _ = run(capsys, "fit", str(table), "--out", str(report_path))
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["artifact"] == "colorcode-concat-mwpm"
    assert report["thresholds"]["1"]["p_threshold"] == pytest.approx(0.01, rel=1e-6)
    assert report["ansatz"]["p_star"] is not None


def test_fit_rejects_partial_table(tmp_path, capsys):
    path = tmp_path / "partial.csv"
    path.write_text("d,T,p\n3,1,0.1\n")
    code, _, err = run(capsys, "fit", str(path))
    assert code == 2
    assert "SCHEMA_ERROR" in err
