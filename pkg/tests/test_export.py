import csv
import json

import numpy as np
import openpyxl
import pytest

from models.schemas import DecodeResult2D, FailureEstimate, RunConfig
from services.export_service import RESULT_COLUMNS, export_service, header_line
from services.montecarlo_service import sample
from utils.error_handler import InputFormatError, SchemaError


def basis_estimate(basis, failures, schedule="2,3,6,5,4,1;3,4,7,6,5,2"):
    pfail = failures / 3000
    return FailureEstimate(
        d=3, T=3, p=1 / 3 * 1e-2, schedule=schedule, basis=basis, shots=3000,
        failures=failures, pfail=pfail, ci_low=pfail / 2, ci_high=pfail * 2, seed=7,
    )


@pytest.fixture
def summed():
    z, x = basis_estimate("Z", 30), basis_estimate("X", 9, "3,4,7,6,5,2;2,3,6,5,4,1")
    total = z.pfail + x.pfail
    return FailureEstimate(
        d=3, T=3, p=z.p, schedule=z.schedule, basis="ZX", shots=3000, failures=39,
        pfail=total, ci_low=total / 2, ci_high=total * 2, seed=7, components={"Z": z, "X": x},
    )


def test_csv_layout(summed):
    text = export_service.write_results_csv([summed], run_config=RunConfig(command="simulate", d=[3]))
    lines = text.splitlines()
    assert lines[0].startswith("# colorcode-concat-mwpm 1.0.0 config=")
    assert json.loads(lines[0].split("config=", 1)[1])["d"] == [3]
    assert lines[1] == ",".join(RESULT_COLUMNS)
    assert len(lines) == 4
    z_row = next(csv.reader([lines[2]]))
    assert z_row[4] == "Z"
    # p written with 17 significant digits
    assert float(z_row[2]) == summed.p
    assert z_row[2] == format(summed.p, ".17g")


def test_csv_round_trip(summed, tmp_path):
    path = tmp_path / "results.csv"
    export_service.write_results_csv([summed], path)
    frame = export_service.read_results_csv(path)
    assert list(frame["basis"]) == ["Z", "X"]
    assert list(frame["failures"]) == [30, 9]
    assert frame["pfail"][0] == pytest.approx(summed.components["Z"].pfail, rel=1e-15)
    assert frame["schedule"][1] == "3,4,7,6,5,2;2,3,6,5,4,1"


def test_single_basis_row():
    frame = export_service.results_frame([basis_estimate("Z", 4, schedule=None)])
    assert len(frame) == 1
    assert frame["schedule"][0] == ""


def test_missing_columns(tmp_path):
    path = tmp_path / "partial.csv"
    path.write_text("d,T,p\n3,1,0.1\n")
    with pytest.raises(SchemaError):
        export_service.read_results_csv(path)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(InputFormatError):
        export_service.read_results_csv(empty)


def test_excel_export(summed, tmp_path):
    path = tmp_path / "results.xlsx"
    export_service.write_results_excel([summed], path, RunConfig(command="simulate"))
    ws = openpyxl.load_workbook(path).active
    assert ws["A1"].value == "colorcode-concat-mwpm 1.0.0"
    assert [ws.cell(row=5, column=k + 1).value for k in range(len(RESULT_COLUMNS))] == RESULT_COLUMNS
    assert ws.cell(row=6, column=5).value == "Z"
    assert ws.cell(row=7, column=7).value == 9


def test_header_without_config():
    assert header_line() == "# colorcode-concat-mwpm 1.0.0 config={}"


def test_dem_file_round_trip(dem_d3_t2, tmp_path):
    path = tmp_path / "model.dem"
    export_service.write_dem(dem_d3_t2, path, RunConfig(command="export-dem"))
    assert path.read_text().startswith("# colorcode-concat-mwpm")
    assert export_service.read_dem(path) == dem_d3_t2


def test_events_file(dem_d3_t2, tmp_path):
    path = tmp_path / "shots.b8"
    events = sample(dem_d3_t2, 37, seed=1).events
    export_service.write_events(events, path)
    row_bytes = (dem_d3_t2.num_detectors + 7) // 8
    assert path.stat().st_size == 37 * row_bytes
    assert np.array_equal(export_service.read_events(path, dem_d3_t2.num_detectors), events)
    with pytest.raises(InputFormatError):
        export_service.read_events(path, dem_d3_t2.num_detectors + 8)


def test_json_results_carry_the_run_config():
    result = DecodeResult2D(predictions={"r": [1]}, weights={"r": 1}, chosen_color="r", prediction=[1])
    payload = json.loads(export_service.write_json(result, RunConfig(command="decode2d", d=[3])))
    assert payload["artifact"] == "colorcode-concat-mwpm"
    assert payload["config"]["d"] == [3]
    assert payload["prediction"] == [1]


def test_schedule_listing_has_a_header():
    text = export_service.write_schedules(["2,3,6,5,4,1;3,4,7,6,5,2"], RunConfig(command="enumerate-schedules"))
    header, schedule = text.splitlines()
    assert header == header_line(RunConfig(command="enumerate-schedules"))
    assert schedule == "2,3,6,5,4,1;3,4,7,6,5,2"
