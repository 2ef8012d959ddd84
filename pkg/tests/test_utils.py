import logging

import pytest

from utils.error_handler import (
    BudgetExceededError,
    DegenerateInputError,
    ErrorDetails,
    InputFormatError,
    InvalidDistanceError,
    error_handler,
)
from utils.input_parser import input_parser
from utils.resource_monitor import resource_monitor
from utils.run_logger import run_logger
from utils.worker_pool import ShotWorkerPool


def square(x):
    return x * x


def test_parse_int_list():
    assert input_parser.parse_int_list(" 3, 5,7 ") == [3, 5, 7]
    assert input_parser.parse_int_list("") == []
    with pytest.raises(InputFormatError):
        input_parser.parse_int_list("3,five")


def test_parse_qubit_set():
    assert input_parser.parse_qubit_set("4,9,4") == frozenset({4, 9})
    with pytest.raises(InputFormatError):
        input_parser.parse_qubit_set("-1")


def test_parse_p_values():
    assert input_parser.parse_p_values("0.001") == [0.001]
    assert input_parser.parse_p_values("0.05,0.08") == [0.05, 0.08]
    grid = input_parser.parse_p_values("0.001:0.1:3")
    assert grid == pytest.approx([0.001, 0.01, 0.1])
    assert input_parser.parse_p_values("0.02:0.04:1") == [0.02]
    for bad in ("abc", "0:0.1:3", "0.1:0.2:0"):
        with pytest.raises(InputFormatError):
            input_parser.parse_p_values(bad)


def test_parse_schedule():
    assert input_parser.parse_schedule(" 2,3,6,5,4,1 ; 3,4,7,6,5,2 ") == (2, 3, 6, 5, 4, 1, 3, 4, 7, 6, 5, 2)
    assert input_parser.format_schedule((2, 3, 6, 5, 4, 1, 3, 4, 7, 6, 5, 2)) == "2,3,6,5,4,1;3,4,7,6,5,2"


@pytest.mark.parametrize("value,expected", [("r", "r"), ("Green", "g"), (" BLUE ", "b")])
def test_parse_color(value, expected):
    assert input_parser.parse_color(value) == expected


def test_parse_unknown_color():
    with pytest.raises(InputFormatError):
        input_parser.parse_color("yellow")


@pytest.mark.parametrize("exc,code,exit_code", [
    (InvalidDistanceError("d=4"), "INVALID_DISTANCE", 2),
    (DegenerateInputError("flat"), "DEGENERATE_INPUT", 3),
    (BudgetExceededError("budget"), "BUDGET_EXCEEDED", 4),
    (RuntimeError("boom"), "INTERNAL_ERROR", 1),
])
def test_error_details(exc, code, exit_code):
    details = error_handler.describe(exc)
    assert isinstance(details, ErrorDetails)
    assert details.error_code == code
    assert details.exit_code == exit_code


def test_handle_prints_one_line(capsys):
    assert error_handler.handle(InputFormatError("bad value in /home/user/data/file.csv")) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1
    assert err.startswith("error [INPUT_FORMAT_ERROR]")
    assert "[FILE_PATH]" in err
    assert "/home/user" not in err


def test_run_log_entries_are_json():
    records = []

    class Collect(logging.Handler):
        def emit(self, record):
            records.append(record.getMessage())

    handler = Collect()
    run_logger.run_logger.addHandler(handler)
    try:
        run_logger.log_run_end("simulate", 0, 1.23456)
    finally:
        run_logger.run_logger.removeHandler(handler)
    assert len(records) == 1
    assert '"event": "run_end"' in records[0]
    assert '"elapsed_s": 1.235' in records[0]


def test_worker_pool_keeps_order():
    with ShotWorkerPool(1) as pool:
        assert pool.map(square, range(5)) == [0, 1, 4, 9, 16]
    with ShotWorkerPool(2) as pool:
        assert pool.map(square, range(20)) == [x * x for x in range(20)]


def test_resource_snapshot():
    snapshot = resource_monitor.snapshot()
    assert snapshot["memory_usage_mb"] > 0
    assert resource_monitor.recommended_workers(3) == 3
    assert resource_monitor.recommended_workers(0) >= 1


@pytest.mark.parametrize("seconds,text", [(5, "5s"), (65, "1m 5s"), (3725, "1h 2m 5s")])
def test_format_uptime(seconds, text):
    assert resource_monitor._format_uptime(seconds) == text
