"""
Result files: the failure-rate CSV table, its spreadsheet twin, the fit
report JSON, DEM text and packed detection events.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np
import openpyxl
import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill
from pydantic import BaseModel

from models.schemas import FailureEstimate, FitReport, RunConfig
from services.circuit_decoder_service import pack_events, unpack_events
from services.dem_service import DetectorErrorModel, parse_dem, serialize_dem
from utils import config
from utils.error_handler import InputFormatError, SchemaError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RESULT_COLUMNS = ["d", "T", "p", "schedule", "basis", "shots", "failures", "pfail", "ci_lo", "ci_hi", "seed"]
FLOAT_COLUMNS = ("p", "pfail", "ci_lo", "ci_hi")


def _g17(value: float) -> str:
    return format(float(value), ".17g")


def header_line(run_config: Optional[RunConfig] = None) -> str:
    payload = run_config.model_dump(exclude_none=True) if run_config else {}
    return f"# {config.ARTIFACT_NAME} {config.ARTIFACT_VERSION} config={json.dumps(payload, sort_keys=True)}"


def estimate_rows(estimate: FailureEstimate) -> List[dict]:
    """Per-basis rows of an estimate; summed estimates expand to their components"""
    parts = [estimate.components[b] for b in ("Z", "X") if b in estimate.components] or [estimate]
    return [
        {
            "d": part.d,
            "T": part.T,
            "p": part.p,
            "schedule": part.schedule or "",
            "basis": part.basis,
            "shots": part.shots,
            "failures": part.failures,
            "pfail": part.pfail,
            "ci_lo": part.ci_low,
            "ci_hi": part.ci_high,
            "seed": part.seed,
        }
        for part in parts
    ]


class ExportService:
    """Writes and reads the files the command line produces"""

    def results_frame(self, estimates: Iterable[FailureEstimate]) -> pd.DataFrame:
        rows = [row for estimate in estimates for row in estimate_rows(estimate)]
        return pd.DataFrame(rows, columns=RESULT_COLUMNS)

    def write_results_csv(
        self,
        estimates: Iterable[FailureEstimate],
        path: Optional[PathLike] = None,
        run_config: Optional[RunConfig] = None,
    ) -> str:
        """
        Render estimates as the results table; floats carry 17 significant digits

        Args:
            estimates: failure estimates, one row per basis
            path: file to write, or None to only return the text
            run_config: recorded in the leading comment line

        Returns:
            The CSV text
        """
        frame = self.results_frame(estimates)
        for column in FLOAT_COLUMNS:
            frame[column] = frame[column].map(_g17)
        text = header_line(run_config) + "\n" + frame.to_csv(index=False, lineterminator="\n")
        if path is not None:
            Path(path).write_text(text)
            logger.info(f"Wrote {len(frame)} result rows to {path}")
        return text

    def read_results_csv(self, path: PathLike) -> pd.DataFrame:
        try:
            frame = pd.read_csv(path, comment="#", dtype={"schedule": str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise InputFormatError(f"Cannot read result table {path}: {e}")
        missing = [column for column in RESULT_COLUMNS if column not in frame.columns]
        if missing:
            raise SchemaError(f"Result table {path} lacks columns {missing}", {"missing": missing})
        frame["schedule"] = frame["schedule"].fillna("")
        return frame

    def write_results_excel(
        self, estimates: Iterable[FailureEstimate], path: PathLike, run_config: Optional[RunConfig] = None
    ):
        frame = self.results_frame(estimates)
        wb = openpyxl.Workbook()
        ws = wb.active
        ws.title = "Failure rates"

        header_fill = PatternFill(start_color="0073AE", end_color="0073AE", fill_type="solid")
        ws["A1"] = f"{config.ARTIFACT_NAME} {config.ARTIFACT_VERSION}"
        ws["A1"].font = Font(bold=True, size=14, color="0073AE")
        ws["A2"] = f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}"
        ws["A3"] = header_line(run_config)[2:]

        start_row = 5
        for col_idx, column in enumerate(RESULT_COLUMNS, start=1):
            cell = ws.cell(row=start_row, column=col_idx, value=column)
            cell.fill = header_fill
            cell.font = Font(bold=True, color="FFFFFF", size=11)
            cell.alignment = Alignment(horizontal="left", vertical="center")
        for row_idx, row in enumerate(frame.itertuples(index=False), start=start_row + 1):
            for col_idx, value in enumerate(row, start=1):
                ws.cell(row=row_idx, column=col_idx, value=value.item() if hasattr(value, "item") else value)

        for col_idx, column in enumerate(RESULT_COLUMNS, start=1):
            width = max([len(column)] + [len(str(v)) for v in frame[column]])
            ws.column_dimensions[openpyxl.utils.get_column_letter(col_idx)].width = min(width + 2, 50)

        wb.save(path)
        logger.info(f"Excel written: {len(frame)} rows to {path}")

    def write_json(self, result: BaseModel, run_config: Optional[RunConfig] = None) -> str:
        """Result model as JSON, tagged with the artifact, version and run config like a fit report"""
        payload = {
            "artifact": config.ARTIFACT_NAME,
            "version": config.ARTIFACT_VERSION,
            "config": run_config.model_dump(mode="json", exclude_none=True) if run_config else {},
        }
        payload.update(result.model_dump(mode="json"))
        return json.dumps(payload, indent=2) + "\n"

    def write_schedules(self, schedules: Iterable[str], run_config: Optional[RunConfig] = None) -> str:
        return "".join([header_line(run_config) + "\n"] + [s + "\n" for s in schedules])

    def write_report(self, report: FitReport, path: Optional[PathLike] = None) -> str:
        text = report.model_dump_json(indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def write_dem(self, dem: DetectorErrorModel, path: PathLike, run_config: Optional[RunConfig] = None):
        Path(path).write_text(serialize_dem(dem, [header_line(run_config)[2:]]))
        logger.info(f"Wrote DEM with {dem.num_mechanisms} mechanisms to {path}")

    def read_dem(self, path: PathLike) -> DetectorErrorModel:
        return parse_dem(Path(path).read_text())

    def write_events(self, events: np.ndarray, path: PathLike):
        """Packed detection events, one row per shot, little-endian bit order"""
        np.asarray(pack_events(events)).tofile(path)

    def read_events(self, path: PathLike, num_detectors: int) -> np.ndarray:
        raw = np.fromfile(path, dtype=np.uint8)
        row_bytes = (num_detectors + 7) // 8
        if row_bytes == 0 or raw.size % row_bytes:
            raise InputFormatError(
                f"{path} holds {raw.size} bytes, not a whole number of {row_bytes}-byte rows"
            )
        return unpack_events(raw.reshape(-1, row_bytes), num_detectors)


export_service = ExportService()
