import json
import logging
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional

from utils import config


class RunLogger:
    """Structured JSON log of simulation runs, estimates and failures."""

    def __init__(self, log_directory: str = config.LOG_DIRECTORY, to_file: bool = config.LOG_TO_FILE):
        self.log_directory = Path(log_directory)
        self.to_file = to_file
        if self.to_file:
            self.log_directory.mkdir(parents=True, exist_ok=True)

        # Separate loggers for run records and errors
        self.run_logger = self._setup_logger("run_audit", "run_audit.log")
        self.error_logger = self._setup_logger("error_audit", "error_audit.log")

    def _setup_logger(self, name: str, filename: str) -> logging.Logger:
        """Setup rotating file logger"""
        logger = logging.getLogger(name)
        logger.setLevel(logging.INFO)
        logger.propagate = False

        if not logger.handlers:
            if self.to_file:
                handler = RotatingFileHandler(
                    self.log_directory / filename,
                    maxBytes=50 * 1024 * 1024,  # 50MB
                    backupCount=10
                )
            else:
                handler = logging.NullHandler()
            formatter = logging.Formatter(
                '%(asctime)s | %(levelname)s | %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )
            handler.setFormatter(formatter)
            logger.addHandler(handler)

        return logger

    def _write(self, logger: logging.Logger, level: int, entry: Dict[str, Any]):
        entry = {"timestamp": datetime.now().isoformat(), **entry}
        try:
            logger.log(level, json.dumps(entry, default=str, sort_keys=True))
        except Exception as e:
            # Logging must never break a run
            logging.getLogger(__name__).warning(f"Run logging failed: {e}")

    def log_run_start(self, command: str, run_config: Dict[str, Any], resources: Optional[Dict[str, Any]] = None):
        """Log the full configuration of a CLI command"""
        self._write(self.run_logger, logging.INFO, {
            "event": "run_start",
            "command": command,
            "config": run_config,
            "resources": resources,
        })

    def log_run_end(self, command: str, exit_code: int, elapsed_s: float):
        self._write(self.run_logger, logging.INFO, {
            "event": "run_end",
            "command": command,
            "exit_code": exit_code,
            "elapsed_s": round(elapsed_s, 3),
        })

    def log_estimate(self, estimate: Dict[str, Any], elapsed_s: Optional[float] = None):
        """Log one failure-rate estimate point"""
        self._write(self.run_logger, logging.INFO, {
            "event": "estimate",
            "estimate": estimate,
            "elapsed_s": None if elapsed_s is None else round(elapsed_s, 3),
        })

    def log_schedule_diagnostics(self, schedule: str, diagnostics: Dict[str, Any]):
        self._write(self.run_logger, logging.INFO, {
            "event": "schedule_diagnostics",
            "schedule": schedule,
            "diagnostics": diagnostics,
        })

    def log_decomposition(self, color: str, report: Dict[str, Any]):
        """Log mechanisms dropped while decomposing a detector error model"""
        self._write(self.run_logger, logging.INFO, {
            "event": "dem_decomposition",
            "color": color,
            "report": report,
        })

    def log_error(
        self,
        error: Exception,
        error_code: Optional[str] = None,
        additional_context: Optional[Dict] = None
    ):
        """Log application errors"""
        self._write(self.error_logger, logging.ERROR, {
            "event": "error",
            "error_type": type(error).__name__,
            "error_message": str(error),
            "error_code": error_code,
            "additional_context": additional_context,
        })


# Global run logger
run_logger = RunLogger()
