import re
import sys
import traceback
from typing import Any, Dict, Optional

from pydantic import BaseModel

from utils.run_logger import run_logger


class DecoderError(Exception):
    """Base class of every error raised by the decoder toolkit."""

    error_code = "INTERNAL_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


class UsageError(DecoderError):
    error_code = "USAGE_ERROR"


class InvalidDistanceError(UsageError):
    error_code = "INVALID_DISTANCE"


class ScheduleError(UsageError):
    error_code = "INVALID_SCHEDULE"


class SchemaError(UsageError):
    error_code = "SCHEMA_ERROR"


class InputFormatError(UsageError):
    error_code = "INPUT_FORMAT_ERROR"


class InfeasibleError(DecoderError):
    error_code = "INFEASIBLE_INPUT"


class MatchingInfeasibleError(InfeasibleError):
    error_code = "MATCHING_INFEASIBLE"


class DegenerateInputError(InfeasibleError):
    error_code = "DEGENERATE_INPUT"


class NoCrossingError(InfeasibleError):
    error_code = "NO_CROSSING"


class BudgetExceededError(DecoderError):
    error_code = "BUDGET_EXCEEDED"


class ErrorDetails(BaseModel):
    error_code: str
    error_type: str
    message: str
    exit_code: int
    suggested_action: Optional[str] = None


class GlobalErrorHandler:

    EXIT_CODES = {
        "USAGE_ERROR": 2,
        "INVALID_DISTANCE": 2,
        "INVALID_SCHEDULE": 2,
        "SCHEMA_ERROR": 2,
        "INPUT_FORMAT_ERROR": 2,
        "INFEASIBLE_INPUT": 3,
        "MATCHING_INFEASIBLE": 3,
        "DEGENERATE_INPUT": 3,
        "NO_CROSSING": 3,
        "BUDGET_EXCEEDED": 4,
        "INTERNAL_ERROR": 1,
    }

    SUGGESTED_ACTIONS = {
        "INVALID_DISTANCE": "Use an odd code distance d >= 3",
        "INVALID_SCHEDULE": "Run 'validate-schedule' for diagnostics or pick one from 'enumerate-schedules'",
        "SCHEMA_ERROR": "Check that the CSV was written by 'simulate'",
        "INPUT_FORMAT_ERROR": "Check the argument syntax in --help",
        "MATCHING_INFEASIBLE": "The defect set has no valid matching; check the syndrome against the graph",
        "DEGENERATE_INPUT": "Use a non-zero noise strength or provide more data points",
        "NO_CROSSING": "Widen the sampled p range so the curves intersect",
        "BUDGET_EXCEEDED": "Raise --max-shots or relax the CI target",
    }

    @staticmethod
    def sanitize_error_message(error_message: str) -> str:
        """Remove absolute paths from error messages"""
        error_message = re.sub(r'[A-Za-z]:\\[^\s]+', '[FILE_PATH]', error_message)
        error_message = re.sub(r'(?<![\w.])/(?:[\w.-]+/)+[\w.-]+', '[FILE_PATH]', error_message)
        return error_message

    def describe(self, exc: BaseException) -> ErrorDetails:
        error_code = getattr(exc, "error_code", "INTERNAL_ERROR")
        return ErrorDetails(
            error_code=error_code,
            error_type=type(exc).__name__,
            message=self.sanitize_error_message(str(exc)),
            exit_code=self.EXIT_CODES.get(error_code, 1),
            suggested_action=self.SUGGESTED_ACTIONS.get(error_code)
        )

    def handle(self, exc: BaseException, context: Optional[Dict[str, Any]] = None) -> int:
        """Log an exception, print a one-line diagnostic and return the exit code"""
        details = self.describe(exc)
        additional_context = dict(context or {})
        additional_context.update(getattr(exc, "details", {}) or {})
        if details.error_code == "INTERNAL_ERROR":
            additional_context["traceback"] = traceback.format_exc()

        run_logger.log_error(
            error=exc,
            error_code=details.error_code,
            additional_context=additional_context
        )

        line = f"error [{details.error_code}]: {details.message}"
        if details.suggested_action:
            line += f" ({details.suggested_action})"
        print(line, file=sys.stderr)
        return details.exit_code


error_handler = GlobalErrorHandler()
