import os
from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or not value.strip():
        return default
    return int(float(value))


ARTIFACT_NAME = "colorcode-concat-mwpm"
ARTIFACT_VERSION = "1.0.0"

# Color order doubles as the tie-break order R < G < B
COLORS = ("r", "g", "b")

# [a,b,c,d,e,f; g,h,i,j,k,l] of the optimal length-7 schedule
OPTIMAL_SCHEDULE = (2, 3, 6, 5, 4, 1, 3, 4, 7, 6, 5, 2)

WEIGHT_SCALE = 2 ** 16
CI_ALPHA = 0.01

MATCHING_BACKEND = os.getenv("CMWPM_MATCHING_BACKEND", "sparse_blossom")
LOG_DIRECTORY = os.getenv("CMWPM_LOG_DIR", "logs")
LOG_TO_FILE = _env_bool("CMWPM_LOG_TO_FILE", True)

WORKERS = _env_int("CMWPM_WORKERS", 1)
INITIAL_SHOTS = _env_int("CMWPM_INITIAL_SHOTS", 10 ** 4)
MAX_SHOTS = _env_int("CMWPM_MAX_SHOTS", 10 ** 8)
SHOT_BLOCK = _env_int("CMWPM_SHOT_BLOCK", 256)
INCLUDE_STAGE1_WEIGHT = _env_bool("CMWPM_INCLUDE_STAGE1_WEIGHT", False)

# Nonlinear fit settings for the long-term threshold
FIT_TOLERANCE = 1e-12
FIT_MAX_ITERATIONS = 10 ** 4
