"""Pytest configuration and shared fixtures."""

import os
from pathlib import Path

# Must be set before utils.config is imported
os.environ["CMWPM_LOG_TO_FILE"] = "false"
os.environ["CMWPM_WORKERS"] = "1"
os.environ.setdefault("CMWPM_MATCHING_BACKEND", "sparse_blossom")

import numpy as np
import pytest

from services.circuit_decoder_service import CircuitDecoderService
from services.circuit_service import apply_noise, build_memory_circuit
from services.dem_service import extract_dem
from services.lattice_service import build_triangular

GOLDEN_DIR = Path(__file__).parent / "tests" / "data"


@pytest.fixture(scope="session")
def lattice3():
    return build_triangular(3)


@pytest.fixture(scope="session")
def lattice5():
    return build_triangular(5)


@pytest.fixture(scope="session")
def lattice7():
    return build_triangular(7)


@pytest.fixture(scope="session")
def circuit_d3_t2():
    """Noiseless d=3, T=2 memory circuit with the optimal schedule."""
    return build_memory_circuit(3, 2)


@pytest.fixture(scope="session")
def noisy_d3_t2(circuit_d3_t2):
    return apply_noise(circuit_d3_t2, 1e-3)


@pytest.fixture(scope="session")
def dem_d3_t2(noisy_d3_t2):
    return extract_dem(noisy_d3_t2)


@pytest.fixture(scope="session")
def decoder_d3_t2(dem_d3_t2):
    return CircuitDecoderService(dem_d3_t2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def simple_dem_text():
    """Two detectors of different colors and bases plus a boundary-like fault."""
    return """# test model
detector(0, 0, 1, 0) D0
detector(1, 0, 1, 1) D1
error(0.1) D0 L0
error(0.1) D0 D1
error(0.2) D1
"""


@pytest.fixture
def golden():
    """Stored text of tests/data/<name>; a missing file is written from `text` and the test skipped"""
    def stored(name: str, text: str) -> str:
        path = GOLDEN_DIR / name
        if not path.exists():
            path.write_text(text)
            pytest.skip(f"Wrote new golden file {name}")
        return path.read_text()
    return stored
