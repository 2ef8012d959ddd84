"""
Concatenated MWPM decoding of circuit-level detection events.

Per color c: match the non-c events on the c-restricted graph, fire the
virtual detectors of the matched mechanisms, match the c events together
with the virtual ones on the c-only graph, and read the observable
correction off the second matching. The color with the lightest second
matching wins (ties R < G < B).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from matching.backend_factory import MatchingBackendFactory
from matching.base import MatchingBackend
from matching.graph import MatchGraph, quantize_weights
from models.schemas import DecodeResultCL
from services.circuit_service import Circuit, apply_noise, build_memory_circuit
from services.dem_service import Decomposition, DetectorErrorModel, decompose, extract_dem, to_match_graph
from utils import config
from utils.config import COLORS
from utils.error_handler import DecoderError, DegenerateInputError, InputFormatError, MatchingInfeasibleError

logger = logging.getLogger(__name__)


def pack_events(events: np.ndarray) -> np.ndarray:
    """Little-endian bit-packed rows, padded to a byte boundary"""
    return np.packbits(np.atleast_2d(np.asarray(events, dtype=bool)), axis=1, bitorder="little")


def unpack_events(packed: np.ndarray, num_detectors: int) -> np.ndarray:
    packed = np.atleast_2d(np.asarray(packed, dtype=np.uint8))
    if packed.shape[1] * 8 < num_detectors:
        raise InputFormatError(f"Rows of {packed.shape[1]} bytes cannot hold {num_detectors} detectors")
    return np.unpackbits(packed, axis=1, count=num_detectors, bitorder="little").astype(bool)


@dataclass
class _ColorStage:
    color: str
    decomposition: Decomposition
    restricted_graph: MatchGraph
    only_graph: MatchGraph
    restricted_backend: MatchingBackend
    only_backend: MatchingBackend
    own_mask: np.ndarray


class CircuitDecoderService:
    """Decode context built once from a circuit DEM; read-only afterwards."""

    def __init__(
        self,
        dem: DetectorErrorModel,
        backend: Optional[str] = None,
        include_stage1_weight: Optional[bool] = None,
    ):
        if not dem.mechanisms:
            raise DegenerateInputError("An empty detector error model cannot seed matching graphs")
        self.dem = dem
        self.backend = backend
        self.include_stage1_weight = (
            config.INCLUDE_STAGE1_WEIGHT if include_stage1_weight is None else include_stage1_weight
        )
        colors = np.array([info.color for info in dem.detectors], dtype=object)
        self._stages: Dict[str, _ColorStage] = {}
        for c in COLORS:
            decomposition = decompose(dem, c)
            restricted_graph = to_match_graph(decomposition.restricted)
            only_graph = to_match_graph(decomposition.only)
            self._stages[c] = _ColorStage(
                color=c,
                decomposition=decomposition,
                restricted_graph=restricted_graph,
                only_graph=only_graph,
                restricted_backend=MatchingBackendFactory.get_backend(restricted_graph, backend),
                only_backend=MatchingBackendFactory.get_backend(only_graph, backend),
                own_mask=colors == c,
            )
        logger.debug(
            "Decode context ready: "
            + ", ".join(
                f"{c}: {s.restricted_graph.num_edges}/{s.only_graph.num_edges} edges"
                for c, s in self._stages.items()
            )
        )

    @property
    def num_detectors(self) -> int:
        return self.dem.num_detectors

    @property
    def num_observables(self) -> int:
        return self.dem.num_observables

    def stage(self, c: str) -> _ColorStage:
        return self._stages[c]

    def decode_color_batch(self, events: np.ndarray, c: str) -> Tuple[np.ndarray, np.ndarray]:
        """
        Run the c sub-decoder on many shots

        Returns:
            observable corrections (shots, observables) and weights (shots,)
        """
        stage = self._stages[c]
        events = np.asarray(events, dtype=bool)
        selected1, weight1 = stage.restricted_backend.solve_batch(events & ~stage.own_mask)
        stage2 = np.concatenate([events & stage.own_mask, selected1], axis=1)
        try:
            selected2, weight2 = stage.only_backend.solve_batch(stage2)
        except MatchingInfeasibleError as e:
            raise MatchingInfeasibleError(f"{c}-only matching failed after the restricted stage: {e}")
        corrections = stage.only_graph.observable_flips(selected2, self.num_observables)
        weights = weight2 + weight1 if self.include_stage1_weight else weight2
        return corrections, weights

    def decode_batch(
        self, events: np.ndarray, colors: Sequence[str] = COLORS
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Decode a (shots, detectors) event matrix

        Returns:
            predicted observable flips (shots, observables), chosen color index
            into the ordered colors, and per-color weights (colors, shots)
        """
        ordered = [c for c in COLORS if c in set(colors)]
        if not ordered:
            raise DecoderError("At least one color is required")
        events = np.atleast_2d(np.asarray(events, dtype=bool))
        if events.shape[1] != self.num_detectors:
            raise InputFormatError(
                f"Event rows have {events.shape[1]} bits, the model has {self.num_detectors} detectors"
            )
        shots = events.shape[0]
        corrections = np.zeros((len(ordered), shots, self.num_observables), dtype=bool)
        weights = np.zeros((len(ordered), shots), dtype=np.float64)
        for k, c in enumerate(ordered):
            corrections[k], weights[k] = self.decode_color_batch(events, c)
        chosen = np.argmin(quantize_weights(weights), axis=0)
        return corrections[chosen, np.arange(shots)], chosen, weights

    def decode(self, events: np.ndarray, colors: Sequence[str] = COLORS) -> DecodeResultCL:
        ordered = [c for c in COLORS if c in set(colors)]
        if not ordered:
            raise DecoderError("At least one color is required")
        row = np.asarray(events, dtype=bool).reshape(1, -1)
        if row.shape[1] != self.num_detectors:
            raise InputFormatError(f"Event row has {row.shape[1]} bits, the model has {self.num_detectors} detectors")
        corrections, weights = {}, {}
        for c in ordered:
            flips, weight = self.decode_color_batch(row, c)
            corrections[c] = -1 if flips[0, 0] else 1
            weights[c] = float(weight[0])
        quantized = {c: int(quantize_weights([w])[0]) for c, w in weights.items()}
        chosen = min(ordered, key=lambda c: (quantized[c], COLORS.index(c)))
        return DecodeResultCL(
            corrections=corrections,
            weights=weights,
            chosen_color=chosen,
            correction=corrections[chosen],
        )


def build_context(
    circuit: Circuit,
    p: Optional[float] = None,
    backend: Optional[str] = None,
    include_stage1_weight: Optional[bool] = None,
) -> CircuitDecoderService:
    """Decode context of a circuit, attaching noise of strength p first if given"""
    if p is not None:
        circuit = apply_noise(circuit, p)
    if not circuit.is_noisy:
        raise DegenerateInputError("A noiseless circuit has an empty detector error model")
    return CircuitDecoderService(extract_dem(circuit), backend, include_stage1_weight)


def build_memory_context(
    d: int,
    T: int,
    p: float,
    schedule: Optional[Sequence[int]] = None,
    backend: Optional[str] = None,
) -> CircuitDecoderService:
    return build_context(build_memory_circuit(d, T, schedule), p, backend)
