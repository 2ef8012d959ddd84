"""
Detector error models: extraction from noisy circuits through stim,
per-color decomposition into restricted and only models, and the stim
text format.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import stim

from matching.graph import BOUNDARY, MatchGraph, probability_to_weight
from models.schemas import DecompositionReport
from services.circuit_service import BASIS_CODES, Circuit, PAULI_TARGETS, to_stim
from utils.config import COLORS
from utils.error_handler import DegenerateInputError, InputFormatError, SchemaError, UsageError
from utils.run_logger import run_logger

logger = logging.getLogger(__name__)


def depolarize1_component(p: float) -> float:
    """Probability of each of the three independent X, Y, Z channels"""
    return (1.0 - math.sqrt(1.0 - 4.0 * p / 3.0)) / 2.0


def depolarize2_component(p: float) -> float:
    """Probability of each of the fifteen independent two-qubit Pauli channels"""
    return (1.0 - (1.0 - 16.0 * p / 15.0) ** 0.125) / 2.0


def merge_probabilities(*probabilities: float) -> float:
    """Probability that an odd number of independent events fire"""
    product = 1.0
    for q in probabilities:
        product *= 1.0 - 2.0 * q
    return (1.0 - product) / 2.0


@dataclass(frozen=True)
class ErrorMechanism:
    probability: float
    detectors: Tuple[int, ...]
    observables: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.probability < 0.5:
            raise DegenerateInputError(
                f"Error mechanism probability must lie in (0, 0.5), got {self.probability!r}"
            )
        if not self.detectors and not self.observables:
            raise SchemaError("Error mechanism flips nothing")

    @property
    def targets(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        return self.detectors, self.observables


@dataclass(frozen=True)
class DetectorInfo:
    kind: str = "circuit"
    face: Optional[int] = None
    basis: Optional[str] = None
    round: Optional[int] = None
    color: Optional[str] = None
    source: Optional[int] = None


@dataclass(frozen=True)
class DetectorErrorModel:
    mechanisms: Tuple[ErrorMechanism, ...]
    detectors: Tuple[DetectorInfo, ...]
    num_observables: int = 1
    comments: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    @property
    def num_mechanisms(self) -> int:
        return len(self.mechanisms)

    @cached_property
    def detector_colors(self) -> np.ndarray:
        return np.array([info.color or "" for info in self.detectors], dtype=object)

    def detectors_of_color(self, color: str) -> np.ndarray:
        return np.array([i for i, info in enumerate(self.detectors) if info.kind == "circuit" and info.color == color], dtype=np.int64)

    def probabilities(self) -> np.ndarray:
        return np.array([m.probability for m in self.mechanisms], dtype=np.float64)



def detector_info(coordinates: Sequence[float]) -> DetectorInfo:
    """Metadata of a detector from its stim coordinates"""
    values = [int(round(c)) for c in coordinates]
    if len(values) == 4:
        face, basis, round_, color = values
        return DetectorInfo("circuit", face, BASIS_CODES[basis], round_, COLORS[color])
    if len(values) == 1:
        return DetectorInfo("virtual", source=values[0])
    return DetectorInfo()


def coordinates_of(info: DetectorInfo) -> Tuple[int, ...]:
    if info.kind == "virtual":
        return (info.source,)
    if None in (info.face, info.basis, info.round, info.color):
        return ()
    return info.face, BASIS_CODES.index(info.basis), info.round, COLORS.index(info.color)


def to_stim_dem(dem: DetectorErrorModel) -> stim.DetectorErrorModel:
    """Every detector and observable is declared, so stim sees the full widths"""
    model = stim.DetectorErrorModel()
    for i, info in enumerate(dem.detectors):
        model.append("detector", list(coordinates_of(info)), [stim.target_relative_detector_id(i)])
    for j in range(dem.num_observables):
        model.append("logical_observable", [], [stim.target_logical_observable_id(j)])
    for mechanism in dem.mechanisms:
        targets = [stim.target_relative_detector_id(d) for d in mechanism.detectors]
        targets += [stim.target_logical_observable_id(j) for j in mechanism.observables]
        model.append("error", mechanism.probability, targets)
    return model


def from_stim_dem(
    model: stim.DetectorErrorModel,
    num_observables: Optional[int] = None,
    comments: Sequence[str] = (),
) -> DetectorErrorModel:
    """Mechanisms in file order; decomposition separators are flattened away"""
    coordinates = model.get_detector_coordinates()
    detectors = tuple(detector_info(coordinates.get(i, ())) for i in range(model.num_detectors))
    mechanisms = []
    for instruction in model.flattened():
        if instruction.type != "error":
            continue
        found, observables = set(), set()
        for target in instruction.targets_copy():
            if target.is_relative_detector_id():
                found ^= {target.val}
            elif target.is_logical_observable_id():
                observables ^= {target.val}
        mechanisms.append(
            ErrorMechanism(instruction.args_copy()[0], tuple(sorted(found)), tuple(sorted(observables)))
        )
    if num_observables is None:
        num_observables = model.num_observables
    return DetectorErrorModel(tuple(mechanisms), detectors, num_observables, tuple(comments))


def propagate_fault(
    circuit: Circuit,
    slice_index: int,
    pauli: Dict[int, str],
    before: bool = False,
) -> Tuple[frozenset, frozenset]:
    """
    Detectors and observables flipped by one Pauli inserted into the circuit

    Args:
        circuit: Circuit to propagate through; its noise is ignored
        slice_index: Slice the Pauli is inserted at
        pauli: Qubit -> "I" | "X" | "Y" | "Z"
        before: Insert before the slice's operations instead of after

    Returns:
        (flipped detector ids, flipped observable ids)
    """
    if not 0 <= slice_index < len(circuit.slices):
        raise UsageError(f"Fault location {slice_index} outside circuit with {len(circuit.slices)} slices")
    for qubit, name in pauli.items():
        if not 0 <= qubit < circuit.num_qubits or name not in ("I",) + tuple(PAULI_TARGETS):
            raise UsageError(f"Invalid Pauli {name} on qubit {qubit}")
    model = to_stim(circuit, noisy=False, fault=(slice_index, before, dict(pauli))).detector_error_model()
    dem = from_stim_dem(model)
    if not dem.mechanisms:
        return frozenset(), frozenset()
    mechanism = dem.mechanisms[0]
    return frozenset(mechanism.detectors), frozenset(mechanism.observables)


def _accumulate(entries: Iterable[Tuple[float, Tuple[int, ...], Tuple[int, ...]]]) -> Tuple[ErrorMechanism, ...]:
    merged: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], float] = {}
    for q, detectors, observables in entries:
        if q <= 0.0 or not (detectors or observables):
            continue
        key = (tuple(sorted(detectors)), tuple(sorted(observables)))
        merged[key] = merge_probabilities(merged[key], q) if key in merged else q
    return tuple(ErrorMechanism(q, dets, obs) for (dets, obs), q in sorted(merged.items()))


def compress(dem: DetectorErrorModel) -> DetectorErrorModel:
    """Merge mechanisms sharing detector and observable targets"""
    mechanisms = _accumulate((m.probability, m.detectors, m.observables) for m in dem.mechanisms)
    return DetectorErrorModel(mechanisms, dem.detectors, dem.num_observables, dem.comments)


def extract_dem(circuit: Circuit) -> DetectorErrorModel:
    """
    Detector error model of a noisy circuit

    stim splits every depolarizing channel into its independent single-Pauli
    components, propagates each one and drops those flipping nothing.
    Mechanisms with identical targets are then merged and sorted.
    """
    model = circuit.stim_circuit.detector_error_model(flatten_loops=True)
    dem = compress(from_stim_dem(model, circuit.num_observables))
    if dem.num_detectors != circuit.num_detectors:
        raise SchemaError(f"stim reported {dem.num_detectors} detectors, circuit has {circuit.num_detectors}")
    logger.info(
        f"Extracted DEM for d={circuit.distance} T={circuit.rounds} p={circuit.noise_strength}: "
        f"{dem.num_mechanisms} mechanisms"
    )
    return dem


@dataclass(frozen=True)
class Decomposition:
    color: str
    restricted: DetectorErrorModel
    only: DetectorErrorModel
    # Virtual detector id -> restricted mechanism index
    virtual_detectors: Dict[int, int]
    report: DecompositionReport


def separate_types(dem: DetectorErrorModel) -> Tuple[ErrorMechanism, ...]:
    """Split each mechanism into its Z-type part and its X-type part"""
    entries = []
    for mechanism in dem.mechanisms:
        for basis in ("Z", "X"):
            part = tuple(d for d in mechanism.detectors if dem.detectors[d].basis == basis)
            if part:
                observables = mechanism.observables if basis == "Z" else ()
                entries.append((mechanism.probability, part, observables))
    return _accumulate(entries)


def decompose(dem: DetectorErrorModel, c: str) -> Decomposition:
    """
    c-restricted and c-only models of a circuit DEM

    Virtual detectors take ids num_detectors + k for the k-th restricted
    mechanism. Mechanisms that cannot become matching edges are counted in
    the report and dropped.
    """
    if c not in COLORS:
        raise UsageError(f"Unknown color {c!r}")
    for i, info in enumerate(dem.detectors):
        if info.kind != "circuit" or info.color not in COLORS or info.basis not in ("Z", "X"):
            raise SchemaError(f"Detector {i} lacks circuit color and basis metadata")

    separated = separate_types(dem)
    colors = [info.color for info in dem.detectors]

    def split(mechanism: ErrorMechanism) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        other = tuple(d for d in mechanism.detectors if colors[d] != c)
        own = tuple(d for d in mechanism.detectors if colors[d] == c)
        return other, own

    dropped_restricted = 0
    restricted_entries = []
    for mechanism in separated:
        other, _ = split(mechanism)
        if 0 < len(other) <= 2:
            restricted_entries.append((mechanism.probability, other, ()))
        elif len(other) > 2:
            dropped_restricted += 1
    restricted_mechanisms = _accumulate(restricted_entries)

    base = dem.num_detectors
    virtual_of = {m.detectors: base + k for k, m in enumerate(restricted_mechanisms)}

    dropped_hyperedge = dropped_mixed = 0
    only_entries = []
    for mechanism in separated:
        other, own = split(mechanism)
        if not other:
            if len(mechanism.detectors) <= 2:
                only_entries.append((mechanism.probability, mechanism.detectors, mechanism.observables))
            else:
                dropped_hyperedge += 1
        elif len(other) <= 2:
            if len(own) <= 1:
                only_entries.append((mechanism.probability, own + (virtual_of[other],), mechanism.observables))
            else:
                dropped_mixed += 1
    only_mechanisms = _accumulate(only_entries)

    virtual_info = tuple(DetectorInfo("virtual", source=k) for k in range(len(restricted_mechanisms)))
    restricted = DetectorErrorModel(restricted_mechanisms, dem.detectors, 0)
    only = DetectorErrorModel(only_mechanisms, dem.detectors + virtual_info, dem.num_observables)

    report = DecompositionReport(
        color=c,
        separated_mechanisms=len(separated),
        restricted_mechanisms=len(restricted_mechanisms),
        only_mechanisms=len(only_mechanisms),
        virtual_detectors=len(restricted_mechanisms),
        dropped_restricted=dropped_restricted,
        dropped_only_hyperedge=dropped_hyperedge,
        dropped_only_mixed=dropped_mixed,
    )
    if dropped_restricted or dropped_hyperedge or dropped_mixed:
        logger.debug(f"Decomposition for {c} dropped mechanisms: {report.model_dump()}")
    run_logger.log_decomposition(c, report.model_dump())
    return Decomposition(
        color=c,
        restricted=restricted,
        only=only,
        virtual_detectors={base + k: k for k in range(len(restricted_mechanisms))},
        report=report,
    )


def to_match_graph(dem: DetectorErrorModel) -> MatchGraph:
    """One edge per mechanism; single-detector mechanisms attach to the boundary"""
    graph = MatchGraph(dem.num_detectors)
    for eid, mechanism in enumerate(dem.mechanisms):
        detectors = mechanism.detectors
        if len(detectors) > 2:
            raise SchemaError(f"Mechanism {eid} flips {len(detectors)} detectors and is not edge-like")
        if not detectors:
            continue
        mask = 0
        for j in mechanism.observables:
            mask |= 1 << j
        v = detectors[1] if len(detectors) == 2 else BOUNDARY
        graph.add_edge(detectors[0], v, probability_to_weight(mechanism.probability), fault_id=eid, obs_mask=mask)
    return graph.freeze()



def serialize_dem(dem: DetectorErrorModel, header: Sequence[str] = ()) -> str:
    """stim DEM text: comments, detector and observable declarations, then one line per mechanism"""
    lines = [f"# {line}" for line in (header or dem.comments)]
    for i, info in enumerate(dem.detectors):
        coordinates = coordinates_of(info)
        args = f"({', '.join(map(str, coordinates))})" if coordinates else ""
        lines.append(f"detector{args} D{i}")
    lines.extend(f"logical_observable L{j}" for j in range(dem.num_observables))
    for mechanism in dem.mechanisms:
        targets = [f"D{d}" for d in mechanism.detectors] + [f"L{j}" for j in mechanism.observables]
        lines.append(" ".join([f"error({mechanism.probability:.17g})"] + targets))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_dem(text: str, num_observables: Optional[int] = None) -> DetectorErrorModel:
    """Parse stim DEM text; full-line comments are kept"""
    try:
        model = stim.DetectorErrorModel(text)
    except ValueError as e:
        raise InputFormatError(f"Cannot parse detector error model: {e}")
    comments = [line.strip()[1:].strip() for line in text.splitlines() if line.strip().startswith("#")]
    return from_stim_dem(model, num_observables, comments)
