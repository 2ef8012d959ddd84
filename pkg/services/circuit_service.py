"""
Time-sliced Z-memory circuit of the triangular color code.

Qubit layout: data qubits keep their lattice ids 0..n-1, the Z ancilla of
face f is n + f and the X ancilla of face f is n + F + f. Slices are

    [data RZ] ([ancilla RZ/RX] [CX 1..L] [ancilla MZ/MX]) x T [data MZ]

and every qubit without a non-trivial operation in a slice carries an idle.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import stim
from scipy import sparse

from services.lattice_service import ColorLattice, build_triangular
from services.schedule_service import (
    Schedule,
    as_schedule,
    coverage_gaps,
    find_conflicts,
    find_interference,
    format_schedule,
    schedule_length,
)
from models.schemas import ScheduleDiagnostics
from utils.config import COLORS, OPTIMAL_SCHEDULE
from utils.error_handler import ScheduleError, UsageError
from utils.run_logger import run_logger

logger = logging.getLogger(__name__)

GATES = ("RZ", "RX", "CX", "MZ", "MX", "I")
NOISE_KINDS = ("X_ERROR", "Z_ERROR", "DEPOLARIZE1", "DEPOLARIZE2")
BASIS_CODES = ("Z", "X")
PAULI_TARGETS = {"X": stim.target_x, "Y": stim.target_y, "Z": stim.target_z}
FAULT_PROBABILITY = 0.25


@dataclass(frozen=True)
class Operation:
    gate: str
    # CX targets are flattened (control, target) pairs
    targets: Tuple[int, ...]

    @property
    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(zip(self.targets[::2], self.targets[1::2]))


@dataclass(frozen=True)
class NoiseChannel:
    kind: str
    probability: float
    targets: Tuple[int, ...]
    before: bool = False

    @property
    def sites(self) -> int:
        return len(self.targets) // 2 if self.kind == "DEPOLARIZE2" else len(self.targets)


@dataclass(frozen=True)
class CircuitDetector:
    face: int
    basis: str
    round: int
    color: str
    measurements: Tuple[int, ...]


@dataclass(frozen=True)
class Circuit:
    distance: int
    rounds: int
    schedule: Schedule
    num_data: int
    num_faces: int
    slices: Tuple[Tuple[Operation, ...], ...]
    detectors: Tuple[CircuitDetector, ...]
    observables: Tuple[Tuple[int, ...], ...]
    num_measurements: int
    noise: Tuple[Tuple[NoiseChannel, ...], ...] = ()
    noise_strength: float = 0.0
    measurement_keys: Tuple[Tuple[str, int, int], ...] = field(default=(), repr=False)

    @property
    def num_qubits(self) -> int:
        return self.num_data + 2 * self.num_faces

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    @property
    def num_observables(self) -> int:
        return len(self.observables)

    @property
    def is_noisy(self) -> bool:
        return any(self.noise)

    def z_ancilla(self, face: int) -> int:
        return self.num_data + face

    def x_ancilla(self, face: int) -> int:
        return self.num_data + self.num_faces + face

    @cached_property
    def detector_lookup(self) -> Dict[Tuple[int, str, int], int]:
        return {(det.face, det.basis, det.round): i for i, det in enumerate(self.detectors)}

    def detector_index(self, face: int, basis: str, round: int) -> int:
        try:
            return self.detector_lookup[(face, basis.upper(), round)]
        except KeyError:
            raise UsageError(f"No {basis} detector for face {face} in round {round}")

    @cached_property
    def measurement_lookup(self) -> Dict[Tuple[str, int, int], int]:
        return {key: m for m, key in enumerate(self.measurement_keys)}

    def measurement_index(self, kind: str, owner: int, round: int) -> int:
        """Record index of ("Z"|"X", face, round) or ("D", qubit, 0)"""
        return self.measurement_lookup[(kind, owner, round)]

    @cached_property
    def detector_matrix(self) -> sparse.csr_matrix:
        return _incidence([det.measurements for det in self.detectors], self.num_measurements)

    @cached_property
    def observable_matrix(self) -> sparse.csr_matrix:
        return _incidence(self.observables, self.num_measurements)

    @cached_property
    def stim_circuit(self) -> stim.Circuit:
        return to_stim(self)


def _incidence(groups: Sequence[Sequence[int]], width: int) -> sparse.csr_matrix:
    rows = [i for i, group in enumerate(groups) for _ in group]
    cols = [m for group in groups for m in group]
    data = np.ones(len(cols), dtype=np.uint8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(groups), width), dtype=np.uint8)


class _SliceBuilder:
    """Accumulates slices and measurement records, filling idles"""

    def __init__(self, num_qubits: int):
        self.num_qubits = num_qubits
        self.slices: List[Tuple[Operation, ...]] = []
        self.measurement_keys: List[Tuple[str, int, int]] = []

    def add(self, ops: Sequence[Tuple[str, Sequence[int]]], records: Sequence[Tuple[str, int, int]] = ()):
        busy = np.zeros(self.num_qubits, dtype=bool)
        operations = []
        for gate, targets in ops:
            targets = tuple(int(q) for q in targets)
            if not targets:
                continue
            if busy[list(targets)].any() or len(set(targets)) != len(targets):
                raise ScheduleError(f"Qubit used twice in slice {len(self.slices)}")
            busy[list(targets)] = True
            operations.append(Operation(gate, targets))
        idle = tuple(int(q) for q in np.flatnonzero(~busy))
        if idle:
            operations.append(Operation("I", idle))
        self.slices.append(tuple(operations))
        self.measurement_keys.extend(records)


def _static_problems(schedule: Schedule) -> List[str]:
    problems = [f"slice {t} holds no CNOT" for t in coverage_gaps(schedule)]
    return problems + find_conflicts(schedule) + find_interference(schedule)


def build_memory_circuit(
    d: int,
    T: int,
    schedule: Optional[Sequence[int]] = None,
    lattice: Optional[ColorLattice] = None,
    check_schedule: bool = True,
) -> Circuit:
    """
    Build the noiseless Z-memory circuit with its detectors and observable

    Args:
        d: Code distance
        T: Number of syndrome-extraction rounds
        schedule: Twelve-integer CNOT schedule; the optimal one by default
        lattice: Prebuilt lattice of distance d
        check_schedule: Reject schedules failing the static validity checks

    Returns:
        Circuit with detectors in round order (Z before X inside a round)
    """
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
        raise UsageError(f"Number of rounds must be a positive integer, got {T!r}")
    T = int(T)
    schedule = as_schedule(OPTIMAL_SCHEDULE if schedule is None else schedule)
    if check_schedule:
        problems = _static_problems(schedule)
        if problems:
            raise ScheduleError(
                f"Invalid CNOT schedule {format_schedule(schedule)}: {problems[0]}",
                {"problems": problems},
            )
    lattice = lattice or build_triangular(d)

    n, F = lattice.num_vertices, lattice.num_faces
    anc_z = [n + f for f in range(F)]
    anc_x = [n + F + f for f in range(F)]
    length = schedule_length(schedule)

    cx_slices: List[List[int]] = [[] for _ in range(length)]
    for f, (members, positions) in enumerate(zip(lattice.faces, lattice.face_positions)):
        for v, k in zip(members, positions):
            cx_slices[schedule[k] - 1].extend((v, anc_z[f]))
            cx_slices[schedule[6 + k] - 1].extend((anc_x[f], v))

    builder = _SliceBuilder(n + 2 * F)
    builder.add([("RZ", range(n))])
    for t in range(1, T + 1):
        builder.add([("RZ", anc_z), ("RX", anc_x)])
        for targets in cx_slices:
            builder.add([("CX", targets)])
        builder.add(
            [("MZ", anc_z), ("MX", anc_x)],
            [("Z", f, t) for f in range(F)] + [("X", f, t) for f in range(F)],
        )
    builder.add([("MZ", range(n))], [("D", v, 0) for v in range(n)])

    index = {key: m for m, key in enumerate(builder.measurement_keys)}
    detectors: List[CircuitDetector] = []

    def add_detector(f: int, basis: str, t: int, measurements: List[int]):
        detectors.append(CircuitDetector(f, basis, t, lattice.face_colors[f], tuple(sorted(measurements))))

    for f in range(F):
        add_detector(f, "Z", 1, [index[("Z", f, 1)]])
    for t in range(2, T + 1):
        for f in range(F):
            add_detector(f, "Z", t, [index[("Z", f, t)], index[("Z", f, t - 1)]])
        for f in range(F):
            add_detector(f, "X", t, [index[("X", f, t)], index[("X", f, t - 1)]])
    for f, members in enumerate(lattice.faces):
        add_detector(f, "Z", T + 1, [index[("Z", f, T)]] + [index[("D", v, 0)] for v in members])

    observable = tuple(sorted(index[("D", v, 0)] for v in lattice.boundaries["r"]))

    circuit = Circuit(
        distance=lattice.distance,
        rounds=T,
        schedule=schedule,
        num_data=n,
        num_faces=F,
        slices=tuple(builder.slices),
        detectors=tuple(detectors),
        observables=(observable,),
        num_measurements=len(builder.measurement_keys),
        measurement_keys=tuple(builder.measurement_keys),
    )
    logger.debug(
        f"Built d={lattice.distance} T={T} circuit: {len(circuit.slices)} slices, "
        f"{circuit.num_detectors} detectors"
    )
    return circuit


def apply_noise(circuit: Circuit, p: float) -> Circuit:
    """Attach the circuit-level depolarizing noise model of strength p"""
    p = float(p)
    if not 0.0 <= p <= 0.75:
        raise UsageError(f"Noise strength must lie in [0, 0.75], got {p}")
    if p == 0.0:
        return replace(circuit, noise=(), noise_strength=0.0)

    noise = []
    for ops in circuit.slices:
        channels = []
        for op in ops:
            if op.gate == "MZ":
                channels.append(NoiseChannel("X_ERROR", p, op.targets, before=True))
            elif op.gate == "MX":
                channels.append(NoiseChannel("Z_ERROR", p, op.targets, before=True))
            elif op.gate == "RZ":
                channels.append(NoiseChannel("X_ERROR", p, op.targets))
            elif op.gate == "RX":
                channels.append(NoiseChannel("Z_ERROR", p, op.targets))
            elif op.gate == "I":
                channels.append(NoiseChannel("DEPOLARIZE1", p, op.targets))
            elif op.gate == "CX":
                channels.append(NoiseChannel("DEPOLARIZE2", p, op.targets))
        noise.append(tuple(channels))
    return replace(circuit, noise=tuple(noise), noise_strength=p)


def build_noisy_circuit(d: int, T: int, p: float, schedule: Optional[Sequence[int]] = None) -> Circuit:
    return apply_noise(build_memory_circuit(d, T, schedule), p)


def count_noise_sites(circuit: Circuit) -> int:
    """Noise channels attached, counting one per qubit (one per pair for CX)"""
    return sum(channel.sites for channels in circuit.noise for channel in channels)


def count_gates(circuit: Circuit, gate: str) -> int:
    total = 0
    for ops in circuit.slices:
        for op in ops:
            if op.gate == gate:
                total += len(op.pairs) if gate == "CX" else len(op.targets)
    return total


def check_determinism(circuit: Circuit) -> List[str]:
    """
    Detectors and observables whose noiseless value is not fixed

    Each detector is propagated backwards as a Pauli product. It is
    deterministic iff the product commutes with every measurement it meets
    and is stabilized by every reset.
    """
    groups = [det.measurements for det in circuit.detectors] + list(circuit.observables)
    width = len(groups)
    include = np.zeros((circuit.num_measurements, width), dtype=bool)
    for k, group in enumerate(groups):
        include[list(group), k] = True

    x = np.zeros((circuit.num_qubits, width), dtype=bool)
    z = np.zeros((circuit.num_qubits, width), dtype=bool)
    bad = np.zeros(width, dtype=bool)
    record = circuit.num_measurements

    for ops in reversed(circuit.slices):
        for op in reversed(ops):
            targets = list(op.targets)
            if op.gate in ("MZ", "MX"):
                record -= len(targets)
                hits = include[record:record + len(targets)]
                if op.gate == "MZ":
                    bad |= x[targets].any(axis=0)
                    z[targets] ^= hits
                else:
                    bad |= z[targets].any(axis=0)
                    x[targets] ^= hits
            elif op.gate in ("RZ", "RX"):
                bad |= (x if op.gate == "RZ" else z)[targets].any(axis=0)
                x[targets] = False
                z[targets] = False
            elif op.gate == "CX":
                controls, cx_targets = targets[0::2], targets[1::2]
                z[controls] ^= z[cx_targets]
                x[cx_targets] ^= x[controls]
    bad |= x.any(axis=0) | z.any(axis=0)

    messages = []
    for k in np.flatnonzero(bad):
        if k < circuit.num_detectors:
            det = circuit.detectors[k]
            messages.append(f"detector {k} (face {det.face}, {det.basis}, round {det.round}) is not deterministic")
        else:
            messages.append(f"observable {k - circuit.num_detectors} is not deterministic")
    return messages


def detector_coordinates(face: int, basis: str, round: int, color: str) -> Tuple[int, int, int, int]:
    """DETECTOR coordinates (face, basis, round, color) with Z=0, X=1 and colors numbered r, g, b"""
    return face, BASIS_CODES.index(basis), round, COLORS.index(color)


def to_stim(
    circuit: Circuit,
    noisy: bool = True,
    fault: Optional[Tuple[int, bool, Dict[int, str]]] = None,
) -> stim.Circuit:
    """
    stim rendering of the circuit, one TICK per slice

    Each detector is declared right after the measurement slice that
    completes it. A fault (slice, before, {qubit: Pauli}) is inserted as a
    correlated error of probability FAULT_PROBABILITY.
    """
    channels = circuit.noise if noisy and circuit.noise else ((),) * len(circuit.slices)
    out = stim.Circuit()
    recorded = 0
    pending = 0

    def insert_fault(s: int, before: bool):
        if fault is None or fault[0] != s or fault[1] != before:
            return
        targets = [PAULI_TARGETS[name](q) for q, name in sorted(fault[2].items()) if name != "I"]
        if targets:
            out.append("E", targets, FAULT_PROBABILITY)

    for s, ops in enumerate(circuit.slices):
        for channel in channels[s]:
            if channel.before:
                out.append(channel.kind, channel.targets, channel.probability)
        insert_fault(s, True)
        for op in ops:
            if op.gate == "I":
                continue
            out.append(op.gate, op.targets)
            if op.gate in ("MZ", "MX"):
                recorded += len(op.targets)
        for channel in channels[s]:
            if not channel.before:
                out.append(channel.kind, channel.targets, channel.probability)
        insert_fault(s, False)

        while pending < circuit.num_detectors and max(circuit.detectors[pending].measurements) < recorded:
            det = circuit.detectors[pending]
            out.append(
                "DETECTOR",
                [stim.target_rec(m - recorded) for m in det.measurements],
                detector_coordinates(det.face, det.basis, det.round, det.color),
            )
            pending += 1
        out.append("TICK")

    for j, group in enumerate(circuit.observables):
        out.append("OBSERVABLE_INCLUDE", [stim.target_rec(m - recorded) for m in group], j)
    return out


def to_text(circuit: Circuit) -> str:
    """stim circuit text behind a one-line summary"""
    header = (
        f"# d={circuit.distance} T={circuit.rounds} schedule={format_schedule(circuit.schedule)} "
        f"p={circuit.noise_strength!r}"
    )
    return header + "\n" + str(circuit.stim_circuit) + "\n"


def validate_schedule(
    schedule: Sequence[int],
    distances: Sequence[int] = (3, 5),
    rounds: int = 2,
) -> ScheduleDiagnostics:
    """
    Check a schedule combinatorially and by building noiseless circuits

    A schedule is valid iff every slice 1..max holds a CNOT, no qubit takes
    part in two CNOTs of one slice on the tiled lattice, and every detector
    of the circuits built from it is deterministic.
    """
    schedule = as_schedule(schedule)
    gaps = coverage_gaps(schedule)
    conflicts = find_conflicts(schedule)
    interference = find_interference(schedule)
    messages = [f"slice {t} holds no CNOT" for t in gaps]

    nondeterministic: List[str] = []
    if conflicts:
        messages.append("circuits not built: conflicting CNOTs")
    else:
        for d in distances:
            circuit = build_memory_circuit(d, rounds, schedule, check_schedule=False)
            nondeterministic.extend(f"d={d}: {message}" for message in check_determinism(circuit))

    diagnostics = ScheduleDiagnostics(
        schedule=format_schedule(schedule),
        valid=not (gaps or conflicts or interference or nondeterministic),
        length=schedule_length(schedule),
        conflicts=conflicts,
        interference=interference,
        nondeterministic=nondeterministic,
        messages=messages,
    )
    run_logger.log_schedule_diagnostics(diagnostics.schedule, diagnostics.model_dump())
    return diagnostics
