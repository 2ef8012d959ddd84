"""
CNOT schedules [a,b,c,d,e,f; g,h,i,j,k,l] for syndrome extraction.

Entry k < 6 is the time slice of the CNOT between the Z ancilla of a face
and the qubit at hexagon position k; entry 6 + k is the slice of the CNOT
between the X ancilla and position k. The checks below are the tiled-lattice
form of "one CNOT per qubit per slice" and "Z and X measurements commute".
"""

import itertools
import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from utils.error_handler import ScheduleError
from utils.input_parser import input_parser

logger = logging.getLogger(__name__)

Schedule = Tuple[int, ...]

# A qubit sits at even positions of all its faces, or at odd positions of all
QUBIT_GROUPS = ((0, 2, 4), (1, 3, 5))

# Hexagon positions removed from cut faces on each boundary
BOUNDARY_PAIRS = ((3, 4), (0, 5), (1, 2))

# Shared qubits of neighboring faces A and B as (position in A, position in B)
NEIGHBOR_DIRECTIONS = (
    ((1, 5), (2, 4)),
    ((0, 4), (1, 3)),
    ((2, 0), (3, 5)),
)


def as_schedule(schedule) -> Schedule:
    if isinstance(schedule, str):
        return input_parser.parse_schedule(schedule)
    schedule = tuple(int(v) for v in schedule)
    if len(schedule) != 12 or any(v < 1 for v in schedule):
        raise ScheduleError(f"A schedule is twelve positive integers, got {schedule}")
    return schedule


def schedule_length(schedule: Sequence[int]) -> int:
    return max(schedule)


def format_schedule(schedule: Sequence[int]) -> str:
    return input_parser.format_schedule(schedule)


def swap_schedule_parts(schedule: Sequence[int]) -> Schedule:
    """Exchange the Z and X parts"""
    schedule = as_schedule(schedule)
    return schedule[6:] + schedule[:6]


def rotate_schedule(schedule: Sequence[int], steps: int = 1) -> Schedule:
    """Relabel positions by a 120 degree rotation (k -> k + 2) of the patch"""
    schedule = list(as_schedule(schedule))
    for _ in range(steps % 3):
        z = [0] * 6
        x = [0] * 6
        for k in range(6):
            z[(k + 2) % 6] = schedule[k]
            x[(k + 2) % 6] = schedule[6 + k]
        schedule = z + x
    return tuple(schedule)


def coverage_gaps(schedule: Sequence[int]) -> List[int]:
    return sorted(set(range(1, schedule_length(schedule) + 1)) - set(schedule))


def find_conflicts(schedule: Sequence[int]) -> List[str]:
    """Slices in which some qubit would take part in two CNOTs"""
    s = as_schedule(schedule)
    conflicts = []
    for name, offset in (("Z", 0), ("X", 6)):
        for i, j in itertools.combinations(range(6), 2):
            if s[offset + i] == s[offset + j]:
                conflicts.append(f"{name} ancilla has two CNOTs in slice {s[offset + i]} (positions {i}, {j})")
    for group in QUBIT_GROUPS:
        entries = [(p, "Z") for p in group] + [(p, "X") for p in group]
        for (p, kind_p), (q, kind_q) in itertools.combinations(entries, 2):
            if kind_p == kind_q:
                continue
            tp = s[p] if kind_p == "Z" else s[6 + p]
            tq = s[q] if kind_q == "Z" else s[6 + q]
            if tp == tq:
                conflicts.append(
                    f"data qubit has two CNOTs in slice {tp} ({kind_p}{p}, {kind_q}{q})"
                )
    return conflicts


def find_interference(schedule: Sequence[int]) -> List[str]:
    """Face pairs whose Z and X extraction circuits do not commute"""
    s = as_schedule(schedule)
    z, x = s[:6], s[6:]
    before = [x[k] < z[k] for k in range(6)]
    problems = []
    if sum(before) % 2:
        problems.append("bulk face: X part precedes Z part at an odd number of positions")
    for a, b in BOUNDARY_PAIRS:
        if before[a] != before[b]:
            problems.append(f"cut face without positions {a},{b}: odd X/Z ordering")
    for (a1, b1), (a2, b2) in NEIGHBOR_DIRECTIONS:
        if (x[b1] < z[a1]) != (x[b2] < z[a2]):
            problems.append(f"neighbors {a1}/{b1},{a2}/{b2}: X ancilla of B disturbs Z ancilla of A")
        if (x[a1] < z[b1]) != (x[a2] < z[b2]):
            problems.append(f"neighbors {a1}/{b1},{a2}/{b2}: X ancilla of A disturbs Z ancilla of B")
    return problems


def is_statically_valid(schedule: Sequence[int]) -> bool:
    s = as_schedule(schedule)
    return not coverage_gaps(s) and not find_conflicts(s) and not find_interference(s)


def enumerate_schedules(length: int = 7) -> List[Schedule]:
    """All valid schedules whose slices are exactly 1..length, in lexicographic order"""
    if length < 6:
        return []
    parts = np.array(list(itertools.permutations(range(1, length + 1), 6)), dtype=np.int16)
    masks = np.bitwise_or.reduce(np.left_shift(1, parts.astype(np.int64)), axis=1)
    full = (1 << (length + 1)) - 2

    found: List[Schedule] = []
    for row, z in enumerate(parts):
        x = parts
        ok = (masks | masks[row]) == full
        for group in QUBIT_GROUPS:
            ok &= ~np.isin(x[:, list(group)], z[list(group)]).any(axis=1)
        before = x < z
        ok &= before.sum(axis=1) % 2 == 0
        for a, b in BOUNDARY_PAIRS:
            ok &= before[:, a] == before[:, b]
        for (a1, b1), (a2, b2) in NEIGHBOR_DIRECTIONS:
            ok &= (x[:, b1] < z[a1]) == (x[:, b2] < z[a2])
            ok &= (x[:, a1] < z[b1]) == (x[:, a2] < z[b2])
        z_part = tuple(int(v) for v in z)
        for match in np.flatnonzero(ok):
            found.append(z_part + tuple(int(v) for v in x[match]))
    logger.info(f"Found {len(found)} valid length-{length} schedules")
    return found


def canonical_form(schedule: Sequence[int]) -> Schedule:
    """Smallest member of the rotation orbit"""
    return min(rotate_schedule(schedule, k) for k in range(3))


def reduce_by_symmetry(schedules: Iterable[Sequence[int]]) -> List[Schedule]:
    """First schedule of each rotation orbit, in input order"""
    seen = set()
    kept: List[Schedule] = []
    for schedule in schedules:
        schedule = as_schedule(schedule)
        key = canonical_form(schedule)
        if key in seen:
            continue
        seen.add(key)
        kept.append(schedule)
    return kept
