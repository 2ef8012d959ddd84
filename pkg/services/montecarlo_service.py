"""
Monte Carlo estimation of logical failure rates.

Random numbers come from Philox streams keyed by (seed, stream) with one
counter block per SHOT_BLOCK shots, so shot s is the same no matter how the
shots are split across workers or adaptive rounds. Circuit-level blocks are
sampled by stim with a seed drawn from the block generator, which is
reproducible for a fixed stim build.
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom
from statsmodels.stats.proportion import proportion_confint

from models.schemas import FailureEstimate
from services.circuit_decoder_service import CircuitDecoderService
from services.circuit_service import apply_noise, build_memory_circuit
from services.decoder2d_service import Decoder2DService, logical_flips, syndrome_vector
from services.dem_service import DetectorErrorModel, extract_dem, to_stim_dem
from services.lattice_service import build_triangular
from services.schedule_service import Schedule, as_schedule, format_schedule, swap_schedule_parts
from utils import config
from utils.error_handler import UsageError
from utils.run_logger import run_logger
from utils.worker_pool import ShotWorkerPool

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
BLOCKS_PER_TASK = 32
STIM_SEED_BOUND = np.iinfo(np.int64).max


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Independent generator for one block of shots"""
    key = (int(seed) & MASK64) | ((int(stream) & MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(block) << 128))


def wilson_interval(failures: int, shots: int, alpha: float = config.CI_ALPHA) -> Tuple[float, float]:
    if shots <= 0:
        return 0.0, 1.0
    low, high = proportion_confint(failures, shots, alpha=alpha, method="wilson")
    return max(0.0, float(low)), min(1.0, float(high))


@dataclass(frozen=True)
class ShotBatch:
    events: np.ndarray
    observables: np.ndarray
    seed: int
    stream: int
    first_shot: int

    @property
    def shots(self) -> int:
        return self.events.shape[0]


class DemSampler:
    """stim sampler over the model, reseeded from the block generator for every block"""

    def __init__(self, dem: DetectorErrorModel):
        self.dem = dem
        self.model = to_stim_dem(dem)

    def sample_block(self, rng: np.random.Generator, shots: int) -> Tuple[np.ndarray, np.ndarray]:
        sampler = self.model.compile_sampler(seed=int(rng.integers(STIM_SEED_BOUND)))
        events, observables, _ = sampler.sample(shots)
        return events.astype(bool), observables.astype(bool)


def _blocks(first_shot: int, shots: int):
    """(block, row slice) pairs covering shots [first_shot, first_shot + shots)"""
    size = config.SHOT_BLOCK
    stop = first_shot + shots
    for block in range(first_shot // size, -(-stop // size)):
        lo = max(first_shot, block * size) - block * size
        hi = min(stop, (block + 1) * size) - block * size
        yield block, slice(lo, hi)


def sample(dem: DetectorErrorModel, shots: int, seed: int = 0, stream: int = 0, first_shot: int = 0) -> ShotBatch:
    """Detection events and true observable flips of shots [first_shot, first_shot + shots)"""
    if shots < 0:
        raise UsageError("Number of shots must be non-negative")
    sampler = DemSampler(dem)
    events, observables = [], []
    for block, rows in _blocks(first_shot, shots):
        det, obs = sampler.sample_block(block_rng(seed, stream, block), config.SHOT_BLOCK)
        events.append(det[rows])
        observables.append(obs[rows])
    if not events:
        return ShotBatch(
            np.zeros((0, dem.num_detectors), dtype=bool),
            np.zeros((0, dem.num_observables), dtype=bool),
            seed, stream, first_shot,
        )
    return ShotBatch(np.concatenate(events), np.concatenate(observables), seed, stream, first_shot)


@dataclass(frozen=True)
class Scenario:
    mode: str
    d: int
    T: int
    p: float
    schedule: Schedule
    backend: Optional[str] = None
    include_stage1_weight: bool = False


class _BitflipContext:
    def __init__(self, scenario: Scenario):
        self.lattice = build_triangular(scenario.d)
        self.decoder = Decoder2DService(self.lattice, scenario.backend)
        self.p = scenario.p

    def failures(self, rng: np.random.Generator, rows: slice) -> int:
        errors = rng.random((config.SHOT_BLOCK, self.lattice.num_vertices)) < self.p
        errors = errors[rows]
        prediction, _, _ = self.decoder.decode_batch(syndrome_vector(self.lattice, errors))
        return int(logical_flips(self.lattice, errors ^ prediction).sum())


class _CircuitContext:
    def __init__(self, scenario: Scenario):
        circuit = apply_noise(build_memory_circuit(scenario.d, scenario.T, scenario.schedule), scenario.p)
        dem = extract_dem(circuit)
        self.sampler = DemSampler(dem)
        self.decoder = CircuitDecoderService(dem, scenario.backend, scenario.include_stage1_weight)

    def failures(self, rng: np.random.Generator, rows: slice) -> int:
        events, observables = self.sampler.sample_block(rng, config.SHOT_BLOCK)
        predicted, _, _ = self.decoder.decode_batch(events[rows])
        return int(np.any(predicted != observables[rows], axis=1).sum())


@lru_cache(maxsize=8)
def _context(scenario: Scenario):
    if scenario.mode == "bitflip":
        return _BitflipContext(scenario)
    return _CircuitContext(scenario)


def _count_failures(task: Tuple[Scenario, int, int, int, int]) -> int:
    """Failures over one contiguous shot range; runs in worker processes"""
    scenario, seed, stream, first_shot, shots = task
    context = _context(scenario)
    return sum(
        context.failures(block_rng(seed, stream, block), rows)
        for block, rows in _blocks(first_shot, shots)
    )


def _tasks(scenario: Scenario, seed: int, stream: int, first_shot: int, shots: int) -> List[tuple]:
    span = BLOCKS_PER_TASK * config.SHOT_BLOCK
    tasks = []
    start, stop = first_shot, first_shot + shots
    while start < stop:
        end = min(stop, (start // span + 1) * span)
        tasks.append((scenario, seed, stream, start, end - start))
        start = end
    return tasks


def _basis_estimate(
    scenario: Scenario, basis: str, shots: int, failures: int, seed: int, exhausted: bool
) -> FailureEstimate:
    pfail = failures / shots if shots else 0.0
    low, high = wilson_interval(failures, shots) if shots and scenario.p > 0 else (0.0, 0.0)
    return FailureEstimate(
        d=scenario.d,
        T=scenario.T,
        p=scenario.p,
        schedule=format_schedule(scenario.schedule) if scenario.mode == "circuit" else None,
        basis=basis,
        shots=shots,
        failures=failures,
        pfail=pfail,
        ci_low=min(low, pfail),
        ci_high=max(high, pfail),
        seed=seed,
        budget_exhausted=exhausted,
    )


def combine_estimates(z: FailureEstimate, x: FailureEstimate, schedule: Optional[str] = None) -> FailureEstimate:
    """p_fail = p_fail(Z) + p_fail(X) with half-widths added in quadrature"""
    pfail = z.pfail + x.pfail
    half_width = math.hypot(z.half_width, x.half_width)
    return FailureEstimate(
        d=z.d,
        T=z.T,
        p=z.p,
        schedule=schedule if schedule is not None else z.schedule,
        basis="ZX",
        shots=z.shots,
        failures=z.failures + x.failures,
        pfail=pfail,
        ci_low=max(0.0, pfail - half_width),
        ci_high=pfail + half_width,
        seed=z.seed,
        budget_exhausted=z.budget_exhausted or x.budget_exhausted,
        components={"Z": z, "X": x},
    )


def _target_met(estimate: FailureEstimate, ci_target: float, ci_mode: str) -> bool:
    if ci_mode == "absolute":
        return estimate.half_width <= ci_target
    return estimate.pfail > 0 and estimate.half_width <= ci_target * estimate.pfail


def estimate_pfail(
    d: int,
    T: int,
    p: float,
    schedule: Optional[Sequence[int]] = None,
    ci_target: Optional[float] = None,
    seed: int = 0,
    mode: str = "circuit",
    ci_mode: str = "relative",
    shots: Optional[int] = None,
    max_shots: Optional[int] = None,
    stream: int = 0,
    backend: Optional[str] = None,
    include_stage1_weight: Optional[bool] = None,
    workers: Optional[int] = None,
) -> FailureEstimate:
    """
    Logical failure rate of T rounds of memory at distance d and noise p

    Circuit mode runs the Z-memory circuit with the schedule and again with
    its parts swapped, and sums the two rates. Bit-flip mode runs one
    perfect-measurement round. Without a fixed shot count, shots double from
    CMWPM_INITIAL_SHOTS until the 99% CI half-width meets ci_target or the
    budget runs out, in which case the estimate is flagged.

    Args:
        d: Code distance
        T: Rounds (ignored in bit-flip mode)
        p: Noise strength
        schedule: CNOT schedule of the Z-memory run
        ci_target: Half-width target; absolute or relative to p_fail
        seed: Master seed
        mode: "circuit" or "bitflip"
        ci_mode: "absolute" or "relative"
        shots: Fixed shots per basis, disables adaptivity
        max_shots: Per-basis budget, CMWPM_MAX_SHOTS by default
        stream: Stream id separating points of one sweep

    Returns:
        FailureEstimate with Z and X components in circuit mode
    """
    if mode not in ("circuit", "bitflip"):
        raise UsageError(f"Unknown simulation mode {mode!r}")
    if ci_mode not in ("absolute", "relative"):
        raise UsageError(f"Unknown CI mode {ci_mode!r}")
    if not 0.0 <= p <= (0.5 if mode == "bitflip" else 0.75):
        raise UsageError(f"Noise strength {p} out of range")
    start_time = time.time()
    schedule = as_schedule(config.OPTIMAL_SCHEDULE if schedule is None else schedule)
    T = 1 if mode == "bitflip" else T
    include = config.INCLUDE_STAGE1_WEIGHT if include_stage1_weight is None else include_stage1_weight
    bases = [("Z", schedule)] if mode == "bitflip" else [("Z", schedule), ("X", swap_schedule_parts(schedule))]
    scenarios = {
        basis: Scenario(mode, d, T, float(p), basis_schedule, backend, include)
        for basis, basis_schedule in bases
    }
    # Validate inputs before any worker starts
    build_triangular(d)

    budget = max_shots or config.MAX_SHOTS
    adaptive = ci_target is not None and shots is None
    target = shots if shots is not None else min(config.INITIAL_SHOTS, budget)
    done = {basis: 0 for basis in scenarios}
    failures = {basis: 0 for basis in scenarios}
    exhausted = False

    with ShotWorkerPool(workers) as pool:
        while True:
            if p > 0:
                for k, (basis, scenario) in enumerate(scenarios.items()):
                    tasks = _tasks(scenario, seed, 2 * stream + k, done[basis], target - done[basis])
                    failures[basis] += sum(pool.map(_count_failures, tasks))
                    done[basis] = target
            else:
                done = {basis: target for basis in scenarios}
            estimate = _combined(scenarios, done, failures, seed, False)
            if not adaptive or p == 0 or _target_met(estimate, ci_target, ci_mode):
                break
            if target >= budget:
                exhausted = True
                break
            target = min(2 * target, budget)

    estimate = _combined(scenarios, done, failures, seed, exhausted)
    if exhausted:
        logger.warning(
            f"Shot budget {budget} exhausted at d={d} T={T} p={p}: half-width {estimate.half_width:.3g}"
        )
    run_logger.log_estimate(estimate.model_dump(), time.time() - start_time)
    return estimate


def _combined(
    scenarios: Dict[str, Scenario], done: Dict[str, int], failures: Dict[str, int], seed: int, exhausted: bool
) -> FailureEstimate:
    per_basis = {
        basis: _basis_estimate(scenario, basis, done[basis], failures[basis], seed, exhausted)
        for basis, scenario in scenarios.items()
    }
    if len(per_basis) == 1:
        return per_basis["Z"]
    return combine_estimates(per_basis["Z"], per_basis["X"], format_schedule(scenarios["Z"].schedule))


def run_bitflip(d: int, p: float, shots: int, seed: int = 0, backend: Optional[str] = None) -> FailureEstimate:
    """Perfect-measurement bit-flip memory; only the Z component exists"""
    return estimate_pfail(d, 1, p, mode="bitflip", shots=shots, seed=seed, backend=backend)


@dataclass(frozen=True)
class ExactFailure:
    pfail: float
    tail_bound: float
    failures_by_weight: Tuple[int, ...]
    patterns_by_weight: Tuple[int, ...]

    @property
    def upper(self) -> float:
        return self.pfail + self.tail_bound


def exact_bitflip_pfail(d: int, p: float, max_weight: int = 3, backend: Optional[str] = None) -> ExactFailure:
    """
    Bit-flip failure probability by enumerating every error of weight <= max_weight

    The errors heavier than max_weight contribute at most tail_bound.
    """
    lattice = build_triangular(d)
    n = lattice.num_vertices
    max_weight = min(max_weight, n)
    decoder = Decoder2DService(lattice, backend)
    pfail = 0.0
    failures_by_weight, patterns_by_weight = [], []
    for weight in range(max_weight + 1):
        combos = np.array(list(itertools.combinations(range(n), weight)), dtype=np.int64)
        combos = combos.reshape(math.comb(n, weight), weight)
        errors = np.zeros((combos.shape[0], n), dtype=bool)
        errors[np.arange(combos.shape[0])[:, None], combos] = True
        prediction, _, _ = decoder.decode_batch(syndrome_vector(lattice, errors))
        failed = int(logical_flips(lattice, errors ^ prediction).sum())
        failures_by_weight.append(failed)
        patterns_by_weight.append(combos.shape[0])
        pfail += failed * p ** weight * (1.0 - p) ** (n - weight)
    tail = float(binom.sf(max_weight, n, p))
    return ExactFailure(pfail, tail, tuple(failures_by_weight), tuple(patterns_by_weight))
