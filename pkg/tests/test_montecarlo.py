import numpy as np
import pytest

from services.montecarlo_service import (
    block_rng,
    combine_estimates,
    estimate_pfail,
    exact_bitflip_pfail,
    run_bitflip,
    sample,
    wilson_interval,
)
from services.dem_service import DetectorErrorModel, DetectorInfo, ErrorMechanism
from utils.error_handler import InvalidDistanceError, UsageError


def test_block_rng_is_keyed():
    a = block_rng(1, 0, 5).random(4)
    assert np.array_equal(a, block_rng(1, 0, 5).random(4))
    assert not np.array_equal(a, block_rng(1, 0, 6).random(4))
    assert not np.array_equal(a, block_rng(1, 1, 5).random(4))
    assert not np.array_equal(a, block_rng(2, 0, 5).random(4))


def test_sampling_is_split_invariant(dem_d3_t2):
    whole = sample(dem_d3_t2, 700, seed=9)
    first = sample(dem_d3_t2, 250, seed=9)
    rest = sample(dem_d3_t2, 450, seed=9, first_shot=250)
    assert np.array_equal(whole.events, np.concatenate([first.events, rest.events]))
    assert np.array_equal(whole.observables, np.concatenate([first.observables, rest.observables]))
    assert whole.shots == 700
    assert sample(dem_d3_t2, 0).shots == 0


def test_wilson_interval():
    low, high = wilson_interval(10, 1000)
    assert low < 0.01 < high
    assert wilson_interval(0, 1000)[0] == 0.0
    assert wilson_interval(0, 0) == (0.0, 1.0)
    for shots in (1, 3, 50):
        low, high = wilson_interval(0, shots)
        assert low == 0.0 and 0.0 < high <= 1.0
        assert wilson_interval(shots, shots)[1] == 1.0


def test_zero_noise():
    estimate = estimate_pfail(3, 1, 0.0, mode="bitflip", shots=1000)
    assert estimate.pfail == 0.0
    assert (estimate.ci_low, estimate.ci_high) == (0.0, 0.0)
    estimate = estimate_pfail(3, 2, 0.0, shots=1000)
    assert estimate.pfail == 0.0
    assert set(estimate.components) == {"Z", "X"}


def test_bad_arguments():
    with pytest.raises(UsageError):
        estimate_pfail(3, 1, 0.1, mode="other", shots=10)
    with pytest.raises(UsageError):
        estimate_pfail(3, 1, 0.9, mode="bitflip", shots=10)
    with pytest.raises(InvalidDistanceError):
        estimate_pfail(4, 1, 0.1, mode="bitflip", shots=10)


def test_seed_determinism():
    a = run_bitflip(5, 0.08, shots=3000, seed=12)
    b = run_bitflip(5, 0.08, shots=3000, seed=12)
    c = run_bitflip(5, 0.08, shots=3000, seed=13)
    assert a.failures == b.failures
    assert a.model_dump() == b.model_dump()
    assert c.seed == 13


def test_worker_count_does_not_change_results():
    one = estimate_pfail(3, 1, 0.05, mode="bitflip", shots=20000, seed=4, workers=1)
    two = estimate_pfail(3, 1, 0.05, mode="bitflip", shots=20000, seed=4, workers=2)
    assert one.failures == two.failures


def test_adaptive_shots_meet_target():
    estimate = estimate_pfail(3, 1, 0.1, mode="bitflip", ci_target=0.01, ci_mode="absolute", max_shots=10 ** 6, seed=1)
    assert estimate.half_width <= 0.01
    assert not estimate.budget_exhausted


def test_budget_exhaustion_is_flagged():
    estimate = estimate_pfail(3, 1, 0.05, mode="bitflip", ci_target=1e-6, max_shots=500, seed=1)
    assert estimate.budget_exhausted
    assert estimate.shots == 500


def test_circuit_estimate_sums_bases():
    estimate = estimate_pfail(3, 2, 2e-3, shots=512, seed=2)
    z, x = estimate.components["Z"], estimate.components["X"]
    assert estimate.basis == "ZX"
    assert z.schedule == "2,3,6,5,4,1;3,4,7,6,5,2"
    assert x.schedule == "3,4,7,6,5,2;2,3,6,5,4,1"
    assert estimate.pfail == pytest.approx(z.pfail + x.pfail)
    assert estimate.failures == z.failures + x.failures


def test_combine_estimates_half_width():
    z = run_bitflip(3, 0.1, shots=2000, seed=1)
    x = run_bitflip(3, 0.1, shots=2000, seed=2)
    combined = combine_estimates(z, x)
    assert combined.half_width == pytest.approx(np.hypot(z.half_width, x.half_width), rel=1e-9)
    assert combined.components == {"Z": z, "X": x}


def test_exact_oracle_low_weights():
    exact = exact_bitflip_pfail(3, 0.01)
    assert exact.patterns_by_weight == (1, 7, 21, 35)
    assert exact.failures_by_weight[:2] == (0, 0)
    assert 0.0 < exact.pfail < exact.upper


@pytest.mark.parametrize("p", [0.005, 0.01, 0.02])
def test_monte_carlo_matches_exact_oracle(p):
    exact = exact_bitflip_pfail(3, p)
    estimate = run_bitflip(3, p, shots=40000, seed=21)
    assert estimate.ci_low <= exact.upper
    assert exact.pfail <= estimate.ci_high


@pytest.mark.slow
def test_bitflip_curves_cross_near_threshold():
    from services.analysis_service import find_crossing

    ps = [0.06, 0.07, 0.08, 0.09, 0.10]
    curves = {
        d: [(p, run_bitflip(d, p, shots=10 ** 5, seed=d).pfail) for p in ps]
        for d in (5, 7, 9, 11)
    }
    for d1, d2 in ((5, 7), (7, 9), (9, 11)):
        assert 0.072 <= find_crossing(curves[d1], curves[d2]) <= 0.092


@pytest.mark.slow
def test_circuit_failure_rate_falls_with_distance():
    estimates = [estimate_pfail(d, 4, 2e-3, shots=20000, seed=d) for d in (3, 5, 7)]
    for small, large in zip(estimates, estimates[1:]):
        assert small.ci_low > large.ci_high


def test_sampled_firing_frequency():
    dem = DetectorErrorModel((ErrorMechanism(0.3, (0,), (0,)),), (DetectorInfo(),), 1)
    batch = sample(dem, 10 ** 5, seed=5)
    assert np.array_equal(batch.events[:, 0], batch.observables[:, 0])
    low, high = wilson_interval(int(batch.events.sum()), batch.shots)
    assert low <= 0.3 <= high


def test_larger_distance_fails_less_below_threshold():
    small = run_bitflip(3, 0.02, shots=40000, seed=31)
    large = run_bitflip(5, 0.02, shots=40000, seed=32)
    assert large.ci_high < small.ci_low


@pytest.mark.slow
def test_low_noise_circuit_success_rate():
    estimate = estimate_pfail(3, 1, 1e-4, shots=10 ** 5, seed=8)
    assert estimate.components["Z"].pfail <= 1e-3


@pytest.mark.slow
def test_bitflip_subthreshold_slope():
    from services.analysis_service import _regression

    ps = np.linspace(0.01, 0.03, 5)
    rates = [run_bitflip(5, float(p), shots=2 * 10 ** 5, seed=40 + k).pfail for k, p in enumerate(ps)]
    line = _regression(np.log(ps), np.log(rates))
    assert 2.3 <= line.slope <= 3.2


@pytest.mark.slow
def test_circuit_spot_value_has_no_bias():
    from services.analysis_service import bias_with_error

    estimate = estimate_pfail(7, 7, 1e-3, shots=2 * 10 ** 5, seed=7)
    assert estimate.ci_low <= 1.9e-3
    assert estimate.ci_high >= 1.0e-3
    value, half_width = bias_with_error(estimate)
    assert abs(value) <= half_width
