"""
Fits on failure-rate data: the sub-threshold ansatz, curve crossings, the
finite-size extrapolation of crossings, the long-term threshold and the
Z/X bias.
"""

import logging
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy.optimize import least_squares

from models.schemas import (
    AnsatzFit,
    CrossingEstimate,
    FailureEstimate,
    FitReport,
    LongTermFit,
    RegressionLine,
    RunConfig,
    ThresholdEstimate,
)
from utils import config
from utils.error_handler import DegenerateInputError, NoCrossingError, SchemaError

logger = logging.getLogger(__name__)

SMOOTHING_POINTS = 3


def _regression(x: np.ndarray, y: np.ndarray, se: Optional[np.ndarray] = None) -> RegressionLine:
    """Straight-line fit with t intervals; weighted by 1/se^2 when every se is positive"""
    design = sm.add_constant(np.asarray(x, dtype=np.float64), has_constant="add")
    y = np.asarray(y, dtype=np.float64)
    if se is not None and np.all(np.asarray(se) > 0):
        results = sm.WLS(y, design, weights=1.0 / np.asarray(se) ** 2).fit()
    else:
        results = sm.OLS(y, design).fit()
    intervals = np.asarray(results.conf_int(alpha=config.CI_ALPHA))
    return RegressionLine(
        slope=float(results.params[1]),
        intercept=float(results.params[0]),
        slope_se=float(np.nan_to_num(results.bse[1])),
        intercept_se=float(np.nan_to_num(results.bse[0])),
        slope_ci=[float(v) for v in intervals[1]],
        intercept_ci=[float(v) for v in intervals[0]],
        n_points=len(y),
    )


def _intercept_variance_factor(d: np.ndarray, d0: int, se: Optional[np.ndarray]) -> float:
    """Intercept entry of (X'WX)^-1 for the design [1, d - d0]"""
    weights = 1.0 / se ** 2 if se is not None and np.all(se > 0) else np.ones_like(d)
    design = np.column_stack([np.ones_like(d), d - d0])
    return float(np.linalg.inv(design.T @ (design * weights[:, None]))[0, 0])


def _best_d0(d: np.ndarray, se: Optional[np.ndarray]) -> int:
    candidates = range(int(d.min()), int(d.max()) + 1)
    return min(candidates, key=lambda d0: (_intercept_variance_factor(d, d0, se), d0))


def fit_subthreshold(points: Sequence[Tuple[int, float, float]]) -> AnsatzFit:
    """
    Two-stage fit of log(pfail/T) = G(d) log p + C(d)

    Args:
        points: (d, p, pfail per round) triples, at least three p values
            for each of at least three distances

    Returns:
        AnsatzFit with per-distance lines, the G and C lines in d - d0 and
        the recovered p*, alpha, beta, eta
    """
    by_distance: Dict[int, List[Tuple[float, float]]] = defaultdict(list)
    for d, p, rate in points:
        if p <= 0 or rate <= 0:
            raise DegenerateInputError(f"Ansatz fit needs positive p and pfail, got p={p}, pfail={rate}")
        by_distance[int(d)].append((float(p), float(rate)))
    if len(by_distance) < 3:
        raise DegenerateInputError(f"Ansatz fit needs at least 3 distances, got {len(by_distance)}")
    for d, values in by_distance.items():
        if len(values) < 3:
            raise DegenerateInputError(f"Ansatz fit needs at least 3 points at d={d}, got {len(values)}")

    distances = sorted(by_distance)
    per_distance = {}
    for d in distances:
        values = sorted(by_distance[d])
        log_p = np.log([p for p, _ in values])
        log_rate = np.log([rate for _, rate in values])
        per_distance[d] = _regression(log_p, log_rate)

    d_array = np.array(distances, dtype=np.float64)
    slopes = np.array([per_distance[d].slope for d in distances])
    intercepts = np.array([per_distance[d].intercept for d in distances])
    slope_se = np.array([per_distance[d].slope_se for d in distances])
    intercept_se = np.array([per_distance[d].intercept_se for d in distances])

    d0_slope = _best_d0(d_array, slope_se)
    d0_intercept = _best_d0(d_array, intercept_se)
    d0 = d0_slope if d0_slope == d0_intercept else int(math.floor((d0_slope + d0_intercept) / 2 + 0.5))

    slope_fit = _regression(d_array - d0, slopes, slope_se)
    intercept_fit = _regression(d_array - d0, intercepts, intercept_se)

    beta, eta = slope_fit.slope, slope_fit.intercept
    degenerate = abs(beta) <= 1e-12 * max(1.0, abs(eta))
    p_star = alpha = None
    if degenerate:
        logger.warning("Ansatz slope G(d) is flat in d; the scaling threshold is undefined")
    else:
        log_p_star = -intercept_fit.slope / beta
        p_star = math.exp(log_p_star)
        alpha = math.exp(intercept_fit.intercept + eta * log_p_star)

    return AnsatzFit(
        per_distance=per_distance,
        slope_fit=slope_fit,
        intercept_fit=intercept_fit,
        d0=d0,
        p_star=p_star,
        alpha=alpha,
        beta=beta,
        eta=eta,
        degenerate=degenerate,
    )


def _clean_curve(curve: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    values = sorted((float(p), float(rate)) for p, rate in curve if p > 0 and rate > 0)
    if len(values) < 2:
        raise DegenerateInputError("A curve needs at least 2 points with positive failure rate")
    x = np.log([p for p, _ in values])
    y = np.log([rate for _, rate in values])
    return x, y


def local_linear_smooth(x: np.ndarray, y: np.ndarray, points: int = SMOOTHING_POINTS) -> np.ndarray:
    """Value at each x of the line through its `points` nearest neighbours"""
    points = min(points, len(x))
    smoothed = np.empty_like(y)
    for i, xi in enumerate(x):
        nearest = np.argsort(np.abs(x - xi), kind="stable")[:points]
        slope, intercept = np.polyfit(x[nearest], y[nearest], 1)
        smoothed[i] = slope * xi + intercept
    return smoothed


def find_crossing(curve_a: Sequence[Tuple[float, float]], curve_b: Sequence[Tuple[float, float]]) -> float:
    """
    Noise strength where two failure-rate curves intersect

    Each curve is smoothed in log-log space and interpolated piecewise
    linearly; the first sign change of their difference inside the common
    range gives the crossing.
    """
    xa, ya = _clean_curve(curve_a)
    xb, yb = _clean_curve(curve_b)
    ya, yb = local_linear_smooth(xa, ya), local_linear_smooth(xb, yb)

    low, high = max(xa[0], xb[0]), min(xa[-1], xb[-1])
    if low > high:
        raise NoCrossingError("Curves share no p range")
    grid = np.unique(np.concatenate([xa, xb, [low, high]]))
    grid = grid[(grid >= low) & (grid <= high)]
    diff = np.interp(grid, xa, ya) - np.interp(grid, xb, yb)

    for i, value in enumerate(diff):
        if value == 0.0:
            return float(math.exp(grid[i]))
        if i and np.sign(diff[i - 1]) != np.sign(value):
            x0, x1, f0, f1 = grid[i - 1], grid[i], diff[i - 1], value
            return float(math.exp(x0 - f0 * (x1 - x0) / (f1 - f0)))
    raise NoCrossingError("Failure-rate curves do not cross in the sampled range")


def extrapolate_threshold(crossings: Sequence) -> ThresholdEstimate:
    """Fit crossing(d1) = A / d1 + p_threshold"""
    pairs = [
        (c.d1, c.p_cross) if isinstance(c, CrossingEstimate) else (int(c[0]), float(c[1]))
        for c in crossings
    ]
    if len({d for d, _ in pairs}) < 2:
        raise DegenerateInputError("Extrapolation needs crossings for at least 2 distances")
    inverse = np.array([1.0 / d for d, _ in pairs])
    values = np.array([p for _, p in pairs])
    line = _regression(inverse, values)
    se = line.intercept_se if len(pairs) > 2 and math.isfinite(line.intercept_se) else None
    return ThresholdEstimate(
        crossings=[c for c in crossings if isinstance(c, CrossingEstimate)],
        p_threshold=line.intercept,
        p_threshold_se=se,
        slope_A=line.slope,
    )


def longterm_model(T: np.ndarray, p_longterm: float, gamma: float, p_first: float) -> np.ndarray:
    return p_longterm * (1.0 - (1.0 - p_first / p_longterm) * np.power(T, -gamma))


def fit_longterm(thresholds: Sequence[Tuple[int, float]]) -> LongTermFit:
    """Levenberg-Marquardt fit of the per-T thresholds to their long-term limit"""
    data = sorted((int(T), float(p)) for T, p in thresholds)
    if len(data) < 3:
        raise DegenerateInputError("Long-term fit needs at least 3 thresholds")
    first = [p for T, p in data if T == 1]
    if not first:
        raise DegenerateInputError("Long-term fit needs the threshold at T=1")
    p_first = first[0]
    T_values = np.array([T for T, _ in data], dtype=np.float64)
    p_values = np.array([p for _, p in data])

    def residuals(params):
        return longterm_model(T_values, params[0], params[1], p_first) - p_values

    result = least_squares(
        residuals,
        x0=[p_values[-1], 1.0],
        method="lm",
        x_scale="jac",
        xtol=config.FIT_TOLERANCE,
        ftol=config.FIT_TOLERANCE,
        gtol=config.FIT_TOLERANCE,
        max_nfev=config.FIT_MAX_ITERATIONS,
    )
    if not result.success:
        logger.warning(f"Long-term fit did not converge: {result.message}")
    return LongTermFit(
        p_longterm=float(result.x[0]),
        gamma=float(result.x[1]),
        p_first=p_first,
        cost=float(result.cost),
        iterations=int(result.nfev),
        converged=bool(result.success),
    )


def bias(p_z: float, p_x: float) -> float:
    """log10 of the Z to X failure-rate ratio"""
    if p_z <= 0 or p_x <= 0:
        raise DegenerateInputError("Bias needs positive failure rates in both bases")
    return math.log10(p_z / p_x)


def bias_with_error(estimate: FailureEstimate) -> Tuple[float, float]:
    """Bias of a combined estimate and its half-width from the component CIs"""
    if set(estimate.components) != {"Z", "X"}:
        raise DegenerateInputError("Bias needs an estimate with Z and X components")
    z, x = estimate.components["Z"], estimate.components["X"]
    value = bias(z.pfail, x.pfail)
    half_width = math.hypot(z.half_width / z.pfail, x.half_width / x.pfail) / math.log(10)
    return value, half_width


REQUIRED_COLUMNS = ("d", "T", "p", "basis", "shots", "failures", "pfail", "ci_lo", "ci_hi")


def combined_rates(table: pd.DataFrame) -> pd.DataFrame:
    """One row per (d, T, p) with pfail summed over bases"""
    missing = [column for column in REQUIRED_COLUMNS if column not in table.columns]
    if missing:
        raise SchemaError(f"Result table lacks columns {missing}")
    grouped = table.groupby(["d", "T", "p"], as_index=False).agg(
        pfail=("pfail", "sum"), shots=("shots", "max"), bases=("basis", "nunique")
    )
    return grouped.sort_values(["T", "d", "p"]).reset_index(drop=True)


def analyze_table(table: pd.DataFrame, run_config: RunConfig) -> FitReport:
    """Every fit the table supports; unsupported fits become notes"""
    rates = combined_rates(table)
    notes: List[str] = []

    ansatz = None
    points = [(int(r.d), float(r.p), float(r.pfail) / int(r.T)) for r in rates.itertuples() if r.pfail > 0]
    try:
        ansatz = fit_subthreshold(points)
    except DegenerateInputError as e:
        notes.append(f"ansatz: {e}")

    thresholds: Dict[str, ThresholdEstimate] = {}
    per_T: List[Tuple[int, float]] = []
    for T, group in rates.groupby("T"):
        curves = {
            int(d): list(zip(sub["p"].astype(float), sub["pfail"].astype(float)))
            for d, sub in group.groupby("d")
        }
        distances = sorted(curves)
        crossings = []
        for d1, d2 in zip(distances, distances[1:]):
            try:
                crossings.append(CrossingEstimate(d1=d1, d2=d2, T=int(T), p_cross=find_crossing(curves[d1], curves[d2])))
            except (NoCrossingError, DegenerateInputError) as e:
                notes.append(f"crossing d={d1},{d2} T={T}: {e}")
        if not crossings:
            continue
        try:
            estimate = extrapolate_threshold(crossings)
        except DegenerateInputError:
            estimate = ThresholdEstimate(crossings=crossings, p_threshold=crossings[0].p_cross)
            notes.append(f"T={T}: single crossing used as the threshold")
        thresholds[str(int(T))] = estimate
        per_T.append((int(T), estimate.p_threshold))

    longterm = None
    if len(per_T) >= 3:
        try:
            longterm = fit_longterm(per_T)
        except DegenerateInputError as e:
            notes.append(f"long-term: {e}")

    biases = {}
    for (d, T, p), group in table.groupby(["d", "T", "p"]):
        by_basis = dict(zip(group["basis"], group["pfail"].astype(float)))
        if by_basis.get("Z", 0) > 0 and by_basis.get("X", 0) > 0:
            biases[f"d={d},T={T},p={p!r}"] = bias(by_basis["Z"], by_basis["X"])

    return FitReport(
        artifact=config.ARTIFACT_NAME,
        version=config.ARTIFACT_VERSION,
        config=run_config,
        ansatz=ansatz,
        thresholds=thresholds,
        longterm=longterm,
        bias=biases,
        notes=notes,
    )
