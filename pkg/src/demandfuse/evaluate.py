"""Rolling-origin cross-validation and scoring.

Scores: MASE (point accuracy, scaled by the in-sample seasonal-naive MAE of
each origin's training window, season length 12), CRPS (probabilistic
accuracy; the exact energy form for ensembles, the pinball-integral form for
quantile curves), per-level pinball scores, and Nemenyi average-rank
comparison across methods.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import DemandSeries, DistributionCurve, Month, QuantileForecast, QuantileGrid, SeriesKey
from .combine import pinball
from .pipeline import Method, build_method

#: Critical constants for the Nemenyi test at the 5% level (studentized
#: range at infinite degrees of freedom, divided by sqrt 2), k = 2..20.
Q_ALPHA_05 = {
    2: 1.959964, 3: 2.343701, 4: 2.569032, 5: 2.727774, 6: 2.849705,
    7: 2.948320, 8: 3.030879, 9: 3.101730, 10: 3.163684, 11: 3.218654,
    12: 3.268004, 13: 3.312739, 14: 3.353618, 15: 3.391230, 16: 3.426041,
    17: 3.458425, 18: 3.488685, 19: 3.517073, 20: 3.543799,
}

SEASON_LENGTH = 12


@dataclass(frozen=True)
class CvPlan:
    origins: int = 3
    horizon: int = 3
    min_train: int = 13
    step: int = 1

    def __post_init__(self) -> None:
        if self.origins < 1:
            raise ValueError(f"origins must be >= 1, got {self.origins}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.min_train < 2:
            raise ValueError(f"min_train must be >= 2, got {self.min_train}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")


@dataclass(frozen=True)
class CvSplit:
    """One origin: train on the first train_length values, test on the next
    horizon values."""

    train_length: int
    horizon: int

    def train(self, series: DemandSeries) -> DemandSeries:
        return series.head(self.train_length)

    def test_values(self, series: DemandSeries) -> tuple[float, ...]:
        return series.values[self.train_length : self.train_length + self.horizon]

    def origin_month(self, series: DemandSeries) -> Month:
        return series.start.add(self.train_length - 1)


def plan_cv(series: DemandSeries, plan: CvPlan) -> list[CvSplit]:
    """Expanding-window splits whose last test window ends at the series end.

    The training set grows by `step` months per origin while the test window
    moves forward the same amount.  If the series supports fewer origins than
    requested, the count is reduced with a warning; a series too short for
    even one origin is an error naming the required length.
    """
    length = len(series)
    required = plan.min_train + plan.horizon
    if length < required:
        raise ValueError(
            f"series {series.key} has {length} months; rolling-origin evaluation "
            f"needs at least min_train + horizon = {required}"
        )
    possible = (length - plan.horizon - plan.min_train) // plan.step + 1
    origins = min(plan.origins, possible)
    if origins < plan.origins:
        warnings.warn(
            f"series {series.key}: only {origins} of {plan.origins} requested origins fit",
            stacklevel=2,
        )
    last_train_end = length - plan.horizon
    return [
        CvSplit(last_train_end - (origins - 1 - j) * plan.step, plan.horizon)
        for j in range(origins)
    ]


def seasonal_naive_mae(train: Sequence[float], m: int = SEASON_LENGTH) -> float:
    """In-sample MAE of the season-ago forecast over the training window:
    (1/(n-m)) * sum_{t=m+1..n} |y_t - y_{t-m}|."""
    values = np.asarray(train, dtype=float)
    n = len(values)
    if n <= m:
        raise ValueError(f"training window must exceed the season length {m}, got {n}")
    return float(np.mean(np.abs(values[m:] - values[:-m])))


def scaled_errors(
    train: Sequence[float],
    actuals: Sequence[float],
    forecasts: Sequence[float],
    m: int = SEASON_LENGTH,
) -> np.ndarray:
    """Signed scaled errors q_t = (y_t - yhat_t) / seasonal_naive_mae(train).

    Returns NaN entries when the denominator is zero (perfectly periodic
    training window); callers flag and exclude those records.
    """
    denom = seasonal_naive_mae(train, m)
    errors = np.asarray(actuals, dtype=float) - np.asarray(forecasts, dtype=float)
    if denom == 0:
        return np.full(len(errors), np.nan)
    return errors / denom


def mase(
    train: Sequence[float],
    actuals: Sequence[float],
    forecasts: Sequence[float],
    m: int = SEASON_LENGTH,
) -> float:
    """Mean absolute scaled error over the test horizons (NaN when the
    scaling denominator is zero)."""
    q = scaled_errors(train, actuals, forecasts, m)
    return float(np.mean(np.abs(q)))


def crps_ensemble(paths: Sequence[float], actual: float) -> float:
    """CRPS of an ensemble forecast in the exact energy form:

        mean_b |X_b - y| - (1/2) * mean_{b,b'} |X_b - X_b'|

    computed in O(B log B) via sorting.
    """
    x = np.sort(np.asarray(paths, dtype=float))
    b = len(x)
    if b < 1:
        raise ValueError("need at least one path")
    term1 = float(np.mean(np.abs(x - actual)))
    # sum over ordered pairs (i<j) of (x_j - x_i) equals sum_i (2i - b + 1) x_i
    coeffs = 2 * np.arange(b) - b + 1
    pair_sum = float(np.dot(coeffs, x))
    return term1 - pair_sum / (b * b)


def crps_quantiles(levels: Sequence[float], values: Sequence[float], actual: float) -> float:
    """CRPS approximation for a quantile-represented distribution:
    2 * mean over the grid of the pinball loss (the pinball-integral
    identity, evaluated on the available levels)."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    diff = actual - values
    losses = diff * (levels - (diff < 0))
    return float(2.0 * np.mean(losses))


def quantile_score(
    forecast: "QuantileForecast | DistributionCurve",
    actual: float,
    levels: Sequence[float],
    horizon: int = 1,
) -> dict[float, float]:
    """Pinball loss at each requested level, read off the quantile forecast
    (linear interpolation between grid levels where needed)."""
    if isinstance(forecast, DistributionCurve):
        xs = np.asarray(forecast.probabilities())
        ys = np.asarray(forecast.values())
    else:
        xs = forecast.grid.as_array()
        ys = forecast.row(horizon)
    out: dict[float, float] = {}
    for level in levels:
        if not xs[0] <= level <= xs[-1]:
            raise ValueError(f"level {level} outside the forecast's grid span [{xs[0]}, {xs[-1]}]")
        predicted = float(np.interp(level, xs, ys))
        out[float(level)] = pinball(float(level), actual, predicted)
    return out


@dataclass(frozen=True)
class NemenyiResult:
    mean_ranks: dict[str, float]
    critical_distance: float
    significant: dict[tuple[str, str], bool]
    alpha: float
    n_series: int
    q_alpha: float


def nemenyi_ranks(
    scores: Mapping[str, Mapping[Hashable, float]], alpha: float = 0.05
) -> NemenyiResult:
    """Average ranks per method (rank 1 = best, ties averaged), the critical
    distance q_alpha * sqrt(k (k+1) / (12 N)), and pairwise significance
    flags |rank_i - rank_j| > CD.

    The score matrix must be complete: every method needs a score for every
    series. Missing cells are reported exhaustively.
    """
    if alpha != 0.05:
        raise ValueError("only the 5% significance level is tabulated")
    methods = sorted(scores)
    if len(methods) < 2:
        raise ValueError("need at least 2 methods to rank")
    all_series = sorted({s for m in methods for s in scores[m]}, key=str)
    if len(all_series) < 2:
        raise ValueError("need at least 2 series to rank")
    missing = [
        (m, s) for m in methods for s in all_series if s not in scores[m]
    ]
    if missing:
        cells = ", ".join(f"({m}, {s})" for m, s in missing[:20])
        raise ValueError(f"incomplete score matrix; missing cells: {cells}")
    k = len(methods)
    if k not in Q_ALPHA_05:
        raise ValueError(f"no critical constant tabulated for k={k} (supported: 2..20)")

    matrix = np.array([[scores[m][s] for m in methods] for s in all_series], dtype=float)
    ranks = np.vstack([rankdata(row, method="average") for row in matrix])
    mean_ranks = {m: float(r) for m, r in zip(methods, ranks.mean(axis=0))}
    n = len(all_series)
    cd = Q_ALPHA_05[k] * math.sqrt(k * (k + 1) / (12.0 * n))
    significant = {
        (a, b): bool(abs(mean_ranks[a] - mean_ranks[b]) > cd)
        for i, a in enumerate(methods)
        for b in methods[i + 1 :]
    }
    return NemenyiResult(mean_ranks, cd, significant, alpha, n, Q_ALPHA_05[k])


@dataclass(frozen=True)
class EvaluationRecord:
    key: SeriesKey
    method: str
    origin: Month
    horizon: int
    actual: float
    point: float
    mase_q: float  # signed scaled error; NaN when the denominator was zero
    crps: float  # NaN for point-only methods
    pinball_by_level: dict[float, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean_mase: float
    median_mase: float
    mean_crps: float
    median_crps: float
    runtime_s: float
    mase_excluded: int  # (series, origin) cells dropped for a zero denominator


@dataclass
class BenchmarkResult:
    records: list[EvaluationRecord]
    summary: list[MethodSummary]
    failures: list[tuple[SeriesKey, str, str]]

    def summary_sorted(self) -> list[MethodSummary]:
        return sorted(
            self.summary, key=lambda s: (math.isnan(s.mean_mase), s.mean_mase)
        )


def _nanstat(values: list[float], fn) -> float:
    clean = [v for v in values if not math.isnan(v)]
    return float(fn(clean)) if clean else math.nan


def run_benchmark(
    dataset: Sequence[DemandSeries],
    methods: Sequence["str | dict | Method"],
    plan: CvPlan,
    grid: QuantileGrid,
    seed: int = 0,
    b: int = 1000,
    report_levels: Sequence[float] = (0.5, 0.95),
    demographics=None,
) -> BenchmarkResult:
    """Evaluate every method on every series at every rolling origin.

    MASE uses each origin's own (expanding) training window for its scaling
    denominator.  CRPS comes from the ensemble (energy form) when the method
    produces paths, and from the quantile curve (pinball-integral form) for
    methods that produce only quantiles.  Per-series failures are recorded
    and skipped, not fatal.  Output is deterministic for a fixed seed.
    """
    built: list[Method] = [
        m if isinstance(m, Method) else build_method(m, demographics) for m in methods
    ]
    names = [m.name for m in built]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate method labels: {names}")

    records: list[EvaluationRecord] = []
    failures: list[tuple[SeriesKey, str, str]] = []
    runtimes = {name: 0.0 for name in names}
    # per-(method) lists of per-(series, origin) aggregates
    mase_cells: dict[str, list[float]] = {name: [] for name in names}
    crps_cells: dict[str, list[float]] = {name: [] for name in names}
    excluded = {name: 0 for name in names}

    for series in sorted(dataset, key=lambda s: s.key.ident):
        try:
            splits = plan_cv(series, plan)
        except ValueError as exc:
            failures.append((series.key, "cv", str(exc)))
            continue
        for split in splits:
            train = split.train(series)
            actuals = split.test_values(series)
            origin = split.origin_month(series)
            try:
                denom = seasonal_naive_mae(train.values)
            except ValueError:
                denom = math.nan
            for method in built:
                started = time.perf_counter()
                try:
                    product = method.run(train, plan.horizon, grid, b, seed)
                except Exception as exc:  # per-series failure, not fatal
                    failures.append((series.key, method.name, str(exc)))
                    continue
                finally:
                    runtimes[method.name] += time.perf_counter() - started

                point = np.asarray(product.point.values)
                if math.isnan(denom) or denom == 0.0:
                    q_t = np.full(plan.horizon, math.nan)
                    excluded[method.name] += 1
                else:
                    q_t = (np.asarray(actuals) - point) / denom
                    mase_cells[method.name].append(float(np.mean(np.abs(q_t))))

                crps_h = np.full(plan.horizon, math.nan)
                for h in range(plan.horizon):
                    if product.ensemble is not None:
                        crps_h[h] = crps_ensemble(product.ensemble.paths[:, h], actuals[h])
                    elif product.quantiles is not None:
                        crps_h[h] = crps_quantiles(
                            product.quantiles.grid.levels,
                            product.quantiles.row(h + 1),
                            actuals[h],
                        )
                if not math.isnan(crps_h[0]):
                    crps_cells[method.name].append(float(np.mean(crps_h)))

                for h in range(plan.horizon):
                    scores = {}
                    if product.quantiles is not None:
                        scores = quantile_score(
                            product.quantiles, float(actuals[h]), report_levels, horizon=h + 1
                        )
                    records.append(
                        EvaluationRecord(
                            key=series.key,
                            method=method.name,
                            origin=origin,
                            horizon=h + 1,
                            actual=float(actuals[h]),
                            point=float(point[h]),
                            mase_q=float(q_t[h]),
                            crps=float(crps_h[h]),
                            pinball_by_level=scores,
                        )
                    )

    summary = [
        MethodSummary(
            method=name,
            mean_mase=_nanstat(mase_cells[name], np.mean),
            median_mase=_nanstat(mase_cells[name], np.median),
            mean_crps=_nanstat(crps_cells[name], np.mean),
            median_crps=_nanstat(crps_cells[name], np.median),
            runtime_s=runtimes[name],
            mase_excluded=excluded[name],
        )
        for name in names
    ]
    result = BenchmarkResult(records=records, summary=summary, failures=failures)
    result.summary = result.summary_sorted()
    return result


def scores_by_method(
    records: Sequence[EvaluationRecord], metric: str = "crps"
) -> dict[str, dict[tuple, float]]:
    """Pivot records into the per-series score map nemenyi_ranks expects.
    The unit of comparison is one (series, origin) cell, averaged over
    horizons; cells with NaN scores are dropped."""
    cells: dict[str, dict[tuple, list[float]]] = {}
    for r in records:
        value = getattr(r, "mase_q" if metric == "mase" else metric)
        if metric == "mase":
            value = abs(value)
        if math.isnan(value):
            continue
        cells.setdefault(r.method, {}).setdefault((r.key.ident, str(r.origin)), []).append(value)
    return {
        method: {cell: float(np.mean(vals)) for cell, vals in bucket.items()}
        for method, bucket in cells.items()
    }
