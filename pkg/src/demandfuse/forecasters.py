"""Base point-forecast methods.

Four history-driven methods (seasonal naive, moving average, simple
exponential smoothing, Croston-SBA) plus the demographic method that builds a
forecast from population and family-planning indicators instead of history.
Multi-step forecasts are produced recursively: each one-step forecast is
appended to the history before forecasting the next step.

Every method also exposes in-sample fitted values (one-step predictions over
the training span) through its Forecaster wrapper; the residual bootstrap is
built on those.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DemandSeries, Month, PointForecast, PointSource, SeriesKey

#: Standard census age buckets for women of reproductive age (15-49).
AGE_GROUPS = ("15-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49")

SES_ALPHA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))  # 0.05 .. 0.95


@dataclass(frozen=True)
class Forecaster:
    """A named point-forecast method.

    forecast(values, horizon) returns the point forecasts for the next
    `horizon` months.  fitted(values) returns in-sample one-step predictions
    aligned with the input (NaN where the method has no prediction yet), or
    None for methods without a meaningful in-sample path.
    """

    name: str
    forecast_fn: Callable[[np.ndarray, int], np.ndarray]
    fitted_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def forecast(self, series: DemandSeries, horizon: int) -> PointForecast:
        values = self.forecast_fn(np.asarray(series.values, dtype=float), horizon)
        return PointForecast(series.key, series.end, tuple(values), PointSource.MODEL)

    def fitted(self, series: DemandSeries) -> np.ndarray:
        if self.fitted_fn is None:
            raise ValueError(f"{self.name} provides point forecasts only; no in-sample path")
        return self.fitted_fn(np.asarray(series.values, dtype=float))


def _require_horizon(horizon: int) -> None:
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")


# --- seasonal naive ---------------------------------------------------------


def _snaive_values(values: np.ndarray, horizon: int, m: int) -> np.ndarray:
    if len(values) < m:
        raise ValueError(f"seasonal naive needs at least {m} observations, got {len(values)}")
    history = list(values)
    out = []
    for _ in range(horizon):
        out.append(history[-m])
        history.append(history[-m])
    return np.asarray(out)


def _snaive_fitted(values: np.ndarray, m: int) -> np.ndarray:
    fitted = np.full(len(values), np.nan)
    if len(values) > m:
        fitted[m:] = values[:-m]
    return fitted


def snaive(series: DemandSeries, horizon: int, m: int = 12) -> PointForecast:
    """Repeat the observation from one season earlier; forecasts are reused
    recursively once the horizon exceeds the season length."""
    _require_horizon(horizon)
    values = _snaive_values(np.asarray(series.values, dtype=float), horizon, m)
    return PointForecast(series.key, series.end, tuple(values), PointSource.MODEL)


def seasonal_naive(m: int = 12) -> Forecaster:
    return Forecaster(
        name=f"snaive{m}" if m != 12 else "snaive",
        forecast_fn=lambda v, h: _snaive_values(v, h, m),
        fitted_fn=lambda v: _snaive_fitted(v, m),
    )


# --- moving average ---------------------------------------------------------


def _ma_values(values: np.ndarray, horizon: int, window: int) -> np.ndarray:
    if len(values) < window:
        raise ValueError(f"moving average needs at least {window} observations, got {len(values)}")
    history = list(values)
    out = []
    for _ in range(horizon):
        nxt = float(np.mean(history[-window:]))
        out.append(nxt)
        history.append(nxt)
    return np.asarray(out)


def _ma_fitted(values: np.ndarray, window: int) -> np.ndarray:
    fitted = np.full(len(values), np.nan)
    for t in range(window, len(values)):
        fitted[t] = float(np.mean(values[t - window : t]))
    return fitted


def moving_average(series: DemandSeries, horizon: int, window: int = 3) -> PointForecast:
    """Mean of the last `window` observations, applied recursively across the
    horizon.  The three-month window is the operational default."""
    _require_horizon(horizon)
    values = _ma_values(np.asarray(series.values, dtype=float), horizon, window)
    return PointForecast(series.key, series.end, tuple(values), PointSource.MODEL)


def moving_average_forecaster(window: int = 3) -> Forecaster:
    return Forecaster(
        name=f"ma{window}",
        forecast_fn=lambda v, h: _ma_values(v, h, window),
        fitted_fn=lambda v: _ma_fitted(v, window),
    )


# --- simple exponential smoothing -------------------------------------------


def _ses_levels(values: np.ndarray, alpha: float) -> np.ndarray:
    # levels[t] is the level after observing values[t]; initialized at the
    # first observation.
    levels = np.empty(len(values))
    levels[0] = values[0]
    for t in range(1, len(values)):
        levels[t] = alpha * values[t] + (1 - alpha) * levels[t - 1]
    return levels


def fit_ses_alpha(values: np.ndarray) -> float:
    """Pick alpha from a fixed grid by in-sample one-step SSE (lowest alpha
    wins ties, so runs are reproducible)."""
    if len(values) < 2:
        raise ValueError("SES needs at least 2 observations")
    best_alpha, best_sse = None, np.inf
    for alpha in SES_ALPHA_GRID:
        levels = _ses_levels(values, alpha)
        sse = float(np.sum((values[1:] - levels[:-1]) ** 2))
        if sse < best_sse - 1e-12:
            best_alpha, best_sse = alpha, sse
    return float(best_alpha)


def _ses_values(values: np.ndarray, horizon: int, alpha: float | None) -> np.ndarray:
    if len(values) < 2:
        raise ValueError("SES needs at least 2 observations")
    if alpha is None:
        alpha = fit_ses_alpha(values)
    elif not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    level = _ses_levels(values, alpha)[-1]
    return np.full(horizon, level)


def _ses_fitted(values: np.ndarray, alpha: float | None) -> np.ndarray:
    if len(values) < 2:
        raise ValueError("SES needs at least 2 observations")
    if alpha is None:
        alpha = fit_ses_alpha(values)
    levels = _ses_levels(values, alpha)
    fitted = np.full(len(values), np.nan)
    fitted[1:] = levels[:-1]
    return fitted


def ses(series: DemandSeries, horizon: int, alpha: float | None = None) -> PointForecast:
    """Simple exponential smoothing with a flat multi-step forecast at the
    final level.  alpha=None fits it by grid search."""
    _require_horizon(horizon)
    values = _ses_values(np.asarray(series.values, dtype=float), horizon, alpha)
    return PointForecast(series.key, series.end, tuple(values), PointSource.MODEL)


def ses_forecaster(alpha: float | None = None) -> Forecaster:
    return Forecaster(
        name="ses" if alpha is None else f"ses{alpha}",
        forecast_fn=lambda v, h: _ses_values(v, h, alpha),
        fitted_fn=lambda v: _ses_fitted(v, alpha),
    )


# --- Croston / SBA ----------------------------------------------------------


@dataclass(frozen=True)
class SbaState:
    """Smoothed demand-size and inter-demand-interval estimates."""

    demand_size_estimate: float
    interval_estimate: float
    alpha: float

    def __post_init__(self) -> None:
        if self.interval_estimate < 1:
            raise ValueError(f"interval estimate must be >= 1, got {self.interval_estimate}")
        if self.demand_size_estimate < 0:
            raise ValueError("demand size estimate must be >= 0")
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")


def _croston_state(
    values: np.ndarray, alpha: float, init: tuple[float, float] | None
) -> SbaState | None:
    nonzero = np.nonzero(values > 0)[0]
    if len(nonzero) == 0:
        return None
    first = int(nonzero[0])
    if init is None:
        z = float(values[first])
        p = float(first + 1)  # 1-based position of the first demand
    else:
        z, p = float(init[0]), float(init[1])
    since = 1
    for t in range(first + 1, len(values)):
        if values[t] > 0:
            z = alpha * float(values[t]) + (1 - alpha) * z
            p = alpha * since + (1 - alpha) * p
            since = 1
        else:
            since += 1
    return SbaState(z, p, alpha)


def croston_sba(
    series: DemandSeries,
    horizon: int,
    alpha: float = 0.1,
    init: tuple[float, float] | None = None,
) -> PointForecast:
    """Croston's intermittent-demand method with the (1 - alpha/2) bias
    correction: separate smoothing of demand sizes and inter-demand
    intervals, updated only in periods with demand; flat multi-step forecast.

    init overrides the default initialization (first nonzero demand, its
    1-based position).  All-zero history yields a zero forecast with a
    warning rather than an error.
    """
    _require_horizon(horizon)
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    state = _croston_state(np.asarray(series.values, dtype=float), alpha, init)
    if state is None:
        warnings.warn(f"all-zero history for {series.key}; forecasting 0", stacklevel=2)
        rate = 0.0
    else:
        rate = (1 - alpha / 2) * state.demand_size_estimate / state.interval_estimate
    return PointForecast(series.key, series.end, (rate,) * horizon, PointSource.MODEL)


def croston_sba_forecaster(alpha: float = 0.1) -> Forecaster:
    def _values(v: np.ndarray, h: int) -> np.ndarray:
        state = _croston_state(v, alpha, None)
        rate = 0.0 if state is None else (
            (1 - alpha / 2) * state.demand_size_estimate / state.interval_estimate
        )
        return np.full(h, rate)

    return Forecaster(name="croston_sba", forecast_fn=_values, fitted_fn=None)


# --- demographic method -----------------------------------------------------


@dataclass(frozen=True)
class DemographicInputs:
    """Family-planning indicators used to build demand from population data.

    women_population maps site -> age group -> headcount; mcpr is the modern
    contraceptive prevalence rate per age group; method_mix is the share of
    each product category; cyp the couple-years-of-protection factor per
    product; brand_mix the within-category share of each product;
    source_share the fraction obtained from the supplying channel;
    monthly_weights distributes an annual total over 12 calendar months.
    """

    women_population: dict[str, dict[str, float]]
    mcpr: dict[str, float]
    method_mix: dict[str, float]
    cyp: dict[str, float]
    brand_mix: dict[str, float]
    source_share: float
    monthly_weights: tuple[float, ...] = field(default=(1.0 / 12,) * 12)

    def __post_init__(self) -> None:
        for group, rate in self.mcpr.items():
            if not 0 <= rate <= 1:
                raise ValueError(f"mcpr[{group!r}] must be in [0, 1], got {rate}")
        for name, share in {**self.method_mix, **self.brand_mix}.items():
            if not 0 <= share <= 1:
                raise ValueError(f"share {name!r} must be in [0, 1], got {share}")
        if not 0 <= self.source_share <= 1:
            raise ValueError(f"source_share must be in [0, 1], got {self.source_share}")
        if sum(self.method_mix.values()) > 1 + 1e-9:
            raise ValueError("method_mix shares must sum to at most 1")
        for product, factor in self.cyp.items():
            if factor <= 0:
                raise ValueError(f"cyp[{product!r}] must be > 0, got {factor}")
        weights = tuple(float(w) for w in self.monthly_weights)
        if len(weights) != 12:
            raise ValueError(f"monthly_weights must have 12 entries, got {len(weights)}")
        if any(w < 0 or w > 1 for w in weights):
            raise ValueError("monthly_weights must lie in [0, 1]")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"monthly_weights must sum to 1, got {sum(weights)}")
        object.__setattr__(self, "monthly_weights", weights)

    @classmethod
    def from_dict(cls, raw: dict) -> "DemographicInputs":
        return cls(
            women_population={s: dict(g) for s, g in raw["women_population"].items()},
            mcpr=dict(raw["mcpr"]),
            method_mix=dict(raw["method_mix"]),
            cyp=dict(raw["cyp"]),
            brand_mix=dict(raw["brand_mix"]),
            source_share=float(raw["source_share"]),
            monthly_weights=tuple(raw.get("monthly_weights", (1.0 / 12,) * 12)),
        )


def demographic_monthly_estimate(
    inputs: DemographicInputs, key: SeriesKey, month: Month
) -> float:
    """Monthly demand estimate for one product at one site:

        (sum over age groups of mcpr * women population)
          * method mix * cyp * brand mix * source share * monthly weight

    Raises if any factor is missing, naming the factor.
    """
    population = inputs.women_population.get(key.site)
    if population is None:
        raise ValueError(f"missing factor women_population for site {key.site!r}")
    reach = 0.0
    for group, count in population.items():
        rate = inputs.mcpr.get(group)
        if rate is None:
            raise ValueError(f"missing factor mcpr for age group {group!r}")
        reach += rate * count
    mix = inputs.method_mix.get(key.product_category)
    if mix is None:
        raise ValueError(f"missing factor method_mix for category {key.product_category!r}")
    cyp = inputs.cyp.get(key.product)
    if cyp is None:
        raise ValueError(f"missing factor cyp for product {key.product!r}")
    brand = inputs.brand_mix.get(key.product)
    if brand is None:
        raise ValueError(f"missing factor brand_mix for product {key.product!r}")
    weight = inputs.monthly_weights[month.month - 1]
    return reach * mix * cyp * brand * inputs.source_share * weight


def demographic_forecast(
    inputs: DemographicInputs, key: SeriesKey, months: Sequence[Month]
) -> PointForecast:
    """Point forecast for the given months from demographic factors alone."""
    if not months:
        raise ValueError("at least one month required")
    values = tuple(demographic_monthly_estimate(inputs, key, m) for m in months)
    origin = months[0].add(-1)
    return PointForecast(key, origin, values, PointSource.DEMOGRAPHIC)
