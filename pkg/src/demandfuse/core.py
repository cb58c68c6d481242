"""Domain types shared by every stage of the forecasting pipeline.

All types here are immutable value objects: once constructed they are safe to
share between threads and processes.  Construction enforces the invariants the
rest of the code relies on (contiguous monthly index, monotone quantile rows,
non-negative demand), so downstream code never re-validates.

Clamping policy: demand is a count, so negative *forecast* values are clamped
to zero when a forecast type is constructed.  Observed history is never
clamped; a negative observation is a data error and is rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import total_ordering
from typing import Iterable, Sequence

import numpy as np

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


@total_ordering
@dataclass(frozen=True)
class Month:
    """A calendar month (year + month number). The only time axis supported."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> "Month":
        m = _MONTH_RE.match(text.strip())
        if not m:
            raise ValueError(f"expected 'YYYY-MM', got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def __lt__(self, other: "Month") -> bool:
        return (self.year, self.month) < (other.year, other.month)

    def add(self, months: int) -> "Month":
        idx = self.year * 12 + (self.month - 1) + months
        return Month(idx // 12, idx % 12 + 1)

    def diff(self, other: "Month") -> int:
        """Number of months from `other` to `self` (positive if self is later)."""
        return (self.year - other.year) * 12 + (self.month - other.month)

    def range(self, count: int) -> list["Month"]:
        return [self.add(i) for i in range(count)]


@dataclass(frozen=True)
class SeriesKey:
    """Identity of one site x product series, with its hierarchy labels."""

    region: str
    district: str
    site: str
    site_type: str
    product_category: str
    product: str

    def __post_init__(self) -> None:
        for name in ("region", "district", "site", "site_type", "product_category", "product"):
            if not getattr(self, name):
                raise ValueError(f"SeriesKey.{name} must be non-empty")

    @property
    def ident(self) -> tuple[str, str]:
        """The (site, product) pair that must be unique within a dataset."""
        return (self.site, self.product)

    def __str__(self) -> str:
        return f"{self.site}/{self.product}"


def ensure_unique_keys(keys: Iterable[SeriesKey]) -> None:
    """Reject duplicate (site, product) pairs within one dataset."""
    seen: dict[tuple[str, str], SeriesKey] = {}
    for key in keys:
        if key.ident in seen:
            raise ValueError(f"duplicate (site, product) pair {key.ident}")
        seen[key.ident] = key


@dataclass(frozen=True)
class DemandSeries:
    """Monthly demand history for one series.

    values[i] is the demand observed in month start.add(i); the index is
    contiguous by construction (no gaps, no missing months).
    """

    key: SeriesKey
    start: Month
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValueError("DemandSeries requires at least one observation")
        vals = tuple(float(v) for v in self.values)
        for i, v in enumerate(vals):
            if not np.isfinite(v):
                raise ValueError(f"non-finite demand at index {i}")
            if v < 0:
                raise ValueError(f"negative demand {v} at index {i} ({self.start.add(i)})")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> Month:
        return self.start.add(len(self.values) - 1)

    def months(self) -> list[Month]:
        return self.start.range(len(self.values))

    def head(self, n: int) -> "DemandSeries":
        if not 1 <= n <= len(self.values):
            raise ValueError(f"cannot take first {n} of {len(self.values)} observations")
        return DemandSeries(self.key, self.start, self.values[:n])


@dataclass(frozen=True)
class SeriesReport:
    """Validation report for raw monthly observations. Pure data, no verdicts
    beyond `ok`; callers decide what to do with flagged series."""

    length: int
    gap_months: tuple[Month, ...]
    negative_months: tuple[Month, ...]
    all_zero: bool

    @property
    def ok(self) -> bool:
        return not self.gap_months and not self.negative_months


def validate_series(
    series: "DemandSeries | Sequence[tuple[Month, float]]",
) -> SeriesReport:
    """Report gaps, negative values, the all-zero flag and the length.

    Accepts either a constructed DemandSeries (which can no longer contain
    gaps or negatives) or raw (month, value) observations as they come off a
    file, which is where the interesting findings happen.
    """
    if isinstance(series, DemandSeries):
        observations = list(zip(series.months(), series.values))
    else:
        observations = sorted(series, key=lambda mv: mv[0])
    if not observations:
        return SeriesReport(0, (), (), all_zero=False)

    gaps: list[Month] = []
    negatives: list[Month] = []
    prev: Month | None = None
    for month, value in observations:
        if prev is not None:
            expected = prev.add(1)
            while expected < month:
                gaps.append(expected)
                expected = expected.add(1)
        if value < 0:
            negatives.append(month)
        prev = month
    all_zero = all(v == 0 for _, v in observations)
    return SeriesReport(len(observations), tuple(gaps), tuple(negatives), all_zero)


@dataclass(frozen=True)
class QuantileGrid:
    """Strictly increasing quantile levels, all within [0.01, 0.99].

    Duplicate levels are rejected rather than merged; a grid with ties has no
    meaningful quantile function.
    """

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(q) for q in self.levels)
        if len(levels) < 1:
            raise ValueError("QuantileGrid requires at least one level")
        for q in levels:
            if not 0.01 <= q <= 0.99:
                raise ValueError(f"quantile level {q} outside [0.01, 0.99]")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("quantile levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


#: Default grid: dense tails for interval edges plus a 5%-step body.
DEFAULT_GRID = QuantileGrid(
    (0.01, 0.025) + tuple(round(0.05 * k, 2) for k in range(1, 20)) + (0.975, 0.99)
)

#: Full percent grid 0.01 .. 0.99.
PERCENT_GRID = QuantileGrid(tuple(round(k / 100, 2) for k in range(1, 100)))


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuantileForecast:
    """Quantile values per horizon on a fixed grid.

    values has shape [horizons x len(grid)] and each row is non-decreasing
    (a valid quantile function).  Negative entries are clamped to zero at
    construction; non-monotone rows are rejected, not repaired -- repairing
    crossings is the combiner's explicit job.
    """

    key: SeriesKey
    origin: Month
    grid: QuantileGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"values must be 2-D [horizon x levels], got shape {vals.shape}")
        if vals.shape[1] != len(self.grid):
            raise ValueError(
                f"values has {vals.shape[1]} columns but grid has {len(self.grid)} levels"
            )
        if vals.shape[0] < 1:
            raise ValueError("at least one horizon required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite quantile values")
        vals = np.maximum(vals, 0.0)
        if np.any(np.diff(vals, axis=1) < 0):
            raise ValueError("quantile values must be non-decreasing along the grid")
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def horizons(self) -> int:
        return int(self.values.shape[0])

    def row(self, horizon: int) -> np.ndarray:
        """Quantile values for one horizon (1-based)."""
        if not 1 <= horizon <= self.horizons:
            raise ValueError(f"horizon {horizon} outside 1..{self.horizons}")
        return self.values[horizon - 1]

    def grid_mean(self) -> np.ndarray:
        """Uniform average of the quantile values per horizon -- the standard
        grid estimate of the distribution mean."""
        return self.values.mean(axis=1)


class PointSource(str, Enum):
    EXPERT = "expert"
    DEMOGRAPHIC = "demographic"
    MODEL = "model"
    PRE_AVERAGED = "pre-averaged"


@dataclass(frozen=True)
class PointForecast:
    """A point forecast per horizon. Negative values are clamped to zero."""

    key: SeriesKey
    origin: Month
    values: tuple[float, ...]
    source: PointSource = PointSource.MODEL

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValueError("PointForecast requires at least one horizon")
        vals = tuple(max(0.0, float(v)) for v in self.values)
        if any(not np.isfinite(v) for v in vals):
            raise ValueError("non-finite point forecast")
        object.__setattr__(self, "values", vals)
        if isinstance(self.source, str) and not isinstance(self.source, PointSource):
            object.__setattr__(self, "source", PointSource(self.source))

    @property
    def horizons(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class EnsembleForecast:
    """B sampled future paths per horizon; paths has shape [B x horizons]."""

    key: SeriesKey
    origin: Month
    paths: np.ndarray

    def __post_init__(self) -> None:
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 2:
            raise ValueError(f"paths must be 2-D [B x horizon], got shape {paths.shape}")
        if paths.shape[0] < 1:
            raise ValueError("at least one path required")
        if not np.all(np.isfinite(paths)):
            raise ValueError("non-finite path values")
        paths = np.maximum(paths, 0.0)
        object.__setattr__(self, "paths", _readonly(paths))

    @property
    def b(self) -> int:
        return int(self.paths.shape[0])

    @property
    def horizons(self) -> int:
        return int(self.paths.shape[1])


class CombinationVariant(str, Enum):
    WEIGHTED_AVERAGE = "weighted_average"
    BIAS_ADJUSTMENT = "bias_adjustment"


@dataclass(frozen=True)
class HybridSolution:
    """Result of fusing a point forecast with a quantile forecast.

    weights/bias are the optimized combination parameters; adjustment is the
    per-horizon rescaling factor applied after the solve (always 1 for the
    weighted-average variant).  flags record solver fallbacks:

    - "underdetermined_weights": all quantile inputs were zero, uniform
      weights returned;
    - "additive_shift_h<k>": the weighted mean at horizon k was zero, so the
      curve was shifted additively instead of rescaled.
    """

    weights: tuple[float, ...]
    bias: float
    adjustment: tuple[float, ...]
    adjusted_quantiles: QuantileForecast
    objective: float
    variant: CombinationVariant
    mean_aligned: tuple[bool, ...] = ()
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.variant, str) and not isinstance(self.variant, CombinationVariant):
            object.__setattr__(self, "variant", CombinationVariant(self.variant))
        w = np.asarray(self.weights, dtype=float)
        if self.objective < -1e-12:
            raise ValueError(f"objective must be >= 0, got {self.objective}")
        if self.variant is CombinationVariant.WEIGHTED_AVERAGE:
            if np.any(w < -1e-9) or np.any(w > 1 + 1e-9):
                raise ValueError("weighted_average weights must lie in [0, 1]")
            if abs(float(w.sum()) - 1.0) > 1e-9:
                raise ValueError(f"weighted_average weights must sum to 1, got {w.sum()!r}")
            if self.bias != 0.0:
                raise ValueError("weighted_average variant carries no bias")
            if any(a != 1.0 for a in self.adjustment):
                raise ValueError("weighted_average variant carries no adjustment")
        else:
            if np.any(w < -1e-9) or np.any(w > 5 + 1e-9):
                raise ValueError("bias_adjustment weights must lie in [0, 5]")

    def to_dict(self) -> dict:
        """JSON-ready audit payload."""
        return {
            "variant": self.variant.value,
            "weights": list(self.weights),
            "bias": self.bias,
            "adjustment": list(self.adjustment),
            "objective": self.objective,
            "mean_aligned": list(self.mean_aligned),
            "flags": list(self.flags),
            "quantiles": [list(map(float, row)) for row in self.adjusted_quantiles.values],
            "levels": list(self.adjusted_quantiles.grid.levels),
        }


@dataclass(frozen=True)
class DistributionCurve:
    """Piecewise-linear distribution curve: (probability, value) knots with
    strictly increasing probabilities and non-decreasing values."""

    points: tuple[tuple[float, float], ...]
    clamped_count: int = 0

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("DistributionCurve requires at least two points")
        xs = [p for p, _ in self.points]
        ys = [v for _, v in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("curve probabilities must be strictly increasing")
        if any(b < a - 1e-12 for a, b in zip(ys, ys[1:])):
            raise ValueError("curve values must be non-decreasing")

    def probabilities(self) -> tuple[float, ...]:
        return tuple(p for p, _ in self.points)

    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.points)
