"""Residual bootstrap: turn any point forecaster into a probabilistic one.

The error pool is the set of one-step in-sample residuals e_t = y_t - yhat_t
over the training span.  Future paths are built by drawing residuals i.i.d.
uniformly with replacement (errors are assumed exchangeable across horizons;
no block structure) and adding them to the base point forecast.  Simulated
demand below zero is clamped to zero.

Randomness is fully determined by an integer seed; derive_seed maps a master
seed plus arbitrary labels (series key, method, origin) to a per-stream seed
so parallel runs stay reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import DemandSeries, EnsembleForecast, PointForecast, QuantileForecast, QuantileGrid
from .forecasters import Forecaster

DEFAULT_PATHS = 1000


@dataclass(frozen=True)
class ResidualPool:
    """One-step in-sample forecast errors for one (series, method) pair."""

    residuals: tuple[float, ...]
    method: str

    def __post_init__(self) -> None:
        if len(self.residuals) == 0:
            raise ValueError("residual pool must be non-empty")
        if not all(np.isfinite(self.residuals)):
            raise ValueError("non-finite residual")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.residuals, dtype=float)


def derive_seed(master: int, *labels: object) -> int:
    """Stable per-stream seed from a master seed and any hashable labels."""
    digest = hashlib.sha256()
    digest.update(str(int(master)).encode())
    for label in labels:
        digest.update(b"\x1f")
        digest.update(str(label).encode())
    return int.from_bytes(digest.digest()[:8], "big")


def fit_residuals(series: DemandSeries, forecaster: Forecaster) -> ResidualPool:
    """Pool of one-step in-sample residuals of `forecaster` on `series`."""
    fitted = forecaster.fitted(series)
    actual = np.asarray(series.values, dtype=float)
    mask = np.isfinite(fitted)
    residuals = actual[mask] - fitted[mask]
    if len(residuals) < 2:
        raise ValueError(
            f"{forecaster.name} leaves {len(residuals)} usable residuals on a "
            f"{len(series)}-month series; need at least 2"
        )
    return ResidualPool(tuple(float(r) for r in residuals), forecaster.name)


def simulate_paths(
    base: PointForecast, pool: ResidualPool, b: int = DEFAULT_PATHS, seed: int = 0
) -> EnsembleForecast:
    """B future paths: path[i, h] = max(0, base[h] + sampled residual)."""
    if b < 1:
        raise ValueError(f"need at least one path, got {b}")
    rng = np.random.default_rng(seed)
    errors = rng.choice(pool.as_array(), size=(b, base.horizons), replace=True)
    paths = np.maximum(np.asarray(base.values) + errors, 0.0)
    return EnsembleForecast(base.key, base.origin, paths)


def to_quantiles(ensemble: EnsembleForecast, grid: QuantileGrid) -> QuantileForecast:
    """Empirical quantiles of the ensemble at the grid levels, per horizon.

    Uses linear interpolation between order statistics (the "type 7"
    estimator), so e.g. the median of paths {0, 10} is 5.
    """
    if ensemble.b < 2:
        raise ValueError("need at least 2 paths to estimate quantiles")
    values = np.quantile(ensemble.paths, grid.as_array(), axis=0, method="linear").T
    return QuantileForecast(ensemble.key, ensemble.origin, grid, values)
