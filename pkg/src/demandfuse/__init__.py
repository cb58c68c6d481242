"""demandfuse: probabilistic demand forecasting with expert point-forecast
fusion, built for monthly site x product supply-chain series."""

from .core import (
    CombinationVariant,
    DEFAULT_GRID,
    DemandSeries,
    DistributionCurve,
    EnsembleForecast,
    HybridSolution,
    Month,
    PERCENT_GRID,
    PointForecast,
    PointSource,
    QuantileForecast,
    QuantileGrid,
    SeriesKey,
    validate_series,
)
from .bootstrap import ResidualPool, derive_seed, fit_residuals, simulate_paths, to_quantiles
from .combine import (
    MeanDefinition,
    interpolate,
    optimize_weights_A,
    optimize_weights_B,
    pinball,
    pool_equal,
    pre_average,
)
from .evaluate import (
    CvPlan,
    EvaluationRecord,
    crps_ensemble,
    crps_quantiles,
    mase,
    nemenyi_ranks,
    plan_cv,
    quantile_score,
    run_benchmark,
)
from .forecasters import (
    DemographicInputs,
    croston_sba,
    demographic_forecast,
    moving_average,
    ses,
    snaive,
)
from .ingest import CsvSchema, FilterPolicy, aggregate, filter_series, load_csv, write_csv

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
