"""Method registry: turns config-level method specs into runnable methods.

A method spec is either a bare name ("snaive", "moving_average", "ses",
"croston_sba", "demographic") or a dict with a "name" and parameters.  Two
composite specs exist:

    {"name": "pool", "members": [...specs...]}        equal-weight ensemble
    {"name": "hybrid", "prob": spec, "point": spec,   point+probabilistic
     "variant": "weighted_average"|"bias_adjustment"} fusion

Every method produces, for one (training series, horizon) request: a point
forecast, and -- when the method is probabilistic -- an ensemble of future
paths plus its quantile forecast.  Randomness is derived from the master
seed, the series key, the method label and the origin, so runs are
reproducible path-for-path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bootstrap import derive_seed, fit_residuals, simulate_paths, to_quantiles
from .combine import MeanDefinition, optimize_weights_A, optimize_weights_B, pre_average
from .core import (
    CombinationVariant,
    DemandSeries,
    EnsembleForecast,
    HybridSolution,
    PointForecast,
    PointSource,
    QuantileForecast,
    QuantileGrid,
)
from .forecasters import (
    DemographicInputs,
    Forecaster,
    croston_sba_forecaster,
    demographic_forecast,
    moving_average_forecaster,
    seasonal_naive,
    ses_forecaster,
)

MethodSpec = "str | dict"


@dataclass
class MethodProduct:
    point: PointForecast
    ensemble: EnsembleForecast | None = None
    quantiles: QuantileForecast | None = None
    solution: HybridSolution | None = None


class Method:
    """Base: a named forecasting method bound to its parameters."""

    name: str
    probabilistic: bool

    def run(
        self, train: DemandSeries, horizon: int, grid: QuantileGrid, b: int, seed: int
    ) -> MethodProduct:
        raise NotImplementedError


class BaseMethod(Method):
    def __init__(self, forecaster: Forecaster, label: str | None = None):
        self.forecaster = forecaster
        self.name = label or forecaster.name
        self.probabilistic = forecaster.fitted_fn is not None

    def run(self, train, horizon, grid, b, seed):
        point = self.forecaster.forecast(train, horizon)
        if not self.probabilistic:
            return MethodProduct(point=point)
        pool = fit_residuals(train, self.forecaster)
        stream = derive_seed(seed, train.key.ident, self.name, train.end)
        ensemble = simulate_paths(point, pool, b, stream)
        return MethodProduct(point=point, ensemble=ensemble, quantiles=to_quantiles(ensemble, grid))


class DemographicMethod(Method):
    def __init__(self, inputs: DemographicInputs, label: str = "demographic"):
        self.inputs = inputs
        self.name = label
        self.probabilistic = False

    def run(self, train, horizon, grid, b, seed):
        months = train.end.add(1).range(horizon)
        point = demographic_forecast(self.inputs, train.key, months)
        return MethodProduct(point=point)


class PooledMethod(Method):
    """Equal-weight linear combination of probabilistic members."""

    def __init__(self, members: Sequence[Method], label: str | None = None):
        if not members:
            raise ValueError("pool needs at least one member")
        for m in members:
            if not m.probabilistic:
                raise ValueError(f"pool member {m.name!r} is not probabilistic")
        self.members = list(members)
        self.name = label or "pool(" + "+".join(m.name for m in members) + ")"
        self.probabilistic = True

    def run(self, train, horizon, grid, b, seed):
        from .combine import pool_equal

        products = [m.run(train, horizon, grid, b, seed) for m in self.members]
        pooled = pool_equal([p.ensemble for p in products])
        point_values = np.mean([p.point.values for p in products], axis=0)
        point = PointForecast(train.key, train.end, tuple(point_values), PointSource.MODEL)
        return MethodProduct(
            point=point, ensemble=pooled, quantiles=to_quantiles(pooled, grid)
        )


class HybridMethod(Method):
    """Fuse a probabilistic member with a point member's forecast."""

    def __init__(
        self,
        prob_method: Method,
        point_method: Method,
        variant: CombinationVariant | str = CombinationVariant.WEIGHTED_AVERAGE,
        pre_average_point: bool = True,
        mean_definition: MeanDefinition | str = MeanDefinition.QUANTILE_AVERAGE,
        label: str | None = None,
    ):
        if not prob_method.probabilistic:
            raise ValueError(f"hybrid prob member {prob_method.name!r} is not probabilistic")
        self.prob_method = prob_method
        self.point_method = point_method
        self.variant = CombinationVariant(variant)
        self.pre_average_point = pre_average_point
        self.mean_definition = MeanDefinition(mean_definition)
        self.name = label or f"hybrid_{self.variant.value}({prob_method.name}+{point_method.name})"
        self.probabilistic = True

    def run(self, train, horizon, grid, b, seed):
        prob_product = self.prob_method.run(train, horizon, grid, b, seed)
        point_product = self.point_method.run(train, horizon, grid, b, seed)
        expert = point_product.point
        if self.pre_average_point:
            expert = pre_average(expert, prob_product.quantiles)
        if self.variant is CombinationVariant.WEIGHTED_AVERAGE:
            solution = optimize_weights_A(prob_product.quantiles, expert, self.mean_definition)
        else:
            solution = optimize_weights_B(prob_product.quantiles, expert, self.mean_definition)
        final = solution.adjusted_quantiles
        point = PointForecast(
            train.key, train.end, tuple(final.grid_mean()), PointSource.MODEL
        )
        return MethodProduct(point=point, quantiles=final, solution=solution)


def build_method(spec: "str | dict", demographics: DemographicInputs | None = None) -> Method:
    """Construct a Method from a config spec; raises ValueError for unknown
    names or missing parameters (used for config validation up front)."""
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise ValueError(f"method spec must be a name or a dict with 'name', got {spec!r}")
    name = spec["name"]
    label = spec.get("label")

    if name in ("snaive", "seasonal_naive"):
        return BaseMethod(seasonal_naive(int(spec.get("m", 12))), label)
    if name in ("moving_average", "ma"):
        return BaseMethod(moving_average_forecaster(int(spec.get("window", 3))), label)
    if name == "ses":
        alpha = spec.get("alpha")
        return BaseMethod(ses_forecaster(None if alpha is None else float(alpha)), label)
    if name in ("croston_sba", "sba"):
        return BaseMethod(croston_sba_forecaster(float(spec.get("alpha", 0.1))), label)
    if name == "demographic":
        if demographics is None:
            raise ValueError("method 'demographic' requires a demographics sidecar file")
        return DemographicMethod(demographics, label or "demographic")
    if name == "pool":
        members = spec.get("members")
        if not members:
            raise ValueError("method 'pool' requires a non-empty 'members' list")
        return PooledMethod([build_method(m, demographics) for m in members], label)
    if name == "hybrid":
        if "prob" not in spec or "point" not in spec:
            raise ValueError("method 'hybrid' requires 'prob' and 'point' member specs")
        return HybridMethod(
            prob_method=build_method(spec["prob"], demographics),
            point_method=build_method(spec["point"], demographics),
            variant=spec.get("variant", "weighted_average"),
            pre_average_point=bool(spec.get("pre_average", True)),
            mean_definition=spec.get("mean_definition", "quantile_average"),
            label=label,
        )
    raise ValueError(f"unknown method {name!r}")
