"""Forecast combination.

Two families live here:

* pool_equal -- equal-weight linear pooling of ensembles (concatenating
  member paths mixes the distributions with equal weight);

* the hybrid point/probabilistic fusion: per-quantile weights (and, in the
  bias-adjustment variant, a shared bias term) are chosen by linear
  programming so that the weighted quantile curve treats the point forecast
  as the value to hit.  The objective for one horizon t with quantile levels
  q_1..q_n and quantile values F_t is

      n * |P_t - ybar_t|  +  sum_i pinball(q_i, P_t, w_i * F_t_i + b)

  where ybar_t is the mean of the weighted quantile forecast.  Both terms are
  linearized exactly (an absolute-value variable per horizon, a hinge
  variable per horizon/level) and the LP is solved jointly across horizons.

The mean of the weighted curve can be computed two ways, selected by
`mean_definition`:

* "quantile_average" (default): ybar_t = (1/n) * sum_i (w_i F_t_i + b).
  Note that under the sum-to-one weight constraint this divides a convex
  combination by n again; it is kept as the default deliberately, with
  "mixture" as the escape hatch.
* "mixture": ybar_t = sum_i w_i F_t_i + b, treating the weights as mixture
  weights.

Weighted-average variant: 0 <= w <= 1, sum w = 1, no bias, no rescaling.
Bias-adjustment variant: 0 <= w <= 5, free bias b, then a per-horizon factor
adj_t = P_t / mean(w* F_t) rescales the weighted curve so its grid average
lands exactly on the point forecast; a horizon whose weighted mean is zero is
shifted additively instead and flagged.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

from .core import (
    CombinationVariant,
    DistributionCurve,
    EnsembleForecast,
    HybridSolution,
    PointForecast,
    PointSource,
    QuantileForecast,
)
from .lp import LpProblem, solve_lp

#: Secondary objective coefficient that makes the returned vertex unique.
TIE_BREAK_EPS = 1e-9

#: Bias bound factor for the bias-adjustment variant: |b| <= factor * max(F).
BIAS_BOUND_FACTOR = 10.0

WEIGHT_BOUND_B = 5.0

_ALIGN_TOL = 1e-9


class MeanDefinition(str, Enum):
    QUANTILE_AVERAGE = "quantile_average"
    MIXTURE = "mixture"


def pinball(q: float, actual: float, predicted: float) -> float:
    """Pinball (quantile) loss: (y - yhat) * (q - 1[y < yhat]).

    Non-negative, and zero exactly when actual == predicted.
    """
    if not 0 < q < 1:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    indicator = 1.0 if actual < predicted else 0.0
    return (actual - predicted) * (q - indicator)


def _pinball_matrix(levels: np.ndarray, actual: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    diff = actual[:, None] - predicted
    return diff * (levels[None, :] - (diff < 0))


def pool_equal(ensembles: Sequence[EnsembleForecast]) -> EnsembleForecast:
    """Equal-weight mixture of ensembles, formed by concatenating paths."""
    if not ensembles:
        raise ValueError("pool_equal requires at least one ensemble")
    first = ensembles[0]
    for e in ensembles[1:]:
        if e.key != first.key or e.origin != first.origin:
            raise ValueError(f"cannot pool ensembles for {e.key}@{e.origin} with {first.key}@{first.origin}")
        if e.horizons != first.horizons or e.b != first.b:
            raise ValueError(
                f"shape mismatch: {e.b}x{e.horizons} paths vs {first.b}x{first.horizons}"
            )
    if len(ensembles) == 1:
        return first
    return EnsembleForecast(first.key, first.origin, np.vstack([e.paths for e in ensembles]))


def pre_average(expert: PointForecast, prob: QuantileForecast) -> PointForecast:
    """Average the expert's point forecast with the probabilistic mean
    (uniform average over the quantile grid), per horizon.  The result is the
    central tendency handed to the weight optimizer."""
    if expert.horizons != prob.horizons:
        raise ValueError(f"horizon mismatch: point has {expert.horizons}, quantiles {prob.horizons}")
    if expert.key != prob.key:
        raise ValueError(f"key mismatch: {expert.key} vs {prob.key}")
    mean = prob.grid_mean()
    values = tuple((float(p) + float(m)) / 2 for p, m in zip(expert.values, mean))
    return PointForecast(expert.key, expert.origin, values, PointSource.PRE_AVERAGED)


def combination_loss(
    weights: np.ndarray,
    bias: float,
    quantile_values: np.ndarray,
    point: np.ndarray,
    levels: np.ndarray,
    mean_definition: MeanDefinition = MeanDefinition.QUANTILE_AVERAGE,
) -> float:
    """Total combination loss at the given weights/bias (the LP objective,
    without the tie-break term).  Shapes: quantile_values [T x n], point [T],
    levels [n], weights [n]."""
    w = np.asarray(weights, dtype=float)
    f = np.asarray(quantile_values, dtype=float)
    p = np.asarray(point, dtype=float)
    q = np.asarray(levels, dtype=float)
    n = f.shape[1]
    yhat = w[None, :] * f + bias
    if MeanDefinition(mean_definition) is MeanDefinition.QUANTILE_AVERAGE:
        ybar = yhat.mean(axis=1)
    else:
        ybar = (w[None, :] * f).sum(axis=1) + bias
    abs_term = n * np.abs(p - ybar)
    hinge = np.maximum(_pinball_matrix(q, p, yhat), 0.0)
    return float(abs_term.sum() + hinge.sum())


def _check_aligned(prob: QuantileForecast, point: PointForecast) -> None:
    if prob.key != point.key:
        raise ValueError(f"key mismatch: {prob.key} vs {point.key}")
    if prob.horizons != point.horizons:
        raise ValueError(
            f"horizon mismatch: quantiles have {prob.horizons}, point has {point.horizons}"
        )


def _build_problem(
    f: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    mean_definition: MeanDefinition,
    include_bias: bool,
    weight_bound: float,
    bias_bound: float = 0.0,
    sum_to_one: bool = False,
) -> LpProblem:
    """Assemble the LP over variables [w_1..w_n, (b,), u_1..u_T, v_11..v_Tn].

    u_t >= +-(P_t - ybar_t) carries the absolute term (cost n each);
    v_ti >= q_i(P_t - yhat_ti), v_ti >= (q_i - 1)(P_t - yhat_ti), v_ti >= 0
    carry the pinball terms (cost 1 each).
    """
    t_count, n = f.shape
    nb = 1 if include_bias else 0
    n_vars = n + nb + t_count + t_count * n
    iu = n + nb  # first u index
    iv = iu + t_count  # first v index

    c = np.zeros(n_vars)
    c[:n] = TIE_BREAK_EPS * np.arange(1, n + 1)
    c[iu : iu + t_count] = n
    c[iv:] = 1.0

    alpha = 1.0 / n if mean_definition is MeanDefinition.QUANTILE_AVERAGE else 1.0
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    for t in range(t_count):
        # u_t >= P_t - ybar_t  and  u_t >= ybar_t - P_t
        for sign in (+1.0, -1.0):
            row = np.zeros(n_vars)
            row[:n] = -sign * alpha * f[t]
            if include_bias:
                row[n] = -sign
            row[iu + t] = -1.0
            rows.append(row)
            rhs.append(-sign * p[t])
        for i in range(n):
            for slope in (q[i], q[i] - 1.0):
                # v_ti >= slope * (P_t - yhat_ti)
                row = np.zeros(n_vars)
                row[i] = -slope * f[t, i]
                if include_bias:
                    row[n] = -slope
                row[iv + t * n + i] = -1.0
                rows.append(row)
                rhs.append(-slope * p[t])

    bounds: list[tuple[float, float | None]] = [(0.0, weight_bound)] * n
    if include_bias:
        bounds.append((-bias_bound, bias_bound))
    bounds.extend([(0.0, None)] * (t_count + t_count * n))

    if sum_to_one:
        a_eq = np.zeros((1, n_vars))
        a_eq[0, :n] = 1.0
        b_eq = np.array([1.0])
    else:
        a_eq = np.zeros((0, n_vars))
        b_eq = np.zeros(0)

    return LpProblem(
        c=c,
        a_ub=np.array(rows),
        b_ub=np.array(rhs),
        a_eq=a_eq,
        b_eq=b_eq,
        bounds=tuple(bounds),
    )


def _finalize(
    prob: QuantileForecast,
    point: PointForecast,
    weights: np.ndarray,
    bias: float,
    adjustment: np.ndarray,
    final: np.ndarray,
    variant: CombinationVariant,
    mean_definition: MeanDefinition,
    flags: list[str],
) -> HybridSolution:
    # Rearrangement: repair quantile crossing by sorting within each horizon.
    final = np.sort(np.maximum(final, 0.0), axis=1)
    adjusted = QuantileForecast(prob.key, prob.origin, prob.grid, final)
    p = np.asarray(point.values)
    aligned = tuple(
        bool(abs(row.mean() - pt) <= _ALIGN_TOL * max(1.0, pt))
        for row, pt in zip(final, p)
    )
    objective = combination_loss(
        weights, bias, prob.values, p, prob.grid.as_array(), mean_definition
    )
    return HybridSolution(
        weights=tuple(float(w) for w in weights),
        bias=float(bias),
        adjustment=tuple(float(a) for a in adjustment),
        adjusted_quantiles=adjusted,
        objective=objective,
        variant=variant,
        mean_aligned=aligned,
        flags=tuple(flags),
    )


def optimize_weights_A(
    prob: QuantileForecast,
    point: PointForecast,
    mean_definition: MeanDefinition | str = MeanDefinition.QUANTILE_AVERAGE,
) -> HybridSolution:
    """Weighted-average fusion: weights on the simplex (0 <= w <= 1,
    sum w = 1), no bias, no rescaling.  The point forecast is expected to be
    pre-averaged with the probabilistic mean (see pre_average)."""
    _check_aligned(prob, point)
    mean_definition = MeanDefinition(mean_definition)
    f = np.asarray(prob.values)
    p = np.asarray(point.values)
    q = prob.grid.as_array()
    n = f.shape[1]

    if np.all(f == 0):
        weights = np.full(n, 1.0 / n)
        return _finalize(
            prob, point, weights, 0.0, np.ones(len(p)), weights[None, :] * f,
            CombinationVariant.WEIGHTED_AVERAGE, mean_definition, ["underdetermined_weights"],
        )

    problem = _build_problem(
        f, p, q, mean_definition, include_bias=False, weight_bound=1.0, sum_to_one=True
    )
    solution = solve_lp(problem)
    weights = np.clip(solution.x[:n], 0.0, 1.0)
    weights = weights / weights.sum()  # snap the simplex constraint exactly
    final = weights[None, :] * f
    return _finalize(
        prob, point, weights, 0.0, np.ones(len(p)), final,
        CombinationVariant.WEIGHTED_AVERAGE, mean_definition, [],
    )


def optimize_weights_B(
    prob: QuantileForecast,
    point: PointForecast,
    mean_definition: MeanDefinition | str = MeanDefinition.QUANTILE_AVERAGE,
    weight_bound: float = WEIGHT_BOUND_B,
    bias_bound_factor: float = BIAS_BOUND_FACTOR,
) -> HybridSolution:
    """Bias-adjustment fusion: weights in [0, 5] with a jointly optimized
    bias term, then a per-horizon rescaling that pins the grid average of the
    final curve to the point forecast.

    The rescaling drops the bias: final_t = adj_t * (w* F_t) with
    adj_t = P_t / mean(w* F_t), so mean(final_t) == P_t whenever the weighted
    mean is positive.  A horizon with zero weighted mean falls back to an
    additive shift (final_t = w* F_t + P_t) and is flagged.
    """
    _check_aligned(prob, point)
    mean_definition = MeanDefinition(mean_definition)
    f = np.asarray(prob.values)
    p = np.asarray(point.values)
    q = prob.grid.as_array()
    t_count, n = f.shape

    flags: list[str] = []
    if np.all(f == 0):
        weights = np.full(n, 1.0 / n)
        bias = 0.0
        flags.append("underdetermined_weights")
    else:
        bias_bound = bias_bound_factor * float(np.max(np.abs(f)))
        problem = _build_problem(
            f, p, q, mean_definition,
            include_bias=True, weight_bound=weight_bound, bias_bound=bias_bound,
        )
        solution = solve_lp(problem)
        weights = np.clip(solution.x[:n], 0.0, weight_bound)
        bias = float(solution.x[n])

    weighted = weights[None, :] * f
    means = weighted.mean(axis=1) if mean_definition is MeanDefinition.QUANTILE_AVERAGE else weighted.sum(axis=1)
    adjustment = np.ones(t_count)
    final = np.empty_like(weighted)
    for t in range(t_count):
        if means[t] > 1e-12:
            adjustment[t] = p[t] / means[t]
            final[t] = weighted[t] * adjustment[t]
        else:
            flags.append(f"additive_shift_h{t + 1}")
            final[t] = weighted[t] + p[t]
    return _finalize(
        prob, point, weights, bias, adjustment, final,
        CombinationVariant.BIAS_ADJUSTMENT, mean_definition, flags,
    )


def interpolate(
    adjusted: QuantileForecast,
    resolution: int = 101,
    points: Sequence[float] | None = None,
) -> list[DistributionCurve]:
    """Piecewise-linear distribution curve per horizon.

    With `points` omitted, `resolution` evenly spaced probabilities spanning
    the grid are used.  Supplied points outside the grid span are clamped to
    the boundary and counted in clamped_count.
    """
    levels = adjusted.grid.as_array()
    if len(levels) < 2:
        raise ValueError("interpolation requires at least 2 grid points")
    if points is None:
        if resolution < len(levels):
            raise ValueError(f"resolution {resolution} below grid size {len(levels)}")
        xs = np.linspace(levels[0], levels[-1], resolution)
        clamped = 0
    else:
        raw = np.asarray(sorted(points), dtype=float)
        if len(raw) < 2:
            raise ValueError("at least 2 interpolation points required")
        clamped = int(np.sum((raw < levels[0]) | (raw > levels[-1])))
        xs = np.unique(np.clip(raw, levels[0], levels[-1]))

    curves = []
    for h in range(1, adjusted.horizons + 1):
        ys = np.interp(xs, levels, adjusted.row(h))
        curve_points = tuple((float(x), float(y)) for x, y in zip(xs, ys))
        curves.append(DistributionCurve(curve_points, clamped_count=clamped))
    return curves
