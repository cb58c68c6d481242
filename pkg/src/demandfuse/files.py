"""On-disk formats: long-form CSV for quantile and point forecasts, CSV/JSON
for evaluation records and summaries.  All writers emit rows in sorted key
order so outputs are byte-stable for a fixed seed."""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Month, PointForecast, PointSource, QuantileForecast, QuantileGrid, SeriesKey
from .evaluate import BenchmarkResult, EvaluationRecord

KEY_COLUMNS = ("region", "district", "site", "site_type", "product_category", "product")

QUANTILE_COLUMNS = KEY_COLUMNS + ("origin", "horizon", "level", "value")
POINT_COLUMNS = KEY_COLUMNS + ("origin", "horizon", "value", "source")


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def _key_fields(key: SeriesKey) -> list[str]:
    return [key.region, key.district, key.site, key.site_type, key.product_category, key.product]


def _key_from_row(row: dict) -> SeriesKey:
    return SeriesKey(*(row[c] for c in KEY_COLUMNS))


def _fmt(value: float) -> str:
    return repr(float(value))


def write_quantile_csv(forecasts: Sequence[QuantileForecast], path: "str | Path") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUANTILE_COLUMNS)
        for qf in sorted(forecasts, key=lambda f: (f.key.ident, str(f.origin))):
            for h in range(1, qf.horizons + 1):
                for level, value in zip(qf.grid.levels, qf.row(h)):
                    writer.writerow(
                        _key_fields(qf.key) + [str(qf.origin), h, _fmt(level), _fmt(value)]
                    )


def read_quantile_csv(path: "str | Path") -> list[QuantileForecast]:
    """Rebuild QuantileForecasts from the long form, one per (key, origin)."""
    groups: dict[tuple, dict] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = _key_from_row(row)
            origin = Month.parse(row["origin"])
            bucket = groups.setdefault((key.ident, str(origin)), {"key": key, "origin": origin, "cells": {}})
            bucket["cells"][(int(row["horizon"]), float(row["level"]))] = float(row["value"])
    out = []
    for _, bucket in sorted(groups.items()):
        cells = bucket["cells"]
        horizons = sorted({h for h, _ in cells})
        levels = sorted({q for _, q in cells})
        values = np.array([[cells[(h, q)] for q in levels] for h in horizons])
        out.append(
            QuantileForecast(bucket["key"], bucket["origin"], QuantileGrid(tuple(levels)), values)
        )
    return out


def write_point_csv(forecasts: Sequence[PointForecast], path: "str | Path") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(POINT_COLUMNS)
        for pf in sorted(forecasts, key=lambda f: (f.key.ident, str(f.origin))):
            for h, value in enumerate(pf.values, start=1):
                writer.writerow(
                    _key_fields(pf.key) + [str(pf.origin), h, _fmt(value), pf.source.value]
                )


def read_point_csv(path: "str | Path") -> list[PointForecast]:
    groups: dict[tuple, dict] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = _key_from_row(row)
            origin = Month.parse(row["origin"])
            bucket = groups.setdefault(
                (key.ident, str(origin)),
                {"key": key, "origin": origin, "cells": {}, "source": row.get("source", "expert")},
            )
            bucket["cells"][int(row["horizon"])] = float(row["value"])
    out = []
    for _, bucket in sorted(groups.items()):
        horizons = sorted(bucket["cells"])
        values = tuple(bucket["cells"][h] for h in horizons)
        source = PointSource(bucket["source"]) if bucket["source"] else PointSource.EXPERT
        out.append(PointForecast(bucket["key"], bucket["origin"], values, source))
    return out


def _na(value: float) -> str:
    return "" if math.isnan(value) else _fmt(value)


def write_records_csv(
    records: Sequence[EvaluationRecord], path: "str | Path", levels: Sequence[float]
) -> None:
    level_cols = [f"pinball_{level}" for level in levels]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            list(KEY_COLUMNS) + ["method", "origin", "horizon", "actual", "point", "mase_q", "crps"]
            + level_cols
        )
        for r in records:
            row = _key_fields(r.key) + [
                r.method, str(r.origin), r.horizon, _fmt(r.actual), _fmt(r.point),
                _na(r.mase_q), _na(r.crps),
            ]
            row += [_na(r.pinball_by_level.get(level, math.nan)) for level in levels]
            writer.writerow(row)


def write_summary_csv(result: BenchmarkResult, path: "str | Path") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mean_mase", "median_mase", "mean_crps", "median_crps"])
        for s in result.summary:
            writer.writerow(
                [s.method, _na(s.mean_mase), _na(s.median_mase), _na(s.mean_crps), _na(s.median_crps)]
            )


def _none_nan(value: float):
    return None if math.isnan(value) else value


def records_to_json(records: Iterable[EvaluationRecord]) -> list[dict]:
    return [
        {
            **dict(zip(KEY_COLUMNS, _key_fields(r.key))),
            "method": r.method,
            "origin": str(r.origin),
            "horizon": r.horizon,
            "actual": r.actual,
            "point": r.point,
            "mase_q": _none_nan(r.mase_q),
            "crps": _none_nan(r.crps),
            "pinball_by_level": {str(k): v for k, v in sorted(r.pinball_by_level.items())},
        }
        for r in records
    ]


def summary_to_json(result: BenchmarkResult) -> list[dict]:
    return [
        {
            "method": s.method,
            "mean_mase": _none_nan(s.mean_mase),
            "median_mase": _none_nan(s.median_mase),
            "mean_crps": _none_nan(s.mean_crps),
            "median_crps": _none_nan(s.median_crps),
            "runtime_s": s.runtime_s,
            "mase_excluded": s.mase_excluded,
        }
        for s in result.summary
    ]


def dump_json(payload, path: "str | Path") -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
