"""CSV loading, series filtering and hierarchy aggregation.

Input format: comma-separated, UTF-8, header row required.  One row per
(site, product, month) observation.  The month may be given either as
separate integer `year` + `month` columns or as a single `month` column in
ISO "YYYY-MM" form (the `year` column is then optional).  Header names are
remapped through a CsvSchema so files with different vocabularies load
without preprocessing.

Series with missing months are not imputed; they are dropped and listed in
the manifest, mirroring how unusable series are excluded from modelling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import DemandSeries, Month, SeriesKey, ensure_unique_keys, validate_series

REQUIRED_COLUMNS = (
    "region",
    "district",
    "site",
    "site_type",
    "product_category",
    "product",
    "month",
    "stock_distributed",
)

AGGREGATION_LEVELS = ("country", "region", "district", "site", "product")


class MalformedRowError(ValueError):
    """A row that cannot be parsed; carries the 1-based file line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateRowError(ValueError):
    """Two rows describe the same (site, product, month)."""


@dataclass(frozen=True)
class CsvSchema:
    """Maps logical column names to the actual header names in the file."""

    columns: dict[str, str] = field(default_factory=dict)
    stockout_column: str | None = "stockout"

    def resolve(self, logical: str) -> str:
        return self.columns.get(logical, logical)


@dataclass
class DatasetManifest:
    path: str
    row_count: int
    series_count: int
    dropped: list[tuple[SeriesKey, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "row_count": self.row_count,
            "series_count": self.series_count,
            "dropped": [
                {"site": key.site, "product": key.product, "reason": reason}
                for key, reason in self.dropped
            ],
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass
class LoadResult:
    series: list[DemandSeries]
    manifest: DatasetManifest
    stockout_flagged: frozenset[tuple[str, str]]


def _parse_month(row: dict, schema: CsvSchema, line: int) -> Month:
    raw_month = row.get(schema.resolve("month"))
    if raw_month is None or raw_month == "":
        raise MalformedRowError(line, "missing month")
    raw_month = raw_month.strip()
    if "-" in raw_month:
        try:
            return Month.parse(raw_month)
        except ValueError as exc:
            raise MalformedRowError(line, str(exc)) from exc
    raw_year = row.get(schema.resolve("year"))
    if raw_year is None or raw_year == "":
        raise MalformedRowError(line, "month is numeric but no year column present")
    try:
        return Month(int(raw_year), int(raw_month))
    except ValueError as exc:
        raise MalformedRowError(line, f"bad year/month: {exc}") from exc


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() in {"1", "true", "t", "yes", "y"}


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> LoadResult:
    """Load an LMIS-style CSV into DemandSeries, one per (site, product).

    Raises MalformedRowError for unparseable rows (with the line number) and
    DuplicateRowError when the same (site, product, month) appears twice.
    Series whose months have gaps are dropped and listed in the manifest.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")

    rows: dict[tuple[str, str], dict[Month, float]] = {}
    keys: dict[tuple[str, str], SeriesKey] = {}
    flagged: set[tuple[str, str]] = set()
    row_count = 0

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedRowError(1, "missing header row")
        for logical in ("region", "district", "site", "site_type", "product_category", "product"):
            if schema.resolve(logical) not in reader.fieldnames:
                raise MalformedRowError(1, f"missing required column {schema.resolve(logical)!r}")
        for row in reader:
            line = reader.line_num
            row_count += 1
            try:
                key = SeriesKey(
                    region=row[schema.resolve("region")].strip(),
                    district=row[schema.resolve("district")].strip(),
                    site=row[schema.resolve("site")].strip(),
                    site_type=row[schema.resolve("site_type")].strip(),
                    product_category=row[schema.resolve("product_category")].strip(),
                    product=row[schema.resolve("product")].strip(),
                )
            except (KeyError, AttributeError) as exc:
                raise MalformedRowError(line, f"missing key column: {exc}") from exc
            except ValueError as exc:
                raise MalformedRowError(line, str(exc)) from exc
            month = _parse_month(row, schema, line)
            raw_value = row.get(schema.resolve("stock_distributed"))
            if raw_value is None or raw_value.strip() == "":
                raise MalformedRowError(line, "missing stock_distributed value")
            try:
                value = float(raw_value)
            except ValueError as exc:
                raise MalformedRowError(line, f"bad stock_distributed {raw_value!r}") from exc
            if value < 0:
                raise MalformedRowError(line, f"negative stock_distributed {value}")

            ident = key.ident
            bucket = rows.setdefault(ident, {})
            if month in bucket:
                raise DuplicateRowError(
                    f"duplicate observation for site={key.site!r} product={key.product!r} month={month}"
                )
            bucket[month] = value
            existing = keys.setdefault(ident, key)
            if existing != key:
                raise MalformedRowError(
                    line, f"inconsistent hierarchy labels for (site, product) {ident}"
                )
            if schema.stockout_column and schema.stockout_column in row:
                raw_flag = row.get(schema.stockout_column) or ""
                if _parse_bool(raw_flag):
                    flagged.add(ident)

    series: list[DemandSeries] = []
    dropped: list[tuple[SeriesKey, str]] = []
    for ident in sorted(rows):
        key = keys[ident]
        observations = sorted(rows[ident].items())
        report = validate_series(observations)
        if report.gap_months:
            dropped.append((key, f"gap at {report.gap_months[0]}"))
            continue
        start = observations[0][0]
        series.append(DemandSeries(key, start, tuple(v for _, v in observations)))

    ensure_unique_keys(s.key for s in series)
    manifest = DatasetManifest(
        path=str(path), row_count=row_count, series_count=len(series), dropped=dropped
    )
    return LoadResult(series=series, manifest=manifest, stockout_flagged=frozenset(flagged))


def write_csv(series: Sequence[DemandSeries], path: str | Path) -> None:
    """Write series in the canonical column layout; load_csv(write_csv(x)) == x."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS[:-2] + ("year", "month", "stock_distributed"))
        for s in sorted(series, key=lambda s: s.key.ident):
            for month, value in zip(s.months(), s.values):
                writer.writerow(
                    [
                        s.key.region,
                        s.key.district,
                        s.key.site,
                        s.key.site_type,
                        s.key.product_category,
                        s.key.product,
                        month.year,
                        month.month,
                        _format_value(value),
                    ]
                )


def _format_value(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


@dataclass(frozen=True)
class FilterPolicy:
    drop_gaps: bool = True
    drop_stockout_flagged: bool = True
    min_length: int = 13


def filter_series(
    series: Sequence[DemandSeries],
    policy: FilterPolicy,
    stockout_flagged: frozenset[tuple[str, str]] = frozenset(),
) -> tuple[list[DemandSeries], list[tuple[SeriesKey, str]]]:
    """Apply the usability policy; returns (survivors, drop report).

    Gap dropping happens at load time (a DemandSeries cannot hold a gap), so
    drop_gaps is a no-op here and kept for policy completeness.  With no
    stockout flags supplied, drop_stockout_flagged is likewise a no-op.
    """
    survivors: list[DemandSeries] = []
    report: list[tuple[SeriesKey, str]] = []
    for s in series:
        if policy.drop_stockout_flagged and s.key.ident in stockout_flagged:
            report.append((s.key, "stockout"))
            continue
        if len(s) < policy.min_length:
            report.append((s.key, f"too short ({len(s)} < {policy.min_length})"))
            continue
        survivors.append(s)
    return survivors, report


def _group_label(key: SeriesKey, level: str) -> str:
    if level == "country":
        return "ALL"
    if level == "region":
        return key.region
    if level == "district":
        return key.district
    if level == "site":
        return key.site
    if level == "product":
        return key.product
    raise ValueError(f"unknown aggregation level {level!r}; expected one of {AGGREGATION_LEVELS}")


def _aggregate_key(members: list[SeriesKey], level: str, label: str) -> SeriesKey:
    # The site field carries a level-qualified label so aggregates from
    # different levels never collide on the (site, product) identity.
    first = members[0]
    if level == "country":
        return SeriesKey("ALL", "ALL", "country:ALL", "ALL", "ALL", "ALL")
    if level == "region":
        return SeriesKey(label, "ALL", f"region:{label}", "ALL", "ALL", "ALL")
    if level == "district":
        return SeriesKey(first.region, label, f"district:{label}", "ALL", "ALL", "ALL")
    if level == "site":
        return SeriesKey(first.region, first.district, label, first.site_type, "ALL", "ALL")
    return SeriesKey("ALL", "ALL", "ALL", "ALL", first.product_category, label)


def aggregate(series: Sequence[DemandSeries], level: str) -> list[DemandSeries]:
    """Sum series sharing the same label at the requested hierarchy level.

    The output of each group spans the months common to all its members (the
    intersection of their spans); demand is summed elementwise over it.
    """
    if not series:
        raise ValueError("aggregate requires at least one series")
    if level not in AGGREGATION_LEVELS:
        raise ValueError(f"unknown aggregation level {level!r}; expected one of {AGGREGATION_LEVELS}")

    groups: dict[str, list[DemandSeries]] = {}
    for s in series:
        groups.setdefault(_group_label(s.key, level), []).append(s)

    out: list[DemandSeries] = []
    for label in sorted(groups):
        members = groups[label]
        start = max(m.start for m in members)
        end = min(m.end for m in members)
        span = end.diff(start) + 1
        if span < 1:
            raise ValueError(f"no common month span within group {label!r} at level {level!r}")
        totals = [0.0] * span
        for m in members:
            offset = start.diff(m.start)
            for i in range(span):
                totals[i] += m.values[offset + i]
        key = _aggregate_key([m.key for m in members], level, label)
        out.append(DemandSeries(key, start, tuple(totals)))
    return out
