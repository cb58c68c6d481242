from __future__ import annotations

import pytest

from demandfuse.core import DemandSeries, Month, SeriesKey


@pytest.fixture
def key() -> SeriesKey:
    return SeriesKey("North", "D01", "Site-A", "clinic", "injectable", "Prod-1")


def make_key(site: str = "Site-A", product: str = "Prod-1", **overrides) -> SeriesKey:
    fields = {
        "region": "North",
        "district": "D01",
        "site": site,
        "site_type": "clinic",
        "product_category": "injectable",
        "product": product,
    }
    fields.update(overrides)
    return SeriesKey(**fields)


def make_series(values, site: str = "Site-A", product: str = "Prod-1", start=Month(2020, 1), **overrides):
    return DemandSeries(make_key(site, product, **overrides), start, tuple(float(v) for v in values))
