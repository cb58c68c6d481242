"""Job configuration shared by the CLI and the HTTP service.

Configs are plain JSON; validation errors carry the offending field path
(e.g. "methods[1]: unknown method 'arma'") so misconfigured jobs fail fast
with an actionable message.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import DEFAULT_GRID, PERCENT_GRID, QuantileGrid
from .evaluate import CvPlan
from .forecasters import DemographicInputs
from .ingest import FilterPolicy
from .pipeline import build_method

VARIANTS = ("weighted_average", "bias_adjustment")
MEAN_DEFINITIONS = ("quantile_average", "mixture")

_KNOWN_KEYS = {
    "dataset", "methods", "forecast_method", "cv", "grid", "paths", "seed",
    "variant", "mean_definition", "pre_average", "report_levels", "filter",
    "demographics", "output_dir", "dump_paths",
}


class ConfigError(ValueError):
    """Configuration problem; message starts with the field path."""


@dataclass
class JobConfig:
    dataset: str
    methods: list = field(default_factory=lambda: ["snaive"])
    forecast_method: "str | dict | None" = None
    cv: CvPlan = field(default_factory=CvPlan)
    grid: QuantileGrid = DEFAULT_GRID
    paths: int = 1000
    seed: int = 0
    variant: str = "weighted_average"
    mean_definition: str = "quantile_average"
    pre_average: bool = True
    report_levels: tuple[float, ...] = (0.5, 0.95)
    filter: FilterPolicy = field(default_factory=FilterPolicy)
    demographics: DemographicInputs | None = None
    output_dir: str = "out"
    dump_paths: bool = False

    def primary_method_spec(self) -> "str | dict":
        """The method used by `forecast` and the service: the explicit
        forecast_method if set, otherwise the first entry of methods."""
        return self.forecast_method if self.forecast_method is not None else self.methods[0]


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _parse_grid(raw, path: str) -> QuantileGrid:
    if raw is None or raw == "default":
        return DEFAULT_GRID
    if raw == "percent":
        return PERCENT_GRID
    _expect(isinstance(raw, list) and raw, path, "must be 'default', 'percent' or a list of levels")
    try:
        return QuantileGrid(tuple(float(q) for q in raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_cv(raw, path: str) -> CvPlan:
    if raw is None:
        return CvPlan()
    _expect(isinstance(raw, dict), path, "must be an object")
    known = {"origins", "horizon", "min_train", "step"}
    for key in raw:
        _expect(key in known, f"{path}.{key}", f"unknown field (expected one of {sorted(known)})")
    try:
        return CvPlan(
            origins=int(raw.get("origins", 3)),
            horizon=int(raw.get("horizon", 3)),
            min_train=int(raw.get("min_train", 13)),
            step=int(raw.get("step", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_filter(raw, path: str) -> FilterPolicy:
    if raw is None:
        return FilterPolicy()
    _expect(isinstance(raw, dict), path, "must be an object")
    known = {"drop_gaps", "drop_stockout_flagged", "min_length"}
    for key in raw:
        _expect(key in known, f"{path}.{key}", f"unknown field (expected one of {sorted(known)})")
    return FilterPolicy(
        drop_gaps=bool(raw.get("drop_gaps", True)),
        drop_stockout_flagged=bool(raw.get("drop_stockout_flagged", True)),
        min_length=int(raw.get("min_length", 13)),
    )


def load_config(path: "str | Path") -> JobConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from exc
    cfg = parse_config(raw)
    # Relative paths in the config resolve against the config file location.
    base = path.parent
    if not Path(cfg.dataset).is_absolute():
        cfg.dataset = str(base / cfg.dataset)
    if not Path(cfg.output_dir).is_absolute():
        cfg.output_dir = str(base / cfg.output_dir)
    return cfg


def parse_config(raw: dict) -> JobConfig:
    _expect(isinstance(raw, dict), "config", "must be a JSON object")
    for key in raw:
        _expect(key in _KNOWN_KEYS, key, f"unknown field (expected one of {sorted(_KNOWN_KEYS)})")
    _expect("dataset" in raw, "dataset", "required field is missing")
    _expect(isinstance(raw["dataset"], str) and raw["dataset"], "dataset", "must be a path string")

    demographics = None
    if raw.get("demographics"):
        demo_path = Path(raw["demographics"])
        _expect(demo_path.exists(), "demographics", f"file not found: {demo_path}")
        try:
            demographics = DemographicInputs.from_dict(json.loads(demo_path.read_text()))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"demographics: {exc}") from exc

    methods = raw.get("methods", ["snaive"])
    _expect(isinstance(methods, list) and methods, "methods", "must be a non-empty list")
    for i, spec in enumerate(methods):
        try:
            build_method(spec, demographics)
        except ValueError as exc:
            raise ConfigError(f"methods[{i}]: {exc}") from exc
    forecast_method = raw.get("forecast_method")
    if forecast_method is not None:
        try:
            build_method(forecast_method, demographics)
        except ValueError as exc:
            raise ConfigError(f"forecast_method: {exc}") from exc

    paths = int(raw.get("paths", 1000))
    _expect(paths >= 1, "paths", f"must be >= 1, got {paths}")
    variant = raw.get("variant", "weighted_average")
    _expect(variant in VARIANTS, "variant", f"must be one of {VARIANTS}, got {variant!r}")
    mean_definition = raw.get("mean_definition", "quantile_average")
    _expect(
        mean_definition in MEAN_DEFINITIONS,
        "mean_definition",
        f"must be one of {MEAN_DEFINITIONS}, got {mean_definition!r}",
    )
    levels = raw.get("report_levels", [0.5, 0.95])
    _expect(isinstance(levels, list) and levels, "report_levels", "must be a non-empty list")
    for i, level in enumerate(levels):
        _expect(0 < float(level) < 1, f"report_levels[{i}]", f"must be in (0, 1), got {level}")

    try:
        cv = _parse_cv(raw.get("cv"), "cv")
    except ConfigError:
        raise
    grid = _parse_grid(raw.get("grid"), "grid")
    policy = _parse_filter(raw.get("filter"), "filter")

    return JobConfig(
        dataset=raw["dataset"],
        methods=methods,
        forecast_method=forecast_method,
        cv=cv,
        grid=grid,
        paths=paths,
        seed=int(raw.get("seed", 0)),
        variant=variant,
        mean_definition=mean_definition,
        pre_average=bool(raw.get("pre_average", True)),
        report_levels=tuple(float(level) for level in levels),
        filter=policy,
        demographics=demographics,
        output_dir=str(raw.get("output_dir", "out")),
        dump_paths=bool(raw.get("dump_paths", False)),
    )
