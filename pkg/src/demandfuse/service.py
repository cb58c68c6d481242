"""HTTP service for the planner workbench.

Endpoints (JSON):
    GET  /series                       list loaded series
    GET  /series/{site}/{product}      one series with its history
    GET  /forecast/{site}/{product}    quantile forecast for the next horizon
    POST /combine                      fuse an entered point forecast
    POST /commit                       append the chosen forecast to the log
    GET  /commits                      committed-forecast log
    GET  /evaluation                   benchmark summary for the dataset

The service is stateless between requests except for the append-only commit
log (a JSON-lines file under the configured output directory).  Responses
are pure functions of (dataset, request, seed).
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .combine import interpolate, optimize_weights_A, optimize_weights_B, pre_average
from .config import JobConfig
from .core import CombinationVariant, DemandSeries, PointForecast, PointSource
from .evaluate import run_benchmark
from .files import summary_to_json
from .ingest import filter_series, load_csv
from .pipeline import MethodProduct, build_method


class CombineRequest(BaseModel):
    site: str
    product: str
    point_values: list[float] = Field(min_length=1)
    variant: str = "weighted_average"
    pre_average: bool | None = None
    mean_definition: str | None = None


class CommitRequest(BaseModel):
    site: str
    product: str
    origin: str
    point_values: list[float] = Field(min_length=1)
    variant: str = "weighted_average"


class ServiceState:
    def __init__(self, config: JobConfig):
        self.config = config
        loaded = load_csv(config.dataset)
        survivors, _ = filter_series(loaded.series, config.filter, loaded.stockout_flagged)
        self.series: dict[tuple[str, str], DemandSeries] = {
            s.key.ident: s for s in survivors
        }
        self.method = build_method(config.primary_method_spec(), config.demographics)
        self._forecasts: dict[tuple[str, str], MethodProduct] = {}
        self._evaluation: list[dict] | None = None
        self._commit_lock = threading.Lock()
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.commit_path = out / "commits.jsonl"

    def get_series(self, site: str, product: str) -> DemandSeries:
        series = self.series.get((site, product))
        if series is None:
            raise HTTPException(status_code=404, detail=f"unknown series {site}/{product}")
        return series

    def forecast(self, site: str, product: str) -> MethodProduct:
        ident = (site, product)
        if ident not in self._forecasts:
            series = self.get_series(site, product)
            self._forecasts[ident] = self.method.run(
                series, self.config.cv.horizon, self.config.grid,
                self.config.paths, self.config.seed,
            )
        return self._forecasts[ident]

    def read_commits(self) -> list[dict]:
        if not self.commit_path.exists():
            return []
        return [
            json.loads(line)
            for line in self.commit_path.read_text().splitlines()
            if line.strip()
        ]

    def append_commit(self, entry: dict) -> dict:
        with self._commit_lock:
            existing = self.read_commits()
            duplicate = any(
                e["site"] == entry["site"]
                and e["product"] == entry["product"]
                and e["origin"] == entry["origin"]
                for e in existing
            )
            if duplicate:
                raise HTTPException(
                    status_code=409,
                    detail=f"already committed: {entry['site']}/{entry['product']} @ {entry['origin']}",
                )
            entry = {"id": len(existing) + 1, **entry,
                     "committed_at": datetime.now(timezone.utc).isoformat()}
            with self.commit_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
            return entry


def _solve(state: ServiceState, site: str, product: str, point_values: list[float],
           variant: str, pre_average_flag: "bool | None", mean_definition: "str | None") -> dict:
    series = state.get_series(site, product)
    product_fc = state.forecast(site, product)
    prob = product_fc.quantiles
    if prob is None:
        raise HTTPException(status_code=409, detail="configured method produces no distribution")
    if len(point_values) != prob.horizons:
        raise HTTPException(
            status_code=400,
            detail=[{"loc": ["body", "point_values"],
                     "msg": f"expected {prob.horizons} values, got {len(point_values)}"}],
        )
    if any(v < 0 for v in point_values):
        raise HTTPException(
            status_code=400,
            detail=[{"loc": ["body", "point_values"], "msg": "values must be non-negative"}],
        )
    try:
        chosen = CombinationVariant(variant)
    except ValueError:
        raise HTTPException(
            status_code=400,
            detail=[{"loc": ["body", "variant"],
                     "msg": f"unknown variant {variant!r}"}],
        )
    point = PointForecast(series.key, series.end, tuple(point_values), PointSource.EXPERT)
    do_avg = state.config.pre_average if pre_average_flag is None else pre_average_flag
    if do_avg:
        point = pre_average(point, prob)
    mean_def = mean_definition or state.config.mean_definition
    if chosen is CombinationVariant.WEIGHTED_AVERAGE:
        solution = optimize_weights_A(prob, point, mean_def)
    else:
        solution = optimize_weights_B(prob, point, mean_def)
    curves = interpolate(solution.adjusted_quantiles, resolution=101)
    return {
        "site": site,
        "product": product,
        "origin": str(prob.origin),
        "point_used": list(point.values),
        "pre_averaged": bool(do_avg),
        "solution": solution.to_dict(),
        "curves": [
            {"horizon": h + 1, "points": [[x, y] for x, y in curve.points]}
            for h, curve in enumerate(curves)
        ],
    }


def create_app(config: JobConfig) -> FastAPI:
    state = ServiceState(config)
    app = FastAPI(title="demandfuse", version="0.1.0")
    app.state.service = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"detail": [
                {"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()
            ]},
        )

    @app.get("/series")
    def list_series():
        return [
            {
                "region": s.key.region,
                "district": s.key.district,
                "site": s.key.site,
                "site_type": s.key.site_type,
                "product_category": s.key.product_category,
                "product": s.key.product,
                "start": str(s.start),
                "end": str(s.end),
                "months": len(s),
            }
            for s in sorted(state.series.values(), key=lambda s: s.key.ident)
        ]

    @app.get("/series/{site}/{product}")
    def series_detail(site: str, product: str):
        s = state.get_series(site, product)
        return {
            "site": s.key.site,
            "product": s.key.product,
            "start": str(s.start),
            "months": [str(m) for m in s.months()],
            "values": list(s.values),
        }

    @app.get("/forecast/{site}/{product}")
    def forecast(site: str, product: str):
        s = state.get_series(site, product)
        product_fc = state.forecast(site, product)
        prob = product_fc.quantiles
        if prob is None:
            raise HTTPException(status_code=409, detail="configured method produces no distribution")
        return {
            "site": site,
            "product": product,
            "method": state.method.name,
            "origin": str(prob.origin),
            "horizons": prob.horizons,
            "months": [str(s.end.add(h)) for h in range(1, prob.horizons + 1)],
            "levels": list(prob.grid.levels),
            "quantiles": [list(map(float, row)) for row in prob.values],
            "grid_mean": [float(v) for v in prob.grid_mean()],
            "point": list(product_fc.point.values),
        }

    @app.post("/combine")
    def combine(body: CombineRequest):
        return _solve(
            state, body.site, body.product, body.point_values,
            body.variant, body.pre_average, body.mean_definition,
        )

    @app.post("/commit")
    def commit(body: CommitRequest):
        series = state.get_series(body.site, body.product)
        if body.origin != str(series.end):
            raise HTTPException(
                status_code=400,
                detail=[{"loc": ["body", "origin"],
                         "msg": f"origin {body.origin} does not match series end {series.end}"}],
            )
        solved = _solve(state, body.site, body.product, body.point_values,
                        body.variant, None, None)
        entry = state.append_commit(
            {
                "site": body.site,
                "product": body.product,
                "origin": body.origin,
                "point_values": list(body.point_values),
                "variant": body.variant,
                "solution": solved["solution"],
            }
        )
        return entry

    @app.get("/commits")
    def commits():
        return {"entries": state.read_commits()}

    @app.get("/evaluation")
    def evaluation():
        if state._evaluation is None:
            result = run_benchmark(
                list(state.series.values()),
                state.config.methods,
                state.config.cv,
                state.config.grid,
                seed=state.config.seed,
                b=state.config.paths,
                report_levels=state.config.report_levels,
                demographics=state.config.demographics,
            )
            state._evaluation = summary_to_json(result)
        return {"summary": state._evaluation}

    return app
