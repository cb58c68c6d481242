"""Batch CLI.

Subcommands:
    forecast  -- quantile forecasts + ensemble metadata per series
    combine   -- fuse a point-forecast file with a quantile-forecast file
    evaluate  -- rolling-origin benchmark: records + summary
    serve     -- HTTP service backing the planner workbench

Exit codes: 0 success, 1 partial per-series failures, 2 config/input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bootstrap import derive_seed, fit_residuals, simulate_paths, to_quantiles
from .combine import optimize_weights_A, optimize_weights_B, pre_average
from .config import ConfigError, JobConfig, load_config
from .core import CombinationVariant
from . import files
from .evaluate import run_benchmark, scores_by_method, nemenyi_ranks
from .ingest import filter_series, load_csv
from .pipeline import build_method

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _load_dataset(config: JobConfig):
    loaded = load_csv(config.dataset)
    survivors, drops = filter_series(loaded.series, config.filter, loaded.stockout_flagged)
    loaded.manifest.dropped.extend(drops)
    loaded.manifest.series_count = len(survivors)
    return survivors, loaded.manifest


def _apply_overrides(config: JobConfig, args: argparse.Namespace) -> JobConfig:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "variant", None):
        config.variant = args.variant
    if getattr(args, "mean_definition", None):
        config.mean_definition = args.mean_definition
    if getattr(args, "output", None):
        config.output_dir = args.output
    return config


def cmd_forecast(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    series, manifest = _load_dataset(config)
    out = Path(config.output_dir)
    (out / "quantiles").mkdir(parents=True, exist_ok=True)
    (out / "ensembles").mkdir(parents=True, exist_ok=True)

    method = build_method(config.primary_method_spec(), config.demographics)
    if not method.probabilistic:
        print(f"error: forecast method {method.name!r} produces no distribution", file=sys.stderr)
        return EXIT_CONFIG

    failures = []
    for s in series:
        stem = f"{files.safe_name(s.key.site)}__{files.safe_name(s.key.product)}__{files.safe_name(method.name)}"
        try:
            product = method.run(s, config.cv.horizon, config.grid, config.paths, config.seed)
        except Exception as exc:
            failures.append({"site": s.key.site, "product": s.key.product, "error": str(exc)})
            continue
        files.write_quantile_csv([product.quantiles], out / "quantiles" / f"{stem}.csv")
        meta = {
            "site": s.key.site,
            "product": s.key.product,
            "origin": str(s.end),
            "method": method.name,
            "paths": config.paths,
            "seed": config.seed,
            "horizon": config.cv.horizon,
        }
        files.dump_json(meta, out / "ensembles" / f"{stem}.json")
        if config.dump_paths and product.ensemble is not None:
            import numpy as np

            np.savetxt(
                out / "ensembles" / f"{stem}.paths.csv",
                product.ensemble.paths,
                delimiter=",",
                fmt="%r",
            )
    manifest.to_json(out / "manifest.json")
    if failures:
        files.dump_json(failures, out / "errors.json")
        for f in failures:
            print(f"warning: {f['site']}/{f['product']}: {f['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_combine(args: argparse.Namespace) -> int:
    for path in (args.prob, args.point):
        if not Path(path).exists():
            print(f"error: input file not found: {path}", file=sys.stderr)
            return EXIT_CONFIG
    quantiles = {(q.key.ident, str(q.origin)): q for q in files.read_quantile_csv(args.prob)}
    points = {(p.key.ident, str(p.origin)): p for p in files.read_point_csv(args.point)}
    missing_points = sorted(set(quantiles) - set(points))
    missing_probs = sorted(set(points) - set(quantiles))
    if missing_points or missing_probs:
        for ident, origin in missing_points:
            print(f"error: no point forecast for {ident[0]}/{ident[1]} @ {origin}", file=sys.stderr)
        for ident, origin in missing_probs:
            print(f"error: no quantile forecast for {ident[0]}/{ident[1]} @ {origin}", file=sys.stderr)
        return EXIT_CONFIG

    variant = CombinationVariant(args.variant)
    mean_definition = args.mean_definition or "quantile_average"
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    audits = []
    combined = []
    failures = 0
    for cell in sorted(quantiles):
        prob, point = quantiles[cell], points[cell]
        try:
            if args.pre_average:
                point = pre_average(point, prob)
            if variant is CombinationVariant.WEIGHTED_AVERAGE:
                solution = optimize_weights_A(prob, point, mean_definition)
            else:
                solution = optimize_weights_B(prob, point, mean_definition)
        except Exception as exc:
            print(f"warning: {prob.key}: {exc}", file=sys.stderr)
            failures += 1
            continue
        combined.append(solution.adjusted_quantiles)
        audits.append(
            {
                "site": prob.key.site,
                "product": prob.key.product,
                "origin": str(prob.origin),
                "pre_averaged": bool(args.pre_average),
                **solution.to_dict(),
            }
        )
    files.write_quantile_csv(combined, out / "hybrid_quantiles.csv")
    files.dump_json(audits, out / "hybrid_audit.json")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    series, manifest = _load_dataset(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_benchmark(
        series,
        config.methods,
        config.cv,
        config.grid,
        seed=config.seed,
        b=config.paths,
        report_levels=config.report_levels,
        demographics=config.demographics,
    )
    files.write_records_csv(result.records, out / "records.csv", config.report_levels)
    files.dump_json(files.records_to_json(result.records), out / "records.json")
    files.write_summary_csv(result, out / "summary.csv")
    files.dump_json(files.summary_to_json(result), out / "summary.json")
    files.dump_json(
        {s.method: s.runtime_s for s in result.summary}, out / "runtime.json"
    )
    ranks = {}
    for metric in ("mase", "crps"):
        try:
            scores = scores_by_method(result.records, metric)
            res = nemenyi_ranks(scores)
            ranks[metric] = {
                "mean_ranks": res.mean_ranks,
                "critical_distance": res.critical_distance,
                "significant": {f"{a}|{b}": v for (a, b), v in res.significant.items()},
            }
        except ValueError:
            continue
    if ranks:
        files.dump_json(ranks, out / "nemenyi.json")
    manifest.to_json(out / "manifest.json")
    if result.failures:
        for key, stage, message in result.failures:
            print(f"warning: {key} [{stage}]: {message}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import os

    import uvicorn

    from .service import create_app

    config = _apply_overrides(load_config(args.config), args)
    bind = os.environ.get("DEMANDFUSE_BIND", "127.0.0.1:8000")
    host, _, port = bind.partition(":")
    if args.host:
        host = args.host
    if args.port is not None:
        port = str(args.port)
    app = create_app(config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demandfuse",
        description="Probabilistic demand forecasting with expert point-forecast fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the job config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--output", default=None, help="override the output directory")
        p.add_argument(
            "--mean-definition", dest="mean_definition",
            choices=("quantile_average", "mixture"), default=None,
        )

    p_forecast = sub.add_parser("forecast", help="write quantile forecasts per series")
    common(p_forecast)
    p_forecast.set_defaults(fn=cmd_forecast)

    p_combine = sub.add_parser("combine", help="fuse point and quantile forecast files")
    p_combine.add_argument("--prob", required=True, help="quantile forecast CSV (long form)")
    p_combine.add_argument("--point", required=True, help="point forecast CSV")
    p_combine.add_argument(
        "--variant", choices=("weighted_average", "bias_adjustment"),
        default="weighted_average",
    )
    p_combine.add_argument(
        "--mean-definition", dest="mean_definition",
        choices=("quantile_average", "mixture"), default=None,
    )
    p_combine.add_argument("--output", default="out", help="output directory")
    p_combine.add_argument(
        "--no-pre-average", dest="pre_average", action="store_false",
        help="pass the point file through without averaging it with the probabilistic mean",
    )
    p_combine.set_defaults(fn=cmd_combine, pre_average=True)

    p_eval = sub.add_parser("evaluate", help="rolling-origin benchmark")
    common(p_eval)
    p_eval.set_defaults(fn=cmd_evaluate)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    common(p_serve)
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(fn=cmd_serve)
    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
