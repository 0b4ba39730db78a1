"""Command line interface.

Exit codes: 0 success, 2 validation error (bad arguments, malformed config),
3 task failure during execution.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import capacity, ingest, pipeline
from .errors import LandclaimError, ValidationError
from .reports import OutputStage

EXIT_VALIDATION = 2
EXIT_TASK = 3


def _load_config(config_path: str | None, **overrides) -> pipeline.RunConfig:
    try:
        cfg = pipeline.RunConfig.from_file(config_path) if config_path else pipeline.RunConfig()
    except (OSError, json.JSONDecodeError, ValidationError, TypeError) as exc:
        raise ValidationError(f"cannot load config: {exc}") from exc
    for key, value in overrides.items():
        if value in (None, (), []):
            continue
        if key == "spacing":
            cfg.spacings_m = tuple(float(s) for s in value)
        elif key == "coverage":
            cfg.pv = capacity.PVConfig(cfg.pv.density_mw_per_km2, tuple(float(c) for c in value))
        elif key == "exclude":
            cfg.exclude = tuple(value)
        elif key == "out":
            cfg.out_dir = value
        elif key == "cache":
            cfg.cache_dir = value
        else:
            setattr(cfg, key, value)
    return cfg


def _endpoint(flag_value: str | None, cfg: pipeline.RunConfig) -> str:
    # CLI flag wins over OVERPASS_ENDPOINT, which wins over the config/default
    if flag_value:
        return flag_value
    return os.environ.get("OVERPASS_ENDPOINT") or cfg.endpoint


common_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON config file mirroring the run configuration."),
    click.option("--out", default=None, help="Output directory."),
    click.option("--cache", default=None, help="Cache directory."),
]


def _with_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
def main():
    """Golf-course land use and renewable-capacity estimation."""


def _fail(exc: Exception, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@main.command()
@_with_options(common_options)
@click.option("--endpoint", default=None, help="Overpass endpoint URL.")
@click.option("--query", "query_text", default=None, help="Overpass QL query text.")
def fetch(config_path, out, cache, endpoint, query_text):
    """Download (or reuse the cached copy of) an Overpass extract."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache)
        if query_text:
            cfg.query = query_text
        url = _endpoint(endpoint, cfg)
        path = ingest.fetch_overpass(cfg.query, url, cache_dir=cfg.cache_dir)
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    except LandclaimError as exc:
        _fail(exc, EXIT_TASK)
    click.echo(path)


@main.command(name="ingest")
@_with_options(common_options)
@click.option("--extract", required=True, type=click.Path(), help="Overpass extract file.")
def ingest_cmd(config_path, out, cache, extract):
    """Parse an extract into course features plus a skip report."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache, extract=extract)
        if not os.path.exists(extract):
            raise ValidationError(f"extract file does not exist: {extract}")
        stage = OutputStage(cfg.out_dir)
        count = pipeline.ingest_task(extract, stage.path("features.json"),
                                     stage.path("skip_report.csv"))
        stage.commit()
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    except LandclaimError as exc:
        _fail(exc, EXIT_TASK)
    click.echo(f"{count} course features -> {cfg.out_dir}/features.json")


@main.command()
@_with_options(common_options)
@click.option("--boundaries", required=True, type=click.Path(), help="Admin-0 boundaries GeoJSON.")
def stats(config_path, out, cache, boundaries):
    """Country statistics from previously ingested features."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache, boundaries=boundaries)
        features = os.path.join(cfg.out_dir, "features.json")
        if not os.path.exists(features):
            raise ValidationError(f"{features} not found; run `landclaim ingest` first")
        if not os.path.exists(boundaries):
            raise ValidationError(f"boundaries file does not exist: {boundaries}")
        stage = OutputStage(cfg.out_dir)
        pipeline.stats_task(features, boundaries, stage.path("country_stats.csv"),
                            stage.path("unassigned.csv"), stage.path("assignments.csv"))
        stage.commit()
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    except LandclaimError as exc:
        _fail(exc, EXIT_TASK)
    click.echo(f"country statistics -> {cfg.out_dir}/country_stats.csv")


@main.command()
@_with_options(common_options)
@click.option("--spacing", multiple=True, type=float, help="Turbine spacing in meters (repeatable).")
def place(config_path, out, cache, spacing):
    """Place turbines on every course for each spacing scenario."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache, spacing=spacing)
        features = os.path.join(cfg.out_dir, "features.json")
        if not os.path.exists(features):
            raise ValidationError(f"{features} not found; run `landclaim ingest` first")
        stage = OutputStage(cfg.out_dir)
        for s in cfg.spacings_m:
            label = f"{s:g}"
            pipeline.place_task(features, s, cfg.turbine, cfg.guarantee_one,
                                stage.path(f"placements_{label}.geojson"),
                                stage.path(f"placement_summary_{label}.csv"))
        stage.commit()
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    except LandclaimError as exc:
        _fail(exc, EXIT_TASK)
    click.echo(f"placements for spacings {list(cfg.spacings_m)} -> {cfg.out_dir}")


@main.command()
@_with_options(common_options)
@click.option("--reference", default=None, type=click.Path(), help="Reference capacity CSV.")
@click.option("--spacing", multiple=True, type=float, help="Spacing scenarios to aggregate (repeatable).")
@click.option("--coverage", multiple=True, type=float, help="PV coverage fraction (repeatable).")
@click.option("--top-n", default=None, type=int, help="Number of countries to compare.")
@click.option("--exclude", multiple=True, help="iso3 codes excluded from the aggregate row.")
def potential(config_path, out, cache, reference, spacing, coverage, top_n, exclude):
    """Compare PV and wind potentials with installed/projected capacities."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache, reference=reference,
                           spacing=spacing, coverage=coverage, top_n=top_n, exclude=exclude)
        stats_path = os.path.join(cfg.out_dir, "country_stats.csv")
        assignments = os.path.join(cfg.out_dir, "assignments.csv")
        for path in (stats_path, assignments):
            if not os.path.exists(path):
                raise ValidationError(f"{path} not found; run `landclaim stats` first")
        summaries = {}
        for s in cfg.spacings_m:
            p = os.path.join(cfg.out_dir, f"placement_summary_{s:g}.csv")
            if not os.path.exists(p):
                raise ValidationError(f"{p} not found; run `landclaim place` first")
            summaries[s] = p
        if not os.path.exists(cfg.reference_path):
            raise ValidationError(f"reference file does not exist: {cfg.reference_path}")
        stage = OutputStage(cfg.out_dir)
        pipeline.potential_task(stats_path, assignments, summaries, cfg.reference_path,
                                cfg.pv, cfg.top_n, cfg.exclude, stage.path("potential.csv"))
        stage.commit()
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    except LandclaimError as exc:
        _fail(exc, EXIT_TASK)
    click.echo(f"potential comparison -> {cfg.out_dir}/potential.csv")


@main.command()
@_with_options(common_options)
@click.option("--top-n", default=None, type=int)
def report(config_path, out, cache, top_n):
    """Render the SVG charts from computed tables."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache, top_n=top_n)
        stats_path = os.path.join(cfg.out_dir, "country_stats.csv")
        potential_path = os.path.join(cfg.out_dir, "potential.csv")
        for path in (stats_path, potential_path):
            if not os.path.exists(path):
                raise ValidationError(f"{path} not found; run the upstream commands first")
        stage = OutputStage(cfg.out_dir)
        pipeline.report_task(stats_path, potential_path, cfg.top_n,
                             stage.path("chart_area.svg"), stage.path("chart_pv.svg"),
                             stage.path("chart_wind.svg"))
        stage.commit()
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    except LandclaimError as exc:
        _fail(exc, EXIT_TASK)
    click.echo(f"charts -> {cfg.out_dir}")


@main.command()
@_with_options(common_options)
@click.option("--extract", default=None, type=click.Path())
@click.option("--boundaries", default=None, type=click.Path())
@click.option("--reference", default=None, type=click.Path())
@click.option("--endpoint", default=None)
@click.option("--spacing", multiple=True, type=float)
@click.option("--coverage", multiple=True, type=float)
@click.option("--top-n", default=None, type=int)
@click.option("--exclude", multiple=True)
def run(config_path, out, cache, extract, boundaries, reference, endpoint,
        spacing, coverage, top_n, exclude):
    """Execute the full pipeline as a cached task graph."""
    try:
        cfg = _load_config(config_path, out=out, cache=cache, extract=extract,
                           boundaries=boundaries, reference=reference,
                           spacing=spacing, coverage=coverage, top_n=top_n,
                           exclude=exclude)
        cfg.endpoint = _endpoint(endpoint, cfg)
        cfg.validate()
    except ValidationError as exc:
        _fail(exc, EXIT_VALIDATION)
    manifest = pipeline.run_pipeline(cfg)
    failed = [t for t in manifest["tasks"] if t["status"] in ("failed", "blocked")]
    for t in manifest["tasks"]:
        line = f"{t['name']:>14}  {t['status']:<8} {t['elapsed_s']:.2f}s"
        if t.get("error"):
            line += f"  {t['error']}"
        click.echo(line)
    if failed:
        click.echo(f"{len(failed)} task(s) failed or blocked", err=True)
        sys.exit(EXIT_TASK)
    click.echo(f"manifest -> {cfg.out_dir}/run_manifest.json")


if __name__ == "__main__":
    main()
