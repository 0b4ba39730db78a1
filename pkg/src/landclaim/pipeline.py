"""Cached task graph: fetch -> ingest -> stats -> placement -> potential -> reports.

Tasks are keyed by the content hash of their declared inputs (file bytes plus
canonical parameter JSON). A task whose hash is already present in the cache
is not re-executed; its outputs are restored byte-identically from the cache.
Inputs are staged into an isolated directory per task, so a task can only
read what it declared.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field, asdict

from . import aggregate, capacity, ingest, placement, reports
from .errors import LandclaimError, ValidationError

PIPELINE_VERSION = "1"


@dataclass
class RunConfig:
    extract: str | None = None
    boundaries: str | None = None
    reference: str | None = None
    out_dir: str = "out"
    cache_dir: str = ".landclaim-cache"
    endpoint: str = ingest.DEFAULT_ENDPOINT
    query: str = ingest.DEFAULT_QUERY
    turbine: placement.TurbineSpec = field(default_factory=placement.TurbineSpec)
    spacings_m: tuple = (1500.0, 1000.0, 500.0)
    pv: capacity.PVConfig = field(default_factory=capacity.PVConfig)
    equivalence: capacity.EquivalenceFactors = field(default_factory=capacity.EquivalenceFactors)
    guarantee_one: bool = True
    top_n: int = 10
    exclude: tuple = ("CHN",)

    @staticmethod
    def from_file(path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return RunConfig.from_dict(doc)

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        cfg = RunConfig()
        simple = {"extract", "boundaries", "reference", "out_dir", "cache_dir",
                  "endpoint", "query", "guarantee_one", "top_n"}
        for key, value in doc.items():
            if key in simple:
                setattr(cfg, key, value)
            elif key == "spacings_m":
                cfg.spacings_m = tuple(float(s) for s in value)
            elif key == "exclude":
                cfg.exclude = tuple(str(s) for s in value)
            elif key == "turbine":
                cfg.turbine = placement.TurbineSpec(**value)
            elif key == "pv":
                cfg.pv = capacity.PVConfig(
                    density_mw_per_km2=value.get("density_mw_per_km2", capacity.DEFAULT_PV_DENSITY_MW_PER_KM2),
                    coverages=tuple(value.get("coverages", capacity.DEFAULT_COVERAGES)),
                )
            elif key == "equivalence":
                cfg.equivalence = capacity.EquivalenceFactors(**value)
            else:
                raise ValidationError(f"unknown config key: {key}")
        return cfg

    def validate(self) -> None:
        """Structural checks only; a missing per-task input (boundaries,
        reference) fails that task at run time without taking down
        independent branches."""
        if self.extract is None and not self.endpoint:
            raise ValidationError("either an extract file or an endpoint is required")
        if self.extract is not None and not os.path.exists(self.extract):
            raise ValidationError(f"extract file does not exist: {self.extract}")
        if self.top_n <= 0:
            raise ValidationError("top_n must be positive")
        if not self.spacings_m:
            raise ValidationError("at least one spacing is required")
        if any(s <= 0 for s in self.spacings_m):
            raise ValidationError("spacings must be positive")

    @property
    def reference_path(self) -> str:
        return self.reference or aggregate.default_reference_path()


@dataclass
class TaskRecord:
    name: str
    status: str  # run | cached | failed | blocked
    input_hash: str = ""
    outputs: list = field(default_factory=list)
    error: str | None = None
    elapsed_s: float = 0.0


# ---------------------------------------------------------------------------
# Task bodies (reused by the CLI's standalone subcommands)
# ---------------------------------------------------------------------------

def ingest_task(extract_path: str, features_out: str, skip_out: str) -> int:
    with open(extract_path, "rb") as fh:
        raw = fh.read()
    features, skips = ingest.ingest_extract(raw)
    with open(features_out, "w", encoding="utf-8") as fh:
        json.dump(ingest.features_to_json(features), fh, separators=(",", ":"))
    ingest.write_skip_report(skip_out, skips)
    return len(features)


def stats_task(features_path: str, boundaries_path: str | None, stats_out: str,
               unassigned_out: str, assignments_out: str) -> None:
    if not boundaries_path:
        raise ValidationError("boundaries file is required for country statistics")
    with open(features_path, "r", encoding="utf-8") as fh:
        features = ingest.features_from_json(json.load(fh))
    boundaries = aggregate.load_boundaries(boundaries_path)
    assignments = aggregate.assign_countries(features, boundaries)
    stats, unassigned = aggregate.country_stats(features, assignments, boundaries)
    reports.write_country_stats_csv(stats_out, stats)
    reports.write_unassigned_csv(unassigned_out, unassigned)
    reports.write_assignments_csv(assignments_out, assignments)


def place_task(features_path: str, spacing: float, turbine: placement.TurbineSpec,
               guarantee_one: bool, geojson_out: str, summary_out: str) -> None:
    with open(features_path, "r", encoding="utf-8") as fh:
        features = ingest.features_from_json(json.load(fh))
    config = placement.PlacementConfig(spacing_m=spacing, guarantee_one=guarantee_one)
    results = [placement.place_turbines(f, config, turbine) for f in features]
    results.sort(key=lambda r: r.course_id)
    reports.write_geojson(geojson_out, placement.placements_to_geojson(results, turbine))
    lines = ["course_id,count,capacity_mw"]
    for r in results:
        lines.append(f"{r.course_id},{r.count},{r.capacity_mw:.6f}")
    with open(summary_out, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def potential_task(stats_path: str, assignments_path: str, summary_paths: dict[float, str],
                   reference_path: str, pv: capacity.PVConfig, top_n: int,
                   exclude: tuple, out_path: str) -> None:
    stats = read_country_stats(stats_path)
    assignments = read_assignments(assignments_path)
    placements = {s: read_placement_summary(p) for s, p in summary_paths.items()}
    reference = aggregate.load_reference_csv(reference_path)
    comparisons = aggregate.scenario_comparison(
        stats, placements, assignments, pv, reference, top_n=top_n, exclude=exclude)
    reports.write_potential_csv(out_path, comparisons)


def report_task(stats_path: str, potential_path: str, top_n: int,
                area_out: str, pv_out: str, wind_out: str) -> None:
    stats = read_country_stats(stats_path)
    comparisons = reports_read_potential(potential_path)
    with open(area_out, "w", encoding="utf-8") as fh:
        fh.write(reports.render_area_chart(stats, top_n))
    with open(pv_out, "w", encoding="utf-8") as fh:
        fh.write(reports.render_potential_chart(comparisons, aggregate.TECH_PV, stats, top_n))
    with open(wind_out, "w", encoding="utf-8") as fh:
        fh.write(reports.render_potential_chart(comparisons, aggregate.TECH_WIND, stats, top_n))


# ---------------------------------------------------------------------------
# Intermediate readers
# ---------------------------------------------------------------------------

def read_country_stats(path: str) -> list[aggregate.CountryStats]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(aggregate.CountryStats(
                iso3=row["iso3"], name=row["name"], course_count=int(row["courses"]),
                total_area_km2=float(row["total_area_km2"]),
                mean_area_km2=float(row["mean_area_km2"]),
                land_share=float(row["land_share_pct"]) / 100.0,
            ))
    return out


def read_assignments(path: str) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            cid, iso = line.rstrip("\n").rsplit(",", 1)
            out[cid] = iso
    return out


def read_placement_summary(path: str) -> list[placement.PlacementResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            cid, count, cap = line.rstrip("\n").split(",")
            out.append(placement.PlacementResult(cid, 0.0, [], int(count), float(cap)))
    return out


def reports_read_potential(path: str) -> list[aggregate.PotentialComparison]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(aggregate.PotentialComparison(
                iso3=row["iso3"], technology=row["technology"], scenario=row["scenario"],
                potential_mw=float(row["potential_mw"]),
                installed_2023_mw=float(row["installed_2023_mw"]) if row["installed_2023_mw"] else None,
                projected_2028_mw=float(row["projected_2028_mw"]) if row["projected_2028_mw"] else None,
                meets_2028=None if row["meets_2028"] == "" else row["meets_2028"] == "true",
            ))
    return out


# ---------------------------------------------------------------------------
# Graph machinery
# ---------------------------------------------------------------------------

class Task:
    """One node of the pipeline graph.

    ``fn(staged, out_paths)`` receives the staged input paths by role and
    must write every declared output file.
    """

    def __init__(self, name: str, params: dict, input_files: dict[str, str],
                 outputs: list[str], deps: list[str], fn):
        self.name = name
        self.params = params
        self.input_files = input_files
        self.outputs = outputs
        self.deps = deps
        self.fn = fn


def _hash_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(params: dict, files: dict[str, str]) -> str:
    h = hashlib.sha256()
    h.update(PIPELINE_VERSION.encode())
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    for role in sorted(files):
        h.update(role.encode())
        h.update(_hash_file(files[role]).encode())
    return h.hexdigest()[:24]


class TaskGraph:
    def __init__(self, out_dir: str, cache_dir: str, max_workers: int = 4):
        self.out_dir = out_dir
        self.cache_dir = cache_dir
        self.tasks: dict[str, Task] = {}
        self.max_workers = max_workers

    def add(self, task: Task) -> None:
        self.tasks[task.name] = task

    def _stage_inputs(self, task: Task, stage_dir: str) -> dict[str, str]:
        staged = {}
        for role, path in task.input_files.items():
            dst = os.path.join(stage_dir, role + os.path.splitext(path)[1])
            try:
                os.link(path, dst)
            except OSError:
                shutil.copy2(path, dst)
            staged[role] = dst
        return staged

    def _run_task(self, task: Task) -> TaskRecord:
        started = time.monotonic()
        stage_dir = None
        work_dir = None
        try:
            input_hash = _hash_inputs(task.params, task.input_files)
            slot = os.path.join(self.cache_dir, "tasks", f"{task.name}-{input_hash}")
            outputs = [os.path.join(self.out_dir, name) for name in task.outputs]
            if os.path.isdir(slot) and all(os.path.exists(os.path.join(slot, n)) for n in task.outputs):
                for name in task.outputs:
                    shutil.copy2(os.path.join(slot, name), os.path.join(self.out_dir, name))
                return TaskRecord(task.name, "cached", input_hash, outputs,
                                  elapsed_s=time.monotonic() - started)

            stage_dir = tempfile.mkdtemp(prefix=f".stage-{task.name}-", dir=self.cache_dir)
            work_dir = tempfile.mkdtemp(prefix=f".work-{task.name}-", dir=self.cache_dir)
            staged = self._stage_inputs(task, stage_dir)
            out_paths = {name: os.path.join(work_dir, name) for name in task.outputs}
            task.fn(staged, out_paths)
            for name in task.outputs:
                if not os.path.exists(out_paths[name]):
                    raise LandclaimError(f"task did not produce declared output {name}")
            os.makedirs(os.path.dirname(slot), exist_ok=True)
            tmp_slot = slot + ".tmp"
            if os.path.isdir(tmp_slot):
                shutil.rmtree(tmp_slot)
            os.makedirs(tmp_slot)
            for name in task.outputs:
                shutil.copy2(out_paths[name], os.path.join(tmp_slot, name))
            if os.path.isdir(slot):
                shutil.rmtree(slot)
            os.replace(tmp_slot, slot)
            for name in task.outputs:
                shutil.move(out_paths[name], os.path.join(self.out_dir, name))
            return TaskRecord(task.name, "run", input_hash, outputs,
                              elapsed_s=time.monotonic() - started)
        except Exception as exc:
            return TaskRecord(task.name, "failed", "", [], error=str(exc),
                              elapsed_s=time.monotonic() - started)
        finally:
            if stage_dir:
                shutil.rmtree(stage_dir, ignore_errors=True)
            if work_dir:
                shutil.rmtree(work_dir, ignore_errors=True)

    def execute(self) -> dict[str, TaskRecord]:
        """Run all tasks respecting dependencies.

        A failed task blocks its dependents; independent branches complete.
        Ready tasks run concurrently on a small thread pool.
        """
        os.makedirs(self.out_dir, exist_ok=True)
        os.makedirs(self.cache_dir, exist_ok=True)
        records: dict[str, TaskRecord] = {}
        pending = dict(self.tasks)
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            futures: dict[concurrent.futures.Future, str] = {}
            while pending or futures:
                ready = [t for t in pending.values() if all(d in records for d in t.deps)]
                for t in ready:
                    del pending[t.name]
                    bad = [d for d in t.deps if records[d].status in ("failed", "blocked")]
                    if bad:
                        records[t.name] = TaskRecord(t.name, "blocked",
                                                     error=f"dependency failed: {', '.join(bad)}")
                        continue
                    futures[pool.submit(self._run_task, t)] = t.name
                if ready and not futures:
                    continue  # newly blocked tasks may unblock more bookkeeping
                if not futures:
                    for t in pending.values():
                        records[t.name] = TaskRecord(t.name, "blocked", error="unresolvable dependencies")
                    pending.clear()
                    continue
                done, _ = concurrent.futures.wait(
                    list(futures), return_when=concurrent.futures.FIRST_COMPLETED)
                for fut in done:
                    name = futures.pop(fut)
                    records[name] = fut.result()
        return records


def build_graph(cfg: RunConfig) -> TaskGraph:
    graph = TaskGraph(cfg.out_dir, cfg.cache_dir)

    if cfg.extract is None:
        def fetch_fn(staged, out_paths):
            path = ingest.fetch_overpass(cfg.query, cfg.endpoint, cache_dir=cfg.cache_dir)
            shutil.copy2(path, out_paths["extract.json"])

        graph.add(Task("fetch", {"endpoint": cfg.endpoint, "query": cfg.query},
                       {}, ["extract.json"], [], fetch_fn))
        extract_input = {"extract": os.path.join(cfg.out_dir, "extract.json")}
        ingest_deps = ["fetch"]
    else:
        extract_input = {"extract": cfg.extract}
        ingest_deps = []

    def ingest_fn(staged, out_paths):
        ingest_task(staged["extract"], out_paths["features.json"], out_paths["skip_report.csv"])

    graph.add(Task("ingest", {}, extract_input,
                   ["features.json", "skip_report.csv"], ingest_deps, ingest_fn))

    features_path = os.path.join(cfg.out_dir, "features.json")

    def stats_fn(staged, out_paths):
        stats_task(staged["features"], staged.get("boundaries"),
                   out_paths["country_stats.csv"], out_paths["unassigned.csv"],
                   out_paths["assignments.csv"])

    stats_inputs = {"features": features_path}
    if cfg.boundaries:
        stats_inputs["boundaries"] = cfg.boundaries
    graph.add(Task("stats", {}, stats_inputs,
                   ["country_stats.csv", "unassigned.csv", "assignments.csv"],
                   ["ingest"], stats_fn))

    for spacing in cfg.spacings_m:
        label = f"{spacing:g}"

        def place_fn(staged, out_paths, spacing=spacing, label=label):
            place_task(staged["features"], spacing, cfg.turbine, cfg.guarantee_one,
                       out_paths[f"placements_{label}.geojson"],
                       out_paths[f"placement_summary_{label}.csv"])

        graph.add(Task(
            f"place_{label}",
            {"spacing_m": spacing, "turbine": asdict(cfg.turbine), "guarantee_one": cfg.guarantee_one},
            {"features": features_path},
            [f"placements_{label}.geojson", f"placement_summary_{label}.csv"],
            ["ingest"], place_fn))

    def potential_fn(staged, out_paths):
        summary_paths = {s: staged[f"placement_summary_{s:g}"] for s in cfg.spacings_m}
        potential_task(staged["country_stats"], staged["assignments"], summary_paths,
                       staged["reference"], cfg.pv, cfg.top_n, cfg.exclude,
                       out_paths["potential.csv"])

    potential_inputs = {
        "country_stats": os.path.join(cfg.out_dir, "country_stats.csv"),
        "assignments": os.path.join(cfg.out_dir, "assignments.csv"),
        "reference": cfg.reference_path,
    }
    for spacing in cfg.spacings_m:
        potential_inputs[f"placement_summary_{spacing:g}"] = os.path.join(
            cfg.out_dir, f"placement_summary_{spacing:g}.csv")
    graph.add(Task("potential",
                   {"pv": asdict(cfg.pv), "top_n": cfg.top_n, "exclude": list(cfg.exclude),
                    "spacings": list(cfg.spacings_m)},
                   potential_inputs, ["potential.csv"],
                   ["stats"] + [f"place_{s:g}" for s in cfg.spacings_m], potential_fn))

    def report_fn(staged, out_paths):
        report_task(staged["country_stats"], staged["potential"], cfg.top_n,
                    out_paths["chart_area.svg"], out_paths["chart_pv.svg"],
                    out_paths["chart_wind.svg"])

    graph.add(Task("report", {"top_n": cfg.top_n},
                   {"country_stats": os.path.join(cfg.out_dir, "country_stats.csv"),
                    "potential": os.path.join(cfg.out_dir, "potential.csv")},
                   ["chart_area.svg", "chart_pv.svg", "chart_wind.svg"],
                   ["stats", "potential"], report_fn))
    return graph


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute the full graph; returns the run manifest.

    The manifest lists every task with its input hash, status and outputs;
    it is written to ``<out_dir>/run_manifest.json`` and is the only output
    carrying a timestamp.
    """
    cfg.validate()
    started = time.time()
    graph = build_graph(cfg)
    records = graph.execute()
    order = [t for t in ("fetch", "ingest", "stats") if t in records]
    order += [f"place_{s:g}" for s in cfg.spacings_m] + ["potential", "report"]
    manifest = {
        "pipeline_version": PIPELINE_VERSION,
        "started_unix": started,
        "elapsed_s": time.time() - started,
        "tasks": [asdict(records[name]) for name in order if name in records],
    }
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
