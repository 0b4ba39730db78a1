"""Country assignment, per-country statistics, and capacity comparisons."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import geometry
from .capacity import PVConfig, pv_scenarios
from .errors import ValidationError
from .ingest import CourseFeature
from .placement import PlacementResult

UNASSIGNED = "unassigned"

TECH_PV = "pv_utility"
TECH_WIND = "wind_onshore"


@dataclass
class CountryBoundary:
    iso3: str
    name: str
    polygons: list  # [(outer_ring, [hole_ring, ...]), ...]
    land_area_km2: float


@dataclass
class CountryStats:
    iso3: str
    name: str
    course_count: int
    total_area_km2: float
    mean_area_km2: float
    land_share: float  # fraction of national land area


@dataclass(frozen=True)
class ReferenceCapacity:
    iso3: str
    technology: str  # pv_utility | wind_onshore
    year: int  # 2023 | 2028
    capacity_mw: float
    source_note: str = ""


@dataclass
class PotentialComparison:
    iso3: str
    technology: str
    scenario: str  # coverage fraction ("0.25") or spacing in m ("1500")
    potential_mw: float
    installed_2023_mw: float | None
    projected_2028_mw: float | None
    meets_2028: bool | None

    @property
    def reference_missing(self) -> bool:
        return self.installed_2023_mw is None or self.projected_2028_mw is None


# ---------------------------------------------------------------------------
# Boundaries
# ---------------------------------------------------------------------------

def _geojson_polygons(geom: dict) -> list:
    """GeoJSON Polygon/MultiPolygon to [(outer, holes), ...]."""
    if geom["type"] == "Polygon":
        polys = [geom["coordinates"]]
    elif geom["type"] == "MultiPolygon":
        polys = geom["coordinates"]
    else:
        raise ValidationError(f"unsupported boundary geometry type {geom['type']}")
    out = []
    for rings in polys:
        outer = [tuple(c) for c in rings[0]]
        holes = [[tuple(c) for c in r] for r in rings[1:]]
        out.append((outer, holes))
    return out


def load_boundaries(path: str) -> list[CountryBoundary]:
    """Load admin-0 boundaries from GeoJSON.

    iso3 is read from the first of the properties ``iso3``, ``ISO_A3``,
    ``ADM0_A3``; the land area comes from ``land_area_km2`` (or
    ``LAND_AREA_KM2``), falling back to the geodesic area of the boundary
    polygons when the attribute is absent.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for feat in doc.get("features", []):
        props = feat.get("properties") or {}
        iso3 = props.get("iso3") or props.get("ISO_A3") or props.get("ADM0_A3")
        if not iso3:
            raise ValidationError("boundary feature without an iso3 identifier")
        name = props.get("name") or props.get("NAME") or iso3
        polygons = _geojson_polygons(feat["geometry"])
        land = props.get("land_area_km2", props.get("LAND_AREA_KM2"))
        land_area = float(land) if land is not None else geometry.geodesic_area_km2(polygons)
        if land_area <= 0:
            raise ValidationError(f"{iso3}: non-positive land area")
        out.append(CountryBoundary(str(iso3), str(name), polygons, land_area))
    return out


def build_boundary_index(boundaries: list[CountryBoundary]) -> geometry.BBoxIndex:
    items = []
    for i, b in enumerate(boundaries):
        boxes = [geometry.ring_bbox(outer) for outer, _ in b.polygons]
        box = (
            min(x[0] for x in boxes), min(x[1] for x in boxes),
            max(x[2] for x in boxes), max(x[3] for x in boxes),
        )
        items.append((box, i))
    return geometry.build_bbox_index(items)


def _boundary_contains(boundary: CountryBoundary, lon: float, lat: float) -> bool:
    # country polygons are in degrees; even-odd directly in lon/lat
    pt = np.array([lon]), np.array([lat])
    for outer, holes in boundary.polygons:
        if geometry._crossings(pt[0], pt[1], np.asarray(outer, dtype=np.float64))[0]:
            in_hole = any(
                geometry._crossings(pt[0], pt[1], np.asarray(h, dtype=np.float64))[0] for h in holes
            )
            if not in_hole:
                return True
    return False


def assign_country(feature: CourseFeature, boundaries: list[CountryBoundary],
                   index: geometry.BBoxIndex) -> str:
    """iso3 of the country containing the feature's representative point,
    or "unassigned". Ambiguous overlaps resolve to the lowest iso3."""
    rep = feature.rep_point or geometry.representative_point(feature)
    lon, lat = rep
    candidates = index.query((lon, lat, lon, lat))
    hits = [boundaries[i].iso3 for i in candidates if _boundary_contains(boundaries[i], lon, lat)]
    if not hits:
        return UNASSIGNED
    return min(hits)


def assign_countries(features: list[CourseFeature], boundaries: list[CountryBoundary]) -> dict[str, str]:
    index = build_boundary_index(boundaries)
    return {f.source_id: assign_country(f, boundaries, index) for f in features}


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def country_stats(features: list[CourseFeature], assignments: dict[str, str],
                  boundaries: list[CountryBoundary]) -> tuple[list[CountryStats], CountryStats]:
    """Per-country statistics plus the separate unassigned bucket.

    Countries are sorted by course count descending, ties by iso3 ascending.
    """
    by_iso: dict[str, CountryBoundary] = {b.iso3: b for b in boundaries}
    counts: dict[str, int] = {}
    areas: dict[str, float] = {}
    for f in features:
        iso = assignments.get(f.source_id, UNASSIGNED)
        counts[iso] = counts.get(iso, 0) + 1
        areas[iso] = areas.get(iso, 0.0) + f.area_km2

    rows = []
    for iso, count in counts.items():
        if iso == UNASSIGNED:
            continue
        b = by_iso[iso]
        total = areas[iso]
        rows.append(CountryStats(
            iso3=iso,
            name=b.name,
            course_count=count,
            total_area_km2=total,
            mean_area_km2=total / count,
            land_share=total / b.land_area_km2,
        ))
    rows.sort(key=lambda r: (-r.course_count, r.iso3))
    un_count = counts.get(UNASSIGNED, 0)
    un_total = areas.get(UNASSIGNED, 0.0)
    unassigned = CountryStats(
        iso3=UNASSIGNED, name=UNASSIGNED, course_count=un_count,
        total_area_km2=un_total,
        mean_area_km2=(un_total / un_count) if un_count else 0.0,
        land_share=0.0,
    )
    return rows, unassigned


# ---------------------------------------------------------------------------
# Reference capacities
# ---------------------------------------------------------------------------

def load_reference_csv(path: str) -> list[ReferenceCapacity]:
    """Read the reference-capacity file.

    Header: ``iso3,technology,year,capacity_mw,source_note``. The
    (iso3, technology, year) triple must be unique.
    """
    out = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"iso3", "technology", "year", "capacity_mw", "source_note"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(f"reference CSV must have columns {sorted(required)}")
        for row in reader:
            rec = ReferenceCapacity(
                iso3=row["iso3"].strip(),
                technology=row["technology"].strip(),
                year=int(row["year"]),
                capacity_mw=float(row["capacity_mw"]),
                source_note=row["source_note"].strip(),
            )
            if rec.capacity_mw < 0:
                raise ValidationError(f"negative capacity for {rec.iso3}/{rec.technology}/{rec.year}")
            key = (rec.iso3, rec.technology, rec.year)
            if key in seen:
                raise ValidationError(f"duplicate reference row {key}")
            seen.add(key)
            out.append(rec)
    return out


def default_reference_path() -> str:
    """Path of the packaged 2023/2028 reference dataset."""
    return str(resources.files("landclaim").joinpath("data/reference_capacity.csv"))


# ---------------------------------------------------------------------------
# Scenario comparison
# ---------------------------------------------------------------------------

def _ref_map(reference: list[ReferenceCapacity]) -> dict[tuple[str, str, int], float]:
    return {(r.iso3, r.technology, r.year): r.capacity_mw for r in reference}


def scenario_comparison(stats: list[CountryStats], placements: dict[float, list[PlacementResult]],
                        assignments: dict[str, str], pv_config: PVConfig,
                        reference: list[ReferenceCapacity], top_n: int = 10,
                        exclude: tuple[str, ...] = ("CHN",)) -> list[PotentialComparison]:
    """Compare per-country potentials with installed/projected capacities.

    For the ``top_n`` countries by course count: PV potential per coverage
    scenario from each country's total course area, wind potential per
    spacing from the placement results of its courses. Aggregate rows
    ``TOP<n>`` and ``TOP<n>-EXCL`` (total minus the excluded countries) are
    appended; aggregate potentials are the exact sums of the country rows.
    Missing reference rows leave the comparison fields absent, never zero.
    """
    top = stats[:top_n]
    refs = _ref_map(reference)

    wind_by_country: dict[float, dict[str, float]] = {}
    for spacing, results in placements.items():
        per_country: dict[str, float] = {}
        for r in results:
            iso = assignments.get(r.course_id, UNASSIGNED)
            per_country[iso] = per_country.get(iso, 0.0) + r.capacity_mw
        wind_by_country[spacing] = per_country

    def scenarios_for(iso3: str, total_area: float) -> list[tuple[str, str, float]]:
        rows = []
        for cov, mw in pv_scenarios(total_area, pv_config).items():
            rows.append((TECH_PV, f"{cov:g}", mw))
        for spacing in sorted(wind_by_country):
            rows.append((TECH_WIND, f"{spacing:g}", wind_by_country[spacing].get(iso3, 0.0)))
        return rows

    out: list[PotentialComparison] = []
    agg: dict[tuple[str, str], float] = {}
    agg_excl: dict[tuple[str, str], float] = {}
    for s in top:
        for tech, scenario, mw in scenarios_for(s.iso3, s.total_area_km2):
            installed = refs.get((s.iso3, tech, 2023))
            projected = refs.get((s.iso3, tech, 2028))
            out.append(PotentialComparison(
                iso3=s.iso3, technology=tech, scenario=scenario, potential_mw=mw,
                installed_2023_mw=installed, projected_2028_mw=projected,
                meets_2028=(mw >= projected) if projected is not None else None,
            ))
            agg[(tech, scenario)] = agg.get((tech, scenario), 0.0) + mw
            if s.iso3 not in exclude:
                agg_excl[(tech, scenario)] = agg_excl.get((tech, scenario), 0.0) + mw

    def aggregate_rows(label: str, sums: dict[tuple[str, str], float], isos: list[str]):
        for (tech, scenario), mw in sums.items():
            vals_23 = [refs.get((iso, tech, 2023)) for iso in isos]
            vals_28 = [refs.get((iso, tech, 2028)) for iso in isos]
            installed = None if any(v is None for v in vals_23) else float(sum(vals_23))
            projected = None if any(v is None for v in vals_28) else float(sum(vals_28))
            out.append(PotentialComparison(
                iso3=label, technology=tech, scenario=scenario, potential_mw=mw,
                installed_2023_mw=installed, projected_2028_mw=projected,
                meets_2028=(mw >= projected) if projected is not None else None,
            ))

    aggregate_rows(f"TOP{len(top)}", agg, [s.iso3 for s in top])
    aggregate_rows(f"TOP{len(top)}-EXCL", agg_excl, [s.iso3 for s in top if s.iso3 not in exclude])
    return out
