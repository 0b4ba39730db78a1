"""Overpass ingestion: fetch, parse, multipolygon assembly, repair.

The input format is the Overpass API JSON produced by an ``out geom`` query:
an ``elements`` array of nodes, ways (inline ``geometry``) and relations
(members with roles and per-member ``geometry``).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np
import requests

from . import geometry
from .errors import FetchError, OverpassParseError

GOLF_TAG = ("leisure", "golf_course")
DEFAULT_ENDPOINT = "https://overpass-api.de/api/interpreter"
DEFAULT_QUERY = '[out:json][timeout:99999];\nnwr["leisure"="golf_course"];\nout geom;\n'

# endpoint gap below which an almost-closed ring is snapped shut (degrees)
SNAP_TOL_DEG = 1e-9

# rings below this area (100 m^2) are degenerate slivers: collinear vertex
# chains are not exactly zero on the sphere, only almost
MIN_RING_AREA_KM2 = 1e-4


@dataclass
class Member:
    kind: str
    ref: int
    role: str
    coords: list  # [(lon, lat), ...] or [] when the member carries no geometry


@dataclass
class RawElement:
    """One Overpass element. ``geometry`` is set for ways, ``members`` for
    relations; nodes carry a single coordinate in ``geometry``."""

    kind: str  # node | way | relation
    id: int
    tags: dict[str, str] = field(default_factory=dict)
    geometry: list = field(default_factory=list)
    members: list[Member] = field(default_factory=list)

    @property
    def element_id(self) -> str:
        return f"{self.kind}/{self.id}"


@dataclass
class SkipRecord:
    element_kind: str
    element_id: int
    reason: str


@dataclass
class CourseFeature:
    """One golf course: multipolygon geometry plus derived values."""

    source_id: str  # "way/123" or "relation/456"
    name: str | None
    polygons: list  # [(outer_ring, [hole_ring, ...]), ...]
    area_km2: float = 0.0
    member_way_ids: list[int] = field(default_factory=list)
    rep_point: tuple[float, float] | None = None

    def compute_area(self) -> float:
        self.area_km2 = geometry.geodesic_area_km2(self.polygons)
        return self.area_km2


# ---------------------------------------------------------------------------
# Fetch
# ---------------------------------------------------------------------------

_cache_locks: dict[str, threading.Lock] = {}
_cache_locks_guard = threading.Lock()


def _cache_lock(key: str) -> threading.Lock:
    with _cache_locks_guard:
        return _cache_locks.setdefault(key, threading.Lock())


def overpass_cache_key(endpoint: str, query: str) -> str:
    return hashlib.sha256((endpoint + "\n" + query).encode("utf-8")).hexdigest()[:24]


def fetch_overpass(query: str, endpoint: str = DEFAULT_ENDPOINT, cache_dir: str = ".overpass-cache",
                   timeout: float = 600.0) -> str:
    """Fetch an Overpass response, caching by (endpoint, query) content hash.

    Returns the path of the cached response file. A warm cache is served
    without touching the network; writes are atomic (temp file + rename) and
    serialized per cache key, so concurrent readers never observe a partial
    file.
    """
    os.makedirs(cache_dir, exist_ok=True)
    key = overpass_cache_key(endpoint, query)
    path = os.path.join(cache_dir, f"overpass-{key}.json")
    if os.path.exists(path):
        return path
    with _cache_lock(path):
        if os.path.exists(path):
            return path
        try:
            resp = requests.post(endpoint, data={"data": query}, timeout=timeout)
        except requests.RequestException as exc:
            raise FetchError(f"overpass request to {endpoint} failed: {exc}") from exc
        if resp.status_code != 200:
            raise FetchError(f"overpass returned HTTP {resp.status_code}", status=resp.status_code)
        body = resp.content
        try:
            envelope = json.loads(body)
        except json.JSONDecodeError as exc:
            raise OverpassParseError(f"overpass response is not valid JSON: {exc}", offset=exc.pos) from exc
        if not isinstance(envelope, dict) or "elements" not in envelope:
            raise OverpassParseError("overpass response has no 'elements' array")
        fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(body)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
    return path


# ---------------------------------------------------------------------------
# Parse
# ---------------------------------------------------------------------------

def _coords_of(obj) -> list:
    return [(float(p["lon"]), float(p["lat"])) for p in obj]


def parse_overpass_elements(raw: bytes) -> tuple[list[RawElement], list[SkipRecord]]:
    """Parse Overpass JSON bytes into raw elements plus a skip report.

    Elements missing id/type or (for ways) geometry are skipped and recorded;
    a syntactically invalid document raises ``OverpassParseError`` with the
    byte offset. Unknown fields are ignored and element order is preserved.
    """
    try:
        envelope = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise OverpassParseError(f"invalid Overpass JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(envelope, dict) or not isinstance(envelope.get("elements"), list):
        raise OverpassParseError("missing 'elements' array in Overpass response")

    elements: list[RawElement] = []
    skips: list[SkipRecord] = []
    for obj in envelope["elements"]:
        kind = obj.get("type")
        ident = obj.get("id")
        if kind not in ("node", "way", "relation") or not isinstance(ident, int):
            skips.append(SkipRecord(str(kind), ident if isinstance(ident, int) else -1, "missing-id-or-type"))
            continue
        tags = {str(k): str(v) for k, v in (obj.get("tags") or {}).items()}
        if kind == "node":
            if "lon" not in obj or "lat" not in obj:
                skips.append(SkipRecord(kind, ident, "missing-geometry"))
                continue
            elements.append(RawElement(kind, ident, tags, geometry=[(float(obj["lon"]), float(obj["lat"]))]))
        elif kind == "way":
            geom = obj.get("geometry")
            if not geom or len(geom) < 2:
                skips.append(SkipRecord(kind, ident, "missing-geometry"))
                continue
            elements.append(RawElement(kind, ident, tags, geometry=_coords_of(geom)))
        else:
            members = []
            for m in obj.get("members") or []:
                coords = _coords_of(m.get("geometry") or [])
                members.append(Member(str(m.get("type")), int(m.get("ref", -1)), str(m.get("role", "")), coords))
            if not members:
                skips.append(SkipRecord(kind, ident, "missing-geometry"))
                continue
            elements.append(RawElement(kind, ident, tags, members=members))
    return elements, skips


# ---------------------------------------------------------------------------
# Ring assembly
# ---------------------------------------------------------------------------

def _is_closed(coords: list) -> bool:
    return len(coords) >= 4 and coords[0] == coords[-1]


def _near(a, b, tol=SNAP_TOL_DEG) -> bool:
    return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol


def assemble_rings(segments: list[tuple[int, list]]) -> tuple[list[tuple[list, set]], list[int]]:
    """Join open way segments end-to-end into closed rings.

    Matching is by exact endpoint equality first, then a 1e-9 degree snap;
    segments that still cannot be closed are returned as leftovers, never
    force-closed. Returns (rings, leftover way ids) where each ring is
    (coords, contributing way id set).
    """
    rings: list[tuple[list, set]] = []
    open_segs: list[tuple[int, list]] = []
    for way_id, coords in segments:
        if _is_closed(coords):
            rings.append((list(coords), {way_id}))
        else:
            open_segs.append((way_id, list(coords)))

    remaining = list(open_segs)
    leftover: list[int] = []
    while remaining:
        way_id, chain = remaining.pop(0)
        used = {way_id}
        stuck = False
        while not (_is_closed(chain)) and not stuck:
            if len(chain) >= 4 and _near(chain[0], chain[-1]):
                chain[-1] = chain[0]
                break
            end = chain[-1]
            match_idx = -1
            match_rev = False
            # exact endpoint match first
            for i, (_, seg) in enumerate(remaining):
                if seg[0] == end:
                    match_idx, match_rev = i, False
                    break
                if seg[-1] == end:
                    match_idx, match_rev = i, True
                    break
            if match_idx < 0:
                # snap pass
                for i, (_, seg) in enumerate(remaining):
                    if _near(seg[0], end):
                        match_idx, match_rev = i, False
                        break
                    if _near(seg[-1], end):
                        match_idx, match_rev = i, True
                        break
            if match_idx < 0:
                stuck = True
                break
            seg_id, seg = remaining.pop(match_idx)
            used.add(seg_id)
            if match_rev:
                seg = seg[::-1]
            chain.extend(seg[1:])
        if not stuck and _is_closed(chain):
            rings.append((chain, used))
        else:
            leftover.extend(sorted(used))
    return rings, leftover


def _ring_contains_point(ring: list, point) -> bool:
    xy = np.asarray(ring, dtype=np.float64)
    return bool(geometry._crossings(np.array([point[0]]), np.array([point[1]]), xy)[0])


def _ring_inside_ring(inner: list, outer: list) -> bool:
    """True if ``inner`` lies inside ``outer``.

    Probes with a vertex of ``inner`` that is not shared with ``outer``;
    concentric rings make centroid probes unreliable (the centroid of a ring
    can sit inside its own hole)."""
    shared = set(outer)
    for v in inner[:-1]:
        if v not in shared:
            return _ring_contains_point(outer, v)
    return False


def group_rings_into_polygons(rings: list[tuple[list, set, str]]) -> list[tuple[list, list]]:
    """Classify rings as outer/inner and nest inners under their outers.

    Role strings "outer"/"inner" are honored; anything else falls back to
    geometric containment with even-odd nesting (a ring inside an odd number
    of other rings is a hole). An "inner" ring contained in no outer is
    promoted to outer rather than dropped.
    """
    classified: list[tuple[list, str]] = []
    fallback: list[list] = []
    for coords, _, role in rings:
        if role in ("outer", "inner"):
            classified.append((coords, role))
        else:
            fallback.append(coords)

    all_coords = [c for c, _ in classified] + fallback
    areas = [abs(geometry.ring_area_signed_km2(r)) for r in all_coords]
    depth = [0] * len(all_coords)
    for i, ring in enumerate(all_coords):
        for j, other in enumerate(all_coords):
            # a ring can only sit inside a strictly larger one
            if i != j and areas[j] > areas[i] and _ring_inside_ring(ring, other):
                depth[i] += 1

    outers: list[tuple[list, int]] = []
    inners: list[list] = []
    for i, ring in enumerate(all_coords):
        if i < len(classified):
            role = classified[i][1]
        else:
            role = "outer" if depth[i] % 2 == 0 else "inner"
        if role == "inner":
            inners.append(ring)
        else:
            outers.append((ring, areas[i]))

    polygons: list[tuple[list, list]] = [(ring, []) for ring, _ in outers]
    for ring in inners:
        # attach to the smallest containing outer
        candidates = [
            (area, k) for k, (outer, area) in enumerate(outers) if _ring_inside_ring(ring, outer)
        ]
        if candidates:
            _, k = min(candidates)
            polygons[k][1].append(ring)
        else:
            polygons.append((ring, []))
    return polygons


def assemble_course_features(elements: list[RawElement]) -> tuple[list[CourseFeature], list[SkipRecord]]:
    """Build candidate course features from tagged elements.

    Closed tagged ways become single-polygon features. Tagged relations go
    through ring assembly; a way that is both tagged and a member of a tagged
    relation is emitted once, under the relation. Tagged nodes are skipped
    and reported, as are relations with unclosable rings.
    """
    skips: list[SkipRecord] = []
    features: list[CourseFeature] = []

    tagged = [e for e in elements if e.tags.get(GOLF_TAG[0]) == GOLF_TAG[1]]
    relation_member_ways: set[int] = set()
    for e in tagged:
        if e.kind == "relation":
            relation_member_ways.update(m.ref for m in e.members if m.kind == "way")

    for e in tagged:
        name = e.tags.get("name")
        if e.kind == "node":
            skips.append(SkipRecord(e.kind, e.id, "node-element"))
            continue
        if e.kind == "way":
            if e.id in relation_member_ways:
                continue  # counted once, under the relation
            coords = list(e.geometry)
            if not _is_closed(coords):
                if len(coords) >= 4 and _near(coords[0], coords[-1]):
                    coords[-1] = coords[0]
                else:
                    skips.append(SkipRecord(e.kind, e.id, "unclosed-ring"))
                    continue
            features.append(CourseFeature(e.element_id, name, [(coords, [])], member_way_ids=[e.id]))
            continue
        # relation
        segs = [(m.ref, m.coords) for m in e.members if m.kind == "way" and len(m.coords) >= 2]
        if not segs:
            skips.append(SkipRecord(e.kind, e.id, "no-way-members"))
            continue
        role_by_way = {m.ref: m.role for m in e.members if m.kind == "way"}
        rings, leftover = assemble_rings(segs)
        if leftover:
            skips.append(SkipRecord(e.kind, e.id, "unclosed-ring"))
            continue
        ring_roles = []
        for coords, used in rings:
            roles = {role_by_way.get(w, "") for w in used}
            role = roles.pop() if len(roles) == 1 else ""
            ring_roles.append((coords, used, role))
        polygons = group_rings_into_polygons(ring_roles)
        member_ids = sorted({w for _, used in rings for w in used})
        features.append(CourseFeature(e.element_id, name, polygons, member_way_ids=member_ids))

    return features, skips


# ---------------------------------------------------------------------------
# Validate / repair
# ---------------------------------------------------------------------------

def _dedupe_consecutive(coords: list) -> list:
    out = [coords[0]]
    for c in coords[1:]:
        if c != out[-1]:
            out.append(c)
    return out


def _ring_is_ccw(coords: list) -> bool:
    a = np.asarray(coords, dtype=np.float64)
    x, y = a[:, 0], a[:, 1]
    return float(np.sum((x[:-1] * y[1:] - x[1:] * y[:-1]))) > 0.0


def _self_intersects(coords: list) -> bool:
    """True if any two non-adjacent edges of the closed ring intersect."""
    a = np.asarray(coords, dtype=np.float64)
    p = a[:-1]
    q = a[1:]
    n = len(p)
    if n < 4:
        return False
    # orientation of (p2-p1) x (p3-p1) for all edge-pair endpoints, vectorized
    p1 = p[:, None, :]
    q1 = q[:, None, :]
    p2 = p[None, :, :]
    q2 = q[None, :, :]

    def cross(o, u, v):
        return (u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1]) - (u[..., 1] - o[..., 1]) * (v[..., 0] - o[..., 0])

    d1 = cross(p1, q1, p2)
    d2 = cross(p1, q1, q2)
    d3 = cross(p2, q2, p1)
    d4 = cross(p2, q2, q1)
    proper = ((d1 * d2) < 0) & ((d3 * d4) < 0)

    # collinear overlap / endpoint touch between non-adjacent edges
    def on_seg(o, e, pt):
        return (
            (cross(o, e, pt) == 0)
            & (np.minimum(o[..., 0], e[..., 0]) <= pt[..., 0]) & (pt[..., 0] <= np.maximum(o[..., 0], e[..., 0]))
            & (np.minimum(o[..., 1], e[..., 1]) <= pt[..., 1]) & (pt[..., 1] <= np.maximum(o[..., 1], e[..., 1]))
        )

    touch = on_seg(p1, q1, p2) | on_seg(p1, q1, q2) | on_seg(p2, q2, p1) | on_seg(p2, q2, q1)

    i = np.arange(n)
    adjacent = (np.abs(i[:, None] - i[None, :]) <= 1) | (np.abs(i[:, None] - i[None, :]) == n - 1)
    hits = (proper | touch) & ~adjacent
    return bool(hits.any())


def _repair_ring(coords: list) -> list | None:
    """Dedupe, close, and sanity-check one ring; None when degenerate."""
    if len(coords) < 3:
        return None
    out = _dedupe_consecutive(list(coords))
    if len(out) >= 3 and out[0] != out[-1] and _near(out[0], out[-1]):
        out[-1] = out[0]
    if out[0] != out[-1]:
        out.append(out[0])
    # distinct vertices excluding the closure
    if len(out) - 1 < 3:
        return None
    for lon, lat in out:
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            return None
    return out


def validate_and_repair(feature: CourseFeature) -> tuple[CourseFeature | None, str | None]:
    """Repair a feature in place; returns (feature, None) or (None, reason).

    Repairs: consecutive duplicate removal, closing of rings whose endpoints
    differ by < 1e-9 degrees, dropping of rings with < 3 distinct vertices,
    canonical orientation (outers counterclockwise, holes clockwise).
    Rejects features with self-intersecting outer rings or zero total area;
    no clipping is attempted. Self-intersecting holes are dropped.
    """
    polygons = []
    for outer, holes in feature.polygons:
        fixed_outer = _repair_ring(outer)
        if fixed_outer is None:
            continue
        if _self_intersects(fixed_outer):
            return None, "self-intersection"
        if abs(geometry.ring_area_signed_km2(fixed_outer)) < MIN_RING_AREA_KM2:
            continue
        if not _ring_is_ccw(fixed_outer):
            fixed_outer = fixed_outer[::-1]
        fixed_holes = []
        for hole in holes:
            fixed = _repair_ring(hole)
            if fixed is None or _self_intersects(fixed):
                continue
            if _ring_is_ccw(fixed):
                fixed = fixed[::-1]
            fixed_holes.append(fixed)
        polygons.append((fixed_outer, fixed_holes))

    if not polygons:
        return None, "zero-area"
    feature.polygons = polygons
    if feature.compute_area() <= 0.0:
        return None, "zero-area"
    return feature, None


def ingest_extract(raw: bytes, compute_rep_points: bool = True) -> tuple[list[CourseFeature], list[SkipRecord]]:
    """Full ingest: parse, assemble, repair, derive area and anchor point."""
    elements, skips = parse_overpass_elements(raw)
    features, more_skips = assemble_course_features(elements)
    skips.extend(more_skips)
    kept: list[CourseFeature] = []
    for f in features:
        repaired, reason = validate_and_repair(f)
        if repaired is None:
            kind, _, ident = f.source_id.partition("/")
            skips.append(SkipRecord(kind, int(ident), reason or "invalid"))
            continue
        kept.append(repaired)
    if compute_rep_points:
        for f in kept:
            f.rep_point = geometry.representative_point(f)
    kept.sort(key=lambda f: f.source_id)
    return kept, skips


# ---------------------------------------------------------------------------
# Serialization of intermediate artifacts
# ---------------------------------------------------------------------------

def write_skip_report(path: str, skips: list[SkipRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["element_kind", "element_id", "reason"])
        for s in skips:
            w.writerow([s.element_kind, s.element_id, s.reason])


def features_to_json(features: list[CourseFeature]) -> dict:
    return {
        "schema": "landclaim-features/1",
        "features": [
            {
                "source_id": f.source_id,
                "name": f.name,
                "polygons": [
                    {"outer": [[c[0], c[1]] for c in outer],
                     "holes": [[[c[0], c[1]] for c in hole] for hole in holes]}
                    for outer, holes in f.polygons
                ],
                "area_km2": f.area_km2,
                "member_way_ids": f.member_way_ids,
                "rep_point": list(f.rep_point) if f.rep_point else None,
            }
            for f in features
        ],
    }


def features_from_json(doc: dict) -> list[CourseFeature]:
    out = []
    for obj in doc["features"]:
        polygons = [
            ([tuple(c) for c in p["outer"]], [[tuple(c) for c in hole] for hole in p["holes"]])
            for p in obj["polygons"]
        ]
        out.append(CourseFeature(
            source_id=obj["source_id"],
            name=obj.get("name"),
            polygons=polygons,
            area_km2=float(obj["area_km2"]),
            member_way_ids=list(obj.get("member_way_ids") or []),
            rep_point=tuple(obj["rep_point"]) if obj.get("rep_point") else None,
        ))
    return out
