"""landclaim: golf-course land use from OpenStreetMap, and the wind/solar
capacity that land could host."""

__version__ = "0.1.0"

from .capacity import EquivalenceFactors, PVConfig, equivalent_pv_area_km2, golf_to_pv_ratio, pv_capacity_mw, pv_scenarios
from .geometry import AUTHALIC_RADIUS_KM, BBoxIndex, LocalFrame, build_bbox_index, geodesic_area_km2, haversine_m, point_in_course, query_bbox, representative_point
from .ingest import CourseFeature, RawElement, assemble_course_features, fetch_overpass, parse_overpass_elements, validate_and_repair
from .placement import PlacementConfig, PlacementResult, TurbineSpec, generate_candidate_lattice, place_turbines, wind_capacity_mw
from .pipeline import RunConfig, run_pipeline

__all__ = [
    "AUTHALIC_RADIUS_KM",
    "BBoxIndex",
    "CourseFeature",
    "EquivalenceFactors",
    "LocalFrame",
    "PVConfig",
    "PlacementConfig",
    "PlacementResult",
    "RawElement",
    "RunConfig",
    "TurbineSpec",
    "assemble_course_features",
    "build_bbox_index",
    "equivalent_pv_area_km2",
    "fetch_overpass",
    "generate_candidate_lattice",
    "geodesic_area_km2",
    "golf_to_pv_ratio",
    "haversine_m",
    "parse_overpass_elements",
    "place_turbines",
    "point_in_course",
    "pv_capacity_mw",
    "pv_scenarios",
    "query_bbox",
    "representative_point",
    "run_pipeline",
    "validate_and_repair",
    "wind_capacity_mw",
]
