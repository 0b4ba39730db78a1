"""Solar-PV capacity model and land-equivalence arithmetic.

PV capacity is ``area * density * coverage`` with a default density of
79.2 MW/km² for horizontal utility-scale panels; the coverage fraction is the
knob that accounts for vegetation and water bodies, so no separate land-cover
masking is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

DEFAULT_PV_DENSITY_MW_PER_KM2 = 79.2
DEFAULT_COVERAGES = (0.25, 0.50, 0.75)


@dataclass(frozen=True)
class PVConfig:
    density_mw_per_km2: float = DEFAULT_PV_DENSITY_MW_PER_KM2
    coverages: tuple = DEFAULT_COVERAGES

    def __post_init__(self):
        if self.density_mw_per_km2 <= 0:
            raise ValidationError("PV density must be positive")
        for c in self.coverages:
            if not (0.0 < c <= 1.0):
                raise ValidationError(f"coverage {c} outside (0, 1]")


@dataclass(frozen=True)
class EquivalenceFactors:
    """Land attributed per MW of installed capacity (km²/MW)."""

    pv_km2_per_mw: float = 0.01
    wind_km2_per_mw: float = 0.12
    pv_comparison_km2_per_mw: float = 0.015

    def __post_init__(self):
        if min(self.pv_km2_per_mw, self.wind_km2_per_mw, self.pv_comparison_km2_per_mw) <= 0:
            raise ValidationError("equivalence factors must be positive")


def pv_capacity_mw(area_km2: float, coverage: float, density: float = DEFAULT_PV_DENSITY_MW_PER_KM2) -> float:
    """Installable PV capacity: exactly area * density * coverage."""
    if not (0.0 < coverage <= 1.0):
        raise ValidationError(f"coverage {coverage} outside (0, 1]")
    if area_km2 < 0:
        raise ValidationError("area must be non-negative")
    if density <= 0:
        raise ValidationError("density must be positive")
    return area_km2 * density * coverage


def pv_scenarios(total_area_km2: float, config: PVConfig | None = None) -> dict[float, float]:
    """Capacity per coverage scenario, MW; keys sorted ascending."""
    config = config or PVConfig()
    return {
        c: pv_capacity_mw(total_area_km2, c, config.density_mw_per_km2)
        for c in sorted(config.coverages)
    }


def equivalent_pv_area_km2(installed_mw: float, factor_km2_per_mw: float) -> float:
    """Land equivalent of an installed capacity under a km²/MW factor."""
    if installed_mw < 0 or factor_km2_per_mw < 0:
        raise ValidationError("inputs must be non-negative")
    return installed_mw * factor_km2_per_mw


def golf_to_pv_ratio(golf_area_km2: float, installed_pv_mw: float, factor_km2_per_mw: float) -> float:
    """How many times larger the golf area is than the land equivalent of the
    installed PV capacity."""
    if installed_pv_mw <= 0:
        raise ValidationError("ratio undefined for zero installed capacity")
    return golf_area_km2 / (installed_pv_mw * factor_km2_per_mw)
