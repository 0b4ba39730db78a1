"""Report writers: CSV tables, placement GeoJSON, SVG bar charts.

All outputs are deterministic: fixed 6-decimal formatting, stable sort keys,
no timestamps. Files are staged to a temporary directory and moved into
place atomically, so a failing write never leaves partial outputs.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import tempfile

from .aggregate import CountryStats, PotentialComparison, TECH_PV
from .errors import ValidationError

LOG_AXIS_FACTOR = 10.0  # reference > factor * potential switches a country to log scale


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_country_stats_csv(path: str, stats: list[CountryStats]) -> None:
    lines = ["iso3,name,courses,total_area_km2,mean_area_km2,land_share_pct"]
    for s in stats:
        lines.append(",".join([
            s.iso3,
            '"%s"' % s.name.replace('"', '""'),
            str(s.course_count),
            _fmt(s.total_area_km2),
            _fmt(s.mean_area_km2),
            _fmt(s.land_share * 100.0),
        ]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_unassigned_csv(path: str, unassigned: CountryStats) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("courses,total_area_km2\n")
        fh.write(f"{unassigned.course_count},{_fmt(unassigned.total_area_km2)}\n")


def write_assignments_csv(path: str, assignments: dict[str, str]) -> None:
    lines = ["course_id,iso3"]
    for cid in sorted(assignments):
        lines.append(f"{cid},{assignments[cid]}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_potential_csv(path: str, comparisons: list[PotentialComparison]) -> None:
    """Comparison table; absent reference values stay blank, never zero."""
    lines = ["iso3,technology,scenario,potential_mw,installed_2023_mw,projected_2028_mw,meets_2028"]
    for c in comparisons:
        lines.append(",".join([
            c.iso3,
            c.technology,
            c.scenario,
            _fmt(c.potential_mw),
            _fmt(c.installed_2023_mw) if c.installed_2023_mw is not None else "",
            _fmt(c.projected_2028_mw) if c.projected_2028_mw is not None else "",
            "" if c.meets_2028 is None else ("true" if c.meets_2028 else "false"),
        ]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_geojson(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# SVG charts
# ---------------------------------------------------------------------------

_CHART_W = 1060
_CHART_H = 420
_MARGIN_L = 70
_MARGIN_B = 60
_MARGIN_T = 40
_PLOT_W = _CHART_W - _MARGIN_L - 20
_PLOT_H = _CHART_H - _MARGIN_T - _MARGIN_B

_BAR_COLORS = ["#2a9d8f", "#7fb069", "#e9c46a", "#f4a261", "#e76f51", "#9b5de5"]
_REF_COLORS = {"2023": "#333333", "2028": "#888888"}


def _svg_header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CHART_W}" height="{_CHART_H}" '
        f'viewBox="0 0 {_CHART_W} {_CHART_H}" font-family="sans-serif">',
        f'<title>{title}</title>',
        f'<text x="{_MARGIN_L}" y="24" font-size="16">{title}</text>',
    ]


def _bar(x: float, y: float, w: float, h: float, color: str, extra: str = "") -> str:
    return (f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
            f'fill="{color}"{extra}/>')


def _scaled_height(value: float, vmax: float, log: bool) -> float:
    """Bar height in px; log groups map [1, vmax] onto the plot height."""
    if value <= 0 or vmax <= 0:
        return 0.0
    if not log:
        return _PLOT_H * value / vmax
    top = math.log10(max(vmax, 10.0))
    return _PLOT_H * max(0.0, math.log10(max(value, 1.0))) / top


def _grouped_bar_chart(title: str, groups: list[dict]) -> str:
    """Render one grouped bar chart.

    ``groups`` is a list of {label, bars: [(name, value, color)],
    refs: [(name, value)], log: bool}. Groups flagged ``log`` scale their own
    bars logarithmically and are marked with a dagger in the axis label.
    """
    parts = _svg_header(title)
    vmax = 1.0
    for g in groups:
        if not g["log"]:
            vmax = max([vmax] + [v for _, v, _ in g["bars"]] + [v for _, v in g["refs"]])
    n = max(1, len(groups))
    group_w = _PLOT_W / n
    base_y = _MARGIN_T + _PLOT_H

    parts.append(f'<line x1="{_MARGIN_L}" y1="{base_y}" x2="{_MARGIN_L + _PLOT_W}" y2="{base_y}" stroke="#000"/>')
    parts.append(f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" y2="{base_y}" stroke="#000"/>')
    for frac in (0.25, 0.5, 0.75, 1.0):
        y = base_y - _PLOT_H * frac
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{y:.2f}" x2="{_MARGIN_L}" y2="{y:.2f}" stroke="#000"/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{vmax * frac:.0f}</text>')

    for gi, g in enumerate(groups):
        gx = _MARGIN_L + gi * group_w
        scale_note = "log" if g["log"] else "linear"
        parts.append(f'<g data-group="{g["label"]}" data-scale="{scale_note}">')
        local_max = vmax
        if g["log"]:
            local_max = max([1.0] + [v for _, v, _ in g["bars"]] + [v for _, v in g["refs"]])
        nbars = max(1, len(g["bars"]))
        bw = group_w * 0.7 / nbars
        for bi, (bname, value, color) in enumerate(g["bars"]):
            h = _scaled_height(value, local_max, g["log"])
            x = gx + group_w * 0.15 + bi * bw
            parts.append(_bar(x, base_y - h, bw * 0.9, h, color,
                              extra=f' data-name="{bname}" data-value="{value:.3f}"'))
        for rname, value in g["refs"]:
            h = _scaled_height(value, local_max, g["log"])
            y = base_y - h
            color = _REF_COLORS.get(rname, "#000")
            parts.append(f'<line x1="{gx + group_w * 0.1:.2f}" y1="{y:.2f}" '
                         f'x2="{gx + group_w * 0.9:.2f}" y2="{y:.2f}" '
                         f'stroke="{color}" stroke-width="2" stroke-dasharray="5,3"/>')
        label = g["label"] + ("†" if g["log"] else "")
        parts.append(f'<text x="{gx + group_w / 2:.2f}" y="{base_y + 16}" font-size="11" '
                     f'text-anchor="middle">{label}</text>')
        parts.append("</g>")

    if any(g["log"] for g in groups):
        parts.append(f'<text x="{_MARGIN_L}" y="{_CHART_H - 12}" font-size="10">'
                     f'† bars drawn on a logarithmic scale</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_area_chart(stats: list[CountryStats], top_n: int) -> str:
    groups = []
    for s in stats[:top_n]:
        groups.append({
            "label": s.iso3,
            "bars": [("course area km2", s.total_area_km2, _BAR_COLORS[0])],
            "refs": [],
            "log": False,
        })
    return _grouped_bar_chart("Golf course area by country (km2)", groups)


def render_potential_chart(comparisons: list[PotentialComparison], technology: str,
                           stats: list[CountryStats], top_n: int) -> str:
    """Potential vs installed/projected capacity, countries in descending
    order of golf-course area. A country whose reference capacity exceeds
    ten times its largest potential is drawn on a logarithmic scale."""
    tech_name = "utility-scale PV" if technology == TECH_PV else "onshore wind"
    by_iso: dict[str, list[PotentialComparison]] = {}
    for c in comparisons:
        if c.technology == technology and not c.iso3.startswith("TOP"):
            by_iso.setdefault(c.iso3, []).append(c)
    order = [s.iso3 for s in sorted(stats[:top_n], key=lambda s: (-s.total_area_km2, s.iso3))]
    groups = []
    for i, iso in enumerate(order):
        rows = sorted(by_iso.get(iso, []), key=lambda c: float(c.scenario))
        bars = [(f"{tech_name} {c.scenario}", c.potential_mw, _BAR_COLORS[j % len(_BAR_COLORS)])
                for j, c in enumerate(rows)]
        refs = []
        if rows:
            if rows[0].installed_2023_mw is not None:
                refs.append(("2023", rows[0].installed_2023_mw))
            if rows[0].projected_2028_mw is not None:
                refs.append(("2028", rows[0].projected_2028_mw))
        max_potential = max([c.potential_mw for c in rows], default=0.0)
        max_ref = max([v for _, v in refs], default=0.0)
        log = max_potential > 0 and max_ref > LOG_AXIS_FACTOR * max_potential
        groups.append({"label": iso, "bars": bars, "refs": refs, "log": log})
    return _grouped_bar_chart(f"Potential {tech_name} capacity on golf course land (MW)", groups)


# ---------------------------------------------------------------------------
# Atomic output staging
# ---------------------------------------------------------------------------

class OutputStage:
    """Stage files in a temp dir, then move them into the output directory.

    The output directory's writability is checked up front; nothing is
    written to it until :meth:`commit`.
    """

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ValidationError(f"output directory not writable: {out_dir}")
        self._tmp = tempfile.mkdtemp(prefix=".stage-", dir=out_dir)
        self._names: list[str] = []

    def path(self, name: str) -> str:
        self._names.append(name)
        return os.path.join(self._tmp, name)

    def commit(self) -> list[str]:
        final = []
        for name in self._names:
            src = os.path.join(self._tmp, name)
            dst = os.path.join(self.out_dir, name)
            os.replace(src, dst)
            final.append(dst)
        shutil.rmtree(self._tmp, ignore_errors=True)
        return final

    def abort(self) -> None:
        shutil.rmtree(self._tmp, ignore_errors=True)
