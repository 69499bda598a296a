"""SVG figures and the Markdown cross-project report.

SVG is written by hand so output is byte-stable across machines: every
coordinate is formatted with two decimals and elements come out in input order.
"""

from __future__ import annotations

import math
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .anomaly import AnomalySet
from .cluster import Clustering, ClusterTheme
from .ingest import RepoSummary, ResolutionRecord

PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)
NEUTRAL = "#8da0b3"
ANOMALY_RED = "#d62728"
MAX_TICKS = 10

MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 30, 50, 70


class ReportError(ValueError):
    pass


def nice_ticks(lo: float, hi: float, max_ticks: int = MAX_TICKS, min_step: float = 0.0) -> list[float]:
    """Round tick values covering [lo, hi] with a 1/2/5 x 10^n step.

    The first and last ticks bracket the data, so they double as the axis range.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("tick range must be finite")
    if hi < lo:
        lo, hi = hi, lo
    # Spans lost in rounding (including subnormal ones) are drawn as a single value.
    if hi - lo <= max(1e-12 * max(abs(lo), abs(hi)), 1e-300):
        pad = max(abs(lo) * 0.1, max(min_step, 1.0))
        lo, hi = lo - pad, hi + pad
    exponent = math.floor(math.log10((hi - lo) / max_ticks)) - 1
    while True:
        for mantissa in (1, 2, 5):
            step = mantissa * 10.0**exponent
            if step < min_step:
                continue
            digits = 2 - exponent
            first = math.floor(lo / step)
            last = math.ceil(hi / step)
            # Division and rounding can each land a tick just inside the data.
            if _clean(first * step, digits) > lo:
                first -= 1
            if _clean(last * step, digits) < hi:
                last += 1
            if last - first + 1 <= max_ticks:
                return [_clean(i * step, digits) for i in range(first, last + 1)]
        exponent += 1


def _clean(x: float, ndigits: int) -> float:
    # Two digits finer than the step: drops float noise like 0.30000000000000004.
    y = round(x, ndigits)
    return 0.0 if y == 0 else y


def _fmt_tick(x: float) -> str:
    if x == int(x):
        return str(int(x))
    return f"{x:.10g}"


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Svg:
    def __init__(self, width: int, height: int, title: str):
        if width <= 0 or height <= 0:
            raise ReportError("figure dimensions must be positive")
        self.width, self.height = width, height
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
            f"<title>{escape(title)}</title>",
            f'<rect class="background" x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
            f'<text class="title" x="{_f(width / 2)}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
        ]
        self.x0, self.x1 = MARGIN_LEFT, width - MARGIN_RIGHT
        self.y0, self.y1 = height - MARGIN_BOTTOM, MARGIN_TOP  # y0 is the bottom edge

    def add(self, element: str) -> None:
        self.parts.append(element)

    def text(self, x: float, y: float, content: str, cls: str, anchor: str = "middle", extra: str = "") -> None:
        self.add(
            f'<text class="{cls}" x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(content)}</text>'
        )

    def frame(self, x_label: str, y_label: str) -> None:
        self.add(
            f'<line class="axis" x1="{_f(self.x0)}" y1="{_f(self.y0)}" x2="{_f(self.x1)}" y2="{_f(self.y0)}" stroke="#333333"/>'
        )
        self.add(
            f'<line class="axis" x1="{_f(self.x0)}" y1="{_f(self.y0)}" x2="{_f(self.x0)}" y2="{_f(self.y1)}" stroke="#333333"/>'
        )
        self.text((self.x0 + self.x1) / 2, self.height - 20, x_label, "axis-label")
        cy = (self.y0 + self.y1) / 2
        self.text(20, cy, y_label, "axis-label", extra=f' transform="rotate(-90 20 {_f(cy)})"')

    def x_tick(self, x: float, label: str) -> None:
        self.add(f'<line class="tick" x1="{_f(x)}" y1="{_f(self.y0)}" x2="{_f(x)}" y2="{_f(self.y0 + 5)}" stroke="#333333"/>')
        self.text(x, self.y0 + 20, label, "tick-label")

    def y_tick(self, y: float, label: str) -> None:
        self.add(f'<line class="tick" x1="{_f(self.x0 - 5)}" y1="{_f(y)}" x2="{_f(self.x0)}" y2="{_f(y)}" stroke="#333333"/>')
        self.add(f'<line class="grid" x1="{_f(self.x0)}" y1="{_f(y)}" x2="{_f(self.x1)}" y2="{_f(y)}" stroke="#e5e5e5"/>')
        self.text(self.x0 - 8, y + 4, label, "tick-label", anchor="end")

    def no_data(self) -> None:
        self.text((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2, "no data", "no-data", extra=' fill="#999999"')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _scale(lo: float, hi: float, out_lo: float, out_hi: float):
    span = hi - lo if hi != lo else 1.0
    return lambda v: out_lo + (v - lo) / span * (out_hi - out_lo)


def _epoch(ts: datetime) -> float:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def _time_ticks(lo: float, hi: float) -> tuple[list[float], list[str]]:
    """Tick positions (epoch seconds) and labels for a time axis."""
    day = 86400.0
    start = datetime.fromtimestamp(lo, timezone.utc)
    end = datetime.fromtimestamp(hi, timezone.utc)
    if (hi - lo) >= 2 * 365 * day:
        years = nice_ticks(start.year, end.year + 1, min_step=1.0)
        positions = [_epoch(datetime(int(y), 1, 1, tzinfo=timezone.utc)) for y in years]
        return positions, [str(int(y)) for y in years]
    days = nice_ticks(lo / day, hi / day, min_step=1.0)
    positions = [d * day for d in days]
    labels = [datetime.fromtimestamp(p, timezone.utc).strftime("%Y-%m-%d") for p in positions]
    return positions, labels


def render_resolution_scatter(
    records: Sequence[ResolutionRecord],
    anomalies: AnomalySet | None,
    title: str = "Bug resolution times (anomalies in red)",
    width: int = 900,
    height: int = 600,
) -> str:
    """Created date vs. resolution days; anomalous bugs drawn red."""
    svg = _Svg(width, height, title)
    svg.frame("Created (UTC)", "Resolution time (days)")
    if not records:
        svg.no_data()
        return svg.render()
    flagged = set(anomalies.anomalous_ids) if anomalies is not None else set()
    xs = [_epoch(r.created) for r in records]
    ys = [r.resolution_days for r in records]
    x_pos, x_labels = _time_ticks(min(xs), max(xs))
    y_ticks = nice_ticks(min(0.0, min(ys)), max(ys))
    sx = _scale(x_pos[0], x_pos[-1], svg.x0, svg.x1)
    sy = _scale(y_ticks[0], y_ticks[-1], svg.y0, svg.y1)
    for p, label in zip(x_pos, x_labels):
        svg.x_tick(sx(p), label)
    for t in y_ticks:
        svg.y_tick(sy(t), _fmt_tick(t))
    svg.add('<g class="points">')
    for r, x, y in zip(records, xs, ys):
        if r.bug_id in flagged:
            cls, fill, rad = "point anomaly", ANOMALY_RED, 3.0
        else:
            cls, fill, rad = "point", NEUTRAL, 2.0
        svg.add(
            f'<circle class="{cls}" cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="{rad:.1f}" fill="{fill}" '
            f"data-bug={quoteattr(r.bug_id)}/>"
        )
    svg.add("</g>")
    n_anom = sum(r.bug_id in flagged for r in records)
    svg.add(f'<rect class="legend-swatch" x="{_f(svg.x1 - 170)}" y="{_f(svg.y1)}" width="10" height="10" fill="{NEUTRAL}"/>')
    svg.text(svg.x1 - 155, svg.y1 + 9, f"normal ({len(records) - n_anom})", "legend", anchor="start")
    svg.add(f'<rect class="legend-swatch" x="{_f(svg.x1 - 170)}" y="{_f(svg.y1 + 16)}" width="10" height="10" fill="{ANOMALY_RED}"/>')
    svg.text(svg.x1 - 155, svg.y1 + 25, f"anomaly ({n_anom})", "legend", anchor="start")
    return svg.render()


def render_monthly_bars(
    series: Sequence[tuple[str, int]],
    title: str = "Monthly anomaly counts",
    width: int = 900,
    height: int = 600,
) -> str:
    """One bar per month, zero months included, integer y ticks."""
    svg = _Svg(width, height, title)
    svg.frame("Month", "Anomalies")
    if not series:
        svg.no_data()
        return svg.render()
    top = max(c for _, c in series)
    y_ticks = nice_ticks(0.0, float(max(top, 1)), min_step=1.0)
    sy = _scale(y_ticks[0], y_ticks[-1], svg.y0, svg.y1)
    for t in y_ticks:
        svg.y_tick(sy(t), _fmt_tick(t))
    n = len(series)
    slot = (svg.x1 - svg.x0) / n
    bar_w = max(slot * 0.8, 0.5)
    label_every = max(1, math.ceil(n / 12))
    svg.add('<g class="bars">')
    for i, (month, count) in enumerate(series):
        x = svg.x0 + i * slot + (slot - bar_w) / 2
        y = sy(count)
        svg.add(
            f'<rect class="bar" x="{_f(x)}" y="{_f(y)}" width="{_f(bar_w)}" height="{_f(svg.y0 - y)}" '
            f'fill="{ANOMALY_RED}" data-month="{month}" data-count="{count}"/>'
        )
    svg.add("</g>")
    for i, (month, _) in enumerate(series):
        if i % label_every == 0:
            svg.x_tick(svg.x0 + (i + 0.5) * slot, month)
    return svg.render()


def render_cluster_scatter(
    embedding: np.ndarray,
    clustering: Clustering,
    title: str = "TF-IDF clustering of anomalous summaries",
    width: int = 900,
    height: int = 600,
) -> str:
    """2-D embedding coloured by cluster, with a size legend."""
    points = np.asarray(embedding, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ReportError("embedding must have shape (n, 2)")
    if points.shape[0] != len(clustering.assignments):
        raise ReportError(
            f"embedding has {points.shape[0]} rows but clustering has {len(clustering.assignments)}"
        )
    svg = _Svg(width, height, title)
    svg.frame("PC 1", "PC 2")
    sizes = clustering.sizes()
    if points.shape[0]:
        x_ticks = nice_ticks(float(points[:, 0].min()), float(points[:, 0].max()))
        y_ticks = nice_ticks(float(points[:, 1].min()), float(points[:, 1].max()))
        sx = _scale(x_ticks[0], x_ticks[-1], svg.x0, svg.x1)
        sy = _scale(y_ticks[0], y_ticks[-1], svg.y0, svg.y1)
        for t in x_ticks:
            svg.x_tick(sx(t), _fmt_tick(t))
        for t in y_ticks:
            svg.y_tick(sy(t), _fmt_tick(t))
        svg.add('<g class="points">')
        for (x, y), label in zip(points.tolist(), clustering.assignments.tolist()):
            svg.add(
                f'<circle class="point cluster-{label}" cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="3.0" '
                f'fill="{PALETTE[label % len(PALETTE)]}" fill-opacity="0.8"/>'
            )
        svg.add("</g>")
    else:
        svg.no_data()
    svg.add('<g class="legend">')
    for j, size in enumerate(sizes):
        y = svg.y1 + 16 * j
        svg.add(
            f'<g class="legend-entry"><rect class="legend-swatch" x="{_f(svg.x1 - 130)}" y="{_f(y)}" '
            f'width="10" height="10" fill="{PALETTE[j % len(PALETTE)]}"/>'
            f'<text class="legend" x="{_f(svg.x1 - 115)}" y="{_f(y + 9)}" text-anchor="start">'
            f"Cluster {j} (n={size})</text></g>"
        )
    svg.add("</g>")
    return svg.render()


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def summary_table(summaries: Sequence[RepoSummary]) -> str:
    lines = [
        "| Project | Total Reports | Duplicates | Duplicate Rate (%) |",
        "|---|---:|---:|---:|",
    ]
    for s in summaries:
        lines.append(f"| {_md_cell(s.project)} | {s.total_reports} | {s.duplicates} | {s.duplicate_rate_pct:.1f} |")
    return "\n".join(lines) + "\n"


def write_report(
    summaries: Sequence[RepoSummary],
    themes: Mapping[str, Sequence[ClusterTheme] | None],
    notes: Mapping[str, str] | None = None,
    anomaly_counts: Mapping[str, Mapping[str, int]] | None = None,
) -> str:
    """Markdown with the dataset summary table and the cluster keyword table.

    ``themes[project]`` is None when clustering was skipped; ``notes`` holds
    the reason shown in its place.
    """
    notes = notes or {}
    out = ["# Bug resolution anomaly report", "", "## Summary statistics", "", summary_table(summaries)]
    if anomaly_counts:
        out += [
            "## Resolution-time anomalies",
            "",
            "| Project | Resolved | Z-score flags | IQR flags | Anomalies |",
            "|---|---:|---:|---:|---:|",
        ]
        for s in summaries:
            c = anomaly_counts.get(s.project)
            if c is not None:
                out.append(f"| {_md_cell(s.project)} | {c['resolved']} | {c['z']} | {c['iqr']} | {c['anomalies']} |")
        out.append("")
    out += ["## Anomaly clusters", "", "| Project | Cluster | Keywords |", "|---|---|---|"]
    for s in summaries:
        project_themes = themes.get(s.project)
        name = _md_cell(s.project)
        if project_themes is None:
            reason = notes.get(s.project, "clustering skipped")
            out.append(f"| {name} | - | _{_md_cell(reason)}_ |")
            continue
        for t in project_themes:
            keywords = ", ".join(term for term, _ in t.top_terms)
            out.append(f"| {name} | Cluster {t.cluster_index} | {_md_cell(keywords)} |")
    return "\n".join(out) + "\n"


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
