"""Report emission: CSV tables, JSON bundle, and standalone SVG plots.

All writers are deterministic: identical bundles produce byte-identical
files. Floats are rendered with repr (shortest round-trip form), rows keep
the bundle's ordering, and newlines are always "\n".
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .runner import ReportBundle

RD_CSV_HEADER = "codec,target_bpp,achieved_bpp,quality,metric,mean,std,n,flags"
SIMILARITY_CSV_HEADER = "codec,tap_id,mean,std"
RAW_CSV_HEADER = "codec,target_bpp,tile_id,metric,value"

SVG_WIDTH = 800
SVG_HEIGHT = 600
_MARGIN_LEFT = 80.0
_MARGIN_RIGHT = 24.0
_MARGIN_TOP = 48.0
_MARGIN_BOTTOM = 64.0
_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)


def _fmt(value: float) -> str:
    """CSV cell for a float: repr, with infinities spelled 'inf'."""
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def _csv_field(value: str) -> str:
    if any(ch in value for ch in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def render_rd_csv(bundle: ReportBundle) -> str:
    lines = [RD_CSV_HEADER]
    for point in bundle.rd_points:
        flags = "|".join(point.flags)
        for metric, (mean, std) in point.aggregates.items():
            lines.append(
                ",".join(
                    (
                        _csv_field(point.codec_id),
                        _fmt(point.target_bpp),
                        _fmt(point.achieved_bpp),
                        _fmt(point.quality),
                        _csv_field(metric),
                        _fmt(mean),
                        _fmt(std),
                        str(point.tile_count),
                        _csv_field(flags),
                    )
                )
            )
    return "\n".join(lines) + "\n"


def render_similarity_csv(bundle: ReportBundle) -> str:
    lines = [SIMILARITY_CSV_HEADER]
    for row in bundle.similarity:
        lines.append(
            ",".join(
                (_csv_field(row.codec_id), _csv_field(row.tap_id), _fmt(row.mean), _fmt(row.std))
            )
        )
    return "\n".join(lines) + "\n"


def render_raw_csv(bundle: ReportBundle) -> str:
    lines = [RAW_CSV_HEADER]
    for codec, target, tile_id, metric, value in bundle.raw:
        lines.append(
            ",".join(
                (
                    _csv_field(codec),
                    _fmt(target),
                    _csv_field(tile_id),
                    _csv_field(metric),
                    _fmt(value),
                )
            )
        )
    return "\n".join(lines) + "\n"


def render_timing_json(bundle: ReportBundle) -> str:
    payload = {
        "metadata": dict(bundle.metadata),
        "timing": [t.to_json_dict() for t in bundle.timing],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def render_bundle_json(bundle: ReportBundle) -> str:
    return json.dumps(bundle.to_json_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# SVG


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if count < 2:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _expand(lo: float, hi: float) -> tuple[float, float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Canvas:
    """Fixed-viewport SVG builder with linear data-to-pixel mapping."""

    def __init__(self, title: str, x_label: str, y_label: str,
                 x_range: tuple[float, float], y_range: tuple[float, float]):
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" '
            f'height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
            f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
            f'<text x="{SVG_WIDTH / 2:.2f}" y="24" font-size="18" text-anchor="middle" '
            f'font-family="sans-serif">{_esc(title)}</text>',
        ]
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.px0 = _MARGIN_LEFT
        self.px1 = SVG_WIDTH - _MARGIN_RIGHT
        self.py0 = SVG_HEIGHT - _MARGIN_BOTTOM
        self.py1 = _MARGIN_TOP
        self._axes(x_label, y_label)

    def x(self, v: float) -> float:
        return self.px0 + (v - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def y(self, v: float) -> float:
        return self.py0 + (v - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)

    def _axes(self, x_label: str, y_label: str) -> None:
        p = self.parts
        p.append(
            f'<g stroke="black" stroke-width="1">'
            f'<line x1="{self.px0:.2f}" y1="{self.py0:.2f}" x2="{self.px1:.2f}" y2="{self.py0:.2f}"/>'
            f'<line x1="{self.px0:.2f}" y1="{self.py0:.2f}" x2="{self.px0:.2f}" y2="{self.py1:.2f}"/>'
            f"</g>"
        )
        for tick in _ticks(self.x0, self.x1):
            px = self.x(tick)
            p.append(
                f'<line x1="{px:.2f}" y1="{self.py0:.2f}" x2="{px:.2f}" '
                f'y2="{self.py0 + 6:.2f}" stroke="black"/>'
                f'<text x="{px:.2f}" y="{self.py0 + 22:.2f}" font-size="12" '
                f'text-anchor="middle" font-family="sans-serif">{tick:.4g}</text>'
            )
        for tick in _ticks(self.y0, self.y1):
            py = self.y(tick)
            p.append(
                f'<line x1="{self.px0 - 6:.2f}" y1="{py:.2f}" x2="{self.px0:.2f}" '
                f'y2="{py:.2f}" stroke="black"/>'
                f'<text x="{self.px0 - 10:.2f}" y="{py + 4:.2f}" font-size="12" '
                f'text-anchor="end" font-family="sans-serif">{tick:.4g}</text>'
            )
        p.append(
            f'<text x="{(self.px0 + self.px1) / 2:.2f}" y="{SVG_HEIGHT - 16}" font-size="14" '
            f'text-anchor="middle" font-family="sans-serif">{_esc(x_label)}</text>'
        )
        p.append(
            f'<text x="20" y="{(self.py0 + self.py1) / 2:.2f}" font-size="14" '
            f'text-anchor="middle" font-family="sans-serif" '
            f'transform="rotate(-90 20 {(self.py0 + self.py1) / 2:.2f})">{_esc(y_label)}</text>'
        )

    def legend(self, names: Sequence[str]) -> None:
        for i, name in enumerate(names):
            color = _PALETTE[i % len(_PALETTE)]
            lx = self.px1 - 190
            ly = self.py1 + 8 + 18 * i
            self.parts.append(
                f'<line x1="{lx:.2f}" y1="{ly:.2f}" x2="{lx + 24:.2f}" y2="{ly:.2f}" '
                f'stroke="{color}" stroke-width="2"/>'
                f'<text x="{lx + 30:.2f}" y="{ly + 4:.2f}" font-size="12" '
                f'font-family="sans-serif">{_esc(name)}</text>'
            )

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def render_metric_svg(bundle: ReportBundle, metric: str) -> str:
    """Rate-distortion curve for one metric: one polyline per codec."""
    series: dict[str, list[tuple[float, float]]] = {}
    for point in bundle.rd_points:
        if metric in point.aggregates:
            series.setdefault(point.codec_id, []).append(
                (point.achieved_bpp, point.aggregates[metric][0])
            )
    if not series:
        raise ValueError(f"bundle has no rate-distortion data for metric {metric!r}")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    canvas = _Canvas(
        title=f"{metric} vs bitrate",
        x_label="achieved bits per pixel",
        y_label=metric,
        x_range=_expand(min(xs), max(xs)),
        y_range=_expand(min(ys), max(ys)),
    )
    for i, (codec, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{canvas.x(x):.2f},{canvas.y(y):.2f}" for x, y in pts)
        canvas.parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>'
        )
        for x, y in pts:
            canvas.parts.append(
                f'<circle cx="{canvas.x(x):.2f}" cy="{canvas.y(y):.2f}" r="3" fill="{color}"/>'
            )
    canvas.legend(list(series))
    return canvas.finish()


def render_similarity_svg(bundle: ReportBundle) -> str:
    """Per-tap cosine-similarity whiskers (mean +/- std), grouped by tap."""
    if not bundle.similarity:
        raise ValueError("bundle has no similarity data")
    taps = list(dict.fromkeys(row.tap_id for row in bundle.similarity))
    codecs = list(dict.fromkeys(row.codec_id for row in bundle.similarity))
    lows = [row.mean - row.std for row in bundle.similarity]
    highs = [row.mean + row.std for row in bundle.similarity]
    canvas = _Canvas(
        title="feature similarity by tap",
        x_label="tap",
        y_label="cosine similarity",
        x_range=(-0.5, len(taps) - 0.5),
        y_range=_expand(min(lows), max(highs)),
    )
    # x tick labels from _Canvas are numeric; overwrite with tap names
    for i, tap in enumerate(taps):
        px = canvas.x(i)
        canvas.parts.append(
            f'<rect x="{px - 40:.2f}" y="{canvas.py0 + 10:.2f}" width="80" height="16" fill="white"/>'
            f'<text x="{px:.2f}" y="{canvas.py0 + 22:.2f}" font-size="12" text-anchor="middle" '
            f'font-family="sans-serif">{_esc(tap)}</text>'
        )
    group_width = 0.6
    for row in bundle.similarity:
        ti = taps.index(row.tap_id)
        ci = codecs.index(row.codec_id)
        color = _PALETTE[ci % len(_PALETTE)]
        if len(codecs) > 1:
            offset = -group_width / 2 + group_width * ci / (len(codecs) - 1)
        else:
            offset = 0.0
        px = canvas.x(ti + offset)
        y_lo = canvas.y(row.mean - row.std)
        y_hi = canvas.y(row.mean + row.std)
        y_mid = canvas.y(row.mean)
        canvas.parts.append(
            f'<line x1="{px:.2f}" y1="{y_lo:.2f}" x2="{px:.2f}" y2="{y_hi:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<line x1="{px - 5:.2f}" y1="{y_lo:.2f}" x2="{px + 5:.2f}" y2="{y_lo:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<line x1="{px - 5:.2f}" y1="{y_hi:.2f}" x2="{px + 5:.2f}" y2="{y_hi:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<circle cx="{px:.2f}" cy="{y_mid:.2f}" r="4" fill="{color}"/>'
        )
    canvas.legend(codecs)
    return canvas.finish()


def emit_reports(bundle: ReportBundle, out_dir: str | Path, dump_raw: bool = False) -> list[Path]:
    """Write every report file for the bundle into out_dir; returns the paths.

    Always writes rd_points.csv, similarity.csv, timing.json and bundle.json
    (CSVs are headers-only when the bundle has no rows). SVG plots are only
    written for data that exists.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def write(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)

    write("rd_points.csv", render_rd_csv(bundle))
    write("similarity.csv", render_similarity_csv(bundle))
    write("timing.json", render_timing_json(bundle))
    write("bundle.json", render_bundle_json(bundle))
    if dump_raw:
        write("raw.csv", render_raw_csv(bundle))

    metrics = list(dict.fromkeys(m for p in bundle.rd_points for m in p.aggregates))
    for metric in metrics:
        write(f"rd_{metric}.svg", render_metric_svg(bundle, metric))
    if bundle.similarity:
        write("similarity.svg", render_similarity_svg(bundle))
    return written
