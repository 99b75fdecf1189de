"""Desk-scale aggregation: event-count tables, stylized-stat comparisons,
fill-ratio tables, and self-contained SVG histograms/line/bar plots.

SVG is hand-emitted with fixed float formatting so artifacts are
byte-for-byte reproducible from the run fingerprint.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import EventType

__all__ = ["ReportBundle", "emit_event_count_table", "emit_stats_table",
           "emit_ratio_table", "svg_histogram", "svg_lines", "svg_bars"]

_EVENT_LABELS = [et.label for et in EventType]


@dataclass
class ReportBundle:
    out_dir: Path
    fingerprint: dict
    artifacts: list[str] = field(default_factory=list)

    def register(self, path: Path) -> Path:
        self.artifacts.append(str(path.relative_to(self.out_dir)))
        return path

    def write_manifest(self) -> Path:
        manifest = self.out_dir / "manifest.json"
        manifest.write_text(json.dumps(
            {"fingerprint": self.fingerprint, "artifacts": sorted(self.artifacts)},
            indent=2, sort_keys=True))
        return manifest


def emit_event_count_table(counts_by_asset: dict[str, dict[str, int]],
                           path: str | Path,
                           probabilities: dict[str, float] | None = None) -> None:
    """12-row count table, one column per asset, optional pooled probability."""
    assets = list(counts_by_asset)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["event_type"] + assets + (["probability"] if probabilities else [])
        w.writerow(header)
        for lab in _EVENT_LABELS:
            row = [lab] + [counts_by_asset[a].get(lab, 0) for a in assets]
            if probabilities:
                row.append(f"{probabilities.get(lab, 0.0):.5f}")
            w.writerow(row)


def emit_stats_table(stats_by_asset: dict[str, dict[str, dict]], path: str | Path) -> None:
    """Stylized-statistics comparison; rows are metric x {real, sim}."""
    assets = list(stats_by_asset)
    metrics = ["n_jump_sizes", "volatility", "abs_skewness", "excess_kurtosis", "hurst"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "source"] + assets)
        for metric in metrics:
            for source in ("real", "sim"):
                row = [metric, source]
                any_val = False
                for a in assets:
                    val = stats_by_asset[a].get(source, {}).get(metric)
                    row.append("" if val is None else f"{val:.6g}")
                    any_val = any_val or val is not None
                if any_val:
                    w.writerow(row)


def emit_ratio_table(ratios_by_asset: dict[str, dict[str, float | None]],
                     path: str | Path) -> None:
    """Adverse:non-adverse fill ratios, real vs simulated streams."""
    assets = []
    for a, d in ratios_by_asset.items():
        if d:
            assets.append(a)
        else:
            warnings.warn(f"asset {a} has no fill-ratio data; row omitted")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source"] + assets)
        for source in ("real", "sim"):
            row = [source]
            for a in assets:
                val = ratios_by_asset[a].get(source)
                row.append("" if val is None else f"{val:.4f}")
            w.writerow(row)


# ---- SVG ----------------------------------------------------------------------

_W, _H, _PAD = 640, 400, 48


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _svg_open(title: str, width=_W, height=_H) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>',
    ]


def _axes(parts: list[str], width=_W, height=_H) -> None:
    parts.append(
        f'<rect x="{_PAD}" y="{_PAD}" width="{width - 2 * _PAD}" '
        f'height="{height - 2 * _PAD}" fill="none" stroke="black" stroke-width="1"/>'
    )


def svg_histogram(values, path: str | Path, bins: int = 20, title: str = "") -> None:
    values = np.asarray(values, dtype=float)
    parts = _svg_open(title)
    _axes(parts)
    if len(values) == 0:
        parts.append(f'<text x="{_W / 2}" y="{_H / 2}" text-anchor="middle" '
                     f'font-family="monospace" font-size="12">no data</text>')
    else:
        counts, edges = np.histogram(values, bins=bins)
        cmax = max(counts.max(), 1)
        plot_w, plot_h = _W - 2 * _PAD, _H - 2 * _PAD
        for i, c in enumerate(counts):
            x0 = _PAD + plot_w * i / bins
            bh = plot_h * c / cmax
            parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(_PAD + plot_h - bh)}" '
                f'width="{_fmt(plot_w / bins)}" height="{_fmt(bh)}" '
                f'fill="steelblue" stroke="black" stroke-width="0.5"/>'
            )
        parts.append(f'<text x="{_PAD}" y="{_H - 8}" font-family="monospace" '
                     f'font-size="10">min={edges[0]:.6g} max={edges[-1]:.6g} n={len(values)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def svg_lines(series: list[tuple[np.ndarray, np.ndarray, str]],
              path: str | Path, title: str = "") -> None:
    """Stacked line panels: one (x, y, label) triple per panel."""
    n = max(len(series), 1)
    panel_h = 160
    height = _PAD + n * panel_h + _PAD
    parts = _svg_open(title, height=height)
    colors = ["steelblue", "firebrick", "seagreen", "darkorange", "purple"]
    for pi, (x, y, label) in enumerate(series):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        top = _PAD + pi * panel_h
        plot_w, plot_h = _W - 2 * _PAD, panel_h - 24
        parts.append(f'<rect x="{_PAD}" y="{top}" width="{plot_w}" height="{plot_h}" '
                     f'fill="none" stroke="black" stroke-width="1"/>')
        if len(x) >= 2:
            xr = x.max() - x.min() or 1.0
            yr = y.max() - y.min() or 1.0
            pts = " ".join(
                f"{_fmt(_PAD + plot_w * (xi - x.min()) / xr)},"
                f"{_fmt(top + plot_h - plot_h * (yi - y.min()) / yr)}"
                for xi, yi in zip(x, y)
            )
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{colors[pi % len(colors)]}" stroke-width="1"/>')
        parts.append(f'<text x="{_PAD + 4}" y="{top + 14}" font-family="monospace" '
                     f'font-size="11">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def svg_bars(labels: list[str], values, path: str | Path, title: str = "") -> None:
    values = np.asarray(values, dtype=float)
    parts = _svg_open(title)
    _axes(parts)
    if len(values):
        vmax = max(values.max(), 1e-12)
        plot_w, plot_h = _W - 2 * _PAD, _H - 2 * _PAD
        n = len(values)
        for i, (lab, v) in enumerate(zip(labels, values)):
            x0 = _PAD + plot_w * (i + 0.15) / n
            bw = plot_w * 0.7 / n
            bh = plot_h * v / vmax
            parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(_PAD + plot_h - bh)}" '
                f'width="{_fmt(bw)}" height="{_fmt(bh)}" fill="steelblue"/>'
            )
            parts.append(
                f'<text x="{_fmt(x0 + bw / 2)}" y="{_H - _PAD + 16}" text-anchor="middle" '
                f'font-family="monospace" font-size="10">{lab}</text>'
            )
            parts.append(
                f'<text x="{_fmt(x0 + bw / 2)}" y="{_fmt(_PAD + plot_h - bh - 4)}" '
                f'text-anchor="middle" font-family="monospace" font-size="10">{v:.6g}</text>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
