"""Figure data as CSV plus minimal hand-written SVG (no plotting dependency)."""
from __future__ import annotations

import csv
from html import escape
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import FEATURE_NAMES, FeatureVector
from .vdev.layout import DeviceLayout, default_layout

QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
_BANDS = ("#f2f2f2", "#e3ecf7")


def scatter_rows(records, layout: DeviceLayout | None = None) -> list[tuple]:
    """(t_s, lba, op, sectors, partition, tag) per trace record."""
    layout = layout or default_layout()
    rows = []
    for r in records:
        p = layout.partition_of(r.lba, max(r.len, 1))
        rows.append((r.ts_ns / 1e9, r.lba, r.op, r.len, p.name if p else "", r.tag))
    return rows


def write_scatter_csv(rows: Sequence[tuple], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "lba", "op", "len", "partition", "tag"])
        for t, lba, op, n, part, tag in rows:
            w.writerow([f"{t:.9f}", lba, op, n, part, tag])


def _svg(width, height, body: list[str]) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
            + "\n".join(body) + "\n</svg>\n")


class _Frame:
    """Linear data-to-pixel mapping with a fixed margin."""

    def __init__(self, xr, yr, width=800, height=480, margin=56):
        self.w, self.h, self.m = width, height, margin
        self.x0, self.x1 = xr if xr[1] > xr[0] else (xr[0], xr[0] + 1)
        self.y0, self.y1 = yr if yr[1] > yr[0] else (yr[0], yr[0] + 1)

    def x(self, v):
        return self.m + (v - self.x0) / (self.x1 - self.x0) * (self.w - 2 * self.m)

    def y(self, v):
        return self.h - self.m - (v - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.m)

    def axes(self, xlabel, ylabel) -> list[str]:
        m, w, h = self.m, self.w, self.h
        out = [f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
               f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
               f'<text x="{w / 2}" y="{h - 12}" text-anchor="middle">{escape(xlabel)}</text>',
               f'<text x="14" y="{h / 2}" transform="rotate(-90 14 {h / 2})" '
               f'text-anchor="middle">{escape(ylabel)}</text>']
        for v in np.linspace(self.x0, self.x1, 5):
            out.append(f'<text x="{self.x(v):.1f}" y="{h - m + 14}" text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(self.y0, self.y1, 5):
            out.append(f'<text x="{m - 4}" y="{self.y(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
        return out


def _legend(names, x, y) -> list[str]:
    out = []
    for i, n in enumerate(names):
        c = _COLORS[i % len(_COLORS)]
        out.append(f'<rect x="{x}" y="{y + 14 * i - 8}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{x + 14}" y="{y + 14 * i + 1}">{escape(str(n))}</text>')
    return out


def scatter_svg(rows: Sequence[tuple], layout: DeviceLayout | None = None,
                max_points: int = 20000) -> str:
    """LBA against time, reads and writes in separate colours, partitions as bands."""
    layout = layout or default_layout()
    if rows:
        ts = [r[0] for r in rows]
        lbas = [r[1] for r in rows]
        yr = (min(lbas), max(lbas) + 1)
        xr = (0.0, max(ts))
    else:
        xr, yr = (0.0, 1.0), (0, layout.total_sectors)
    f = _Frame(xr, yr)
    body = []
    # only bands that overlap the plotted LBA range
    for i, p in enumerate(layout.partitions):
        lo, hi = max(p.start_lba, f.y0), min(p.end_lba, f.y1)
        if lo >= hi:
            continue
        top, bot = f.y(hi), f.y(lo)
        body.append(f'<rect x="{f.m}" y="{top:.1f}" width="{f.w - 2 * f.m}" '
                    f'height="{max(bot - top, 0.5):.1f}" fill="{_BANDS[i % 2]}"/>')
        body.append(f'<text x="{f.w - f.m - 4}" y="{top + 12:.1f}" text-anchor="end" '
                    f'fill="#666">{p.name}</text>')
    body += f.axes("time (s)", "LBA")
    step = max(1, len(rows) // max_points)
    for r in rows[::step]:
        c = _COLORS[0] if r[2] == "R" else _COLORS[1]
        body.append(f'<circle cx="{f.x(r[0]):.1f}" cy="{f.y(r[1]):.1f}" r="1.5" fill="{c}"/>')
    body += _legend(["read", "write"], f.w - f.m - 60, f.m - 30)
    return _svg(f.w, f.h, body)


def feature_quantiles(vectors: Iterable[FeatureVector]) -> list[dict]:
    """Per-class quantiles of every feature (distribution summaries)."""
    by_class: dict[str, list] = {}
    for v in vectors:
        by_class.setdefault(v.label, []).append(v.values())
    out = []
    for label in sorted(by_class):
        X = np.asarray(by_class[label], dtype=np.float64)
        for j, name in enumerate(FEATURE_NAMES):
            q = np.quantile(X[:, j], QUANTILES)
            out.append({"class": label, "feature": name, "n": len(X), "mean": float(X[:, j].mean()),
                        **{f"q{int(p * 100):02d}": float(x) for p, x in zip(QUANTILES, q)}})
    return out


def write_quantiles_csv(rows: list[dict], path) -> None:
    cols = ["class", "feature", "n", "mean"] + [f"q{int(p * 100):02d}" for p in QUANTILES]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in r.items()})


def read_epochs(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_convergence_csv(curves: Mapping[str, list[dict]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "epoch", "min", "mean", "max", "best_so_far"])
        for name, rows in curves.items():
            for r in rows:
                w.writerow([name, int(r["epoch"]), r["min"], r["mean"], r["max"], r["best_so_far"]])


def convergence_svg(curves: Mapping[str, list[dict]]) -> str:
    """Best-so-far cost per epoch, one line per run."""
    allx = [r["epoch"] for rows in curves.values() for r in rows] or [0, 1]
    f = _Frame((min(allx), max(allx)), (0.0, 100.0))
    body = f.axes("epoch", "best cost")
    for i, (name, rows) in enumerate(curves.items()):
        pts = " ".join(f"{f.x(r['epoch']):.1f},{f.y(r['best_so_far']):.1f}" for r in rows)
        body.append(f'<polyline points="{pts}" fill="none" stroke="{_COLORS[i % len(_COLORS)]}" '
                    f'stroke-width="1.5"/>')
    body += _legend(list(curves), f.w - f.m - 140, f.m - 30)
    return _svg(f.w, f.h, body)


def write_text(text: str, path) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
