"""Best-so-far curve aggregation and dependency-free SVG emission."""

from __future__ import annotations

import csv
import html
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from arrl.trainer import RunRecord, best_so_far

PANEL_W, PANEL_H = 420.0, 300.0
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64.0, 16.0, 36.0, 44.0
LEGEND_H = 22.0
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22")
AGG_HEADER = ["method", "gait", "env_step", "mean", "lo", "hi", "n_seeds"]


def curve_at(record: RunRecord, steps: np.ndarray) -> np.ndarray:
    """Best-so-far return at each step (NaN before the first finished episode)."""
    env_steps, best = record.env_steps, best_so_far(record.returns)
    idx = np.searchsorted(env_steps, steps, side="right") - 1
    out = np.full(len(steps), np.nan)
    ok = idx >= 0
    out[ok] = best[idx[ok]]
    return out


@dataclass
class Aggregate:
    method: str
    gait: str
    steps: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_seeds: int


def aggregate(records: list[RunRecord], n_points: int = 200) -> list[Aggregate]:
    """Mean and min/max envelope of best-so-far curves per (method, gait)."""
    groups: dict[tuple[str, str], list[RunRecord]] = defaultdict(list)
    for r in records:
        if r.episodes:
            groups[(r.method, r.gait)].append(r)
    out = []
    for (method, gait), recs in sorted(groups.items()):
        start = max(int(r.env_steps[0]) for r in recs)
        end = min(int(r.env_steps[-1]) for r in recs)
        steps = np.unique(np.linspace(start, max(end, start), n_points).round().astype(int))
        curves = np.stack([curve_at(r, steps) for r in recs])
        out.append(Aggregate(method, gait, steps, curves.mean(axis=0), curves.min(axis=0),
                             curves.max(axis=0), len(recs)))
    return out


def write_aggregate_csv(aggs: list[Aggregate], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGG_HEADER)
        for a in aggs:
            for i in range(len(a.steps)):
                w.writerow([a.method, a.gait, int(a.steps[i]), repr(float(a.mean[i])),
                            repr(float(a.lo[i])), repr(float(a.hi[i])), a.n_seeds])


def read_aggregate_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def nice_range(lo: float, hi: float) -> tuple[float, float]:
    if not np.isfinite(lo) or not np.isfinite(hi):
        return (0.0, 1.0)
    if hi - lo < 1e-9:
        return (lo - 1.0, hi + 1.0)
    pad = 0.05 * (hi - lo)
    return (lo - pad, hi + pad)


def to_px(x: float, y: float, xr: tuple[float, float], yr: tuple[float, float], panel: int) -> tuple[float, float]:
    """Data coordinates to SVG pixels inside panel ``panel``."""
    pw = PANEL_W - MARGIN_L - MARGIN_R
    ph = PANEL_H - MARGIN_T - MARGIN_B
    px = panel * PANEL_W + MARGIN_L + (x - xr[0]) / (xr[1] - xr[0]) * pw
    py = LEGEND_H + MARGIN_T + (1.0 - (y - yr[0]) / (yr[1] - yr[0])) * ph
    return px, py


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return list(np.linspace(lo, hi, n))


def render_svg(aggs: list[Aggregate], title: str = "best return so far") -> str:
    """One panel per gait; each method drawn as a mean line over a min/max band."""
    gaits = sorted({a.gait for a in aggs})
    methods = sorted({a.method for a in aggs})
    colour = {m: PALETTE[i % len(PALETTE)] for i, m in enumerate(methods)}
    width = PANEL_W * max(len(gaits), 1)
    height = PANEL_H + LEGEND_H
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}" font-family="sans-serif" font-size="11">',
        f"<title>{html.escape(title)}</title>",
        f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" fill="white"/>',
    ]
    for i, m in enumerate(methods):
        x = 8 + i * 130
        parts.append(f'<rect x="{x}" y="6" width="14" height="8" fill="{colour[m]}"/>')
        parts.append(f'<text x="{x + 18}" y="14">{html.escape(m)}</text>')
    for p, gait in enumerate(gaits):
        panel = [a for a in aggs if a.gait == gait]
        xr = nice_range(min(float(a.steps[0]) for a in panel), max(float(a.steps[-1]) for a in panel))
        ys = np.concatenate([np.r_[a.lo, a.hi] for a in panel])
        ys = ys[np.isfinite(ys)]
        yr = nice_range(float(ys.min()) if ys.size else 0.0, float(ys.max()) if ys.size else 1.0)
        parts.append(f'<g class="panel" data-gait="{html.escape(gait)}" data-xmin="{xr[0]!r}" '
                     f'data-xmax="{xr[1]!r}" data-ymin="{yr[0]!r}" data-ymax="{yr[1]!r}">')
        x0, y0 = to_px(xr[0], yr[0], xr, yr, p)
        x1, y1 = to_px(xr[1], yr[1], xr, yr, p)
        parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" height="{_fmt(y0 - y1)}" '
                     f'fill="none" stroke="#444"/>')
        parts.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(y1 - 8)}" text-anchor="middle" '
                     f'font-size="13">{html.escape(gait)}</text>')
        for tx in _ticks(*xr):
            px, _ = to_px(tx, yr[0], xr, yr, p)
            parts.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + 14)}" text-anchor="middle">{tx:.3g}</text>')
        for ty in _ticks(*yr):
            _, py = to_px(xr[0], ty, xr, yr, p)
            parts.append(f'<text x="{_fmt(x0 - 4)}" y="{_fmt(py + 4)}" text-anchor="end">{ty:.4g}</text>')
        parts.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(y0 + 32)}" text-anchor="middle">env steps</text>')
        for a in panel:
            ok = np.isfinite(a.mean)
            if not ok.any():
                continue
            s, lo, hi, mean = a.steps[ok], a.lo[ok], a.hi[ok], a.mean[ok]
            band = [to_px(float(x), float(y), xr, yr, p) for x, y in zip(s, hi)]
            band += [to_px(float(x), float(y), xr, yr, p) for x, y in zip(s[::-1], lo[::-1])]
            parts.append(f'<polygon class="band" data-method="{html.escape(a.method)}" fill="{colour[a.method]}" '
                         f'fill-opacity="0.2" stroke="none" points="{" ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in band)}"/>')
            line = [to_px(float(x), float(y), xr, yr, p) for x, y in zip(s, mean)]
            parts.append(f'<polyline class="mean" data-method="{html.escape(a.method)}" fill="none" '
                         f'stroke="{colour[a.method]}" stroke-width="1.5" '
                         f'points="{" ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in line)}"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_runs(records: list[RunRecord], out_dir: str | Path, n_points: int = 200) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggs = aggregate(records, n_points)
    csv_path, svg_path = out / "aggregate.csv", out / "best_so_far.svg"
    write_aggregate_csv(aggs, csv_path)
    svg_path.write_text(render_svg(aggs))
    return csv_path, svg_path
