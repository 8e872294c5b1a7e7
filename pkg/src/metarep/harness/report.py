"""CSV and SVG reports for sweep records."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from metarep.errors import EmptyRecords
from metarep.harness.records import aggregate, records_to_csv, summary_to_csv

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=170, top=40, bottom=55)


VARIANTS = ("_rep", "_baseline", "_oracle")


def _family(metric: str) -> str:
    """Chart name: ``accuracy_rep`` and ``accuracy_baseline`` share ``accuracy``."""
    for suffix in VARIANTS:
        if metric.endswith(suffix):
            return metric[: -len(suffix)]
    return metric


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt_tick(v: float) -> str:
    return f"{v:g}"


def render_svg(summaries, title: str) -> str:
    """Line chart of mean +- stderr against ``n``; one line per (metric, r, k)."""
    lines: dict = {}
    for s in summaries:
        lines.setdefault((s.metric, s.r, s.k), []).append(s)
    xs = [s.n for s in summaries]
    lows = [s.mean - s.stderr for s in summaries]
    highs = [s.mean + s.stderr for s in summaries]
    log_x = min(xs) > 0 and max(xs) / min(xs) >= 20
    fx = math.log10 if log_x else float
    x_lo, x_hi = fx(min(xs)), fx(max(xs))
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo, y_hi = min(lows), max(highs)
    pad = 0.05 * (y_hi - y_lo or abs(y_hi) or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(n):
        return MARGIN["left"] + pw * (fx(n) - x_lo) / (x_hi - x_lo)

    def py(v):
        return MARGIN["top"] + ph * (1 - (v - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444"/>',
    ]
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        out.append(f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{y:.1f}" y2="{y:.1f}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt_tick(t)}</text>')
    for n in sorted(set(xs)):
        x = px(n)
        out.append(f'<text x="{x:.1f}" y="{MARGIN["top"] + ph + 16}" text-anchor="middle">{n}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'n{" (log scale)" if log_x else ""}</text>')

    for i, (key, pts) in enumerate(sorted(lines.items())):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(pts, key=lambda s: s.n)
        path = " ".join(f"{px(s.n):.2f},{py(s.mean):.2f}" for s in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for s in pts:
            x = px(s.n)
            out.append(f'<line x1="{x:.2f}" x2="{x:.2f}" y1="{py(s.mean - s.stderr):.2f}" '
                       f'y2="{py(s.mean + s.stderr):.2f}" stroke="{color}"/>')
            out.append(f'<circle cx="{x:.2f}" cy="{py(s.mean):.2f}" r="2.5" fill="{color}"/>')
        metric, r, k = key
        ly = MARGIN["top"] + 14 + 16 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(f"{metric} r={r} k={k}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(records, out_dir, fmt: str = "csv") -> list[Path]:
    """Write ``records.csv`` + ``summary.csv`` (``fmt="csv"``) or one SVG per metric.

    Raises ``EmptyRecords`` for SVG output without any non-error records.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    if fmt == "csv":
        rec_path, sum_path = out / "records.csv", out / "summary.csv"
        rec_path.write_text(records_to_csv(records))
        sum_path.write_text(summary_to_csv(aggregate(records)))
        return [rec_path, sum_path]
    if fmt not in ("svg", "svg-lines"):
        raise ValueError(f"unknown report format {fmt!r}")
    summaries = aggregate(records)
    if not summaries:
        raise EmptyRecords("no records to plot")
    groups: dict = {}
    for s in summaries:
        groups.setdefault((s.kind, _family(s.metric)), []).append(s)
    paths = []
    for (kind, family), group in sorted(groups.items()):
        path = out / f"{kind}_{family}.svg"
        path.write_text(render_svg(group, f"{kind}: {family}"))
        paths.append(path)
    return paths
