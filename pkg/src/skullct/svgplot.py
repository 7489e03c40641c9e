"""Tiny self-contained SVG renderer for the pipeline's result plots.

Only what the reports need: grouped bar charts and line charts with axes
and a legend. Output is pure text with fixed formatting, so identical
inputs give byte-identical SVGs and plots can be diffed in tests.
"""

from __future__ import annotations

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 40, 50

PALETTE = ("#4878a8", "#e49444", "#6a9f58", "#d1605e", "#a87c9f")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") or "0"


def _axis_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


class _Canvas:
    def __init__(self, title: str):
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>',
        ]

    def line(self, x1, y1, x2, y2, color="#333", width=1.0):
        self.parts.append(
            f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" '
            f'stroke="{color}" stroke-width="{width:g}"/>')

    def rect(self, x, y, w, h, color):
        self.parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" height="{h:.1f}" '
            f'fill="{color}"/>')

    def text(self, x, y, s, size=11, anchor="middle", color="#333"):
        self.parts.append(
            f'<text x="{x:.1f}" y="{y:.1f}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}" '
            f'fill="{color}">{s}</text>')

    def polyline(self, points, color, width=1.5):
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in points)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width:g}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _plot_area():
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    x1, y1 = WIDTH - MARGIN_R, MARGIN_T
    return x0, y0, x1, y1


def _draw_y_axis(canvas: _Canvas, lo: float, hi: float):
    x0, y0, x1, y1 = _plot_area()
    canvas.line(x0, y0, x0, y1)
    for tick in _axis_ticks(lo, hi):
        frac = (tick - lo) / (hi - lo) if hi > lo else 0.0
        y = y0 - frac * (y0 - y1)
        canvas.line(x0 - 4, y, x0, y)
        canvas.text(x0 - 8, y + 4, _fmt(tick), anchor="end")


def _draw_legend(canvas: _Canvas, labels: list[str]):
    x = MARGIN_L + 10
    y = MARGIN_T + 4
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        canvas.rect(x, y + i * 16 - 8, 10, 10, color)
        canvas.text(x + 16, y + i * 16, label, anchor="start")


def bar_chart(title: str, categories: list[str],
              series: dict[str, list[float]]) -> str:
    """Grouped vertical bars, one group per category, one bar per series."""
    canvas = _Canvas(title)
    x0, y0, x1, y1 = _plot_area()
    hi = max((max(vals) for vals in series.values()), default=1.0)
    hi = hi if hi > 0 else 1.0
    _draw_y_axis(canvas, 0.0, hi)
    canvas.line(x0, y0, x1, y0)

    n_groups = len(categories)
    n_series = max(len(series), 1)
    group_w = (x1 - x0) / max(n_groups, 1)
    bar_w = group_w * 0.7 / n_series
    for g, cat in enumerate(categories):
        gx = x0 + g * group_w + group_w * 0.15
        for s, (label, vals) in enumerate(series.items()):
            h = (vals[g] / hi) * (y0 - y1)
            canvas.rect(gx + s * bar_w, y0 - h, bar_w - 1, h,
                        PALETTE[s % len(PALETTE)])
            canvas.text(gx + s * bar_w + bar_w / 2, y0 - h - 4,
                        _fmt(vals[g]), size=10)
        canvas.text(x0 + g * group_w + group_w / 2, y0 + 16, cat)
    _draw_legend(canvas, list(series))
    return canvas.render()


def line_chart(title: str, series: dict[str, list[float]],
               x_label: str = "", y_label: str = "") -> str:
    """One polyline per series over an integer x axis."""
    canvas = _Canvas(title)
    x0, y0, x1, y1 = _plot_area()
    all_vals = [v for vals in series.values() for v in vals]
    lo = min(all_vals, default=0.0)
    hi = max(all_vals, default=1.0)
    if hi <= lo:
        hi = lo + 1.0
    _draw_y_axis(canvas, lo, hi)
    canvas.line(x0, y0, x1, y0)

    n = max((len(v) for v in series.values()), default=2)
    for s, (label, vals) in enumerate(series.items()):
        points = []
        for i, v in enumerate(vals):
            px = x0 + (i / max(n - 1, 1)) * (x1 - x0)
            py = y0 - ((v - lo) / (hi - lo)) * (y0 - y1)
            points.append((px, py))
        canvas.polyline(points, PALETTE[s % len(PALETTE)])
    for frac in (0.0, 0.5, 1.0):
        canvas.text(x0 + frac * (x1 - x0), y0 + 16, _fmt(frac * (n - 1)))
    if x_label:
        canvas.text((x0 + x1) / 2, HEIGHT - 12, x_label)
    if y_label:
        canvas.text(14, (y0 + y1) / 2, y_label, anchor="middle")
    _draw_legend(canvas, list(series))
    return canvas.render()
