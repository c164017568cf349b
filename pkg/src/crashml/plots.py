"""Minimal static SVG renderings: per-width box plots and error-vs-ensemble-size curves.

Output is plain text built from rounded coordinates, so identical inputs
give byte-identical documents.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60


def _f(x: float) -> str:
    return f"{x:.2f}"


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _ticks(lo, hi, n=5):
    step = (hi - lo) / (n - 1) if hi > lo else 1.0
    return [lo + i * step for i in range(n)]


def _frame(title, ylabel, xlabel):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="18" y="{H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {H / 2})">{escape(ylabel)}</text>',
        f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>',
    ]


def _y_axis(parts, lo, hi, sy):
    for t in _ticks(lo, hi):
        y = sy(t)
        parts.append(f'<line x1="{LEFT - 4}" y1="{_f(y)}" x2="{LEFT}" y2="{_f(y)}" stroke="black"/>')
        parts.append(f'<text x="{LEFT - 7}" y="{_f(y + 4)}" text-anchor="end">{t:.3g}</text>')


def boxplot_svg(report, title: str = "Effect of lane width") -> str:
    """Box plot per lane width with the marginal (mean) predictions overlaid as a line."""
    label = "Predicted crash rate" if report.response_mode == "rate" else "Predicted crash count"
    parts = _frame(title, label, "Lane width (ft)")
    lo = min(s.minimum for s in report.summaries)
    hi = max(s.maximum for s in report.summaries)
    pad = 0.05 * ((hi - lo) or 1.0)
    lo, hi = lo - pad, hi + pad
    sy = _scale(lo, hi, H - BOTTOM, TOP)
    _y_axis(parts, lo, hi, sy)
    n = len(report.widths)
    slot = (W - LEFT - RIGHT) / n
    half = slot * 0.25
    means = []
    for i, (w, s) in enumerate(zip(report.widths, report.summaries)):
        cx = LEFT + slot * (i + 0.5)
        parts.append(f'<text x="{_f(cx)}" y="{H - BOTTOM + 18}" text-anchor="middle">{w:g}</text>')
        parts.append(f'<line x1="{_f(cx)}" y1="{_f(sy(s.whisker_low))}" x2="{_f(cx)}" '
                     f'y2="{_f(sy(s.q1))}" stroke="black"/>')
        parts.append(f'<line x1="{_f(cx)}" y1="{_f(sy(s.q3))}" x2="{_f(cx)}" '
                     f'y2="{_f(sy(s.whisker_high))}" stroke="black"/>')
        for y in (s.whisker_low, s.whisker_high):
            parts.append(f'<line x1="{_f(cx - half / 2)}" y1="{_f(sy(y))}" '
                         f'x2="{_f(cx + half / 2)}" y2="{_f(sy(y))}" stroke="black"/>')
        parts.append(f'<rect x="{_f(cx - half)}" y="{_f(sy(s.q3))}" width="{_f(2 * half)}" '
                     f'height="{_f(sy(s.q1) - sy(s.q3))}" fill="#9ecae1" stroke="black"/>')
        parts.append(f'<line x1="{_f(cx - half)}" y1="{_f(sy(s.median))}" x2="{_f(cx + half)}" '
                     f'y2="{_f(sy(s.median))}" stroke="black" stroke-width="2"/>')
        for o in s.outliers:
            parts.append(f'<circle cx="{_f(cx)}" cy="{_f(sy(o))}" r="1.5" fill="none" stroke="gray"/>')
        means.append((cx, sy(s.mean)))
    path = " ".join(f"{_f(x)},{_f(y)}" for x, y in means)
    parts.append(f'<polyline points="{path}" fill="none" stroke="#d62728" stroke-width="2"/>')
    for x, y in means:
        parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="4" fill="#d62728"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def curves_svg(curves, metric: str = "mse", title: str | None = None) -> str:
    """Test error against ensemble size, one polyline per model family."""
    col = {"mae": 1, "mse": 2}[metric]
    title = title or f"Test {metric.upper()} vs number of trees"
    parts = _frame(title, metric.upper(), "Number of trees")
    xs = [pt[0] for c in curves for pt in c.points]
    ys = [pt[col] for c in curves for pt in c.points]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    pad = 0.05 * ((y_hi - y_lo) or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    sx = _scale(x_lo, x_hi, LEFT, W - RIGHT)
    sy = _scale(y_lo, y_hi, H - BOTTOM, TOP)
    _y_axis(parts, y_lo, y_hi, sy)
    for t in _ticks(x_lo, x_hi):
        parts.append(f'<text x="{_f(sx(t))}" y="{H - BOTTOM + 18}" text-anchor="middle">{t:.0f}</text>')
    colors = {"forest": "#1f77b4", "boost": "#ff7f0e"}
    for i, c in enumerate(curves):
        color = colors.get(c.family, "black")
        pts = " ".join(f"{_f(sx(p[0]))},{_f(sy(p[col]))}" for p in c.points)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        name = "Random forest" if c.family == "forest" else "LSBoost"
        parts.append(f'<text x="{W - RIGHT - 110}" y="{TOP + 16 * (i + 1)}" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
