"""Hand-rolled SVG charts: byte-deterministic, no plotting dependency."""

from __future__ import annotations

WIDTH = 800
HEIGHT = 500
MARGIN_LEFT = 64
MARGIN_RIGHT = 24
MARGIN_TOP = 28
MARGIN_BOTTOM = 46

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

_AXIS = "#444444"
_FONT = 'font-family="sans-serif" font-size="12"'


def _fx(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _scale(lo: float, hi: float, a: float, b: float):
    span = hi - lo
    if span <= 0:
        span = 1.0
    return lambda v: a + (min(max(v, lo), hi) - lo) / span * (b - a)


def _frame(parts: list[str], x_label: str, y_label: str) -> str:
    body = "\n".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
        f"{body}\n"
        f'<text x="{_fx(WIDTH / 2)}" y="{_fx(HEIGHT - 8)}" {_FONT} text-anchor="middle">{x_label}</text>\n'
        f'<text x="16" y="{_fx(HEIGHT / 2)}" {_FONT} text-anchor="middle" '
        f'transform="rotate(-90 16 {_fx(HEIGHT / 2)})">{y_label}</text>\n'
        f"</svg>\n"
    )


def _axes(sx, sy, x_lo, x_hi, y_lo, y_hi, x_ticks: list[float]) -> list[str]:
    bottom = HEIGHT - MARGIN_BOTTOM
    parts = [
        f'<line x1="{_fx(MARGIN_LEFT)}" y1="{_fx(bottom)}" x2="{_fx(WIDTH - MARGIN_RIGHT)}" '
        f'y2="{_fx(bottom)}" stroke="{_AXIS}"/>',
        f'<line x1="{_fx(MARGIN_LEFT)}" y1="{_fx(MARGIN_TOP)}" x2="{_fx(MARGIN_LEFT)}" '
        f'y2="{_fx(bottom)}" stroke="{_AXIS}"/>',
    ]
    for i in range(5):
        v = y_lo + (y_hi - y_lo) * i / 4
        y = sy(v)
        parts.append(
            f'<line x1="{_fx(MARGIN_LEFT - 4)}" y1="{_fx(y)}" x2="{_fx(MARGIN_LEFT)}" '
            f'y2="{_fx(y)}" stroke="{_AXIS}"/>'
        )
        parts.append(
            f'<text x="{_fx(MARGIN_LEFT - 8)}" y="{_fx(y + 4)}" {_FONT} '
            f'text-anchor="end">{_tick_label(v)}</text>'
        )
    shown = x_ticks
    if len(shown) > 16:
        step = (len(shown) - 1) // 10 + 1
        shown = shown[::step]
    for v in shown:
        x = sx(v)
        parts.append(
            f'<line x1="{_fx(x)}" y1="{_fx(bottom)}" x2="{_fx(x)}" y2="{_fx(bottom + 4)}" '
            f'stroke="{_AXIS}"/>'
        )
        parts.append(
            f'<text x="{_fx(x)}" y="{_fx(bottom + 18)}" {_FONT} '
            f'text-anchor="middle">{_tick_label(v)}</text>'
        )
    return parts


def line_chart(
    series: list[tuple[str, list[tuple[float, float]]]],
    x_label: str,
    y_label: str,
    y_max: float | None = None,
) -> str:
    """One polyline per named series, with a legend; y axis starts at 0."""
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_hi = y_max if y_max is not None else max(ys)
    if y_hi <= 0:
        y_hi = 1.0
    sx = _scale(x_lo, x_hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT)
    sy = _scale(0.0, y_hi, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP)
    x_ticks = sorted({x for x in xs})
    parts = _axes(sx, sy, x_lo, x_hi, 0.0, y_hi, x_ticks)
    for i, (name, pts) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fx(sx(x))},{_fx(sy(y))}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = MARGIN_TOP + 16 * i
        lx = WIDTH - MARGIN_RIGHT - 150
        parts.append(
            f'<line x1="{_fx(lx)}" y1="{_fx(ly)}" x2="{_fx(lx + 20)}" y2="{_fx(ly)}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_fx(lx + 26)}" y="{_fx(ly + 4)}" {_FONT}>{name}</text>')
    return _frame(parts, x_label, y_label)


def bar_chart(items: list[tuple[str, float]], x_label: str, y_label: str) -> str:
    """One bar per labeled item, heights from zero."""
    y_hi = max((v for _, v in items), default=0.0)
    if y_hi <= 0:
        y_hi = 1.0
    sy = _scale(0.0, y_hi, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP)
    bottom = HEIGHT - MARGIN_BOTTOM
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    slot = plot_w / max(1, len(items))
    bar_w = slot * 0.7
    parts = _axes(lambda v: v, sy, 0, 1, 0.0, y_hi, [])
    for i, (label, value) in enumerate(items):
        x = MARGIN_LEFT + slot * i + (slot - bar_w) / 2
        top = sy(value)
        parts.append(
            f'<rect x="{_fx(x)}" y="{_fx(top)}" width="{_fx(bar_w)}" '
            f'height="{_fx(bottom - top)}" fill="{PALETTE[0]}"/>'
        )
        parts.append(
            f'<text x="{_fx(x + bar_w / 2)}" y="{_fx(bottom + 18)}" {_FONT} '
            f'text-anchor="middle">{label}</text>'
        )
    return _frame(parts, x_label, y_label)
