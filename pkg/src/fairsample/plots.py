"""Minimal deterministic SVG charts for experiment reports.

The files are written directly (no plotting library) so that identical
inputs produce byte-identical output: fixed coordinate formatting, no
timestamps, no generated ids.
"""

from __future__ import annotations

from typing import IO, Sequence

WIDTH = 480
HEIGHT = 360
MARGIN_LEFT = 60
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 50

_AXIS = "#444444"
_POINT = "#1f77b4"
_LINE = "#d62728"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _bounds(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = 1.0 if hi == 0 else abs(hi) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Frame:
    """Maps data coordinates onto the plot viewport."""

    def __init__(self, x_lo: float, x_hi: float, y_lo: float, y_hi: float):
        self.x_lo, self.x_hi = x_lo, x_hi
        self.y_lo, self.y_hi = y_lo, y_hi
        self.plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
        self.plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def x(self, v: float) -> float:
        return MARGIN_LEFT + (v - self.x_lo) / (self.x_hi - self.x_lo) * self.plot_w

    def y(self, v: float) -> float:
        return (HEIGHT - MARGIN_BOTTOM
                - (v - self.y_lo) / (self.y_hi - self.y_lo) * self.plot_h)

    def ticks(self, lo: float, hi: float, n: int = 5) -> list[float]:
        step = (hi - lo) / (n - 1)
        return [lo + i * step for i in range(n)]


def _header(stream: IO[str], title: str) -> None:
    stream.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
    )
    stream.write(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n')
    stream.write(
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>\n'
    )


def _axes(stream: IO[str], frame: _Frame, xlabel: str, ylabel: str) -> None:
    x0, y0 = MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM
    x1, y1 = WIDTH - MARGIN_RIGHT, MARGIN_TOP
    stream.write(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="{_AXIS}"/>\n'
    )
    stream.write(
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="{_AXIS}"/>\n'
    )
    for tick in frame.ticks(frame.x_lo, frame.x_hi):
        px = frame.x(tick)
        stream.write(
            f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" '
            f'stroke="{_AXIS}"/>\n'
        )
        stream.write(
            f'<text x="{_fmt(px)}" y="{y0 + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{tick:.3g}</text>\n'
        )
    for tick in frame.ticks(frame.y_lo, frame.y_hi):
        py = frame.y(tick)
        stream.write(
            f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" '
            f'stroke="{_AXIS}"/>\n'
        )
        stream.write(
            f'<text x="{x0 - 6}" y="{_fmt(py + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{tick:.3g}</text>\n'
        )
    stream.write(
        f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{xlabel}</text>\n'
    )
    stream.write(
        f'<text x="14" y="{(y0 + y1) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {(y0 + y1) // 2})">{ylabel}</text>\n'
    )


def scatter_svg(
    stream: IO[str],
    actual: Sequence[float],
    estimated: Sequence[float],
    title: str,
    xlabel: str = "actual",
    ylabel: str = "estimated",
) -> None:
    """Actual-vs-estimated scatter with the y = x reference line."""
    values = list(actual) + list(estimated)
    lo, hi = _bounds(values)
    frame = _Frame(lo, hi, lo, hi)
    _header(stream, title)
    _axes(stream, frame, xlabel, ylabel)
    stream.write(
        f'<line x1="{_fmt(frame.x(lo))}" y1="{_fmt(frame.y(lo))}" '
        f'x2="{_fmt(frame.x(hi))}" y2="{_fmt(frame.y(hi))}" '
        f'stroke="{_LINE}" stroke-dasharray="4 3"/>\n'
    )
    for a, e in zip(actual, estimated):
        stream.write(
            f'<circle cx="{_fmt(frame.x(a))}" cy="{_fmt(frame.y(e))}" r="2" '
            f'fill="{_POINT}" fill-opacity="0.5"/>\n'
        )
    stream.write("</svg>\n")


def line_chart_svg(
    stream: IO[str],
    xs: Sequence[float],
    ys: Sequence[float | None],
    title: str,
    xlabel: str,
    ylabel: str,
) -> None:
    """Single-series line chart; None values leave gaps."""
    known = [y for y in ys if y is not None]
    if not known:
        known = [0.0]
    x_lo, x_hi = _bounds(list(xs))
    y_lo, y_hi = _bounds(known)
    frame = _Frame(x_lo, x_hi, y_lo, y_hi)
    _header(stream, title)
    _axes(stream, frame, xlabel, ylabel)
    points = [
        (frame.x(x), frame.y(y)) for x, y in zip(xs, ys) if y is not None
    ]
    if len(points) > 1:
        path = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in points)
        stream.write(
            f'<polyline points="{path}" fill="none" stroke="{_POINT}" '
            f'stroke-width="1.5"/>\n'
        )
    for px, py in points:
        stream.write(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" fill="{_POINT}"/>\n'
        )
    stream.write("</svg>\n")
