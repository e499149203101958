"""Tiny SVG line/bar plotter for experiment summaries."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 60


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.3g}"


class Figure:
    def __init__(self, title: str, xlabel: str, ylabel: str, logx: bool = False):
        self.title, self.xlabel, self.ylabel, self.logx = title, xlabel, ylabel, logx
        self.series: list[tuple[str, list[float], list[float]]] = []
        self.bars: list[tuple[str, float, float]] = []

    def line(self, label: str, xs, ys) -> "Figure":
        self.series.append((label, [float(x) for x in xs], [float(y) for y in ys]))
        return self

    def bar(self, label: str, value: float, err: float | None = 0.0) -> "Figure":
        self.bars.append((label, float(value), 0.0 if err is None else float(err)))
        return self

    def _xform(self, x: float) -> float:
        return math.log10(x) if self.logx else x

    def render(self) -> str:
        pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
                 f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
                 f'<rect width="{W}" height="{H}" fill="white"/>',
                 f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(self.title)}</text>']
        if self.bars:
            ys = [v + e for _, v, e in self.bars] + [v - e for _, v, e in self.bars] + [0.0]
        else:
            ys = [y for _, _, s in self.series for y in s if math.isfinite(y)] or [0.0, 1.0]
        ylo, yhi = min(ys), max(ys)
        if yhi == ylo:
            yhi = ylo + 1.0
        pad = 0.05 * (yhi - ylo)
        ylo, yhi = ylo - pad, yhi + pad

        def sy(y):
            return TOP + ph * (1 - (y - ylo) / (yhi - ylo))

        if self.bars:
            n = len(self.bars)
            slot = pw / n
            for i, (label, v, e) in enumerate(self.bars):
                x0 = LEFT + i * slot + 0.2 * slot
                bw = 0.6 * slot
                top, base = sy(max(v, 0.0)), sy(min(v, 0.0))
                color = PALETTE[i % len(PALETTE)]
                parts.append(f'<rect x="{x0:.2f}" y="{top:.2f}" width="{bw:.2f}" '
                             f'height="{max(base - top, 0.5):.2f}" fill="{color}"/>')
                if e > 0:
                    cx = x0 + bw / 2
                    parts.append(f'<line x1="{cx:.2f}" y1="{sy(v - e):.2f}" x2="{cx:.2f}" '
                                 f'y2="{sy(v + e):.2f}" stroke="black"/>')
                parts.append(f'<text x="{x0 + bw / 2:.2f}" y="{TOP + ph + 16}" '
                             f'text-anchor="middle">{escape(label)}</text>')
        else:
            xs = [self._xform(x) for _, s, _ in self.series for x in s] or [0.0, 1.0]
            xlo, xhi = min(xs), max(xs)
            if xhi == xlo:
                xhi = xlo + 1.0

            def sx(x):
                return LEFT + pw * (self._xform(x) - xlo) / (xhi - xlo)

            for t in _ticks(xlo, xhi):
                label = _fmt(10 ** t) if self.logx else _fmt(t)
                px = LEFT + pw * (t - xlo) / (xhi - xlo)
                parts.append(f'<line x1="{px:.2f}" y1="{TOP + ph}" x2="{px:.2f}" '
                             f'y2="{TOP + ph + 4}" stroke="black"/>')
                parts.append(f'<text x="{px:.2f}" y="{TOP + ph + 16}" text-anchor="middle">{label}</text>')
            for i, (label, sxs, sys_) in enumerate(self.series):
                color = PALETTE[i % len(PALETTE)]
                pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(sxs, sys_)
                               if math.isfinite(y))
                parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
                ly = TOP + 14 * i + 8
                parts.append(f'<line x1="{W - RIGHT + 10}" y1="{ly}" x2="{W - RIGHT + 30}" '
                             f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
                parts.append(f'<text x="{W - RIGHT + 35}" y="{ly + 4}">{escape(label)}</text>')
        for t in _ticks(ylo, yhi):
            py = sy(t)
            parts.append(f'<line x1="{LEFT - 4}" y1="{py:.2f}" x2="{LEFT}" y2="{py:.2f}" stroke="black"/>')
            parts.append(f'<text x="{LEFT - 6}" y="{py + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        parts.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        parts.append(f'<text x="{LEFT + pw / 2}" y="{H - 15}" text-anchor="middle">{escape(self.xlabel)}</text>')
        parts.append(f'<text x="18" y="{TOP + ph / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 18 {TOP + ph / 2})">{escape(self.ylabel)}</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.render())
