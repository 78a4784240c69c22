"""Minimal SVG 1.1 line plots: polylines, shaded bands, markers, log-y axes."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#7f7f7f"]


def nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _num(v):
    return f"{v:.2f}"


def _label(v):
    return f"{v:.3g}"


class Axes:
    def __init__(self, title="", xlabel="", ylabel="", log_y=False):
        self.title, self.xlabel, self.ylabel, self.log_y = title, xlabel, ylabel, log_y
        self.items = []

    def line(self, x, y, color=None, label=None, dash=None, width=1.6):
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, label, dash, width))

    def band(self, x, lo, hi, color=None, opacity=0.2):
        self.items.append(("band", np.asarray(x, float), (np.asarray(lo, float), np.asarray(hi, float)),
                           color, None, opacity, None))

    def points(self, x, y, color="#000000", label=None, radius=3.0):
        self.items.append(("points", np.asarray(x, float), np.asarray(y, float), color, label, radius, None))

    def _ty(self, y):
        if not self.log_y:
            return y
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(y > 0, np.log10(np.where(y > 0, y, 1.0)), np.nan)

    def _limits(self):
        xs, ys = [], []
        for kind, x, y, *_ in self.items:
            xs.append(x)
            if kind == "band":
                ys.extend([self._ty(y[0]), self._ty(y[1])])
            else:
                ys.append(self._ty(y))
        x = np.concatenate(xs) if xs else np.zeros(1)
        y = np.concatenate(ys) if ys else np.zeros(1)
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        if x.size == 0:
            x = np.zeros(1)
        if y.size == 0:
            y = np.zeros(1)
        x0, x1 = float(x.min()), float(x.max())
        y0, y1 = float(y.min()), float(y.max())
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self, left, top, width, height, color_cycle):
        x0, x1, y0, y1 = self._limits()
        pl, pr, pt, pb = 58, 12, 24, 38
        w, h = width - pl - pr, height - pt - pb

        def sx(v):
            return left + pl + (v - x0) / (x1 - x0) * w

        def sy(v):
            return top + pt + (1 - (v - y0) / (y1 - y0)) * h

        out = [f'<rect x="{_num(left + pl)}" y="{_num(top + pt)}" width="{_num(w)}" height="{_num(h)}" '
               'fill="white" stroke="#444" stroke-width="1"/>']
        for t in nice_ticks(x0, x1):
            out.append(f'<line x1="{_num(sx(t))}" y1="{_num(top + pt + h)}" x2="{_num(sx(t))}" '
                       f'y2="{_num(top + pt + h + 4)}" stroke="#444"/>')
            out.append(f'<text x="{_num(sx(t))}" y="{_num(top + pt + h + 16)}" text-anchor="middle" '
                       f'font-size="10">{_label(t)}</text>')
        for t in nice_ticks(y0, y1):
            lab = f"1e{t:g}" if self.log_y else _label(t)
            out.append(f'<line x1="{_num(left + pl - 4)}" y1="{_num(sy(t))}" x2="{_num(left + pl)}" '
                       f'y2="{_num(sy(t))}" stroke="#444"/>')
            out.append(f'<text x="{_num(left + pl - 6)}" y="{_num(sy(t) + 3)}" text-anchor="end" '
                       f'font-size="10">{escape(lab)}</text>')
        if self.title:
            out.append(f'<text x="{_num(left + pl + w / 2)}" y="{_num(top + 16)}" text-anchor="middle" '
                       f'font-size="12" font-weight="bold">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{_num(left + pl + w / 2)}" y="{_num(top + height - 6)}" '
                       f'text-anchor="middle" font-size="11">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cx, cy = left + 14, top + pt + h / 2
            out.append(f'<text x="{_num(cx)}" y="{_num(cy)}" text-anchor="middle" font-size="11" '
                       f'transform="rotate(-90 {_num(cx)} {_num(cy)})">{escape(self.ylabel)}</text>')

        legend = []
        for kind, x, y, color, label, style, lw in self.items:
            color = color or next(color_cycle)
            if kind == "band":
                lo, hi = self._ty(y[0]), self._ty(y[1])
                ok = np.isfinite(lo) & np.isfinite(hi) & np.isfinite(x)
                if ok.sum() < 2:
                    continue
                pts = [(sx(a), sy(b)) for a, b in zip(x[ok], hi[ok])]
                pts += [(sx(a), sy(b)) for a, b in zip(x[ok][::-1], lo[ok][::-1])]
                d = " ".join(f"{_num(a)},{_num(b)}" for a, b in pts)
                out.append(f'<polygon points="{d}" fill="{color}" fill-opacity="{style}" stroke="none"/>')
            elif kind == "line":
                yy = self._ty(y)
                ok = np.isfinite(yy) & np.isfinite(x)
                if ok.sum() < 1:
                    continue
                d = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(x[ok], yy[ok]))
                dash = f' stroke-dasharray="{style}"' if style else ""
                out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="{lw}"{dash}/>')
            else:
                yy = self._ty(y)
                for a, b in zip(x, yy):
                    if math.isfinite(a) and math.isfinite(b):
                        out.append(f'<circle cx="{_num(sx(a))}" cy="{_num(sy(b))}" r="{style}" fill="{color}"/>')
            if label:
                legend.append((label, color))
        for k, (label, color) in enumerate(legend):
            yk = top + pt + 12 + 14 * k
            xk = left + pl + w - 120
            out.append(f'<line x1="{_num(xk)}" y1="{_num(yk - 4)}" x2="{_num(xk + 16)}" y2="{_num(yk - 4)}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{_num(xk + 20)}" y="{_num(yk)}" font-size="10">{escape(label)}</text>')
        return out


class Figure:
    """A grid of :class:`Axes` written as one SVG document."""

    def __init__(self, rows=1, cols=1, panel_width=360, panel_height=260, title=""):
        self.rows, self.cols = rows, cols
        self.pw, self.ph = panel_width, panel_height
        self.title = title
        self.axes = [[Axes() for _ in range(cols)] for _ in range(rows)]

    def __getitem__(self, rc):
        r, c = rc
        return self.axes[r][c]

    def to_string(self):
        top0 = 24 if self.title else 0
        W, H = self.cols * self.pw, self.rows * self.ph + top0
        out = ['<?xml version="1.0" encoding="UTF-8"?>',
               f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif">',
               f'<rect width="{W}" height="{H}" fill="white"/>']
        if self.title:
            out.append(f'<text x="{W / 2}" y="17" text-anchor="middle" font-size="14">{escape(self.title)}</text>')
        for r in range(self.rows):
            for c in range(self.cols):
                cycle = iter(PALETTE * 10)
                out.extend(self.axes[r][c].render(c * self.pw, top0 + r * self.ph, self.pw, self.ph, cycle))
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())
