"""Dependency-free SVG renderings (confusion heatmap, importance bars, beeswarm).

Output is a pure function of the inputs so reruns are byte-identical.
"""

from __future__ import annotations

from html import escape
from typing import Sequence

import numpy as np


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, *body, "</svg>", ""])


def _blend(t: float, lo=(49, 104, 181), hi=(214, 39, 40)) -> str:
    t = min(max(t, 0.0), 1.0)
    r, g, b = (round(a + (c - a) * t) for a, c in zip(lo, hi))
    return f"#{r:02x}{g:02x}{b:02x}"


def confusion_svg(cm: np.ndarray, labels: Sequence[str], title: str = "") -> str:
    n = len(labels)
    cell, left, top = 44, 60, 50
    peak = max(int(cm.max()), 1)
    body = [f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>',
            f'<text x="{left + n * cell / 2}" y="{top - 22}" text-anchor="middle">predicted</text>',
            f'<text x="14" y="{top + n * cell / 2}" transform="rotate(-90 14 {top + n * cell / 2})" '
            f'text-anchor="middle">true</text>']
    for j, lab in enumerate(labels):
        body.append(f'<text x="{left + j * cell + cell / 2}" y="{top - 6}" text-anchor="middle">{escape(lab)}</text>')
    for i, lab in enumerate(labels):
        y = top + i * cell
        body.append(f'<text x="{left - 6}" y="{y + cell / 2 + 4}" text-anchor="end">{escape(lab)}</text>')
        for j in range(n):
            v = int(cm[i, j])
            shade = round(255 - 200 * v / peak)
            body.append(f'<rect x="{left + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                        f'fill="rgb({shade},{shade},255)" stroke="#ccc"/>')
            body.append(f'<text x="{left + j * cell + cell / 2}" y="{y + cell / 2 + 4}" '
                        f'text-anchor="middle">{v}</text>')
    return _svg(left + n * cell + 20, top + n * cell + 20, body)


def importance_svg(features: Sequence[str], values: Sequence[float], title: str = "mean |SHAP|") -> str:
    bar_h, left, width = 18, 200, 300
    top = 30
    peak = max(max(values, default=0.0), 1e-300)
    body = [f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>']
    for i, (f, v) in enumerate(zip(features, values)):
        y = top + i * bar_h
        w = width * v / peak
        body.append(f'<text x="{left - 6}" y="{y + 13}" text-anchor="end">{escape(f)}</text>')
        body.append(f'<rect x="{left}" y="{y + 2}" width="{w:.3f}" height="{bar_h - 4}" fill="#1e88e5"/>')
        body.append(f'<text x="{left + w + 4:.3f}" y="{y + 13}">{v:.4g}</text>')
    return _svg(left + width + 80, top + len(features) * bar_h + 10, body)


def beeswarm_svg(rows: Sequence[tuple[str, float, float]], title: str = "SHAP value") -> str:
    features = list(dict.fromkeys(r[0] for r in rows))
    row_h, left, width, top = 24, 200, 360, 30
    phis = np.array([r[1] for r in rows]) if rows else np.zeros(1)
    span = max(float(np.abs(phis).max()), 1e-12)
    x0 = left + width / 2
    body = [f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
            f'<line x1="{x0}" y1="{top}" x2="{x0}" y2="{top + len(features) * row_h}" stroke="#999"/>']
    seen: dict[str, int] = {}
    for name, phi, colour in rows:
        i = features.index(name)
        k = seen.get(name, 0)
        seen[name] = k + 1
        jitter = ((k * 7) % 11 - 5) * 1.5  # deterministic vertical spread
        cx = x0 + (width / 2 - 4) * phi / span
        cy = top + i * row_h + row_h / 2 + jitter
        body.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="2.5" fill="{_blend(colour)}"/>')
    for i, name in enumerate(features):
        body.append(f'<text x="{left - 6}" y="{top + i * row_h + row_h / 2 + 4}" '
                    f'text-anchor="end">{escape(name)}</text>')
    return _svg(left + width + 20, top + len(features) * row_h + 10, body)
