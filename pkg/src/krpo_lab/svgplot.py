"""Static, timestamp-free SVG line charts (polyline + axes + legend)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 180, 36, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(v: float) -> str:
    return f"{v:.2f}"


def line_chart(
    series: Sequence[tuple[str, Sequence[float]]],
    title: str = "",
    x_label: str = "step",
    y_label: str = "mean reward",
    faint: Sequence[tuple[int, Sequence[float]]] = (),
) -> str:
    """Render named series against a 1-based step axis.

    ``faint`` holds extra unlabeled lines as ``(palette index, values)``.
    """
    all_values = [v for _, ys in series for v in ys] + [v for _, ys in faint for v in ys]
    n = max([len(ys) for _, ys in series] + [len(ys) for _, ys in faint] + [1])
    lo = min(all_values + [0.0])
    hi = max(all_values + [1e-9])
    if hi - lo < 1e-9:
        hi = lo + 1.0
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(i: int) -> float:
        return MARGIN_L + (pw * i / (n - 1) if n > 1 else pw / 2)

    def py(v: float) -> float:
        return MARGIN_T + ph * (1.0 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2 - MARGIN_R / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="black"/>',
    ]
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = py(v)
        out.append(f'<line x1="{MARGIN_L - 4}" y1="{_num(y)}" x2="{MARGIN_L}" y2="{_num(y)}" stroke="black"/>')
        out.append(
            f'<text x="{MARGIN_L - 8}" y="{_num(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3g}</text>'
        )
        i = round((n - 1) * k / 4)
        x = px(i)
        out.append(f'<line x1="{_num(x)}" y1="{MARGIN_T + ph}" x2="{_num(x)}" y2="{MARGIN_T + ph + 4}" stroke="black"/>')
        out.append(
            f'<text x="{_num(x)}" y="{MARGIN_T + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{i + 1}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + pw / 2:.0f}" y="{HEIGHT - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.0f})">{escape(y_label)}</text>'
    )

    def polyline(ys: Sequence[float], color: str, extra: str) -> str:
        pts = " ".join(f"{_num(px(i))},{_num(py(v))}" for i, v in enumerate(ys))
        return f'<polyline fill="none" stroke="{color}" {extra} points="{pts}"/>'

    for idx, ys in faint:
        if ys:
            out.append(polyline(ys, PALETTE[idx % len(PALETTE)], 'stroke-width="0.8" stroke-opacity="0.35"'))
    for k, (name, ys) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        if ys:
            out.append(polyline(ys, color, 'stroke-width="1.8"'))
        ly = MARGIN_T + 12 + 18 * k
        lx = WIDTH - MARGIN_R + 16
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}" font-family="sans-serif" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
