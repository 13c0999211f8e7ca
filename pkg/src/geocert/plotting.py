"""Hand-rolled SVG phase plots of reachable boxes.

No plotting dependency: the figures are assembled from SVG primitives.  Each
state-pair panel draws exactly one rect per reachable box (nothing else is a
rect, so consumers can count boxes), lines for the axes, optional circles
for sampled states, and text labels.
"""

import numpy as np

from .reach import ReachResult

_PANEL = 260.0
_MARGIN = 46.0
_GAP = 26.0


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _state_pairs(dim: int) -> list[tuple[int, int]]:
    if dim == 1:
        return [(0, 0)]
    return [(i, i + 1) for i in range(0, dim - 1, 2)]


def _box_color(t: int, total: int) -> str:
    f = t / max(total - 1, 1)
    r = int(round(40 + 180 * f))
    b = int(round(200 - 160 * f))
    return f"rgb({r},70,{b})"


class _Panel:
    def __init__(self, result: ReachResult, samples, ix: int, iy: int, left: float):
        self.ix, self.iy, self.left = ix, iy, left
        xs = [v for b in result.boxes for v in (b.lo[ix], b.hi[ix])]
        ys = [v for b in result.boxes for v in (b.lo[iy], b.hi[iy])]
        if samples is not None:
            xs += list(samples[:, :, ix].ravel())
            ys += list(samples[:, :, iy].ravel())
        self.x0, self.x1 = self._padded(min(xs), max(xs))
        self.y0, self.y1 = self._padded(min(ys), max(ys))

    @staticmethod
    def _padded(lo: float, hi: float) -> tuple[float, float]:
        span = max(hi - lo, 1e-9)
        return lo - 0.08 * span, hi + 0.08 * span

    def px(self, v: float) -> float:
        return self.left + _MARGIN + (v - self.x0) / (self.x1 - self.x0) * _PANEL

    def py(self, v: float) -> float:
        return _MARGIN + (1.0 - (v - self.y0) / (self.y1 - self.y0)) * _PANEL

    def rect(self, box, color: str) -> str:
        x = self.px(box.lo[self.ix])
        y = self.py(box.hi[self.iy])
        w = self.px(box.hi[self.ix]) - x
        h = self.py(box.lo[self.iy]) - y
        return (
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(max(w, 0.5))}" '
            f'height="{_fmt(max(h, 0.5))}" fill="none" stroke="{color}" '
            'stroke-width="1.3"/>'
        )

    def frame(self, xname: str, yname: str) -> list[str]:
        x_axis_y = _MARGIN + _PANEL
        left, right = self.left + _MARGIN, self.left + _MARGIN + _PANEL
        parts = [
            f'<line x1="{_fmt(left)}" y1="{_fmt(x_axis_y)}" x2="{_fmt(right)}" '
            f'y2="{_fmt(x_axis_y)}" stroke="black" stroke-width="1"/>',
            f'<line x1="{_fmt(left)}" y1="{_fmt(_MARGIN)}" x2="{_fmt(left)}" '
            f'y2="{_fmt(x_axis_y)}" stroke="black" stroke-width="1"/>',
            f'<text x="{_fmt(left + _PANEL / 2)}" y="{_fmt(x_axis_y + 30)}" '
            f'text-anchor="middle" font-size="12">{xname}</text>',
            f'<text x="{_fmt(left - 32)}" y="{_fmt(_MARGIN + _PANEL / 2)}" '
            f'text-anchor="middle" font-size="12" transform="rotate(-90 '
            f'{_fmt(left - 32)} {_fmt(_MARGIN + _PANEL / 2)})">{yname}</text>',
            f'<text x="{_fmt(left)}" y="{_fmt(x_axis_y + 16)}" text-anchor="middle" '
            f'font-size="9">{_fmt(self.x0)}</text>',
            f'<text x="{_fmt(right)}" y="{_fmt(x_axis_y + 16)}" text-anchor="middle" '
            f'font-size="9">{_fmt(self.x1)}</text>',
            f'<text x="{_fmt(left - 6)}" y="{_fmt(x_axis_y)}" text-anchor="end" '
            f'font-size="9">{_fmt(self.y0)}</text>',
            f'<text x="{_fmt(left - 6)}" y="{_fmt(_MARGIN + 8)}" text-anchor="end" '
            f'font-size="9">{_fmt(self.y1)}</text>',
        ]
        return parts

    def circles(self, samples) -> list[str]:
        pts = samples[:, :, (self.ix, self.iy)].reshape(-1, 2)
        return [
            f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="1.6" '
            'fill="rgb(30,30,30)" fill-opacity="0.55"/>'
            for x, y in pts
        ]


def phase_plot_svg(result: ReachResult, samples=None, state_names=None) -> str:
    """SVG with one panel per consecutive state pair; each panel holds one
    rect per reachable box (T+1 total) plus axes, labels, and sample dots."""
    dim = result.boxes[0].dim
    if samples is not None:
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 3 or samples.shape[2] != dim:
            raise ValueError("samples must have shape (n, steps, state_dim)")
    if state_names is None:
        state_names = [f"x{i}" for i in range(dim)]
    pairs = _state_pairs(dim)
    width = len(pairs) * (_PANEL + 2 * _MARGIN + _GAP) - _GAP
    height = _PANEL + 2 * _MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        '<style>text{font-family:sans-serif}</style>',
    ]
    total = len(result.boxes)
    for p, (ix, iy) in enumerate(pairs):
        panel = _Panel(result, samples, ix, iy, p * (_PANEL + 2 * _MARGIN + _GAP))
        parts.extend(panel.frame(state_names[ix], state_names[iy]))
        if samples is not None:
            parts.extend(panel.circles(samples))
        for t, box in enumerate(result.boxes):
            parts.append(panel.rect(box, _box_color(t, total)))
    parts.append("</svg>")
    return "\n".join(parts)


def write_phase_svg(path, result: ReachResult, samples=None, state_names=None):
    svg = phase_plot_svg(result, samples, state_names)
    with open(path, "w") as fh:
        fh.write(svg)
    return path
