"""Sound per-pixel affine bounds in the transform parameters.

For a sprite under a parameterized warp over a parameter box K, each pixel
row (every color channel plus alpha) gets a lower and an upper plane in the
parameters, valid for every parameter in K:

1. fit one plane per row by least squares over a deterministic tensor grid
   of warped renders;
2. soundify: partition K into cells, bound the plane and the true pixel
   value over each cell by interval arithmetic (exact interval trig for the
   warp coordinates, covered-texel hulls for the interpolation), and shift
   the plane intercept past the worst violation plus a tolerance;
3. refine: repeatedly split the worst cell to tighten the shifts, within a
   split budget and depth limit.

Degenerate boxes and pixels that are constant over all of K short-circuit
to exact planes with no tolerance padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from geocert import _kernels
from geocert.bounds import (
    Box,
    Interval,
    LinearBounds,
    LinearMap,
    interval_cos,
    interval_mul,
    interval_sin,
)
from geocert.fileio import digest, read_f64, read_json, write_f64, write_json
from geocert.scene import Sprite, TransformSpec

__all__ = [
    "GeoBoundSettings",
    "PixelBoundSet",
    "interval_coords",
    "interval_pixel",
    "pixel_bounds",
    "save_pixel_bounds",
    "load_pixel_bounds",
    "cache_key",
]

_FIT_CAP = 4096


@dataclass(frozen=True)
class GeoBoundSettings:
    fit_samples: int = 64
    cells_per_dim: int = 8
    max_refine_depth: int = 4
    violation_tol: float = 1e-6

    def __post_init__(self):
        if min(self.fit_samples, self.cells_per_dim) < 1 or self.max_refine_depth < 0:
            raise ValueError("geo-bound settings must be positive")
        if self.violation_tol <= 0.0:
            raise ValueError("violation tolerance must be positive")


@dataclass(frozen=True)
class PixelBoundSet:
    """Affine pixel bounds over a parameter box: color rows in C order of
    (H, W, C), alpha rows in row-major pixel order."""

    value_bounds: LinearBounds
    alpha_bounds: LinearBounds
    image_shape: tuple[int, int, int]

    def __post_init__(self):
        h, w, c = self.image_shape
        if self.value_bounds.out_dim != h * w * c:
            raise ValueError("value bound rows do not match image shape")
        if self.alpha_bounds.out_dim != h * w:
            raise ValueError("alpha bound rows do not match image shape")

    @property
    def domain(self) -> Box:
        return self.value_bounds.domain


def interval_coords(
    t: TransformSpec, cell: Box, rows: np.ndarray, cols: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel source-coordinate intervals for all parameters in cell.

    Exact per coordinate: rotations use the amplitude-phase form
    a*cos(m) + b*sin(m) = R*cos(m - phase).
    """
    if cell.dim != t.param_dim:
        raise ValueError(f"cell dim {cell.dim} != {t.kind} param dim {t.param_dim}")
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    lo, hi = cell.lo, cell.hi
    if t.kind == "translation":
        return rows - hi[0], rows - lo[0], cols - hi[1], cols - lo[1]

    cl, ck = t.center
    if t.kind == "rotation":
        dl, dk = rows - cl, cols - ck
        rad = np.hypot(dl, dk)
        phase = np.arctan2(dk, dl)
        rlo, rhi = interval_cos(lo[0] - phase, hi[0] - phase)
        klo, khi = interval_sin(phase - hi[0], phase - lo[0])
        return cl + rad * rlo, cl + rad * rhi, ck + rad * klo, ck + rad * khi

    # rotation_then_translation: interval displacement times interval trig
    dllo, dlhi = rows - cl - hi[0], rows - cl - lo[0]
    dklo, dkhi = cols - ck - hi[1], cols - ck - lo[1]
    ca_lo, ca_hi = interval_cos(np.array(lo[2]), np.array(hi[2]))
    sa_lo, sa_hi = interval_sin(np.array(lo[2]), np.array(hi[2]))
    t1 = interval_mul(ca_lo, ca_hi, dllo, dlhi)
    t2 = interval_mul(sa_lo, sa_hi, dklo, dkhi)
    t3 = interval_mul(-sa_hi, -sa_lo, dllo, dlhi)
    t4 = interval_mul(ca_lo, ca_hi, dklo, dkhi)
    return (
        cl + t1[0] + t2[0],
        cl + t1[1] + t2[1],
        ck + t3[0] + t4[0],
        ck + t3[1] + t4[1],
    )


def _stacked_tex(sprite: Sprite) -> np.ndarray:
    return np.ascontiguousarray(
        np.concatenate([sprite.canvas, sprite.alpha[:, :, None]], axis=2)
    )


def _intensity_interval(lo, hi, intensity, n_color):
    psi, phi = intensity
    a = psi * lo[:, :n_color] + phi
    b = psi * hi[:, :n_color] + phi
    lo = lo.copy()
    hi = hi.copy()
    lo[:, :n_color] = np.clip(np.minimum(a, b), 0.0, 1.0)
    hi[:, :n_color] = np.clip(np.maximum(a, b), 0.0, 1.0)
    return lo, hi


# outward pad on source-coordinate intervals: interval_coords and the exact
# renderer round differently at interval endpoints, and a 1-ulp escape across
# an integer boundary would drop a texel from the hull
_COORD_PAD = 1e-9

# rounding pad on hull values: the renderer's bilinear weights sum to 1 only
# up to a few ulp, so a sample of equal texels can land just outside their
# hull; samples are never negative, and all-zero texels give exactly 0
_VALUE_PAD = 1e-12


def _interval_stack(
    tex: np.ndarray, t: TransformSpec, cell: Box, rows, cols
) -> tuple[np.ndarray, np.ndarray]:
    """(lo, hi) of shape (n_pixels, C+1) over the cell; alpha is the last
    channel and is exempt from the intensity map."""
    if cell.degenerate:
        vals = _sample_stack(tex, t, cell.lo, rows, cols)
        return vals, vals.copy()
    rlo, rhi, clo, chi = interval_coords(t, cell, rows, cols)
    lo, hi = _kernels.bilinear_hull(
        tex, rlo - _COORD_PAD, rhi + _COORD_PAD, clo - _COORD_PAD, chi + _COORD_PAD
    )
    if t.intensity is not None:
        lo, hi = _intensity_interval(lo, hi, t.intensity, tex.shape[2] - 1)
    lo = np.where(lo > 0.0, np.maximum(lo - _VALUE_PAD, 0.0), lo)
    hi = np.where(hi > 0.0, hi + _VALUE_PAD, hi)
    return lo, hi


def _sample_stack(tex: np.ndarray, t: TransformSpec, mu, rows, cols) -> np.ndarray:
    from geocert.scene import inverse_coords

    xr, xc = inverse_coords(t, mu, rows, cols)
    vals = _kernels.sample_bilinear(tex, xr, xc)
    if t.intensity is not None:
        psi, phi = t.intensity
        nc = tex.shape[2] - 1
        vals = vals.copy()
        vals[:, :nc] = np.clip(psi * vals[:, :nc] + phi, 0.0, 1.0)
    return vals


def interval_pixel(s: Sprite, t: TransformSpec, cell: Box, index) -> Interval:
    """Sound interval for one warped pixel value over a parameter cell."""
    l, k, channel = index
    tex = _stacked_tex(s)
    lo, hi = _interval_stack(tex, t, cell, np.array([float(l)]), np.array([float(k)]))
    ch = tex.shape[2] - 1 if channel == "alpha" else int(channel)
    return Interval(float(lo[0, ch]), float(hi[0, ch]))


def _grid_cells(K: Box, per_dim: int) -> list[Box]:
    edges = [np.linspace(lo, hi, per_dim + 1) for lo, hi in zip(K.lo, K.hi)]
    cells = []
    for idx in np.ndindex(*(per_dim,) * K.dim):
        lo = np.array([edges[d][i] for d, i in enumerate(idx)])
        hi = np.array([edges[d][i + 1] for d, i in enumerate(idx)])
        cells.append(Box(lo, hi))
    return cells


def _plane_range_over(
    w: np.ndarray, b: np.ndarray, cell: Box
) -> tuple[np.ndarray, np.ndarray]:
    mid = w @ cell.center + b
    rad = np.abs(w) @ cell.radius
    return mid - rad, mid + rad


class _CellState:
    """Per-cell worst violations of the fixed fit planes; computed once at
    creation since refinement never changes the planes."""

    __slots__ = ("box", "depth", "viol_lo", "viol_hi", "score")

    def __init__(self, box, depth, viol_lo, viol_hi):
        self.box = box
        self.depth = depth
        self.viol_lo = viol_lo
        self.viol_hi = viol_hi
        self.score = float(max(viol_lo.max(), viol_hi.max()))


def pixel_bounds(
    s: Sprite, t: TransformSpec, K: Box, settings: GeoBoundSettings = GeoBoundSettings()
) -> PixelBoundSet:
    if K.dim != t.param_dim:
        raise ValueError(f"parameter box dim {K.dim} != {t.kind} param dim {t.param_dim}")
    h, w, c = s.canvas.shape
    n_px = h * w
    n_rows = n_px * (c + 1)
    tex = _stacked_tex(s)
    grid_r, grid_c = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    rows_flat, cols_flat = grid_r.ravel(), grid_c.ravel()

    def finish(w_lo, b_lo, w_hi, b_hi):
        def split_rows(wm, bm):
            wm = wm.reshape(n_px, c + 1, K.dim)
            bm = bm.reshape(n_px, c + 1)
            vw = np.ascontiguousarray(wm[:, :c, :]).reshape(n_px * c, K.dim)
            vb = np.ascontiguousarray(bm[:, :c]).reshape(n_px * c)
            return LinearMap(vw, vb), LinearMap(np.ascontiguousarray(wm[:, c, :]), np.ascontiguousarray(bm[:, c]))

        val_lo, al_lo = split_rows(w_lo, b_lo)
        val_hi, al_hi = split_rows(w_hi, b_hi)
        return PixelBoundSet(
            LinearBounds(val_lo, val_hi, K),
            LinearBounds(al_lo, al_hi, K),
            (h, w, c),
        )

    zeros_w = np.zeros((n_rows, K.dim))

    if K.degenerate:
        vals = _sample_stack(tex, t, K.lo, rows_flat, cols_flat).reshape(n_rows)
        return finish(zeros_w, vals, zeros_w.copy(), vals.copy())

    # whole-box hull: drives the sparsity fast path and constant rows
    k_lo, k_hi = _interval_stack(tex, t, K, rows_flat, cols_flat)
    k_lo_f, k_hi_f = k_lo.reshape(n_rows), k_hi.reshape(n_rows)
    const_row = k_lo_f == k_hi_f
    vary_px = ~np.all(const_row.reshape(n_px, c + 1), axis=1)
    vp_idx = np.flatnonzero(vary_px)

    w_lo = zeros_w
    w_hi = zeros_w.copy()
    b_lo = np.where(const_row, k_lo_f, 0.0)
    b_hi = np.where(const_row, k_hi_f, 0.0)

    if vp_idx.size == 0:
        return finish(w_lo, b_lo, w_hi, b_hi)

    sub_rows = rows_flat[vp_idx]
    sub_cols = cols_flat[vp_idx]
    # row indices (into the flattened n_rows) covered by the varying pixels
    sub_row_idx = (vp_idx[:, None] * (c + 1) + np.arange(c + 1)[None, :]).ravel()
    m = sub_row_idx.size

    # 1. least-squares plane fit over a deterministic tensor grid
    cap = int(round(_FIT_CAP ** (1.0 / K.dim)))
    while cap**K.dim > _FIT_CAP:
        cap -= 1
    per_dim = max(min(settings.fit_samples, cap), 2)
    samples = K.grid(per_dim)
    design = np.hstack([samples, np.ones((samples.shape[0], 1))])
    targets = np.empty((samples.shape[0], m))
    for i, mu in enumerate(samples):
        targets[i] = _sample_stack(tex, t, mu, sub_rows, sub_cols).ravel()
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    fit_w = coef[: K.dim].T
    fit_b = coef[K.dim]

    def make_cell(box: Box, depth: int) -> _CellState:
        v_lo, v_hi = _interval_stack(tex, t, box, sub_rows, sub_cols)
        p_lo, p_hi = _plane_range_over(fit_w, fit_b, box)
        return _CellState(box, depth, p_hi - v_lo.ravel(), v_hi.ravel() - p_lo)

    # 2. soundify over a uniform cell partition
    cells = [make_cell(cb, 0) for cb in _grid_cells(K, settings.cells_per_dim)]

    # 3. split the worst cell until the budget or depth runs out
    budget = len(cells)
    while budget > 0:
        worst = max(range(len(cells)), key=lambda i: cells[i].score)
        if cells[worst].score <= 0.0 or cells[worst].depth >= settings.max_refine_depth:
            break
        parent = cells.pop(worst)
        axis = int(np.argmax(parent.box.widths))
        for child_box in parent.box.split(axis):
            cells.append(make_cell(child_box, parent.depth + 1))
        budget -= 1

    shift_lo = np.full(m, -np.inf)
    shift_hi = np.full(m, -np.inf)
    for cell in cells:
        np.maximum(shift_lo, cell.viol_lo, out=shift_lo)
        np.maximum(shift_hi, cell.viol_hi, out=shift_hi)
    shift_lo += settings.violation_tol
    shift_hi += settings.violation_tol

    # constant rows inside varying pixels keep their exact constant planes
    vary_row = ~const_row[sub_row_idx]
    idx = sub_row_idx[vary_row]
    w_lo[idx] = fit_w[vary_row]
    w_hi[idx] = fit_w[vary_row]
    b_lo[idx] = (fit_b - shift_lo)[vary_row]
    b_hi[idx] = (fit_b + shift_hi)[vary_row]
    return finish(w_lo, b_lo, w_hi, b_hi)


# ---------------------------------------------------------------------------
# Serialization and caching
# ---------------------------------------------------------------------------

def cache_key(s: Sprite, t: TransformSpec, K: Box, settings: GeoBoundSettings) -> str:
    return digest(
        s.canvas,
        s.alpha,
        list(s.anchor),
        {
            "kind": t.kind,
            "center": None if t.center is None else list(t.center),
            "intensity": None if t.intensity is None else list(t.intensity),
        },
        K.lo,
        K.hi,
        asdict(settings),
    )


def save_pixel_bounds(directory, key: str, pbs: PixelBoundSet) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = [
        pbs.value_bounds.lower.weights,
        pbs.value_bounds.lower.bias,
        pbs.value_bounds.upper.weights,
        pbs.value_bounds.upper.bias,
        pbs.alpha_bounds.lower.weights,
        pbs.alpha_bounds.lower.bias,
        pbs.alpha_bounds.upper.weights,
        pbs.alpha_bounds.upper.bias,
    ]
    flat = np.concatenate([a.ravel() for a in arrays])
    write_f64(directory / f"{key}.bin", flat)
    write_json(
        directory / f"{key}.json",
        {
            "image_shape": list(pbs.image_shape),
            "domain_lo": pbs.domain.lo.tolist(),
            "domain_hi": pbs.domain.hi.tolist(),
            "shapes": [list(a.shape) for a in arrays],
            "dtype": "<f8",
        },
    )
    return directory / f"{key}.json"


def load_pixel_bounds(directory, key: str) -> PixelBoundSet | None:
    directory = Path(directory)
    header_path = directory / f"{key}.json"
    bin_path = directory / f"{key}.bin"
    if not header_path.exists() or not bin_path.exists():
        return None
    header = read_json(header_path)
    shapes = [tuple(sh) for sh in header["shapes"]]
    total = sum(int(np.prod(sh)) for sh in shapes)
    flat = read_f64(bin_path, (total,))
    arrays = []
    off = 0
    for sh in shapes:
        n = int(np.prod(sh))
        arrays.append(flat[off : off + n].reshape(sh))
        off += n
    domain = Box(header["domain_lo"], header["domain_hi"])
    return PixelBoundSet(
        LinearBounds(LinearMap(arrays[0], arrays[1]), LinearMap(arrays[2], arrays[3]), domain),
        LinearBounds(LinearMap(arrays[4], arrays[5]), LinearMap(arrays[6], arrays[7]), domain),
        tuple(header["image_shape"]),
    )
