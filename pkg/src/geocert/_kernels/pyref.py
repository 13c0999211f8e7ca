"""Numpy reference implementation of the per-pixel sampling kernels.

Both backends implement the same contract:

``sample_bilinear(tex, rows, cols)``
    Bilinear interpolation of ``tex`` (H, W, C) at fractional (row, col)
    positions, with zero padding outside the texture.

``bilinear_hull(tex, rlo, rhi, clo, chi)``
    Per sample, an interval enclosure of ``sample_bilinear`` over the whole
    coordinate rectangle [rlo, rhi] x [clo, chi]:

    * window up to ``MAX_WINDOW`` texels on a side: exact.  Bilinear
      interpolation is monotone along each axis inside a texel cell, so its
      extrema over the rectangle sit at subrectangle corners (the rectangle
      corners and the points where its edges cross texel gridlines); all of
      those are evaluated through the sampling kernel itself, which also
      reproduces its zero padding outside the texture;
    * wider windows: whole-texture hull with the padding value folded in.
"""

from __future__ import annotations

import numpy as np

MAX_WINDOW = 32

_COORD_LIMIT = 1e9


def _prep_coords(*arrs):
    out = []
    for a in arrs:
        a = np.asarray(a, dtype=np.float64).ravel()
        out.append(np.clip(a, -_COORD_LIMIT, _COORD_LIMIT))
    return out


def sample_bilinear(tex: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Point samples of ``tex`` at (rows, cols); shape (N, C)."""
    tex = np.asarray(tex, dtype=np.float64)
    h, w, _ = tex.shape
    rows, cols = _prep_coords(rows, cols)

    l0 = np.floor(rows)
    k0 = np.floor(cols)
    fr = rows - l0
    fc = cols - k0
    l0 = l0.astype(np.int64)
    k0 = k0.astype(np.int64)

    out = np.zeros((rows.size, tex.shape[2]), dtype=np.float64)
    for dl in (0, 1):
        wl = fr if dl else 1.0 - fr
        li = l0 + dl
        row_ok = (li >= 0) & (li < h)
        lic = np.clip(li, 0, h - 1)
        for dk in (0, 1):
            wk = fc if dk else 1.0 - fc
            ki = k0 + dk
            ok = row_ok & (ki >= 0) & (ki < w)
            kic = np.clip(ki, 0, w - 1)
            out += (wl * wk * ok)[:, None] * tex[lic, kic]
    return out


def bilinear_hull(
    tex: np.ndarray,
    rlo: np.ndarray,
    rhi: np.ndarray,
    clo: np.ndarray,
    chi: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Interval hull of bilinear samples over coordinate rectangles.

    Returns (lo, hi), each (N, C).
    """
    tex = np.asarray(tex, dtype=np.float64)
    h, w, c = tex.shape
    rlo, rhi, clo, chi = _prep_coords(rlo, rhi, clo, chi)
    if np.any(rlo > rhi) or np.any(clo > chi):
        raise ValueError("coordinate rectangle has inverted bounds")
    n = rlo.size

    r0 = np.floor(rlo).astype(np.int64)
    r1 = np.floor(rhi).astype(np.int64)
    c0 = np.floor(clo).astype(np.int64)
    c1 = np.floor(chi).astype(np.int64)

    lo_out = np.empty((n, c), dtype=np.float64)
    hi_out = np.empty((n, c), dtype=np.float64)

    single = (r0 == r1) & (c0 == c1)
    if np.any(single):
        idx = np.flatnonzero(single)
        corner_vals = np.empty((4, idx.size, c), dtype=np.float64)
        for j, (rr, cc) in enumerate(
            ((rlo, clo), (rlo, chi), (rhi, clo), (rhi, chi))
        ):
            corner_vals[j] = sample_bilinear(tex, rr[idx], cc[idx])
        lo_out[idx] = corner_vals.min(axis=0)
        hi_out[idx] = corner_vals.max(axis=0)

    multi = ~single
    if np.any(multi):
        idx = np.flatnonzero(multi)
        nrows = r1[idx] - r0[idx] + 2
        ncols = c1[idx] - c0[idx] + 2
        capped = (nrows > MAX_WINDOW) | (ncols > MAX_WINDOW)

        if np.any(capped):
            gidx = idx[capped]
            glo = np.minimum(tex.reshape(-1, c).min(axis=0), 0.0)
            ghi = np.maximum(tex.reshape(-1, c).max(axis=0), 0.0)
            lo_out[gidx] = glo
            hi_out[gidx] = ghi

        widx = idx[~capped]
        if widx.size:
            # the interpolant is monotone along each axis inside a texel
            # cell, so its exact range over the rectangle is attained at
            # subrectangle corners: rectangle corners clamped onto every
            # gridline the rectangle straddles; sampling through the kernel
            # keeps the zero padding semantics outside the texture
            x0, x1 = rlo[widx], rhi[widx]
            y0, y1 = clo[widx], chi[widx]
            wr0 = r0[widx]
            wc0 = c0[widx]
            wlo = np.full((widx.size, c), np.inf)
            whi = np.full((widx.size, c), -np.inf)
            for dr in range(int((r1[widx] - wr0).max()) + 2):
                rr = np.clip(wr0 + dr, x0, x1)
                for dc in range(int((c1[widx] - wc0).max()) + 2):
                    cc = np.clip(wc0 + dc, y0, y1)
                    vals = sample_bilinear(tex, rr, cc)
                    np.minimum(wlo, vals, out=wlo)
                    np.maximum(whi, vals, out=whi)
            lo_out[widx] = wlo
            hi_out[widx] = whi

    return lo_out, hi_out
