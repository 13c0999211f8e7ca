# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-pixel sampling kernels.

Same contract and corner-evaluation semantics as ``pyref``; the per-sample
loops here replace pyref's per-offset numpy gathers. Accumulation order in
the bilinear formula matches pyref so both backends agree to the last bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

MAX_WINDOW = 32

cdef double _COORD_LIMIT = 1e9
cdef long _MAXW = 32


cdef inline double _clipc(double x) noexcept nogil:
    if x < -_COORD_LIMIT:
        return -_COORD_LIMIT
    if x > _COORD_LIMIT:
        return _COORD_LIMIT
    return x


cdef inline double _texel(const double[:, :, ::1] tex, long l, long k, long ch,
                          long h, long w) noexcept nogil:
    if l < 0 or l >= h or k < 0 or k >= w:
        return 0.0
    return tex[l, k, ch]


cdef inline double _sample_one(const double[:, :, ::1] tex, double r, double c,
                               long ch, long h, long w) noexcept nogil:
    cdef double lf = floor(r)
    cdef double kf = floor(c)
    cdef double fr = r - lf
    cdef double fc = c - kf
    cdef long l0 = <long> lf
    cdef long k0 = <long> kf
    cdef double acc = 0.0
    acc += ((1.0 - fr) * (1.0 - fc)) * _texel(tex, l0, k0, ch, h, w)
    acc += ((1.0 - fr) * fc) * _texel(tex, l0, k0 + 1, ch, h, w)
    acc += (fr * (1.0 - fc)) * _texel(tex, l0 + 1, k0, ch, h, w)
    acc += (fr * fc) * _texel(tex, l0 + 1, k0 + 1, ch, h, w)
    return acc


def sample_bilinear(tex, rows, cols):
    """Point samples of ``tex`` at (rows, cols); shape (N, C)."""
    cdef double[:, :, ::1] t = np.ascontiguousarray(tex, dtype=np.float64)
    cdef double[::1] rr = np.ascontiguousarray(np.ravel(rows), dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(np.ravel(cols), dtype=np.float64)
    cdef long h = t.shape[0], w = t.shape[1], nc = t.shape[2]
    cdef long n = rr.shape[0]
    out_arr = np.empty((n, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef long i, ch
    cdef double r, c
    with nogil:
        for i in range(n):
            r = _clipc(rr[i])
            c = _clipc(cc[i])
            for ch in range(nc):
                out[i, ch] = _sample_one(t, r, c, ch, h, w)
    return out_arr


def bilinear_hull(tex, rlo, rhi, clo, chi):
    """Interval hull of bilinear samples over coordinate rectangles."""
    cdef double[:, :, ::1] t = np.ascontiguousarray(tex, dtype=np.float64)
    cdef double[::1] rl = np.ascontiguousarray(np.ravel(rlo), dtype=np.float64)
    cdef double[::1] rh = np.ascontiguousarray(np.ravel(rhi), dtype=np.float64)
    cdef double[::1] cl = np.ascontiguousarray(np.ravel(clo), dtype=np.float64)
    cdef double[::1] ch_ = np.ascontiguousarray(np.ravel(chi), dtype=np.float64)
    cdef long h = t.shape[0], w = t.shape[1], nc = t.shape[2]
    cdef long n = rl.shape[0]
    cdef long i
    for i in range(n):
        if rl[i] > rh[i] or cl[i] > ch_[i]:
            raise ValueError("coordinate rectangle has inverted bounds")

    lo_arr = np.empty((n, nc), dtype=np.float64)
    hi_arr = np.empty((n, nc), dtype=np.float64)
    cdef double[:, ::1] lo = lo_arr
    cdef double[:, ::1] hi = hi_arr

    # whole-texture hull with the zero-padding value folded in
    glo_arr = np.minimum(np.asarray(t).reshape(-1, nc).min(axis=0), 0.0)
    ghi_arr = np.maximum(np.asarray(t).reshape(-1, nc).max(axis=0), 0.0)
    cdef double[::1] glo = np.ascontiguousarray(glo_arr)
    cdef double[::1] ghi = np.ascontiguousarray(ghi_arr)

    cdef long r0, r1, c0, c1, rr_, cc_, ch
    cdef double a, b, c, d, vlo, vhi, v, rq, cq
    cdef double x0, x1, y0, y1

    with nogil:
        for i in range(n):
            x0 = _clipc(rl[i])
            x1 = _clipc(rh[i])
            y0 = _clipc(cl[i])
            y1 = _clipc(ch_[i])
            r0 = <long> floor(x0)
            r1 = <long> floor(x1)
            c0 = <long> floor(y0)
            c1 = <long> floor(y1)
            if r0 == r1 and c0 == c1:
                for ch in range(nc):
                    a = _sample_one(t, x0, y0, ch, h, w)
                    b = _sample_one(t, x0, y1, ch, h, w)
                    c = _sample_one(t, x1, y0, ch, h, w)
                    d = _sample_one(t, x1, y1, ch, h, w)
                    vlo = a
                    if b < vlo: vlo = b
                    if c < vlo: vlo = c
                    if d < vlo: vlo = d
                    vhi = a
                    if b > vhi: vhi = b
                    if c > vhi: vhi = c
                    if d > vhi: vhi = d
                    lo[i, ch] = vlo
                    hi[i, ch] = vhi
            elif r1 - r0 + 2 > _MAXW or c1 - c0 + 2 > _MAXW:
                for ch in range(nc):
                    lo[i, ch] = glo[ch]
                    hi[i, ch] = ghi[ch]
            else:
                # exact range: the interpolant is monotone per axis inside a
                # texel cell, so extrema over the rectangle sit at its corners
                # clamped onto every gridline the rectangle straddles
                for ch in range(nc):
                    v = _sample_one(t, x0, y0, ch, h, w)
                    vlo = v
                    vhi = v
                    for rr_ in range(r0, r1 + 2):
                        rq = <double> rr_
                        if rq < x0: rq = x0
                        if rq > x1: rq = x1
                        for cc_ in range(c0, c1 + 2):
                            cq = <double> cc_
                            if cq < y0: cq = y0
                            if cq > y1: cq = y1
                            v = _sample_one(t, rq, cq, ch, h, w)
                            if v < vlo: vlo = v
                            if v > vhi: vhi = v
                    lo[i, ch] = vlo
                    hi[i, ch] = vhi
    return lo_arr, hi_arr
