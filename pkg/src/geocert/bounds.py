"""Interval arithmetic, affine bound containers, scalar relaxations and
McCormick envelopes.

Every operation here is a pure function on immutable values; all the
relaxation machinery shares one soundness convention: a relaxation line for
a function ``sigma`` over an interval ``[a, b]`` is built from a candidate
slope ``s`` whose intercept is corrected *exactly* by minimizing/maximizing
``sigma(z) - s*z`` over ``[a, b]`` (endpoints plus closed-form critical
points), then padded outward by ``SOUND_EPS`` to absorb float rounding.
Exact cases (affine pieces, degenerate inputs, McCormick planes) skip the
padding so that degenerate problems stay exact end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SOUND_EPS",
    "Interval",
    "Box",
    "LinearMap",
    "LinearBounds",
    "ScalarRelaxation",
    "IntervalDomainError",
    "concretize",
    "relax_scalar",
    "mccormick",
    "mccormick_planes",
    "mccormick_select",
    "compose_affine",
    "affine_range",
    "interval_cos",
    "interval_sin",
    "interval_mul",
]

SOUND_EPS = 1e-9

_TWO_PI = 2.0 * math.pi


class IntervalDomainError(ValueError):
    """A relaxation was requested on an interval outside the function's domain
    (e.g. reciprocal of an interval containing 0)."""


@dataclass(frozen=True)
class Interval:
    """A closed interval [lo, hi] with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"interval lower bound exceeds upper: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def clamp(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))


class Box:
    """An axis-aligned box: per-dimension lower/upper bound vectors."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"box needs matching 1-d bounds, got {lo.shape} / {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper in some dimension")
        self.lo = lo
        self.hi = hi
        self.lo.flags.writeable = False
        self.hi.flags.writeable = False

    @classmethod
    def from_intervals(cls, intervals: Iterable[Interval]) -> "Box":
        ivs = list(intervals)
        return cls([iv.lo for iv in ivs], [iv.hi for iv in ivs])

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def dims(self) -> tuple[Interval, ...]:
        return tuple(Interval(float(l), float(h)) for l, h in zip(self.lo, self.hi))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def degenerate(self) -> bool:
        return bool(np.all(self.lo == self.hi))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Element-of test for one point (d,) or a batch (n, d)."""
        pts = np.asarray(points, dtype=float)
        inside = (pts >= self.lo - tol) & (pts <= self.hi + tol)
        return inside.all(axis=-1)

    def contains_box(self, other: "Box", tol: float = 0.0) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def grid(self, per_dim: int) -> np.ndarray:
        """Tensor-product uniform grid, endpoints included; shape (per_dim**d, d)."""
        axes = [np.linspace(l, h, per_dim) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def split(self, axis: int) -> tuple["Box", "Box"]:
        mid = 0.5 * (self.lo[axis] + self.hi[axis])
        left_hi = self.hi.copy()
        left_hi[axis] = mid
        right_lo = self.lo.copy()
        right_lo[axis] = mid
        return Box(self.lo, left_hi), Box(right_lo, self.hi)

    def concat(self, other: "Box") -> "Box":
        return Box(np.concatenate([self.lo, other.lo]), np.concatenate([self.hi, other.hi]))

    def inflate(self, factor: float, min_width: float = 0.0) -> "Box":
        half = np.maximum(self.radius * factor, 0.5 * min_width)
        return Box(self.center - half, self.center + half)

    def __eq__(self, other) -> bool:
        return isinstance(other, Box) and np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __repr__(self) -> str:
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


@dataclass(frozen=True)
class LinearMap:
    """An affine map x -> weights @ x + bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.size:
            raise ValueError(f"affine map shape mismatch: weights {w.shape}, bias {b.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.bias.size

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.weights @ x + self.bias if x.ndim == 1 else x @ self.weights.T + self.bias


def affine_range(weights: np.ndarray, bias: np.ndarray, box: Box) -> tuple[np.ndarray, np.ndarray]:
    """Exact range of an affine map over a box, via center/radius."""
    if weights.shape[-1] != box.dim:
        raise ValueError(f"affine map takes {weights.shape[-1]} inputs, box has {box.dim}")
    mid = weights @ box.center + bias
    rad = np.abs(weights) @ box.radius
    return mid - rad, mid + rad


@dataclass(frozen=True)
class LinearBounds:
    """Element-wise affine lower/upper bounds of a function over a box domain.

    Semantic invariant (checked by sampling in tests): for every kappa in
    ``domain``, ``lower(kappa) <= f(kappa) <= upper(kappa)`` element-wise.
    """

    lower: LinearMap
    upper: LinearMap
    domain: Box

    def __post_init__(self):
        if self.lower.weights.shape != self.upper.weights.shape:
            raise ValueError("lower/upper bound shapes differ")
        if self.lower.in_dim != self.domain.dim:
            raise ValueError(
                f"bound maps take {self.lower.in_dim} inputs, domain has {self.domain.dim}"
            )

    @property
    def out_dim(self) -> int:
        return self.lower.out_dim

    @classmethod
    def constant(cls, lo: np.ndarray, hi: np.ndarray, domain: Box) -> "LinearBounds":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        zeros = np.zeros((lo.size, domain.dim))
        return cls(LinearMap(zeros, lo), LinearMap(zeros.copy(), hi), domain)

    @classmethod
    def exact(cls, linmap: LinearMap, domain: Box) -> "LinearBounds":
        return cls(linmap, linmap, domain)

    def lift(self, total_dim: int, offset: int) -> "LinearBounds":
        """Re-express over a larger domain whose columns [offset:offset+d] are this
        bound's variables; the enclosing domain must be supplied separately."""
        raise NotImplementedError("use lift_into with the enclosing box")

    def lift_into(self, domain: Box, offset: int) -> "LinearBounds":
        d = self.lower.in_dim
        if offset < 0 or offset + d > domain.dim:
            raise ValueError("lift offset out of range")

        def embed(m: LinearMap) -> LinearMap:
            w = np.zeros((m.out_dim, domain.dim))
            w[:, offset : offset + d] = m.weights
            return LinearMap(w, m.bias)

        return LinearBounds(embed(self.lower), embed(self.upper), domain)


def concretize(lb: LinearBounds) -> Box:
    """Per output dimension, [min of lower, max of upper] over the domain,
    in closed form: min = bias + w @ center - |w| @ radius."""
    lo, _ = affine_range(lb.lower.weights, lb.lower.bias, lb.domain)
    _, hi = affine_range(lb.upper.weights, lb.upper.bias, lb.domain)
    return Box(lo, hi)


def compose_affine(outer: LinearBounds, inner: LinearBounds) -> LinearBounds:
    """Bounds on f(g(x)) from bounds on f over Y and bounds on g over X.

    Requires the concretized range of ``inner`` to lie inside ``outer.domain``
    (otherwise the outer bounds are not known to hold).
    """
    inner_range = concretize(inner)
    if not outer.domain.contains_box(inner_range, tol=1e-9):
        raise ValueError("inner bounds leave the outer bounds' domain")

    def substitute(w: np.ndarray, b: np.ndarray, lo_side: bool) -> LinearMap:
        pos, neg = np.clip(w, 0.0, None), np.clip(w, None, 0.0)
        first, second = (inner.lower, inner.upper) if lo_side else (inner.upper, inner.lower)
        new_w = pos @ first.weights + neg @ second.weights
        new_b = pos @ first.bias + neg @ second.bias + b
        return LinearMap(new_w, new_b)

    return LinearBounds(
        substitute(outer.lower.weights, outer.lower.bias, True),
        substitute(outer.upper.weights, outer.upper.bias, False),
        inner.domain,
    )


# ---------------------------------------------------------------------------
# Scalar relaxations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarRelaxation:
    """Two lines bounding a scalar nonlinearity over ``input``."""

    lower_slope: float
    lower_intercept: float
    upper_slope: float
    upper_intercept: float
    input: Interval

    def lower(self, z):
        return self.lower_slope * np.asarray(z) + self.lower_intercept

    def upper(self, z):
        return self.upper_slope * np.asarray(z) + self.upper_intercept


def _sigma(kind: str, z: float) -> float:
    if kind == "relu":
        return max(z, 0.0)
    if kind == "tanh":
        return math.tanh(z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + math.exp(-z))
    if kind == "sin":
        return math.sin(z)
    if kind == "cos":
        return math.cos(z)
    if kind == "square":
        return z * z
    if kind == "reciprocal":
        return 1.0 / z
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


def _dsigma(kind: str, z: float) -> float:
    if kind == "relu":
        return 1.0 if z > 0 else 0.0
    if kind == "tanh":
        t = math.tanh(z)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = 1.0 / (1.0 + math.exp(-z))
        return s * (1.0 - s)
    if kind == "sin":
        return math.cos(z)
    if kind == "cos":
        return -math.sin(z)
    if kind == "square":
        return 2.0 * z
    if kind == "reciprocal":
        return -1.0 / (z * z)
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


def _critical_points(kind: str, s: float, a: float, b: float) -> list[float]:
    """Interior solutions of sigma'(z) = s on (a, b), in closed form per kind."""
    pts: list[float] = []
    if kind == "relu":
        pts = [0.0]
    elif kind == "square":
        pts = [0.5 * s]
    elif kind == "tanh":
        if 0.0 < s <= 1.0:
            t = math.sqrt(max(1.0 - s, 0.0))
            if t < 1.0:
                z = math.atanh(t)
                pts = [z, -z]
    elif kind == "sigmoid":
        if 0.0 < s <= 0.25:
            root = math.sqrt(max(1.0 - 4.0 * s, 0.0))
            for sig in ((1.0 + root) / 2.0, (1.0 - root) / 2.0):
                if 0.0 < sig < 1.0:
                    pts.append(math.log(sig / (1.0 - sig)))
    elif kind == "reciprocal":
        if s < 0.0:
            z = 1.0 / math.sqrt(-s)
            pts = [z, -z]
    elif kind in ("sin", "cos"):
        # sin: cos(z) = s; cos: sin(z) = -s
        if abs(s) <= 1.0:
            if kind == "sin":
                base = math.acos(max(-1.0, min(1.0, s)))
                branch = [base, -base]
            else:
                base = math.asin(max(-1.0, min(1.0, -s)))
                branch = [base, math.pi - base]
            k_lo = math.floor((a - math.pi) / _TWO_PI)
            k_hi = math.ceil((b + math.pi) / _TWO_PI)
            for k in range(int(k_lo), int(k_hi) + 1):
                for z0 in branch:
                    pts.append(z0 + _TWO_PI * k)
    return [z for z in pts if a < z < b]


def _corrected_line(kind: str, s: float, a: float, b: float, side: str) -> tuple[float, float]:
    """Line with slope s and the exact extremal intercept of sigma(z) - s*z."""
    zs = [a, b] + _critical_points(kind, s, a, b)
    gaps = [_sigma(kind, z) - s * z for z in zs]
    c = min(gaps) if side == "lower" else max(gaps)
    return s, c


def _s_shaped_tangent_slopes(kind: str, a: float, b: float) -> list[float]:
    """Tangent-point slopes for S-shaped kinds on an inflection-crossing
    interval, found by binary search (tangent through the opposite endpoint)."""
    slopes = []
    fa, fb = _sigma(kind, a), _sigma(kind, b)

    def tangent_gap(d: float, x0: float, f0: float) -> float:
        return _sigma(kind, d) + _dsigma(kind, d) * (x0 - d) - f0

    # upper side: tangent at d in [0, b] through (a, sigma(a))
    for (lo_z, hi_z, x0, f0) in ((0.0, b, a, fa), (a, 0.0, b, fb)):
        g_lo, g_hi = tangent_gap(lo_z, x0, f0), tangent_gap(hi_z, x0, f0)
        if g_lo * g_hi <= 0.0:
            lo, hi = lo_z, hi_z
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                if tangent_gap(mid, x0, f0) * g_lo <= 0.0:
                    hi = mid
                else:
                    lo = mid
            slopes.append(_dsigma(kind, 0.5 * (lo + hi)))
    return slopes


def relax_scalar(kind: str, input: Interval) -> ScalarRelaxation:
    """Sound two-sided linear relaxation of a scalar nonlinearity.

    Exact (both lines equal sigma) when sigma is affine on the interval or
    the interval is degenerate.
    """
    a, b = input.lo, input.hi
    if kind == "reciprocal" and a <= 0.0 <= b:
        raise IntervalDomainError(f"reciprocal undefined on [{a}, {b}] containing 0")

    if a == b:
        v = _sigma(kind, a)
        return ScalarRelaxation(0.0, v, 0.0, v, input)

    if kind == "relu":
        if a >= 0.0:
            return ScalarRelaxation(1.0, 0.0, 1.0, 0.0, input)
        if b <= 0.0:
            return ScalarRelaxation(0.0, 0.0, 0.0, 0.0, input)
        up_s = b / (b - a)
        up_c = -a * b / (b - a) + SOUND_EPS
        lo_s = 1.0 if b >= -a else 0.0  # area-minimizing tie-break
        return ScalarRelaxation(lo_s, 0.0, up_s, up_c, input)

    mid = 0.5 * (a + b)
    chord = (_sigma(kind, b) - _sigma(kind, a)) / (b - a)
    if kind in ("sin", "cos") and b - a > math.pi:
        slopes = [0.0]  # constant fallback across multiple monotone regions
    else:
        slopes = [chord, _dsigma(kind, mid), _dsigma(kind, a), _dsigma(kind, b), 0.0]
        if kind in ("tanh", "sigmoid") and a < 0.0 < b:
            slopes += _s_shaped_tangent_slopes(kind, a, b)

    best_lo = best_hi = None
    for s in slopes:
        s_lo, c_lo = _corrected_line(kind, s, a, b, "lower")
        s_hi, c_hi = _corrected_line(kind, s, a, b, "upper")
        if best_lo is None or s_lo * mid + c_lo > best_lo[0] * mid + best_lo[1]:
            best_lo = (s_lo, c_lo)
        if best_hi is None or s_hi * mid + c_hi < best_hi[0] * mid + best_hi[1]:
            best_hi = (s_hi, c_hi)

    return ScalarRelaxation(
        best_lo[0], best_lo[1] - SOUND_EPS, best_hi[0], best_hi[1] + SOUND_EPS, input
    )


# ---------------------------------------------------------------------------
# McCormick envelopes
# ---------------------------------------------------------------------------

def mccormick_planes(a: Interval, b: Interval) -> tuple[np.ndarray, np.ndarray]:
    """The two under- and two overestimating planes for a*b over a x b.

    Returns (lower_planes, upper_planes), each of shape (2, 3) holding
    (coef_a, coef_b, const) rows. Planes touch a*b at box corners exactly.
    """
    lower = np.array(
        [
            [b.lo, a.lo, -a.lo * b.lo],
            [b.hi, a.hi, -a.hi * b.hi],
        ]
    )
    upper = np.array(
        [
            [b.hi, a.lo, -a.lo * b.hi],
            [b.lo, a.hi, -a.hi * b.lo],
        ]
    )
    return lower, upper


def mccormick_select(
    alo: np.ndarray, ahi: np.ndarray, blo: np.ndarray, bhi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized McCormick plane selection at the box midpoint.

    All inputs are broadcastable arrays of factor interval endpoints.
    Returns (lower, upper) arrays of shape (..., 3) with (coef_a, coef_b,
    const) for the plane per element that is tighter at the midpoint
    (max of underestimators / min of overestimators there).
    """
    alo, ahi, blo, bhi = np.broadcast_arrays(alo, ahi, blo, bhi)
    am, bm = 0.5 * (alo + ahi), 0.5 * (blo + bhi)

    def pick(p1, p2, want_max):
        v1 = p1[..., 0] * am + p1[..., 1] * bm + p1[..., 2]
        v2 = p2[..., 0] * am + p2[..., 1] * bm + p2[..., 2]
        take_first = v1 >= v2 if want_max else v1 <= v2
        return np.where(take_first[..., None], p1, p2)

    low1 = np.stack([blo, alo, -alo * blo], axis=-1)
    low2 = np.stack([bhi, ahi, -ahi * bhi], axis=-1)
    up1 = np.stack([bhi, alo, -alo * bhi], axis=-1)
    up2 = np.stack([blo, ahi, -ahi * blo], axis=-1)
    return pick(low1, low2, True), pick(up1, up2, False)


def mccormick(a: Interval, b: Interval) -> LinearBounds:
    """Bilinear envelope of a*b over a x b as LinearBounds in (a, b).

    One plane per side, selected at the box midpoint; all four raw planes
    are available from :func:`mccormick_planes`.
    """
    lo_plane, hi_plane = mccormick_select(
        np.array(a.lo), np.array(a.hi), np.array(b.lo), np.array(b.hi)
    )
    domain = Box([a.lo, b.lo], [a.hi, b.hi])
    lower = LinearMap(lo_plane[:2][None, :], lo_plane[2:])
    upper = LinearMap(hi_plane[:2][None, :], hi_plane[2:])
    return LinearBounds(lower, upper, domain)


# ---------------------------------------------------------------------------
# Interval helpers (vectorized; shared by the graph relaxer and geo-bounds)
# ---------------------------------------------------------------------------

def interval_cos(lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Exact range of cos over [lo, hi], element-wise."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    clo, chi = np.cos(lo), np.cos(hi)
    out_lo = np.minimum(clo, chi)
    out_hi = np.maximum(clo, chi)
    # contains 2*pi*k  ->  max is +1;  contains pi + 2*pi*k  ->  min is -1
    has_max = np.floor(hi / _TWO_PI) >= np.ceil(lo / _TWO_PI)
    has_min = np.floor((hi - math.pi) / _TWO_PI) >= np.ceil((lo - math.pi) / _TWO_PI)
    out_hi = np.where(has_max, 1.0, out_hi)
    out_lo = np.where(has_min, -1.0, out_lo)
    return out_lo, out_hi


def interval_sin(lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Exact range of sin over [lo, hi], element-wise."""
    half_pi = 0.5 * math.pi
    return interval_cos(np.asarray(lo, dtype=float) - half_pi, np.asarray(hi, dtype=float) - half_pi)


def interval_mul(alo, ahi, blo, bhi) -> tuple[np.ndarray, np.ndarray]:
    """Range of a*b for interval factors, element-wise."""
    p1, p2, p3, p4 = alo * blo, alo * bhi, ahi * blo, ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi
