"""Affine bounds on the alpha-composited observation.

Entities are folded into a running bound in compositing order:
B' = B*(1 - a_i) + a_i*Y_i. Each product of two affinely-bounded factors is
relaxed with a McCormick plane over the factors' concretized ranges, then
re-expressed as a plane in the concatenated parameter vector by splicing the
factors' lower/upper planes along the sign of the plane coefficients.

Bounds are never clamped to [0,1]; downstream consumers must tolerate small
excursions outside the displayable range.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from geocert.bounds import Box, LinearBounds, LinearMap, concretize, mccormick_select
from geocert.fileio import write_png
from geocert.geobounds import PixelBoundSet
from geocert.scene import SceneConfig

__all__ = ["ObservationBounds", "blend_bounds", "export_bound_images"]


@dataclass(frozen=True)
class ObservationBounds:
    """Pixel-wise affine bounds on the composited image over the
    concatenated per-entity parameter box."""

    bounds: LinearBounds
    image_shape: tuple[int, int, int]

    def __post_init__(self):
        h, w, c = self.image_shape
        if self.bounds.out_dim != h * w * c:
            raise ValueError("observation bound rows do not match image shape")

    @property
    def domain(self) -> Box:
        return self.bounds.domain


def _pos_neg(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), np.minimum(x, 0.0)


def _product_bounds(xb: LinearBounds, yb: LinearBounds) -> LinearBounds:
    """Plane bounds on x*y from plane bounds on the factors.

    McCormick planes are chosen per row over the factors' concretized
    ranges; each factor occurrence is then replaced by the factor's lower
    or upper plane depending on the coefficient sign.
    """
    xr = concretize(xb)
    yr = concretize(yb)
    low, up = mccormick_select(xr.lo, xr.hi, yr.lo, yr.hi)

    def splice(plane, x_for_pos, x_for_neg, y_for_pos, y_for_neg):
        ax_p, ax_n = _pos_neg(plane[:, 0])
        by_p, by_n = _pos_neg(plane[:, 1])
        w = (
            ax_p[:, None] * x_for_pos.weights
            + ax_n[:, None] * x_for_neg.weights
            + by_p[:, None] * y_for_pos.weights
            + by_n[:, None] * y_for_neg.weights
        )
        b = (
            ax_p * x_for_pos.bias
            + ax_n * x_for_neg.bias
            + by_p * y_for_pos.bias
            + by_n * y_for_neg.bias
            + plane[:, 2]
        )
        return LinearMap(w, b)

    lower = splice(low, xb.lower, xb.upper, yb.lower, yb.upper)
    upper = splice(up, xb.upper, xb.lower, yb.upper, yb.lower)
    return LinearBounds(lower, upper, xb.domain)


def _complement(lb: LinearBounds) -> LinearBounds:
    """Bounds on 1 - v from bounds on v."""
    lower = LinearMap(-lb.upper.weights, 1.0 - lb.upper.bias)
    upper = LinearMap(-lb.lower.weights, 1.0 - lb.lower.bias)
    return LinearBounds(lower, upper, lb.domain)


def _add(a: LinearBounds, b: LinearBounds) -> LinearBounds:
    return LinearBounds(
        LinearMap(a.lower.weights + b.lower.weights, a.lower.bias + b.lower.bias),
        LinearMap(a.upper.weights + b.upper.weights, a.upper.bias + b.upper.bias),
        a.domain,
    )


def _expand_rows(lb: LinearBounds, idx: np.ndarray) -> LinearBounds:
    return LinearBounds(
        LinearMap(lb.lower.weights[idx], lb.lower.bias[idx]),
        LinearMap(lb.upper.weights[idx], lb.upper.bias[idx]),
        lb.domain,
    )


def blend_bounds(scene: SceneConfig, entity_bounds: list[PixelBoundSet]) -> ObservationBounds:
    if len(entity_bounds) != len(scene.entities):
        raise ValueError(
            f"scene has {len(scene.entities)} entities, got {len(entity_bounds)} bound sets"
        )
    h, w = scene.image_size
    c = scene.channels
    for pbs in entity_bounds:
        if pbs.image_shape != (h, w, c):
            raise ValueError(f"bound image shape {pbs.image_shape} != scene {(h, w, c)}")

    own_dims = list(scene.param_dims)
    total = sum(own_dims)
    got_dims = [pbs.domain.dim for pbs in entity_bounds]
    if got_dims == own_dims:
        # per-entity domains: concatenate and lift each block into place
        lo = np.concatenate([pbs.domain.lo for pbs in entity_bounds]) if entity_bounds else np.zeros(0)
        hi = np.concatenate([pbs.domain.hi for pbs in entity_bounds]) if entity_bounds else np.zeros(0)
        kappa = Box(lo, hi)
        offsets = list(np.cumsum([0] + own_dims[:-1], dtype=int)) if entity_bounds else []
    elif all(d == total for d in got_dims) and all(
        pbs.domain == entity_bounds[0].domain for pbs in entity_bounds
    ):
        # already lifted into a shared parameter space
        kappa = entity_bounds[0].domain
        offsets = [0] * len(entity_bounds)
    else:
        raise ValueError(
            f"bound domains {got_dims} match neither per-entity dims {own_dims} "
            f"nor a shared {total}-dim space"
        )

    bg = scene.background.ravel()
    running = LinearBounds.constant(bg, bg, kappa)
    color_of_pixel = np.repeat(np.arange(h * w), c)

    for pbs, off in zip(entity_bounds, offsets):
        values = pbs.value_bounds.lift_into(kappa, off)
        alpha = _expand_rows(pbs.alpha_bounds.lift_into(kappa, off), color_of_pixel)
        keep = _product_bounds(running, _complement(alpha))
        paint = _product_bounds(alpha, values)
        running = _add(keep, paint)

    return ObservationBounds(running, (h, w, c))


def export_bound_images(ob: ObservationBounds, directory, stem: str = "obs") -> tuple[Path, Path]:
    """Write concretized lower/upper bound images as PNGs (clipped for
    display; the underlying bounds may leave [0,1])."""
    box = concretize(ob.bounds)
    lo = np.clip(box.lo.reshape(ob.image_shape), 0.0, 1.0)
    hi = np.clip(box.hi.reshape(ob.image_shape), 0.0, 1.0)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    p_lo = directory / f"{stem}_lower.png"
    p_hi = directory / f"{stem}_upper.png"
    write_png(p_lo, lo)
    write_png(p_hi, hi)
    return p_lo, p_hi
