"""Scenes: sprites, parameterized spatial transforms, and the exact
alpha-compositing renderer.

Sprites live on full-image-size canvases in a canonical pose; a transform's
inverse maps output pixel coordinates back into canvas coordinates, where
channels are sampled with bilinear interpolation and zero padding. Entities
are composited in configuration order (later entries on top):

    B_0 = background,   B_i = B_{i-1} * (1 - alpha_i) + alpha_i * Y_i
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from geocert import _kernels

__all__ = [
    "Sprite",
    "TransformSpec",
    "SceneEntity",
    "SceneConfig",
    "PARAM_DIMS",
    "spatial_inverse",
    "inverse_coords",
    "sample_pixel",
    "warp_entity",
    "render",
]

PARAM_DIMS = {"rotation": 1, "translation": 2, "rotation_then_translation": 3}


@dataclass(frozen=True)
class Sprite:
    """Canvas (H, W, C) and alpha (H, W), both in [0,1]; anchor in (row, col)."""

    canvas: np.ndarray
    alpha: np.ndarray
    anchor: tuple[float, float]

    def __post_init__(self):
        c = np.asarray(self.canvas, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        if c.ndim != 3 or a.ndim != 2 or c.shape[:2] != a.shape:
            raise ValueError(f"sprite shapes inconsistent: canvas {c.shape}, alpha {a.shape}")
        if c.min() < 0.0 or c.max() > 1.0 or a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("sprite values must lie in [0, 1]")
        object.__setattr__(self, "canvas", c)
        object.__setattr__(self, "alpha", a)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.canvas.shape


@dataclass(frozen=True)
class TransformSpec:
    """kind selects the warp family; center is the pivot for rotations;
    intensity, when set, is an affine (psi, phi) value map on color channels
    with the result clamped to [0,1]."""

    kind: str
    center: tuple[float, float] | None = None
    intensity: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in PARAM_DIMS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind != "translation" and self.center is None:
            raise ValueError(f"{self.kind} transform needs a center")

    @property
    def param_dim(self) -> int:
        return PARAM_DIMS[self.kind]


@dataclass(frozen=True)
class SceneEntity:
    sprite: Sprite
    transform: TransformSpec
    param_map: object = None  # state -> transform parameters (owned by envs)


@dataclass(frozen=True)
class SceneConfig:
    background: np.ndarray
    entities: tuple[SceneEntity, ...]
    image_size: tuple[int, int]

    def __post_init__(self):
        bg = np.asarray(self.background, dtype=float)
        h, w = self.image_size
        if bg.shape[:2] != (h, w):
            raise ValueError(f"background {bg.shape} does not match image size {self.image_size}")
        for i, e in enumerate(self.entities):
            if e.sprite.canvas.shape[:2] != (h, w):
                raise ValueError(f"entity {i} sprite size {e.sprite.canvas.shape[:2]} != image {h, w}")
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "entities", tuple(self.entities))

    @property
    def channels(self) -> int:
        return self.background.shape[2]

    @property
    def param_dims(self) -> tuple[int, ...]:
        return tuple(e.transform.param_dim for e in self.entities)


def inverse_coords(t: TransformSpec, mu, rows, cols) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inverse warp of (row, col) pixel coordinates."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.size != t.param_dim:
        raise ValueError(f"{t.kind} takes {t.param_dim} parameters, got {mu.size}")
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    if t.kind == "translation":
        return rows - mu[0], cols - mu[1]
    cl, ck = t.center
    if t.kind == "rotation":
        dl, dk, ang = rows - cl, cols - ck, mu[0]
    else:
        dl, dk, ang = rows - cl - mu[0], cols - ck - mu[1], mu[2]
    ca, sa = math.cos(ang), math.sin(ang)
    return ca * dl + sa * dk + cl, -sa * dl + ca * dk + ck


def spatial_inverse(t: TransformSpec, mu, pixel: tuple[float, float]) -> tuple[float, float]:
    """Inverse warp of one output pixel coordinate."""
    r, c = inverse_coords(t, mu, np.array([pixel[0]]), np.array([pixel[1]]))
    return float(r[0]), float(c[0])


def _apply_intensity(values: np.ndarray, intensity) -> np.ndarray:
    psi, phi = intensity
    return np.clip(psi * values + phi, 0.0, 1.0)


def warp_entity(e: SceneEntity, mu) -> tuple[np.ndarray, np.ndarray]:
    """Transformed colors (H, W, C) and alpha (H, W) on the image grid."""
    h, w, c = e.sprite.shape
    grid_r, grid_c = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    xr, xc = inverse_coords(e.transform, mu, grid_r.ravel(), grid_c.ravel())
    colors = _kernels.sample_bilinear(e.sprite.canvas, xr, xc).reshape(h, w, c)
    alpha = _kernels.sample_bilinear(e.sprite.alpha[:, :, None], xr, xc).reshape(h, w)
    if e.transform.intensity is not None:
        colors = _apply_intensity(colors, e.transform.intensity)
    return colors, alpha


def sample_pixel(s: Sprite, t: TransformSpec, mu, index) -> float:
    """One warped sample: index = (l, k, channel) with channel an int or
    "alpha"."""
    l, k, channel = index
    xr, xc = inverse_coords(t, mu, np.array([float(l)]), np.array([float(k)]))
    if channel == "alpha":
        return float(_kernels.sample_bilinear(s.alpha[:, :, None], xr, xc)[0, 0])
    v = float(_kernels.sample_bilinear(s.canvas, xr, xc)[0, int(channel)])
    if t.intensity is not None:
        v = float(_apply_intensity(np.array(v), t.intensity))
    return v


def render(scene: SceneConfig, mu_all: Sequence) -> np.ndarray:
    """Exact alpha-composited observation for one parameter assignment."""
    if len(mu_all) != len(scene.entities):
        raise ValueError(f"expected {len(scene.entities)} parameter vectors, got {len(mu_all)}")
    out = scene.background.copy()
    for e, mu in zip(scene.entities, mu_all):
        colors, alpha = warp_entity(e, mu)
        out = out * (1.0 - alpha)[:, :, None] + alpha[:, :, None] * colors
    return out
