"""Reachability certification for image-based controllers under geometric
scene perturbations.

The package bounds the closed-loop reachable set of a dynamical system whose
controller acts on rendered images, by propagating element-wise affine bounds
through render, blend, policy and dynamics stages.
"""

from geocert.bounds import (
    Box,
    Interval,
    LinearBounds,
    LinearMap,
    ScalarRelaxation,
    concretize,
    compose_affine,
    mccormick,
    relax_scalar,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Interval",
    "LinearBounds",
    "LinearMap",
    "ScalarRelaxation",
    "concretize",
    "compose_affine",
    "mccormick",
    "relax_scalar",
    "__version__",
]
