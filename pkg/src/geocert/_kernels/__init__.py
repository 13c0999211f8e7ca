"""Hot per-pixel kernels: compiled extension when available, numpy fallback.

Set GEOCERT_FORCE_PY=1 to force the numpy implementation even when the
compiled module is importable.
"""

import os

from geocert._kernels import pyref

if os.environ.get("GEOCERT_FORCE_PY"):
    _impl = pyref
    BACKEND = "python"
else:
    try:
        from geocert._kernels import warpcore as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = pyref
        BACKEND = "python"

sample_bilinear = _impl.sample_bilinear
bilinear_hull = _impl.bilinear_hull

__all__ = ["sample_bilinear", "bilinear_hull", "BACKEND", "pyref"]
