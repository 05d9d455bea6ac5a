"""Backend selection for the hot loops.

The compiled extension is used when it was built; setting ``SOMGEN_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

if os.environ.get("SOMGEN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

splat_lumps = _impl.splat_lumps
nearest_site = _impl.nearest_site
tile_moran = _impl.tile_moran
block_mae = _impl.block_mae


def compiled_available():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


__all__ = ["BACKEND", "splat_lumps", "nearest_site", "tile_moran", "block_mae", "compiled_available"]
