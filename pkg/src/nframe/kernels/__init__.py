"""Image resampling/convolution kernels with a compiled fast path.

A Cython extension implements the hot inner loops; a pure-numpy fallback
with identical floating-point semantics is selected at import when the
extension is unavailable. Set NFRAME_KERNELS=py or =c to force a backend
(=c raises if the extension is missing). Both backends must agree
bit-for-bit; the test suite enforces this and benchmarks/bench_kernels.py
compares their speed.

Modes: 0 = nearest, 1 = bilinear, 2 = bicubic (Catmull-Rom).
"""

import os

import numpy as np

from ..errors import InvalidInputError

NEAREST, BILINEAR, BICUBIC = 0, 1, 2

_requested = os.environ.get("NFRAME_KERNELS", "auto")
if _requested not in ("auto", "py", "c"):
    raise InvalidInputError(f"NFRAME_KERNELS must be auto, py, or c, not {_requested!r}")

if _requested in ("auto", "c"):
    try:
        from . import _ckernels as _impl

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        from . import _pykernels as _impl

        BACKEND = "python"
else:
    from . import _pykernels as _impl

    BACKEND = "python"


def _check_image(src) -> np.ndarray:
    arr = np.ascontiguousarray(src, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise InvalidInputError(f"expected a (H, W, C) image, got shape {arr.shape}")
    return arr


def resize(src, out_h: int, out_w: int, mode: int) -> np.ndarray:
    """Separable resample to (out_h, out_w); endpoints map to endpoints."""
    arr = _check_image(src)
    if out_h < 1 or out_w < 1:
        raise InvalidInputError("output dimensions must be >= 1")
    if mode not in (NEAREST, BILINEAR, BICUBIC):
        raise InvalidInputError(f"unknown interpolation mode {mode}")
    if (out_h, out_w) == arr.shape[:2]:
        # identity dims: all modes reduce to a copy (weights hit exactly 0/1)
        return arr.copy()
    return _impl.resize(arr, int(out_h), int(out_w), int(mode))


def warp_affine(src, matrix, out_h: int, out_w: int, mode: int) -> np.ndarray:
    """Inverse-map affine warp; out-of-range source coords produce zeros.

    ``matrix`` is 2x3 mapping output (row, col) to source (row, col):
    sr = m[0,0] r + m[0,1] c + m[0,2]; sc = m[1,0] r + m[1,1] c + m[1,2].
    Taps of in-range coordinates are clamped to the border (no zero bleed);
    pixels whose source coordinate leaves [0, H-1] x [0, W-1] are zero.
    """
    arr = _check_image(src)
    m = np.ascontiguousarray(matrix, dtype=np.float64)
    if m.shape != (2, 3):
        raise InvalidInputError(f"warp matrix must be 2x3, got {m.shape}")
    if mode not in (NEAREST, BILINEAR, BICUBIC):
        raise InvalidInputError(f"unknown interpolation mode {mode}")
    return _impl.warp_affine(arr, m, int(out_h), int(out_w), int(mode))


def conv3x3_reflect(src, kernel) -> np.ndarray:
    """2-D 3x3 convolution per channel with reflect (no edge repeat) padding."""
    arr = _check_image(src)
    k = np.ascontiguousarray(kernel, dtype=np.float64)
    if k.shape != (3, 3):
        raise InvalidInputError(f"kernel must be 3x3, got {k.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise InvalidInputError("conv3x3_reflect needs at least a 2x2 image")
    return _impl.conv3x3_reflect(arr, k)
