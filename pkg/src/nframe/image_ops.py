"""Deterministic image transforms: the augmentation kit and the
edge-safe rotation pipeline.

Images are (H, W, 3) float64 arrays in [0, 1]. Every transform is a pure
function f(t, x); the kinds that possess an identity parameter return the
input bit-exactly at that parameter (the arithmetic is arranged so the
identity needs no special casing, except hue, which short-circuits before
the HSV round trip).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as _PILImage

from . import kernels
from .errors import InvalidInputError, InvalidSpecError
from .jpeg import jpeg_roundtrip

INTERP_MODES = {"nearest": kernels.NEAREST, "bilinear": kernels.BILINEAR, "bicubic": kernels.BICUBIC}

AUGMENTATION_KINDS = (
    "jpeg",
    "brightness",
    "crop_resize",
    "contrast",
    "gamma",
    "hue",
    "saturation",
    "sharpness",
    "downscale",
    "rotate_translate",
    "gaussian_blur",
    "log_correction",
    "sigmoid_correction",
)

# pipelines that resample (and therefore need some room to crop/scale)
_MIN_SIDE_KINDS = ("crop_resize", "rotate_translate")
MIN_RESAMPLE_SIDE = 32

# Rotation presets: the frame-defining one and the appendix edge-effect recipe.
# border_crop is measured in original-image pixels (scaled by upscale inside).
ROTATION_TABLE_PRESET = {"upscale": 4, "degrees": 2.0, "centers": ((0, 0), (50, 50), (-50, 50))}
ROTATION_APPENDIX_PRESET = {"upscale": 8, "degrees": 5.0, "border_crop": 20.0}

_SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


def validate_image(x, name: str = "image") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"{name} must be (H, W, 3), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} has empty dimensions {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidInputError(f"{name} values must lie in [0, 1]")
    return arr


def luma(x: np.ndarray) -> np.ndarray:
    return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]


def _interp_mode(name) -> int:
    if name not in INTERP_MODES:
        raise InvalidSpecError(f"interpolation must be one of {sorted(INTERP_MODES)}, got {name!r}")
    return INTERP_MODES[name]


def resize(x, height: int, width: int, interpolation: str = "bilinear") -> np.ndarray:
    """Separable resample; endpoints align so bilinear is exact on ramps."""
    if height < 1 or width < 1:
        raise InvalidSpecError("resize dimensions must be >= 1")
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return kernels.resize(arr, height, width, _interp_mode(interpolation))


def load_image(path) -> np.ndarray:
    """Decode PNG/JPEG to RGB float in [0, 1] (8-bit value / 255)."""
    with _PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(path, x) -> None:
    arr = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    u8 = np.rint(arr * 255.0).astype(np.uint8)
    _PILImage.fromarray(u8, mode="RGB").save(path)


def rgb_to_hsv(x: np.ndarray) -> np.ndarray:
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    maxc = np.max(x, axis=-1)
    minc = np.min(x, axis=-1)
    v = maxc
    spread = maxc - minc
    s = np.where(maxc > 0.0, spread / np.where(maxc > 0.0, maxc, 1.0), 0.0)
    safe = np.where(spread > 0.0, spread, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.select(
        [spread == 0.0, maxc == r, maxc == g],
        [0.0, bc - gc, 2.0 + rc - bc],
        default=4.0 + gc - rc,
    )
    h = (h / 6.0) % 1.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(x: np.ndarray) -> np.ndarray:
    h, s, v = x[..., 0], x[..., 1], x[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(np.intp) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    conds = [i == n for n in range(6)]
    r = np.select(conds, [v, q, p, p, t, v])
    g = np.select(conds, [t, v, v, q, p, p])
    b = np.select(conds, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


@dataclass(frozen=True)
class AugmentationSpec:
    """One perturbation kind plus its parameters.

    ``identity_value`` gives the parameter value at which the transform is
    the identity, or None for kinds (jpeg, blur, resampling, log, sigmoid)
    that have no identity parameter under their definitions.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise InvalidSpecError(f"unknown augmentation kind {self.kind!r}")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise InvalidSpecError(f"{self.kind} does not take parameter {key!r}")
            merged[key] = value
        _VALIDATORS[self.kind](merged)
        object.__setattr__(self, "params", merged)

    @property
    def identity_value(self):
        return _IDENTITY_VALUES.get(self.kind)

    @property
    def label(self) -> str:
        if self.kind in ("crop_resize", "downscale"):
            return f"{self.kind}:{self.params['interpolation']}"
        if self.kind == "rotate_translate":
            cx, cy = self.params["center"]
            return f"rotate:({cx:g},{cy:g})"
        return self.kind


_DEFAULT_PARAMS = {
    "jpeg": {"quality": 70},
    "brightness": {"factor": 1.02},
    "crop_resize": {"interpolation": "bilinear", "upscale": 4, "border": 1},
    "contrast": {"factor": 1.05},
    "gamma": {"gamma": 1.02},
    "hue": {"delta": 0.01},
    "saturation": {"factor": 1.1},
    "sharpness": {"factor": 1.2},
    "downscale": {"ratio": 0.9, "interpolation": "bilinear"},
    "rotate_translate": {
        "degrees": 2.0,
        "center": (0.0, 0.0),
        "upscale": 4,
        "border_crop": None,
        "interpolation": "bilinear",
    },
    "gaussian_blur": {"sigma": 2.0},
    "log_correction": {"gain": 1.05},
    "sigmoid_correction": {"cutoff": 0.5, "gain": 5.0},
}

_IDENTITY_VALUES = {
    "brightness": 1.0,
    "contrast": 1.0,
    "gamma": 1.0,
    "hue": 0.0,
    "saturation": 1.0,
    "sharpness": 1.0,
}


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvalidSpecError(message)


_VALIDATORS = {
    "jpeg": lambda p: _require(
        isinstance(p["quality"], int) and 1 <= p["quality"] <= 100,
        f"jpeg quality must be an integer in [1, 100], got {p['quality']}",
    ),
    "brightness": lambda p: _require(0.0 < p["factor"] <= 4.0, "brightness factor in (0, 4]"),
    "crop_resize": lambda p: (
        _interp_mode(p["interpolation"]),
        _require(int(p["upscale"]) >= 2, "crop_resize upscale must be >= 2"),
        _require(int(p["border"]) >= 1, "crop_resize border must be >= 1"),
    ),
    "contrast": lambda p: _require(0.0 < p["factor"] <= 4.0, "contrast factor in (0, 4]"),
    "gamma": lambda p: _require(0.0 < p["gamma"] <= 5.0, "gamma in (0, 5]"),
    "hue": lambda p: _require(-0.5 <= p["delta"] <= 0.5, "hue delta in [-0.5, 0.5]"),
    "saturation": lambda p: _require(0.0 <= p["factor"] <= 4.0, "saturation factor in [0, 4]"),
    "sharpness": lambda p: _require(0.0 <= p["factor"] <= 4.0, "sharpness factor in [0, 4]"),
    "downscale": lambda p: (
        _interp_mode(p["interpolation"]),
        _require(0.0 < p["ratio"] < 1.0, "downscale ratio in (0, 1)"),
    ),
    "rotate_translate": lambda p: (
        _interp_mode(p["interpolation"]),
        _require(abs(p["degrees"]) < 45.0, "rotation degrees must satisfy |d| < 45"),
        _require(int(p["upscale"]) >= 1, "rotation upscale must be >= 1"),
        _require(len(p["center"]) == 2, "rotation center must be (dx, dy)"),
        _require(
            p["border_crop"] is None or p["border_crop"] >= 0,
            "border_crop must be None (auto) or >= 0",
        ),
    ),
    "gaussian_blur": lambda p: _require(p["sigma"] > 0.0, "blur sigma must be > 0"),
    "log_correction": lambda p: _require(0.0 < p["gain"] <= 2.0, "log gain in (0, 2]"),
    "sigmoid_correction": lambda p: (
        _require(0.0 <= p["cutoff"] <= 1.0, "sigmoid cutoff in [0, 1]"),
        _require(0.0 < p["gain"] <= 50.0, "sigmoid gain in (0, 50]"),
    ),
}


def _check_min_side(arr: np.ndarray, kind: str) -> None:
    if min(arr.shape[0], arr.shape[1]) < MIN_RESAMPLE_SIDE:
        raise InvalidSpecError(
            f"{kind} needs sides >= {MIN_RESAMPLE_SIDE}px, image is {arr.shape[0]}x{arr.shape[1]}"
        )


def apply_augmentation(x, spec: AugmentationSpec) -> np.ndarray:
    """Apply f(t, x) for the spec's kind; output clamped to [0, 1]."""
    arr = validate_image(x)
    if spec.kind in _MIN_SIDE_KINDS:
        _check_min_side(arr, spec.kind)
    p = spec.params

    if spec.kind == "jpeg":
        return jpeg_roundtrip(arr, p["quality"])

    if spec.kind == "brightness":
        return np.clip(p["factor"] * arr, 0.0, 1.0)

    if spec.kind == "contrast":
        c = p["factor"]
        mean_gray = float(np.mean(luma(arr)))
        return np.clip(c * arr + (1.0 - c) * mean_gray, 0.0, 1.0)

    if spec.kind == "saturation":
        s = p["factor"]
        gray = luma(arr)[..., None]
        return np.clip(s * arr + (1.0 - s) * gray, 0.0, 1.0)

    if spec.kind == "gamma":
        return np.clip(np.power(arr, p["gamma"]), 0.0, 1.0)

    if spec.kind == "hue":
        delta = p["delta"]
        if delta % 1.0 == 0.0:
            return arr.copy()
        hsv = rgb_to_hsv(arr)
        hsv[..., 0] = (hsv[..., 0] + delta) % 1.0
        return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)

    if spec.kind == "sharpness":
        f = p["factor"]
        smooth = kernels.conv3x3_reflect(arr, _SMOOTH_KERNEL)
        return np.clip(f * arr + (1.0 - f) * smooth, 0.0, 1.0)

    if spec.kind == "gaussian_blur":
        e = math.exp(-1.0 / (2.0 * p["sigma"] ** 2))
        k1 = np.array([e, 1.0, e]) / (1.0 + 2.0 * e)
        return np.clip(kernels.conv3x3_reflect(arr, np.outer(k1, k1)), 0.0, 1.0)

    if spec.kind == "log_correction":
        return np.clip(p["gain"] * np.log2(1.0 + arr), 0.0, 1.0)

    if spec.kind == "sigmoid_correction":
        return np.clip(1.0 / (1.0 + np.exp(p["gain"] * (p["cutoff"] - arr))), 0.0, 1.0)

    if spec.kind == "downscale":
        h, w = arr.shape[0], arr.shape[1]
        dh = max(int(h * p["ratio"] + 0.5), 1)
        dw = max(int(w * p["ratio"] + 0.5), 1)
        down = resize(arr, dh, dw, p["interpolation"])
        return np.clip(resize(down, h, w, p["interpolation"]), 0.0, 1.0)

    if spec.kind == "crop_resize":
        h, w = arr.shape[0], arr.shape[1]
        u, border = int(p["upscale"]), int(p["border"])
        up = resize(arr, h * u, w * u, p["interpolation"])
        cropped = up[border:-border, border:-border]
        return np.clip(resize(cropped, h, w, p["interpolation"]), 0.0, 1.0)

    # rotate_translate
    return edge_safe_rotate(
        arr,
        degrees=p["degrees"],
        center=p["center"],
        upscale=int(p["upscale"]),
        border_crop=p["border_crop"],
        interpolation=p["interpolation"],
    )


def _rotation_matrix(degrees: float, c_row: float, c_col: float) -> np.ndarray:
    # inverse map: output (r, c) -> source = center + R(-theta) (p - center)
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [cos_t, sin_t, c_row - cos_t * c_row - sin_t * c_col],
            [-sin_t, cos_t, c_col + sin_t * c_row - cos_t * c_col],
        ]
    )


def _window_valid(m: np.ndarray, crop: int, h: int, w: int) -> bool:
    for r, c in ((crop, crop), (crop, w - 1 - crop), (h - 1 - crop, crop), (h - 1 - crop, w - 1 - crop)):
        sr = m[0, 0] * r + m[0, 1] * c + m[0, 2]
        sc = m[1, 0] * r + m[1, 1] * c + m[1, 2]
        if not (0.0 <= sr <= h - 1.0 and 0.0 <= sc <= w - 1.0):
            return False
    return True


def min_border_crop(height: int, width: int, degrees: float, center, upscale: int) -> float:
    """Smallest border crop (original-image pixels) leaving no zero padding.

    Works on the upscaled geometry: finds the least upscaled-pixel crop whose
    window corners inverse-rotate inside the source rectangle.
    """
    u = int(upscale)
    h, w = height * u, width * u
    dx, dy = center
    m = _rotation_matrix(degrees, (h - 1) / 2.0 + dy * u, (w - 1) / 2.0 + dx * u)
    limit = min(h, w) // 2
    for crop in range(limit):
        if _window_valid(m, crop, h, w):
            return crop / u
    raise InvalidSpecError(
        f"no border crop below half the image eliminates zero padding "
        f"(degrees={degrees}, center={center})"
    )


def edge_safe_rotate(
    x,
    degrees: float,
    center=(0.0, 0.0),
    upscale: int = 4,
    border_crop=None,
    interpolation: str = "bilinear",
) -> np.ndarray:
    """Upscale, rotate about an offset center, crop borders, resize back.

    ``center`` is (dx, dy) in original-image pixels relative to the image
    center; ``border_crop`` is also in original-image pixels (None picks the
    minimal crop that removes all zero padding). Cropping happens at the
    upscaled scale, so fractional original-pixel crops are meaningful.
    """
    arr = validate_image(x)
    _check_min_side(arr, "rotate")
    if abs(degrees) >= 45.0:
        raise InvalidSpecError("|degrees| must be < 45")
    u = int(upscale)
    if u < 1:
        raise InvalidSpecError("upscale must be >= 1")
    h, w = arr.shape[0], arr.shape[1]
    hu, wu = h * u, w * u
    mode = interpolation

    if border_crop is None:
        crop_px = int(round(min_border_crop(h, w, degrees, center, u) * u))
    else:
        crop_px = int(math.ceil(border_crop * u))
    if 2 * crop_px >= min(hu, wu):
        raise InvalidSpecError(f"border crop {crop_px}px would remove the entire image")

    up = resize(arr, hu, wu, mode)
    if degrees != 0.0:
        dx, dy = center
        m = _rotation_matrix(degrees, (hu - 1) / 2.0 + dy * u, (wu - 1) / 2.0 + dx * u)
        up = kernels.warp_affine(up, m, hu, wu, _interp_mode(mode))
    if crop_px > 0:
        up = np.ascontiguousarray(up[crop_px : hu - crop_px, crop_px : wu - crop_px])
    return np.clip(resize(up, h, w, mode), 0.0, 1.0)
