"""Frame construction: the four frame types and input-space tangents.

A frame is a base image plus k perturbed images; the tangent estimate for
direction j is (perturbed_j - base) / step_j, a forward difference at the
Table-default parameters with step 1 (stable rank is scale invariant, and
the noise frame must match the resulting per-vector magnitudes, so no
further normalization is applied).
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError, DegenerateInputError, FrameError, IngestError, InvalidSpecError
from .image_ops import (
    ROTATION_TABLE_PRESET,
    AugmentationSpec,
    apply_augmentation,
    edge_safe_rotate,
    load_image,
    min_border_crop,
    validate_image,
)
from .linalg import random_subspace_isometry, singular_values

FRAME_KINDS = ("augmentation", "noise", "rotated_augmentation", "external")

# fixed list used by rotation_span_spectrum defaults and the rank-3 check
DEFAULT_ROTATION_CENTERS = ((0, 0), (50, 0), (0, 50), (-50, 0), (0, -50), (50, 50), (-50, 50))


@dataclass
class Frame:
    """Base image, k perturbations, and finite-difference step sizes."""

    base: np.ndarray
    perturbed: list
    labels: list
    steps: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise FrameError(f"unknown frame kind {self.kind!r}")
        k = len(self.perturbed)
        if k < 2:
            raise FrameError(f"a frame needs k >= 2 perturbations, got {k}")
        if len(self.labels) != k or len(set(self.labels)) != k:
            raise ConfigError(f"labels must be {k} unique strings, got {self.labels}")
        self.steps = np.asarray(self.steps, dtype=np.float64)
        if self.steps.shape != (k,) or np.any(self.steps <= 0):
            raise FrameError("steps must be k positive reals")
        for label, img in zip(self.labels, self.perturbed):
            if img.shape != self.base.shape:
                raise FrameError(
                    f"perturbation {label!r} has shape {img.shape}, base is {self.base.shape}"
                )

    @property
    def k(self) -> int:
        return len(self.perturbed)

    def tangent_matrix(self) -> np.ndarray:
        """(n, k) matrix whose columns are (perturbed_j - base) / step_j."""
        base = self.base.ravel()
        cols = [(p.ravel() - base) / s for p, s in zip(self.perturbed, self.steps)]
        return np.stack(cols, axis=1)


def default_augmentations() -> list:
    """The 19 Table-default perturbations, in table order."""
    specs = [AugmentationSpec("jpeg"), AugmentationSpec("brightness")]
    for interp in ("bilinear", "nearest", "bicubic"):
        specs.append(AugmentationSpec("crop_resize", {"interpolation": interp}))
    specs += [
        AugmentationSpec("contrast"),
        AugmentationSpec("gamma"),
        AugmentationSpec("hue"),
        AugmentationSpec("saturation"),
        AugmentationSpec("sharpness"),
    ]
    for interp in ("bilinear", "nearest", "bicubic"):
        specs.append(AugmentationSpec("downscale", {"interpolation": interp}))
    for center in ROTATION_TABLE_PRESET["centers"]:
        specs.append(
            AugmentationSpec(
                "rotate_translate",
                {
                    "center": center,
                    "degrees": ROTATION_TABLE_PRESET["degrees"],
                    "upscale": ROTATION_TABLE_PRESET["upscale"],
                },
            )
        )
    specs += [
        AugmentationSpec("gaussian_blur"),
        AugmentationSpec("log_correction"),
        AugmentationSpec("sigmoid_correction"),
    ]
    return specs


def _resolve_rotation_crops(specs: list, height: int, width: int) -> list:
    """Fill in auto border crops, shared across rotations of one geometry.

    A common crop keeps the resampling baseline identical across rotation
    centers, so differences between their tangents are pure SE(2) motion.
    """
    groups = {}
    for spec in specs:
        if spec.kind == "rotate_translate" and spec.params["border_crop"] is None:
            key = (spec.params["degrees"], spec.params["upscale"], spec.params["interpolation"])
            groups.setdefault(key, []).append(spec)
    resolved = {}
    for (degrees, upscale, _), members in groups.items():
        crop = max(
            min_border_crop(height, width, degrees, m.params["center"], upscale) for m in members
        )
        for m in members:
            resolved[id(m)] = crop
    out = []
    for spec in specs:
        if id(spec) in resolved:
            params = dict(spec.params)
            params["border_crop"] = resolved[id(spec)]
            out.append(AugmentationSpec(spec.kind, params))
        else:
            out.append(spec)
    return out


def build_augmentation_frame(x, specs=None) -> Frame:
    """Frame of Table-1 perturbations (defaults give k = 19)."""
    base = validate_image(x)
    if specs is None:
        specs = default_augmentations()
    specs = _resolve_rotation_crops(list(specs), base.shape[0], base.shape[1])
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        dupes = sorted({l for l in labels if labels.count(l) > 1})
        raise ConfigError(f"duplicate augmentation labels: {dupes}")
    perturbed = [apply_augmentation(base, s) for s in specs]
    return Frame(base, perturbed, labels, np.ones(len(specs)), "augmentation")


def build_noise_frame(x, k: int, seed: int, reference: Frame) -> Frame:
    """k Gaussian directions, each rescaled to the reference's mean tangent norm.

    Perturbed images are base + epsilon without clamping: clamping would
    distort the frame geometry, and models accept unconstrained floats.
    """
    base = validate_image(x)
    if reference.kind != "augmentation":
        raise FrameError("noise frames are normalized against an augmentation frame")
    if not np.array_equal(reference.base, base):
        raise FrameError("reference frame was built on a different image")
    norms = np.linalg.norm(reference.tangent_matrix(), axis=0)
    mean_norm = float(norms.mean())
    if mean_norm <= 0.0:
        raise DegenerateInputError("reference frame has zero mean tangent norm")
    rng = np.random.default_rng(seed)
    n = base.size
    perturbed = []
    for _ in range(k):
        g = rng.standard_normal(n)
        eps = g * (mean_norm / np.linalg.norm(g))
        perturbed.append(base + eps.reshape(base.shape))
    labels = [f"noise:{j:03d}" for j in range(k)]
    return Frame(base, perturbed, labels, np.ones(k), "noise")


def build_rotated_frame(reference: Frame, seed: int) -> Frame:
    """Reference frame mapped isometrically into a random subspace.

    Keeps the Gram matrix (hence stable rank and pairwise norms) while
    destroying the semantic direction of each tangent vector.
    """
    v = reference.tangent_matrix()
    if not np.any(v):
        raise DegenerateInputError("reference tangent vectors are all zero")
    iso = random_subspace_isometry(v.shape[0], v.shape[1], seed)
    rotated = iso.map_frame(v)
    base = reference.base
    perturbed = [
        base + (rotated[:, j] * reference.steps[j]).reshape(base.shape)
        for j in range(reference.k)
    ]
    labels = [f"rotated:{lab}" for lab in reference.labels]
    return Frame(base, perturbed, labels, reference.steps.copy(), "rotated_augmentation")


_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def load_external_frame(x, directory) -> Frame:
    """Frame of on-disk perturbations (e.g. diffusion samples), sorted by name."""
    base = validate_image(x)
    root = Path(directory)
    if not root.is_dir():
        raise IngestError(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if len(files) < 2:
        raise IngestError(f"{root} holds {len(files)} images; need at least 2")
    perturbed = []
    for path in files:
        img = load_image(path)
        if img.shape != base.shape:
            raise IngestError(
                f"{path.name}: shape {img.shape[:2]} does not match base {base.shape[:2]}"
            )
        perturbed.append(img)
    labels = [p.name for p in files]
    return Frame(base, perturbed, labels, np.ones(len(files)), "external")


def rotation_span_spectrum(
    x, centers=DEFAULT_ROTATION_CENTERS, degrees: float = 2.0, upscale: int = 4,
    interpolation: str = "bilinear",
) -> np.ndarray:
    """Singular spectrum of rotation tangents taken at several centers.

    SE(2) is 3-dimensional, so on a smooth image with discrete stabilizer the
    span has numerical rank <= 3 however many centers are used (use >= 4
    centers to see the rank saturate). A constant image has a non-discrete
    stabilizer: all tangents vanish and the zero spectrum is returned with a
    warning.
    """
    base = validate_image(x)
    centers = list(centers)
    if len(centers) < 3:
        raise InvalidSpecError("rotation_span_spectrum needs at least 3 centers")
    h, w = base.shape[0], base.shape[1]
    crop = max(min_border_crop(h, w, degrees, c, upscale) for c in centers)
    tangents = []
    for center in centers:
        rotated = edge_safe_rotate(
            base, degrees=degrees, center=center, upscale=upscale,
            border_crop=crop, interpolation=interpolation,
        )
        tangents.append(rotated.ravel() - base.ravel())
    matrix = np.stack(tangents, axis=1)
    if not np.any(matrix):
        warnings.warn(
            "all rotation tangents vanish (non-discrete stabilizer); zero spectrum",
            stacklevel=2,
        )
        return np.zeros(len(centers))
    return singular_values(matrix)


def parse_frame_config(path) -> list:
    """Read a TOML file listing augmentation kinds with parameter overrides.

    Each [[augmentation]] table holds a ``kind`` plus optional parameters::

        [[augmentation]]
        kind = "brightness"
        factor = 1.03
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    entries = data.get("augmentation")
    if not entries:
        raise ConfigError(f"{path}: no [[augmentation]] entries")
    specs = []
    for i, entry in enumerate(entries):
        if "kind" not in entry:
            raise ConfigError(f"{path}: augmentation entry {i} is missing 'kind'")
        params = {k: v for k, v in entry.items() if k != "kind"}
        if "center" in params:
            params["center"] = tuple(params["center"])
        try:
            specs.append(AugmentationSpec(entry["kind"], params))
        except InvalidSpecError as exc:
            raise ConfigError(f"{path}: augmentation entry {i}: {exc}") from exc
    return specs
