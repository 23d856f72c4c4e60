"""Aggregate neural frames into reported statistics: per-layer stable-rank
curves with confidence intervals, frame-CKA matrices, vary-k sweeps,
intrinsic-dimension estimates, accuracy correlations, and checkpoint series.
"""

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as _scipy_stats

from .errors import ConfigError, DegenerateInputError, NFrameError
from .frames import (
    build_augmentation_frame,
    build_noise_frame,
    build_rotated_frame,
    default_augmentations,
    load_external_frame,
)
from .linalg import linear_cka, stable_rank
from .runtime import INPUT_TAP_ID, compute_neural_frame
from .seeding import derive_seed

NOISE_MATCHING = "per-vector norm = mean reference tangent norm"


@dataclass
class TapStat:
    tap_id: int
    name: str
    mean: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class StableRankCurve:
    model: str
    frame_kind: str
    taps: list  # TapStat, ordered by tap_id
    per_image: dict  # image_id -> {tap_id: stable rank}
    skipped: list  # (image_id, reason)
    metadata: dict = field(default_factory=dict)

    def tap_means(self) -> dict:
        return {t.tap_id: t.mean for t in self.taps}


@dataclass
class CkaReport:
    model_a: str
    model_b: str
    frame_kind: str
    scores: dict  # (tap_a, tap_b) -> mean cka
    n_images: dict  # (tap_a, tap_b) -> count
    tap_names_a: dict
    tap_names_b: dict
    skipped_pairs: int = 0


@dataclass
class IdEstimate:
    estimator: str
    value: float
    n_points: int
    params: dict


def t_interval(values) -> tuple:
    """Two-sided 95% Student-t interval (mean -/+ t s/sqrt(m))."""
    arr = np.asarray(values, dtype=np.float64)
    m = arr.size
    mean = float(arr.mean())
    if m < 2:
        return mean, mean, mean
    half = float(_scipy_stats.t.ppf(0.975, m - 1) * arr.std(ddof=1) / np.sqrt(m))
    return mean, mean - half, mean + half


def build_frame_for_kind(x, kind, seed, image_index, specs=None, external_root=None, k=None,
                         image_id=None):
    """One frame of the requested kind; sub-seeds derive from (seed, kind, index)."""
    if kind == "augmentation":
        return build_augmentation_frame(x, specs)
    if kind == "noise":
        reference = build_augmentation_frame(x, specs)
        return build_noise_frame(
            x, k=k or reference.k, seed=derive_seed(seed, "noise", image_index),
            reference=reference,
        )
    if kind == "rotated_augmentation":
        reference = build_augmentation_frame(x, specs)
        return build_rotated_frame(reference, derive_seed(seed, "rotated", image_index))
    if kind == "external":
        if external_root is None:
            raise ConfigError("external frames need an external perturbation directory")
        stem = image_id if image_id is not None else str(image_index)
        return load_external_frame(x, Path(external_root) / stem)
    raise ConfigError(f"unknown frame kind {kind!r}")


def _map_images(images, worker, jobs):
    if jobs <= 1:
        return [worker(i, img_id, img) for i, (img_id, img) in enumerate(images)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(worker, i, img_id, img) for i, (img_id, img) in enumerate(images)]
        return [f.result() for f in futures]


def stable_rank_curve(
    bundle,
    images,
    frame_kind: str,
    seed: int,
    specs=None,
    external_root=None,
    k=None,
    jobs: int = 1,
    batch_size: int = 8,
) -> StableRankCurve:
    """Per-tap stable rank, averaged over images with 95% t-intervals.

    ``images`` is a list of (image_id, array) pairs at the bundle's input
    resolution. Images whose frame construction or push-forward fails are
    recorded as skipped; at least 2 must succeed.
    """
    if len(images) < 2:
        raise ConfigError(f"need at least 2 images, got {len(images)}")

    def worker(index, image_id, img):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                frame = build_frame_for_kind(
                    img, frame_kind, seed, index, specs=specs,
                    external_root=external_root, k=k, image_id=image_id,
                )
                nf = compute_neural_frame(bundle, frame, batch_size=batch_size)
                values = {tap: stable_rank(matrix) for tap, matrix in nf.matrices.items()}
            return image_id, values, None
        except NFrameError as exc:
            return image_id, None, f"{type(exc).__name__}: {exc}"

    results = _map_images(images, worker, jobs)
    per_image = {}
    skipped = []
    for image_id, values, reason in sorted(results, key=lambda r: str(r[0])):
        if values is None:
            skipped.append((image_id, reason))
        else:
            per_image[image_id] = values
    if len(per_image) < 2:
        raise ConfigError(
            f"stable-rank curve needs >= 2 successful images, got {len(per_image)} "
            f"(skipped: {skipped})"
        )
    tap_names = bundle.tap_display_names()
    taps = []
    for tap_id in sorted(tap_names):
        values = [per_image[i][tap_id] for i in sorted(per_image, key=str)]
        mean, lo, hi = t_interval(values)
        taps.append(TapStat(tap_id, tap_names[tap_id], mean, lo, hi, len(values)))
    metadata = {"seed": seed, "frame_kind": frame_kind}
    if frame_kind == "noise":
        metadata["noise_matching"] = NOISE_MATCHING
    return StableRankCurve(bundle.manifest.name, frame_kind, taps, per_image, skipped, metadata)


def frame_cka(
    bundle_a,
    bundle_b,
    images,
    seed: int,
    specs=None,
    frame_kind: str = "augmentation",
    jobs: int = 1,
    batch_size: int = 8,
) -> CkaReport:
    """Mean frame-CKA over images for every tap pair of two bundles.

    Both bundles see the same frame per image (they must share input dims);
    CKA is applied to the k x n_i matrices of pushed-forward frame vectors.
    Degenerate pairs (zero covariance) are skipped and counted.
    """
    if bundle_a.input_hw != bundle_b.input_hw:
        raise ConfigError(
            f"bundles take different input dims: {bundle_a.input_hw} vs {bundle_b.input_hw}"
        )

    def worker(index, image_id, img):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            frame = build_frame_for_kind(img, frame_kind, seed, index, specs=specs,
                                         image_id=image_id)
            nf_a = compute_neural_frame(bundle_a, frame, batch_size=batch_size)
            nf_b = compute_neural_frame(bundle_b, frame, batch_size=batch_size)
            out = {}
            for ta, ma in nf_a.matrices.items():
                for tb, mb in nf_b.matrices.items():
                    try:
                        out[(ta, tb)] = linear_cka(ma.T, mb.T)
                    except DegenerateInputError:
                        out[(ta, tb)] = None
        return image_id, out

    results = _map_images(images, worker, jobs)
    sums, counts, skipped = {}, {}, 0
    for _, pair_scores in sorted(results, key=lambda r: str(r[0])):
        for key, value in pair_scores.items():
            if value is None:
                skipped += 1
                continue
            sums[key] = sums.get(key, 0.0) + value
            counts[key] = counts.get(key, 0) + 1
    scores = {key: sums[key] / counts[key] for key in sums}
    return CkaReport(
        model_a=bundle_a.manifest.name,
        model_b=bundle_b.manifest.name,
        frame_kind=frame_kind,
        scores=scores,
        n_images=counts,
        tap_names_a=bundle_a.tap_display_names(),
        tap_names_b=bundle_b.tap_display_names(),
        skipped_pairs=skipped,
    )


def vary_k_sweep(
    bundle,
    images,
    k_list,
    seed: int,
    frame_kind: str = "augmentation",
    jobs: int = 1,
    batch_size: int = 8,
) -> list:
    """Stable-rank curves for prefix subsets of a seeded random augmentation order.

    The k'-subset is exactly the first k' entries of the k-order; subsets are
    rebuilt in table order, so k = 19 reproduces the full frame bit-exactly.
    Noise frames take arbitrary k (matched against the full reference frame).
    """
    defaults = default_augmentations()
    for k in k_list:
        if k < 2:
            raise ConfigError(f"k must be >= 2, got {k}")
        if frame_kind == "augmentation" and k > len(defaults):
            raise ConfigError(f"augmentation frames support k <= {len(defaults)}, got {k}")
    order = np.random.default_rng(derive_seed(seed, "vary-k-order")).permutation(len(defaults))
    curves = []
    for k in k_list:
        if frame_kind == "augmentation":
            subset = sorted(order[:k].tolist())
            specs = [defaults[i] for i in subset]
            curve = stable_rank_curve(
                bundle, images, frame_kind, seed, specs=specs, jobs=jobs, batch_size=batch_size
            )
            curve.metadata["order"] = [int(i) for i in order]
            curve.metadata["subset"] = [defaults[i].label for i in subset]
        else:
            curve = stable_rank_curve(
                bundle, images, frame_kind, seed, k=k, jobs=jobs, batch_size=batch_size
            )
        curve.metadata["k"] = int(k)
        curves.append(curve)
    return curves


# ---------------------------------------------------------------------------
# intrinsic dimension


def _dedup(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ConfigError(f"points must be (n, d), got shape {pts.shape}")
    unique = np.unique(pts, axis=0)
    if unique.shape[0] < pts.shape[0]:
        warnings.warn(
            f"removed {pts.shape[0] - unique.shape[0]} duplicate points", stacklevel=3
        )
    if unique.shape[0] < 2:
        raise DegenerateInputError("all points are identical")
    return unique


def _knn_distances(pts: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Distances to the k nearest neighbors (self excluded), brute force."""
    n = pts.shape[0]
    sq = np.sum(pts * pts, axis=1)
    out = np.empty((n, k))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (pts[start:stop] @ pts.T)
        np.maximum(d2, 0.0, out=d2)
        idx = np.arange(start, stop)
        d2[np.arange(stop - start), idx] = np.inf  # drop self
        part = np.partition(d2, k - 1, axis=1)[:, :k]
        part.sort(axis=1)
        out[start:stop] = np.sqrt(part)
    return out


def twonn_id(points, discard_fraction: float = 0.1) -> IdEstimate:
    """TwoNN estimator: least-squares fit through the origin of
    -log(1 - F(mu)) on log mu, with the top ``discard_fraction`` of the
    two-neighbor ratios mu = r2/r1 discarded."""
    pts = _dedup(points)
    if pts.shape[0] < 100:
        raise ConfigError(f"twonn needs >= 100 points, got {pts.shape[0]}")
    if not 0.0 <= discard_fraction < 1.0:
        raise ConfigError("discard_fraction must be in [0, 1)")
    dists = _knn_distances(pts, 2)
    live = dists[:, 0] > 0.0
    if not np.all(live):
        # distinct points whose squared distance cancels to zero in float64
        warnings.warn(
            f"dropping {int((~live).sum())} points with vanishing first-neighbor distance",
            stacklevel=2,
        )
    if live.sum() < 2:
        raise DegenerateInputError("no usable neighbor ratios")
    mu = dists[live, 1] / dists[live, 0]
    mu.sort()
    n = mu.size
    # the empirical CDF hits 1 at the top ratio, so always drop at least it
    keep = min(int(np.floor(n * (1.0 - discard_fraction))), n - 1)
    mu = mu[:keep]
    cdf = np.arange(1, keep + 1) / n
    x = np.log(mu)
    y = -np.log(1.0 - cdf)
    denom = float(x @ x)
    if denom <= 0.0:
        raise DegenerateInputError("all two-neighbor ratios are 1; no dimension signal")
    value = float(x @ y) / denom
    return IdEstimate("twonn", value, pts.shape[0], {"discard_fraction": discard_fraction})


def mle_id(points, k_neighbors: int = 20) -> IdEstimate:
    """Levina-Bickel MLE with simple averaging of per-point local estimates."""
    pts = _dedup(points)
    if k_neighbors < 2:
        raise ConfigError(f"mle needs k_neighbors >= 2, got {k_neighbors}")
    if pts.shape[0] <= k_neighbors:
        raise ConfigError(
            f"mle needs more points than k_neighbors={k_neighbors}, got {pts.shape[0]}"
        )
    dists = _knn_distances(pts, k_neighbors)
    live = dists[:, 0] > 0.0
    if not np.all(live):
        warnings.warn(
            f"dropping {int((~live).sum())} points with vanishing first-neighbor distance",
            stacklevel=2,
        )
    if not np.any(live):
        raise DegenerateInputError("no usable neighbor distances")
    dists = dists[live]
    tk = dists[:, -1]
    ratios = np.log(tk[:, None] / dists[:, : k_neighbors - 1])
    local = 1.0 / (ratios.sum(axis=1) / (k_neighbors - 1))
    return IdEstimate("mle", float(local.mean()), pts.shape[0], {"k_neighbors": k_neighbors})


# ---------------------------------------------------------------------------
# cross-model statistics


def _pearson(x: np.ndarray, y: np.ndarray):
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def accuracy_correlation(curves, accuracies: dict) -> list:
    """Per-tap Pearson and Spearman correlation of mean stable rank vs accuracy.

    ``accuracies`` maps model name to top-1 accuracy; models without one are
    excluded with a warning. Degenerate (zero-variance) taps report None.
    """
    usable = []
    for curve in curves:
        if accuracies.get(curve.model) is None:
            warnings.warn(f"model {curve.model!r} has no accuracy; excluded", stacklevel=2)
            continue
        usable.append(curve)
    if len(usable) < 3:
        raise ConfigError(f"need >= 3 models with accuracy, got {len(usable)}")
    shared = set.intersection(*(set(c.tap_means()) for c in usable))
    acc = np.array([accuracies[c.model] for c in usable], dtype=np.float64)
    out = []
    for tap_id in sorted(shared):
        ranks = np.array([c.tap_means()[tap_id] for c in usable])
        pearson = _pearson(ranks, acc)
        if pearson is None:
            spearman = None
        else:
            spearman = _pearson(
                _scipy_stats.rankdata(ranks).astype(np.float64),
                _scipy_stats.rankdata(acc).astype(np.float64),
            )
        out.append({"tap_id": tap_id, "pearson": pearson, "spearman": spearman,
                    "n_models": len(usable)})
    return out


def checkpoint_series(bundles, images, frame_kind: str, seed: int, jobs: int = 1,
                      batch_size: int = 8) -> list:
    """One curve per checkpoint with identical images, frames, and seeds,
    so differences are attributable to the weights."""
    if len(bundles) < 2:
        raise ConfigError("checkpoint series needs >= 2 bundles")
    dims = {b.input_hw for b in bundles}
    if len(dims) != 1:
        raise ConfigError(f"bundles disagree on input dims: {sorted(dims)}")
    tap_counts = {len(b.manifest.taps) for b in bundles}
    if len(tap_counts) != 1:
        raise ConfigError(f"bundles disagree on tap count: {sorted(tap_counts)}")
    return [
        stable_rank_curve(b, images, frame_kind, seed, jobs=jobs, batch_size=batch_size)
        for b in bundles
    ]


# ---------------------------------------------------------------------------
# report files


def _fmt(value) -> str:
    return repr(float(value))


def write_results_csv(path, curves) -> None:
    """Schema: model,image,frame,layer_index,layer_name,stable_rank."""
    tap_names = {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "image", "frame", "layer_index", "layer_name", "stable_rank"])
        for curve in curves:
            tap_names = {t.tap_id: t.name for t in curve.taps}
            for image_id in sorted(curve.per_image, key=str):
                for tap_id in sorted(curve.per_image[image_id]):
                    writer.writerow(
                        [
                            curve.model,
                            image_id,
                            curve.frame_kind,
                            tap_id,
                            tap_names[tap_id],
                            _fmt(curve.per_image[image_id][tap_id]),
                        ]
                    )


def curve_summary(curve: StableRankCurve) -> dict:
    return {
        "model": curve.model,
        "frame": curve.frame_kind,
        "per_layer": [
            {
                "tap_id": t.tap_id,
                "name": t.name,
                "mean": float(t.mean),
                "ci_low": float(t.ci_low),
                "ci_high": float(t.ci_high),
                "n": t.n,
            }
            for t in curve.taps
        ],
        "skipped": [{"image": i, "reason": r} for i, r in curve.skipped],
        "metadata": curve.metadata,
    }


def write_summary_json(path, curves) -> None:
    payload = {"curves": [curve_summary(c) for c in curves]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_cka_csv(path, report: CkaReport) -> None:
    """Schema: model_a,model_b,tap_a,tap_b,cka,n_images."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_a", "model_b", "tap_a", "tap_b", "cka", "n_images"])
        for (ta, tb) in sorted(report.scores):
            writer.writerow(
                [
                    report.model_a,
                    report.model_b,
                    ta,
                    tb,
                    _fmt(report.scores[(ta, tb)]),
                    report.n_images[(ta, tb)],
                ]
            )
