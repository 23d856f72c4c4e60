"""Command-line entry point.

Pins BLAS to one thread per call before numpy loads so results are
byte-identical regardless of --jobs; parallelism happens across images.
All randomness flows from --seed through hashed sub-streams. Failures exit
nonzero with a one-line error JSON on stderr.
"""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NFrameError
from .frames import DEFAULT_ROTATION_CENTERS, parse_frame_config, rotation_span_spectrum
from .image_ops import load_image, resize
from .linalg import mc_residual_stable_rank, mp_residual_coefficient, mp_weight_coefficient
from .runtime import (
    ActivationCache,
    forward_taps,
    make_fixture_bundle,
    make_linear_fixture_bundle,
    open_bundle_dir,
)
from .synthetic import smooth_blob_image

FRAME_ALIASES = {
    "augmentation": "augmentation",
    "noise": "noise",
    "rotated": "rotated_augmentation",
    "rotated_augmentation": "rotated_augmentation",
    "external": "external",
}

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _load_images(directory, input_hw):
    root = Path(directory)
    if not root.is_dir():
        raise ConfigError(f"image directory not found: {root}")
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if len(paths) < 2:
        raise ConfigError(f"{root} holds {len(paths)} decodable images; need at least 2")
    h, w = input_hw
    stems = [p.stem for p in paths]
    unique_stems = len(set(stems)) == len(stems)
    out = []
    for path in paths:
        img = load_image(path)
        if img.shape[:2] != (h, w):
            img = np.clip(resize(img, h, w, "bilinear"), 0.0, 1.0)
        out.append((path.stem if unique_stems else path.name, img))
    return out


def _parse_kinds(raw):
    kinds = []
    for token in raw.split(","):
        token = token.strip()
        if token not in FRAME_ALIASES:
            raise ConfigError(
                f"unknown frame kind {token!r}; choose from {sorted(FRAME_ALIASES)}"
            )
        kinds.append(FRAME_ALIASES[token])
    return kinds


def _specs_from_config(config_path):
    if config_path is None:
        return None
    return parse_frame_config(config_path)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_table(rows, header) -> None:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    line = "  ".join(str(h).ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for row in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))


def cmd_probe(args) -> int:
    from .analysis import stable_rank_curve, write_results_csv, write_summary_json

    bundle = open_bundle_dir(args.model)
    images = _load_images(args.images, bundle.input_hw)
    kinds = _parse_kinds(args.frame)
    specs = _specs_from_config(args.config)
    out = _out_dir(args.out)
    curves = []
    for kind in kinds:
        curves.append(
            stable_rank_curve(
                bundle,
                images,
                kind,
                seed=args.seed,
                specs=specs,
                external_root=args.frame_dir,
                jobs=args.jobs,
                batch_size=args.batch_size,
            )
        )
    write_results_csv(out / "results.csv", curves)
    write_summary_json(out / "summary.json", curves)
    cache_dir = os.environ.get("NFRAME_CACHE")
    if cache_dir:
        cache = ActivationCache(cache_dir)
        acts = forward_taps(bundle, [img for _, img in images], batch_size=args.batch_size)
        for tap_id, stacked in acts.items():
            for (image_id, _), vec in zip(images, stacked):
                cache.put(f"{bundle.manifest.name}|{image_id}", tap_id, vec)
    if args.plot:
        from .plots import line_chart_svg

        series = [
            {
                "label": c.frame_kind,
                "values": [t.mean for t in c.taps],
                "ci_low": [t.ci_low for t in c.taps],
                "ci_high": [t.ci_high for t in c.taps],
            }
            for c in curves
        ]
        x_labels = [t.name for t in curves[0].taps]
        line_chart_svg(
            out / "curve.svg", series, x_labels,
            f"stable rank by layer: {bundle.manifest.name}", "stable rank",
        )
    skipped = sum(len(c.skipped) for c in curves)
    print(f"probe: wrote {out / 'results.csv'} ({len(curves)} frame kind(s), "
          f"{len(images)} images, {skipped} skipped)")
    return 0


def cmd_cka(args) -> int:
    from .analysis import frame_cka, write_cka_csv

    bundle_a = open_bundle_dir(args.model_a)
    bundle_b = open_bundle_dir(args.model_b)
    images = _load_images(args.images, bundle_a.input_hw)
    specs = _specs_from_config(args.config)
    out = _out_dir(args.out)
    report = frame_cka(
        bundle_a, bundle_b, images, seed=args.seed, specs=specs,
        frame_kind=FRAME_ALIASES[args.frame], jobs=args.jobs, batch_size=args.batch_size,
    )
    write_cka_csv(out / "cka.csv", report)
    if args.plot:
        from .plots import heatmap_svg

        rows = sorted(report.tap_names_a)
        cols = sorted(report.tap_names_b)
        matrix = [[report.scores.get((ra, cb)) for cb in cols] for ra in rows]
        heatmap_svg(
            out / "heatmap.svg",
            matrix,
            [report.tap_names_a[r] for r in rows],
            [report.tap_names_b[c] for c in cols],
            f"frame CKA: {report.model_a} vs {report.model_b}",
        )
    print(f"cka: wrote {out / 'cka.csv'} ({len(report.scores)} tap pairs, "
          f"{report.skipped_pairs} degenerate pairs skipped)")
    return 0


def cmd_mp_check(args) -> int:
    coeff = mp_residual_coefficient()
    weight_coeff = mp_weight_coefficient()
    res_mean, plain_mean = mc_residual_stable_rank(args.n, args.trials, args.seed)
    payload = {
        "quadrature_residual_coefficient": coeff,
        "quadrature_weight_coefficient": weight_coeff,
        "mc_residual_mean": res_mean,
        "mc_weight_mean": plain_mean,
        "n": args.n,
        "trials": args.trials,
        "seed": args.seed,
    }
    _print_table(
        [
            ["r(I+W)/n", f"{coeff:.5f}", f"{res_mean:.5f}"],
            ["r(W)/n", f"{weight_coeff:.5f}", f"{plain_mean:.5f}"],
        ],
        ["quantity", "quadrature", f"monte carlo (n={args.n})"],
    )
    if args.out:
        _write_json(_out_dir(args.out) / "mp_check.json", payload)
    else:
        print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_rank3(args) -> int:
    if args.synthetic:
        image = smooth_blob_image(args.size, seed=args.seed)
    elif args.image:
        image = load_image(args.image)
    else:
        raise ConfigError("rank3 needs --image PATH or --synthetic")
    centers = list(DEFAULT_ROTATION_CENTERS[: args.centers])
    spectrum = rotation_span_spectrum(
        image, centers, degrees=args.degrees, upscale=args.upscale
    )
    ratios = (spectrum / spectrum[0]).tolist() if spectrum[0] > 0 else [0.0] * len(spectrum)
    payload = {
        "singular_values": spectrum.tolist(),
        "ratios_to_top": ratios,
        "sigma4_over_sigma1": ratios[3] if len(ratios) > 3 else None,
        "centers": centers,
        "degrees": args.degrees,
        "upscale": args.upscale,
    }
    _print_table(
        [[i + 1, f"{s:.6g}", f"{r:.6g}"] for i, (s, r) in enumerate(zip(spectrum, ratios))],
        ["i", "sigma_i", "sigma_i/sigma_1"],
    )
    if args.out:
        _write_json(_out_dir(args.out) / "rank3.json", payload)
    else:
        print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_sweep_k(args) -> int:
    from .analysis import curve_summary, vary_k_sweep

    bundle = open_bundle_dir(args.model)
    images = _load_images(args.images, bundle.input_hw)
    k_list = [int(tok) for tok in args.k.split(",")]
    kind = FRAME_ALIASES[args.frame]
    curves = vary_k_sweep(
        bundle, images, k_list, seed=args.seed, frame_kind=kind,
        jobs=args.jobs, batch_size=args.batch_size,
    )
    out = _out_dir(args.out)
    import csv as _csv

    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["model", "image", "frame", "k", "layer_index", "layer_name",
                         "stable_rank"])
        for curve in curves:
            names = {t.tap_id: t.name for t in curve.taps}
            for image_id in sorted(curve.per_image, key=str):
                for tap_id in sorted(curve.per_image[image_id]):
                    writer.writerow(
                        [curve.model, image_id, curve.frame_kind, curve.metadata["k"],
                         tap_id, names[tap_id],
                         repr(float(curve.per_image[image_id][tap_id]))]
                    )
    _write_json(out / "sweep.json", {"curves": [curve_summary(c) for c in curves]})
    if args.plot:
        from .plots import line_chart_svg

        series = [
            {"label": f"k={c.metadata['k']}", "values": [t.mean for t in c.taps]}
            for c in curves
        ]
        line_chart_svg(
            out / "sweep.svg", series, [t.name for t in curves[0].taps],
            f"stable rank vs k: {bundle.manifest.name}", "stable rank",
        )
    print(f"sweep-k: wrote {out / 'sweep.csv'} (k in {k_list})")
    return 0


def cmd_idim(args) -> int:
    from .analysis import mle_id, twonn_id

    if args.points:
        pts = np.load(args.points)
    elif args.model and args.images:
        bundle = open_bundle_dir(args.model)
        images = _load_images(args.images, bundle.input_hw)
        acts = forward_taps(bundle, [img for _, img in images], batch_size=args.batch_size)
        if args.tap not in acts:
            raise ConfigError(f"tap {args.tap} not in bundle (taps: {sorted(acts)})")
        pts = acts[args.tap].astype(np.float64)
    else:
        raise ConfigError("idim needs --points FILE or --model DIR with --images DIR")
    results = []
    if args.estimator in ("twonn", "both"):
        results.append(twonn_id(pts, discard_fraction=args.discard))
    if args.estimator in ("mle", "both"):
        results.append(mle_id(pts, k_neighbors=args.k_neighbors))
    payload = {
        r.estimator: {"value": r.value, "n_points": r.n_points, "params": r.params}
        for r in results
    }
    _print_table(
        [[r.estimator, f"{r.value:.4f}", r.n_points] for r in results],
        ["estimator", "intrinsic dimension", "points"],
    )
    if args.out:
        _write_json(_out_dir(args.out) / "idim.json", payload)
    else:
        print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_fixture(args) -> int:
    out = _out_dir(args.out)
    if args.linear:
        make_linear_fixture_bundle(out, seed=args.seed)
    else:
        make_fixture_bundle(out, seed=args.seed)
    print(f"fixture: wrote {out / 'model.onnx'} and {out / 'manifest.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nframe",
        description="Measure how vision models process the local neighborhood of "
        "a datapoint via neural frames.",
    )
    parser.add_argument("--version", action="version", version=f"nframe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_model=True):
        if needs_model:
            p.add_argument("--images", required=True, help="directory of PNG/JPEG images")
            p.add_argument("--jobs", type=int, default=1, help="parallel image workers")
            p.add_argument("--batch-size", type=int, default=8)
            p.add_argument("--config", help="TOML frame configuration file")
        p.add_argument("--seed", type=int, required=True, help="master seed")
        p.add_argument("--out", required=needs_model, help="output directory")
        p.add_argument("--plot", action="store_true", help="emit SVG plots")

    p = sub.add_parser("probe", help="per-layer stable-rank curves for frame kinds")
    p.add_argument("--model", required=True, help="bundle directory (model.onnx + manifest.json)")
    p.add_argument("--frame", default="augmentation",
                   help="comma-separated kinds: augmentation,noise,rotated,external")
    p.add_argument("--frame-dir", help="root of external perturbation directories")
    common(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("cka", help="frame-CKA report between two bundles")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--frame", default="augmentation")
    common(p)
    p.set_defaults(func=cmd_cka)

    p = sub.add_parser("mp-check", help="quarter-circle stable-rank expectations")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mp_check)

    p = sub.add_parser("rank3", help="rotation tangent span spectrum")
    p.add_argument("--image", help="input image path")
    p.add_argument("--synthetic", action="store_true", help="use a smooth synthetic image")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--centers", type=int, default=7,
                   help=f"number of rotation centers (max {len(DEFAULT_ROTATION_CENTERS)})")
    p.add_argument("--degrees", type=float, default=2.0)
    p.add_argument("--upscale", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank3)

    p = sub.add_parser("sweep-k", help="stable-rank curves for prefix subsets of size k")
    p.add_argument("--model", required=True)
    p.add_argument("--k", required=True, help="comma-separated k values")
    p.add_argument("--frame", default="augmentation")
    common(p)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("idim", help="intrinsic dimension of a point cloud or tap activations")
    p.add_argument("--points", help=".npy file of shape (n, d)")
    p.add_argument("--model", help="bundle directory")
    p.add_argument("--images", help="image directory (with --model)")
    p.add_argument("--tap", type=int, default=1)
    p.add_argument("--estimator", choices=("twonn", "mle", "both"), default="both")
    p.add_argument("--k-neighbors", type=int, default=20)
    p.add_argument("--discard", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_idim)

    p = sub.add_parser("fixture", help="write a small test bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--linear", action="store_true", help="purely linear graph")
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NFrameError as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": {"type": "OSError", "message": str(exc)}}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
