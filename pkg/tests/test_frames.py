"""Frame construction: the 19-perturbation default frame, noise/rotated
frames, external ingestion, and the SE(2) rotation-span prediction."""

import numpy as np
import pytest

from nframe.errors import ConfigError, DegenerateInputError, FrameError, IngestError
from nframe.frames import (
    DEFAULT_ROTATION_CENTERS,
    Frame,
    build_augmentation_frame,
    build_noise_frame,
    build_rotated_frame,
    default_augmentations,
    load_external_frame,
    parse_frame_config,
    rotation_span_spectrum,
)
from nframe.image_ops import AugmentationSpec, save_image
from nframe.linalg import stable_rank
from nframe.synthetic import natural_texture_image, smooth_blob_image


@pytest.fixture(scope="module")
def photo64():
    return natural_texture_image(64, seed=2)


@pytest.fixture(scope="module")
def aug_frame(photo64):
    return build_augmentation_frame(photo64)


class TestAugmentationFrame:
    def test_defaults_give_k19(self, aug_frame):
        assert aug_frame.k == 19
        assert len(set(aug_frame.labels)) == 19

    def test_rotation_subframe_labels(self):
        specs = [
            AugmentationSpec("rotate_translate", {"center": c})
            for c in ((0, 0), (50, 50), (-50, 50))
        ]
        labels = [s.label for s in specs]
        assert labels == ["rotate:(0,0)", "rotate:(50,50)", "rotate:(-50,50)"]

    def test_tangents_reproducible_bit_exactly(self, photo64, aug_frame):
        again = build_augmentation_frame(photo64)
        np.testing.assert_array_equal(aug_frame.tangent_matrix(), again.tangent_matrix())

    def test_single_spec_rejected(self, photo64):
        with pytest.raises(FrameError):
            build_augmentation_frame(photo64, [AugmentationSpec("brightness")])

    def test_identity_specs_give_zero_tangents_downstream_error(self, photo64):
        specs = [
            AugmentationSpec("brightness", {"factor": 1.0}),
            AugmentationSpec("gamma", {"gamma": 1.0}),
        ]
        frame = build_augmentation_frame(photo64, specs)
        from nframe.errors import UndefinedStableRankError

        with pytest.raises(UndefinedStableRankError):
            stable_rank(frame.tangent_matrix())

    def test_duplicate_labels_rejected(self, photo64):
        specs = [AugmentationSpec("brightness"), AugmentationSpec("brightness")]
        with pytest.raises(ConfigError):
            build_augmentation_frame(photo64, specs)


class TestNoiseFrame:
    def test_norms_match_reference_mean(self, photo64, aug_frame):
        noise = build_noise_frame(photo64, k=19, seed=0, reference=aug_frame)
        ref_mean = np.linalg.norm(aug_frame.tangent_matrix(), axis=0).mean()
        norms = np.linalg.norm(noise.tangent_matrix(), axis=0)
        np.testing.assert_allclose(norms, ref_mean, rtol=1e-9)

    def test_high_stable_rank_and_near_identity_gram(self, photo64, aug_frame):
        noise = build_noise_frame(photo64, k=19, seed=1, reference=aug_frame)
        v = noise.tangent_matrix()
        assert stable_rank(v) > 17.0
        g = v.T @ v
        off = g - np.diag(np.diag(g))
        cos = off / g[0, 0]
        assert np.abs(cos).max() < 0.05

    def test_cosines_small_across_seeds(self, photo64, aug_frame):
        worst = 0.0
        for seed in range(20):
            v = build_noise_frame(photo64, k=8, seed=seed, reference=aug_frame).tangent_matrix()
            vn = v / np.linalg.norm(v, axis=0)
            g = vn.T @ vn
            worst = max(worst, np.abs(g - np.eye(8)).max())
        assert worst < 0.05

    def test_independent_seeds_nearly_orthogonal(self, photo64, aug_frame):
        a = build_noise_frame(photo64, k=4, seed=10, reference=aug_frame).tangent_matrix()
        b = build_noise_frame(photo64, k=4, seed=11, reference=aug_frame).tangent_matrix()
        an = a / np.linalg.norm(a, axis=0)
        bn = b / np.linalg.norm(b, axis=0)
        assert np.abs(an.T @ bn).mean() < 0.02

    def test_degenerate_reference_rejected(self, photo64):
        specs = [
            AugmentationSpec("brightness", {"factor": 1.0}),
            AugmentationSpec("gamma", {"gamma": 1.0}),
        ]
        zero_ref = build_augmentation_frame(photo64, specs)
        with pytest.raises(DegenerateInputError):
            build_noise_frame(photo64, k=4, seed=0, reference=zero_ref)

    def test_reference_must_match_image(self, photo64, aug_frame):
        other = natural_texture_image(64, seed=99)
        with pytest.raises(FrameError):
            build_noise_frame(other, k=4, seed=0, reference=aug_frame)


class TestRotatedFrame:
    def test_gram_and_stable_rank_preserved(self, aug_frame):
        rotated = build_rotated_frame(aug_frame, seed=3)
        v, vr = aug_frame.tangent_matrix(), rotated.tangent_matrix()
        g, gr = v.T @ v, vr.T @ vr
        assert np.linalg.norm(gr - g) <= 1e-6 * np.linalg.norm(g)
        assert stable_rank(vr) == pytest.approx(stable_rank(v), rel=1e-9)

    def test_pairwise_norms_preserved(self, aug_frame):
        rotated = build_rotated_frame(aug_frame, seed=4)
        n0 = np.linalg.norm(aug_frame.tangent_matrix(), axis=0)
        n1 = np.linalg.norm(rotated.tangent_matrix(), axis=0)
        np.testing.assert_allclose(n1, n0, rtol=1e-6)

    def test_directions_scrambled(self, aug_frame):
        rotated = build_rotated_frame(aug_frame, seed=5)
        v, vr = aug_frame.tangent_matrix(), rotated.tangent_matrix()
        norms = np.linalg.norm(v, axis=0) * np.linalg.norm(vr, axis=0)
        live = norms > 0  # resampling kinds can tangent out to exactly zero
        cos = np.abs(np.sum(v * vr, axis=0)[live] / norms[live])
        assert np.median(cos) < 0.2

    def test_zero_reference_rejected(self, photo64):
        frame = Frame(
            photo64,
            [photo64.copy(), photo64.copy()],
            ["a", "b"],
            np.ones(2),
            "augmentation",
        )
        with pytest.raises(DegenerateInputError):
            build_rotated_frame(frame, seed=0)


class TestExternalFrame:
    def test_load_directory(self, tmp_path, photo64):
        rng = np.random.default_rng(0)
        for j in range(19):
            save_image(tmp_path / f"pert_{j:03d}.png", np.clip(photo64 + rng.normal(0, 0.01, photo64.shape), 0, 1))
        frame = load_external_frame(photo64, tmp_path)
        assert frame.k == 19
        assert frame.labels[0] == "pert_000.png"
        assert frame.kind == "external"

    def test_empty_directory(self, tmp_path, photo64):
        with pytest.raises(IngestError):
            load_external_frame(photo64, tmp_path)

    def test_mixed_dimensions_names_offender(self, tmp_path, photo64):
        save_image(tmp_path / "pert_000.png", photo64)
        save_image(tmp_path / "pert_001.png", natural_texture_image(32, seed=0))
        with pytest.raises(IngestError, match="pert_001.png"):
            load_external_frame(photo64, tmp_path)


class TestRotationSpanSpectrum:
    def test_analytic_continuum_oracle_rank_3(self):
        # rotation tangents are I_y dx - I_x dy about each center: one
        # rotation-about-origin field plus two gradient-weighted translation
        # fields, an exactly 3-dimensional span
        rng = np.random.default_rng(0)
        size = 128
        ys, xs = np.mgrid[0:size, 0:size].astype(float)
        blobs = [
            (rng.uniform(30, 100), rng.uniform(30, 100), rng.uniform(15, 40), rng.uniform(0.3, 1.0))
            for _ in range(5)
        ]
        gy = sum(
            a * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * s * s)) * (-(ys - cy) / (s * s))
            for cy, cx, s, a in blobs
        )
        gx = sum(
            a * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * s * s)) * (-(xs - cx) / (s * s))
            for cy, cx, s, a in blobs
        )
        cc = (size - 1) / 2
        cols = []
        for dx, dy in DEFAULT_ROTATION_CENTERS:
            cols.append((gy * (xs - (cc + dx)) - gx * (ys - (cc + dy))).ravel())
        s = np.linalg.svd(np.stack(cols, axis=1), compute_uv=False)
        assert s[3] / s[0] < 1e-10

    def test_smooth_image_numerical_rank_3(self):
        img = smooth_blob_image(256, seed=0)
        s = rotation_span_spectrum(img, DEFAULT_ROTATION_CENTERS, degrees=2.0, upscale=4)
        assert s[3] / s[0] < 0.1
        assert s[3] / s[0] < s[2] / s[0]

    def test_three_centers_spectrum_length(self):
        img = smooth_blob_image(128, seed=1)
        s = rotation_span_spectrum(img, DEFAULT_ROTATION_CENTERS[:3], degrees=2.0, upscale=4)
        assert len(s) == 3
        assert np.all(s > 0)

    def test_constant_image_degenerate(self):
        img = np.full((64, 64, 3), 0.5)
        with pytest.warns(UserWarning, match="stabilizer"):
            s = rotation_span_spectrum(img, DEFAULT_ROTATION_CENTERS[:3], degrees=2.0, upscale=2)
        np.testing.assert_array_equal(s, np.zeros(3))


class TestFrameConfig:
    def test_parse_round_trip(self, tmp_path, photo64):
        cfg = tmp_path / "frame.toml"
        cfg.write_text(
            """
[[augmentation]]
kind = "brightness"
factor = 1.03

[[augmentation]]
kind = "rotate_translate"
degrees = 2.0
center = [50, 50]

[[augmentation]]
kind = "crop_resize"
interpolation = "nearest"
"""
        )
        specs = parse_frame_config(cfg)
        assert [s.kind for s in specs] == ["brightness", "rotate_translate", "crop_resize"]
        assert specs[0].params["factor"] == 1.03
        assert specs[1].params["center"] == (50, 50)
        frame = build_augmentation_frame(photo64, specs)
        assert frame.k == 3

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "frame.toml"
        cfg.write_text("[[augmentation]]\nfactor = 1.0\n")
        with pytest.raises(ConfigError):
            parse_frame_config(cfg)
        cfg.write_text("[[augmentation]]\nkind = \"brightness\"\nfactor = -1.0\n")
        with pytest.raises(ConfigError):
            parse_frame_config(cfg)
        cfg.write_text("x = 1\n")
        with pytest.raises(ConfigError):
            parse_frame_config(cfg)


def test_default_augmentations_order_and_count():
    labels = [s.label for s in default_augmentations()]
    assert len(labels) == 19
    assert labels[0] == "jpeg"
    assert labels[2:5] == ["crop_resize:bilinear", "crop_resize:nearest", "crop_resize:bicubic"]
    assert labels[13:16] == ["rotate:(0,0)", "rotate:(50,50)", "rotate:(-50,50)"]
    assert labels[-1] == "sigmoid_correction"
