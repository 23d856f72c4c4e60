"""ONNX round trip, graph evaluation against naive oracles, fixtures,
and finite-difference neural frames."""

import numpy as np
import pytest

from nframe.errors import InferenceError, ManifestError, UndefinedStableRankError
from nframe.frames import Frame, build_augmentation_frame
from nframe.linalg import stable_rank
from nframe.onnx_eval import GraphEvaluator
from nframe.onnx_io import OnnxGraph, OnnxModel, OnnxNode, read_model, serialize_model, write_model
from nframe.runtime import (
    ActivationCache,
    ModelManifest,
    TapInfo,
    compute_neural_frame,
    forward_taps,
    load_bundle,
    make_fixture_bundle,
    make_linear_fixture_bundle,
    open_bundle_dir,
)
from nframe.synthetic import natural_texture_image


def naive_conv(x, w, b, stride, pad):
    n, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for ni in range(n):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[ni, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[ni, co, i, j] = np.sum(patch * w[co]) + b[co]
    return out


class TestOnnxIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        w = rng.standard_normal((4, 6)).astype(np.float32)
        nodes = [
            OnnxNode("Gemm", ["x", "w"], ["y"], "gemm", {"transB": 1, "alpha": 1.0}),
            OnnxNode("Relu", ["y"], ["z"], "relu"),
        ]
        graph = OnnxGraph("tiny", nodes, {"w": w}, [("x", [None, 6])], ["z"])
        path = tmp_path / "m.onnx"
        write_model(path, OnnxModel(graph=graph, opset=13))
        back = read_model(path)
        assert back.opset == 13
        assert [n.op_type for n in back.graph.nodes] == ["Gemm", "Relu"]
        assert back.graph.nodes[0].attrs["transB"] == 1
        assert back.graph.nodes[0].attrs["alpha"] == pytest.approx(1.0)
        np.testing.assert_array_equal(back.graph.initializers["w"], w)
        assert back.graph.inputs == [("x", [None, 6])]
        assert back.graph.outputs == ["z"]

    def test_serialization_is_deterministic(self):
        graph = OnnxGraph(
            "g",
            [OnnxNode("Relu", ["x"], ["y"], "r", {"pads": [0, 1, 2, 3]})],
            {"c": np.arange(4, dtype=np.int64)},
            [("x", [1, 4])],
            ["y"],
        )
        a = serialize_model(OnnxModel(graph=graph))
        b = serialize_model(OnnxModel(graph=graph))
        assert a == b

    def test_negative_int_attribute(self, tmp_path):
        graph = OnnxGraph(
            "g", [OnnxNode("Softmax", ["x"], ["y"], "s", {"axis": -1})], {}, [("x", [None, 4])], ["y"]
        )
        path = tmp_path / "m.onnx"
        write_model(path, OnnxModel(graph=graph))
        assert read_model(path).graph.nodes[0].attrs["axis"] == -1


class TestEvaluatorOps:
    def test_conv_matches_naive(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 9, 8)).astype(np.float32)
        w = rng.standard_normal((5, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(5).astype(np.float32)
        graph = OnnxGraph(
            "c",
            [OnnxNode("Conv", ["x", "w", "b"], ["y"], "conv",
                      {"kernel_shape": [3, 3], "pads": [1, 1, 1, 1], "strides": [2, 2]})],
            {"w": w, "b": b},
            [("x", [None, 3, 9, 8])],
            ["y"],
        )
        out = GraphEvaluator(OnnxModel(graph=graph)).run({"x": x})["y"]
        want = naive_conv(x.astype(np.float64), w.astype(np.float64), b.astype(np.float64), 2, 1)
        np.testing.assert_allclose(out, want, rtol=1e-5, atol=1e-5)

    def test_grouped_conv_matches_naive_per_group(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 4, 6, 6)).astype(np.float32)
        w = rng.standard_normal((6, 2, 3, 3)).astype(np.float32)
        b = np.zeros(6, dtype=np.float32)
        graph = OnnxGraph(
            "c",
            [OnnxNode("Conv", ["x", "w", "b"], ["y"], "conv",
                      {"kernel_shape": [3, 3], "pads": [1, 1, 1, 1], "strides": [1, 1], "group": 2})],
            {"w": w, "b": b},
            [("x", [None, 4, 6, 6])],
            ["y"],
        )
        out = GraphEvaluator(OnnxModel(graph=graph)).run({"x": x})["y"]
        lo = naive_conv(x[:, :2].astype(float), w[:3].astype(float), b[:3].astype(float), 1, 1)
        hi = naive_conv(x[:, 2:].astype(float), w[3:].astype(float), b[3:].astype(float), 1, 1)
        np.testing.assert_allclose(out, np.concatenate([lo, hi], axis=1), rtol=1e-5, atol=1e-5)

    def test_maxpool_and_batchnorm(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 6, 6)).astype(np.float32)
        scale = np.array([1.5, 0.5], dtype=np.float32)
        bias = np.array([0.1, -0.2], dtype=np.float32)
        mean = np.array([0.3, -0.1], dtype=np.float32)
        var = np.array([2.0, 0.5], dtype=np.float32)
        graph = OnnxGraph(
            "p",
            [
                OnnxNode("BatchNormalization", ["x", "s", "b", "m", "v"], ["bn"], "bn",
                         {"epsilon": 1e-5}),
                OnnxNode("MaxPool", ["bn"], ["y"], "mp",
                         {"kernel_shape": [3, 3], "strides": [2, 2], "pads": [1, 1, 1, 1]}),
            ],
            {"s": scale, "b": bias, "m": mean, "v": var},
            [("x", [None, 2, 6, 6])],
            ["y"],
        )
        out = GraphEvaluator(OnnxModel(graph=graph)).run({"x": x})["y"]
        bn = (x - mean.reshape(1, 2, 1, 1)) / np.sqrt(var.reshape(1, 2, 1, 1) + 1e-5)
        bn = bn * scale.reshape(1, 2, 1, 1) + bias.reshape(1, 2, 1, 1)
        padded = np.pad(bn, ((0, 0), (0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
        want = np.zeros((1, 2, 3, 3))
        for i in range(3):
            for j in range(3):
                want[:, :, i, j] = padded[:, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3].max((2, 3))
        np.testing.assert_allclose(out, want, rtol=1e-5, atol=1e-6)

    def test_unsupported_op_reports_context(self):
        graph = OnnxGraph(
            "u", [OnnxNode("Erf", ["x"], ["y"], "erf_node")], {}, [("x", [None, 2])], ["y"]
        )
        ev = GraphEvaluator(OnnxModel(graph=graph))
        with pytest.raises(InferenceError, match="erf_node"):
            ev.run({"x": np.zeros((1, 2), dtype=np.float32)})

    def test_identity_weights_on_zero_image_analytic(self):
        # y = I x + 0.5 on a zero input is exactly 0.5 everywhere
        graph = OnnxGraph(
            "a",
            [
                OnnxNode("Flatten", ["x"], ["flat"], "flat", {"axis": 1}),
                OnnxNode("Gemm", ["flat", "w", "b"], ["y"], "gemm", {"transB": 1}),
            ],
            {"w": np.eye(12, dtype=np.float32), "b": np.full(12, 0.5, dtype=np.float32)},
            [("x", [None, 3, 2, 2])],
            ["y"],
        )
        out = GraphEvaluator(OnnxModel(graph=graph)).run({"x": np.zeros((2, 3, 2, 2), np.float32)})
        np.testing.assert_array_equal(out["y"], np.full((2, 12), 0.5, dtype=np.float32))


@pytest.fixture(scope="module")
def fixture_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    make_fixture_bundle(out, seed=0)
    return open_bundle_dir(out)


class TestFixtureBundle:
    def test_generation_is_byte_stable(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        make_fixture_bundle(a, seed=3)
        make_fixture_bundle(b, seed=3)
        assert (a / "model.onnx").read_bytes() == (b / "model.onnx").read_bytes()
        assert (a / "manifest.json").read_text() == (b / "manifest.json").read_text()
        c = tmp_path / "c"
        make_fixture_bundle(c, seed=4)
        assert (a / "model.onnx").read_bytes() != (c / "model.onnx").read_bytes()

    def test_loads_with_three_taps(self, fixture_bundle):
        assert [t.tap_id for t in fixture_bundle.manifest.taps] == [1, 2, 3]
        assert fixture_bundle.input_hw == (64, 64)

    def test_forward_shapes(self, fixture_bundle):
        imgs = [natural_texture_image(64, seed=s) for s in range(2)]
        acts = forward_taps(fixture_bundle, imgs)
        assert acts[1].shape == (2, 8 * 64 * 64)
        assert acts[2].shape == (2, 16 * 32 * 32)
        assert acts[3].shape == (2, 10)

    def test_batching_consistency(self, fixture_bundle):
        imgs = [natural_texture_image(64, seed=s) for s in range(8)]
        single = forward_taps(fixture_bundle, imgs[:1], batch_size=1)
        batched = forward_taps(fixture_bundle, imgs, batch_size=8)
        for tap in (1, 2, 3):
            scale = np.abs(batched[tap][0]).max() + 1e-12
            assert np.abs(single[tap][0] - batched[tap][0]).max() <= 1e-5 * scale

    def test_forward_deterministic(self, fixture_bundle):
        img = [natural_texture_image(64, seed=9)]
        a = forward_taps(fixture_bundle, img)
        b = forward_taps(fixture_bundle, img)
        for tap in (1, 2, 3):
            np.testing.assert_array_equal(a[tap], b[tap])

    def test_manifest_error_on_missing_tensor(self, tmp_path):
        make_fixture_bundle(tmp_path, seed=0)
        manifest = ModelManifest.from_json(tmp_path / "manifest.json")
        manifest.taps[1] = TapInfo(2, "not_a_tensor", "bad")
        manifest.to_json(tmp_path / "manifest.json")
        with pytest.raises(ManifestError, match="not_a_tensor"):
            load_bundle(tmp_path / "model.onnx", tmp_path / "manifest.json")

    def test_manifest_schema_validation(self):
        with pytest.raises(ManifestError):
            ModelManifest(
                name="x",
                input={"height": 8, "width": 8, "channels": 3, "layout": "nchw"},
                normalization={"mean": [0.0] * 3, "std": [1.0] * 3},
                taps=[TapInfo(0, "t", "t")],  # tap 0 reserved
            )
        with pytest.raises(ManifestError):
            ModelManifest(
                name="x",
                input={"height": 8, "width": 8, "channels": 3, "layout": "nchw"},
                normalization={"mean": [0.0] * 3, "std": [1.0] * 3},
                taps=[TapInfo(2, "a", "a"), TapInfo(1, "b", "b")],  # out of order
            )


class TestNeuralFrame:
    def test_zero_frame_gives_zero_matrices(self, fixture_bundle):
        base = natural_texture_image(64, seed=1)
        frame = Frame(base, [base.copy(), base.copy()], ["a", "b"], np.ones(2), "augmentation")
        with pytest.warns(UserWarning, match="degenerate"):
            nf = compute_neural_frame(fixture_bundle, frame)
        for tap_id, matrix in nf.matrices.items():
            assert not np.any(matrix), tap_id
        with pytest.raises(UndefinedStableRankError):
            stable_rank(nf.matrices[1])

    def test_tap0_matches_frame_tangents_bit_exactly(self, fixture_bundle):
        base = natural_texture_image(64, seed=2)
        frame = build_augmentation_frame(base)
        nf = compute_neural_frame(fixture_bundle, frame)
        np.testing.assert_array_equal(nf.matrices[0], frame.tangent_matrix())
        assert nf.k == 19

    def test_linear_fixture_matches_analytic_jacobian(self, tmp_path):
        make_linear_fixture_bundle(tmp_path, seed=5, side=8, out_dim=6)
        bundle = open_bundle_dir(tmp_path)
        w = read_model(tmp_path / "model.onnx").graph.initializers["w"].astype(np.float64)
        rng = np.random.default_rng(0)
        base = 0.3 + 0.4 * rng.random((8, 8, 3))
        perturbed = [np.clip(base + 0.05 * rng.standard_normal(base.shape), 0, 1) for _ in range(4)]
        frame = Frame(base, perturbed, [f"d{i}" for i in range(4)], np.ones(4), "augmentation")
        nf = compute_neural_frame(bundle, frame)
        # input is flattened channel-major (C, H, W); tangents are (H, W, C)
        tangents = nf.matrices[0].reshape(8, 8, 3, 4).transpose(2, 0, 1, 3).reshape(-1, 4)
        want = w @ tangents
        got = nf.matrices[1]
        assert np.linalg.norm(got - want) <= 1e-5 * np.linalg.norm(want)

    def test_dimension_mismatch_rejected(self, fixture_bundle):
        base = natural_texture_image(32, seed=0)
        frame = Frame(base, [base.copy(), base.copy()], ["a", "b"], np.ones(2), "augmentation")
        with pytest.raises(InferenceError):
            compute_neural_frame(fixture_bundle, frame)


def test_fixture_probe_budget_per_image(fixture_bundle):
    # one full augmentation-frame push (19+1 passes) must stay under 10 s
    import time

    img = natural_texture_image(64, seed=3)
    start = time.monotonic()
    frame = build_augmentation_frame(img)
    nf = compute_neural_frame(fixture_bundle, frame)
    for matrix in nf.matrices.values():
        stable_rank(matrix)
    assert time.monotonic() - start < 10.0


class TestActivationCache:
    def test_round_trip_and_persistence(self, tmp_path):
        cache = ActivationCache(tmp_path)
        vec = np.arange(5, dtype=np.float32)
        cache.put("img0", 1, vec)
        cache.put("img0", 2, vec * 2)
        assert ("img0", 1) in cache
        np.testing.assert_array_equal(cache.get("img0", 1), vec)
        reopened = ActivationCache(tmp_path)
        np.testing.assert_array_equal(reopened.get("img0", 2), vec * 2)
        assert ("missing", 1) not in reopened
