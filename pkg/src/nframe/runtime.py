"""Model bundles: ONNX graph + tap manifest, batched forward passes, and
finite-difference neural frames.

Layer 0 is raw pixel space: per-channel normalization is baked into the
graph as its first stage, so augmentation and noise frames live in one
common input space. Activations are flattened channel-major (C order on
NCHW), a fixed documented order so cross-run comparisons are stable.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InferenceError, ManifestError
from .frames import Frame
from .onnx_eval import GraphEvaluator
from .onnx_io import OnnxGraph, OnnxModel, OnnxNode, read_model, write_model

INPUT_TAP_ID = 0
INPUT_TAP_NAME = "input"


@dataclass(frozen=True)
class TapInfo:
    tap_id: int
    tensor_name: str
    display_name: str


@dataclass
class ModelManifest:
    name: str
    input: dict  # height, width, channels, layout
    normalization: dict  # mean[3], std[3]
    taps: list  # TapInfo, ordered by depth
    top1_accuracy: float = None

    def __post_init__(self):
        for key in ("height", "width", "channels", "layout"):
            if key not in self.input:
                raise ManifestError(f"manifest input block is missing {key!r}")
        if self.input["channels"] != 3:
            raise ManifestError("only 3-channel inputs are supported")
        if self.input["layout"] != "nchw":
            raise ManifestError(f"unsupported layout {self.input['layout']!r}")
        for key in ("mean", "std"):
            if len(self.normalization.get(key, ())) != 3:
                raise ManifestError(f"normalization must hold 3-vector {key!r}")
        if not self.taps:
            raise ManifestError("manifest declares no taps")
        ids = [t.tap_id for t in self.taps]
        if ids != sorted(ids) or len(set(ids)) != len(ids):
            raise ManifestError(f"tap_ids must be unique and ordered by depth, got {ids}")
        if min(ids) < 1:
            raise ManifestError("tap_id 0 is reserved for raw input space")
        names = [t.tensor_name for t in self.taps]
        if len(set(names)) != len(names):
            raise ManifestError(f"tap tensor names must be unique, got {names}")
        if self.top1_accuracy is not None and not 0.0 <= self.top1_accuracy <= 1.0:
            raise ManifestError(f"top1_accuracy must be in [0, 1], got {self.top1_accuracy}")

    @classmethod
    def from_json(cls, path) -> "ModelManifest":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        try:
            taps = [TapInfo(t["tap_id"], t["tensor_name"], t["display_name"]) for t in data["taps"]]
            return cls(
                name=data["name"],
                input=data["input"],
                normalization=data["normalization"],
                taps=taps,
                top1_accuracy=data.get("top1_accuracy"),
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"manifest {path} is missing field {exc}") from exc

    def to_json(self, path) -> None:
        data = {
            "name": self.name,
            "input": self.input,
            "normalization": self.normalization,
            "taps": [
                {"tap_id": t.tap_id, "tensor_name": t.tensor_name, "display_name": t.display_name}
                for t in self.taps
            ],
            "top1_accuracy": self.top1_accuracy,
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class NeuralFrame:
    """Per-tap matrices whose columns are pushed-forward tangent vectors."""

    matrices: dict  # tap_id -> (n_i, k) float64
    labels: list
    tap_names: dict  # tap_id -> display name

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def tap_ids(self) -> list:
        return sorted(self.matrices)


class ModelBundle:
    """Loaded inference graph plus its tap manifest."""

    def __init__(self, manifest: ModelManifest, model: OnnxModel, graph_path=None):
        self.manifest = manifest
        self.graph_path = graph_path
        self.evaluator = GraphEvaluator(model)
        if len(self.evaluator.input_names) != 1:
            raise ManifestError(
                f"expected a single graph input, got {self.evaluator.input_names}"
            )
        self.input_name = self.evaluator.input_names[0]
        available = set(self.evaluator.output_names)
        for tap in manifest.taps:
            if tap.tensor_name not in available:
                raise ManifestError(
                    f"manifest tap {tap.tensor_name!r} does not resolve to a graph output "
                    f"(available: {sorted(available)})"
                )
        self._check_input_dims(model.graph)

    def _check_input_dims(self, graph: OnnxGraph):
        dims = dict(graph.inputs).get(self.input_name)
        if not dims or len(dims) != 4:
            return  # shape unspecified in the graph; manifest wins
        want = (self.manifest.input["channels"], self.manifest.input["height"],
                self.manifest.input["width"])
        got = tuple(dims[1:])
        for expected, actual in zip(want, got):
            if actual is not None and actual != expected:
                raise ManifestError(
                    f"graph input shape {got} does not match manifest (C,H,W) {want}"
                )

    @property
    def input_hw(self):
        return self.manifest.input["height"], self.manifest.input["width"]

    def tap_display_names(self) -> dict:
        names = {INPUT_TAP_ID: INPUT_TAP_NAME}
        names.update({t.tap_id: t.display_name for t in self.manifest.taps})
        return names


def load_bundle(graph_path, manifest_path) -> ModelBundle:
    manifest = ModelManifest.from_json(manifest_path)
    graph_path = Path(graph_path)
    if not graph_path.is_file():
        raise ManifestError(f"graph file not found: {graph_path}")
    model = read_model(graph_path)
    return ModelBundle(manifest, model, graph_path=graph_path)


def open_bundle_dir(directory) -> ModelBundle:
    """Convenience: a bundle directory holds model.onnx + manifest.json."""
    root = Path(directory)
    return load_bundle(root / "model.onnx", root / "manifest.json")


def _to_nchw(images, manifest: ModelManifest) -> np.ndarray:
    h, w = manifest.input["height"], manifest.input["width"]
    batch = np.stack([np.asarray(img, dtype=np.float64) for img in images])
    if batch.shape[1:] != (h, w, 3):
        raise InferenceError(
            f"images have shape {batch.shape[1:]}, manifest wants ({h}, {w}, 3)"
        )
    return np.ascontiguousarray(batch.transpose(0, 3, 1, 2), dtype=np.float32)


def forward_taps(bundle: ModelBundle, images, batch_size: int = 8) -> dict:
    """Run images through the graph; returns tap_id -> (N, n_i) float32.

    Activations are flattened in C order over (C, H, W) (channel-major).
    """
    nchw = _to_nchw(images, bundle.manifest)
    tensor_names = [t.tensor_name for t in bundle.manifest.taps]
    chunks = {t.tap_id: [] for t in bundle.manifest.taps}
    for start in range(0, nchw.shape[0], batch_size):
        feed = {bundle.input_name: nchw[start : start + batch_size]}
        out = bundle.evaluator.run(feed, outputs=tensor_names)
        for tap in bundle.manifest.taps:
            act = out[tap.tensor_name]
            chunks[tap.tap_id].append(act.reshape(act.shape[0], -1))
    return {tap_id: np.concatenate(parts, axis=0) for tap_id, parts in chunks.items()}


def compute_neural_frame(bundle: ModelBundle, frame: Frame, batch_size: int = 8) -> NeuralFrame:
    """Push a frame through every tap by finite differences of forward passes.

    Runs k+1 batched passes (base first); tap 0 is the input-space tangent
    matrix, taken verbatim from the frame so it matches frame_builder
    bit-exactly. All-zero columns are kept but reported, since stable rank
    tolerates them unless every column vanishes.
    """
    h, w = bundle.input_hw
    if frame.base.shape[:2] != (h, w):
        raise InferenceError(
            f"frame base is {frame.base.shape[:2]}, bundle input is ({h}, {w})"
        )
    acts = forward_taps(bundle, [frame.base] + list(frame.perturbed), batch_size=batch_size)
    matrices = {INPUT_TAP_ID: frame.tangent_matrix()}
    steps = frame.steps
    degenerate = set()
    for tap_id, stacked in acts.items():
        base_act = stacked[0].astype(np.float64)
        cols = (stacked[1:].astype(np.float64) - base_act) / steps[:, None]
        matrix = np.ascontiguousarray(cols.T)
        zero_cols = np.flatnonzero(~np.any(matrix, axis=0))
        degenerate.update(frame.labels[j] for j in zero_cols)
        matrices[tap_id] = matrix
    if degenerate:
        warnings.warn(
            f"degenerate directions (all-zero columns) at some taps: {sorted(degenerate)}",
            stacklevel=2,
        )
    return NeuralFrame(matrices, list(frame.labels), bundle.tap_display_names())


# ---------------------------------------------------------------------------
# fixtures


def _he_conv(rng, cout, cin, kh, kw):
    fan_in = cin * kh * kw
    return (rng.standard_normal((cout, cin, kh, kw)) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def _he_dense(rng, cout, cin):
    return (rng.standard_normal((cout, cin)) * np.sqrt(2.0 / cin)).astype(np.float32)


def make_fixture_bundle(out_dir, seed: int = 0) -> Path:
    """Small conv-relu-pool-dense bundle (64x64x3 input, 3 taps).

    Byte-stable for a fixed seed; weights are He-scaled random draws.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    mean = np.full((1, 3, 1, 1), 0.5, dtype=np.float32)
    std = np.full((1, 3, 1, 1), 0.25, dtype=np.float32)

    init = {
        "norm_mean": mean,
        "norm_std": std,
        "conv1_w": _he_conv(rng, 8, 3, 3, 3),
        "conv1_b": np.zeros(8, dtype=np.float32),
        "conv2_w": _he_conv(rng, 16, 8, 3, 3),
        "conv2_b": np.zeros(16, dtype=np.float32),
        "fc1_w": _he_dense(rng, 32, 16 * 16 * 16),
        "fc1_b": np.zeros(32, dtype=np.float32),
        "fc2_w": _he_dense(rng, 10, 32),
        "fc2_b": np.zeros(10, dtype=np.float32),
    }
    conv_attrs = {"kernel_shape": [3, 3], "pads": [1, 1, 1, 1], "strides": [1, 1]}
    pool_attrs = {"kernel_shape": [2, 2], "strides": [2, 2]}
    nodes = [
        OnnxNode("Sub", ["pixels", "norm_mean"], ["normed0"], "normalize_sub"),
        OnnxNode("Div", ["normed0", "norm_std"], ["normed"], "normalize_div"),
        OnnxNode("Conv", ["normed", "conv1_w", "conv1_b"], ["conv1"], "conv1", dict(conv_attrs)),
        OnnxNode("Relu", ["conv1"], ["relu1"], "relu1"),
        OnnxNode("MaxPool", ["relu1"], ["pool1"], "pool1", dict(pool_attrs)),
        OnnxNode("Conv", ["pool1", "conv2_w", "conv2_b"], ["conv2"], "conv2", dict(conv_attrs)),
        OnnxNode("Relu", ["conv2"], ["relu2"], "relu2"),
        OnnxNode("MaxPool", ["relu2"], ["pool2"], "pool2", dict(pool_attrs)),
        OnnxNode("Flatten", ["pool2"], ["flat"], "flatten", {"axis": 1}),
        OnnxNode("Gemm", ["flat", "fc1_w", "fc1_b"], ["fc1"], "fc1", {"transB": 1}),
        OnnxNode("Relu", ["fc1"], ["relu3"], "relu3"),
        OnnxNode("Gemm", ["relu3", "fc2_w", "fc2_b"], ["logits"], "fc2", {"transB": 1}),
    ]
    graph = OnnxGraph(
        name="fixture",
        nodes=nodes,
        initializers=init,
        inputs=[("pixels", [None, 3, 64, 64])],
        outputs=["relu1", "relu2", "logits"],
    )
    write_model(out / "model.onnx", OnnxModel(graph=graph))

    manifest = ModelManifest(
        name=f"fixture-seed{seed}",
        input={"height": 64, "width": 64, "channels": 3, "layout": "nchw"},
        normalization={"mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25]},
        taps=[
            TapInfo(1, "relu1", "conv1.relu"),
            TapInfo(2, "relu2", "conv2.relu"),
            TapInfo(3, "logits", "logits"),
        ],
    )
    manifest.to_json(out / "manifest.json")
    return out


def make_linear_fixture_bundle(out_dir, seed: int = 0, side: int = 8, out_dim: int = 6) -> Path:
    """Purely linear bundle y = W flatten(x): finite differences are exact."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    w = (rng.standard_normal((out_dim, side * side * 3)) * 0.1).astype(np.float32)
    nodes = [
        OnnxNode("Flatten", ["pixels"], ["flat"], "flatten", {"axis": 1}),
        OnnxNode("Gemm", ["flat", "w"], ["output"], "linear", {"transB": 1}),
    ]
    graph = OnnxGraph(
        name="linear-fixture",
        nodes=nodes,
        initializers={"w": w},
        inputs=[("pixels", [None, 3, side, side])],
        outputs=["output"],
    )
    write_model(out / "model.onnx", OnnxModel(graph=graph))
    manifest = ModelManifest(
        name=f"linear-fixture-seed{seed}",
        input={"height": side, "width": side, "channels": 3, "layout": "nchw"},
        normalization={"mean": [0.0, 0.0, 0.0], "std": [1.0, 1.0, 1.0]},
        taps=[TapInfo(1, "output", "output")],
    )
    manifest.to_json(out / "manifest.json")
    return out


# ---------------------------------------------------------------------------
# optional activation cache


class ActivationCache:
    """Flat binary store of float32 activation vectors with a JSON index.

    Entries are keyed by (image_id, tap_id); the binary file holds raw
    little-endian float32, the index records {image_id, tap_id, offset,
    length} per entry.
    """

    def __init__(self, directory):
        self.root = Path(directory)
        self.root.mkdir(parents=True, exist_ok=True)
        self.bin_path = self.root / "acts.bin"
        self.index_path = self.root / "index.json"
        if self.index_path.exists():
            with open(self.index_path) as fh:
                entries = json.load(fh)
        else:
            entries = []
        self._index = {(e["image_id"], e["tap_id"]): (e["offset"], e["length"]) for e in entries}
        self._entries = entries

    def __contains__(self, key) -> bool:
        return tuple(key) in self._index

    def get(self, image_id: str, tap_id: int) -> np.ndarray:
        offset, length = self._index[(image_id, tap_id)]
        with open(self.bin_path, "rb") as fh:
            fh.seek(offset)
            raw = fh.read(length * 4)
        return np.frombuffer(raw, dtype="<f4").copy()

    def put(self, image_id: str, tap_id: int, vector: np.ndarray) -> None:
        if (image_id, tap_id) in self._index:
            return
        data = np.ascontiguousarray(vector, dtype="<f4").tobytes()
        with open(self.bin_path, "ab") as fh:
            offset = fh.tell()
            fh.write(data)
        entry = {"image_id": image_id, "tap_id": tap_id, "offset": offset,
                 "length": len(data) // 4}
        self._entries.append(entry)
        self._index[(image_id, tap_id)] = (offset, entry["length"])
        with open(self.index_path, "w") as fh:
            json.dump(self._entries, fh)
