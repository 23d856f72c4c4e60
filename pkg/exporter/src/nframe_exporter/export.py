"""Trace a vision model, promote tap tensors to graph outputs, and write an
nframe model bundle (model.onnx + manifest.json + selfcheck.json).

Normalization is folded into the exported graph as an initial affine stage,
so the bundle consumes raw [0, 1] pixels; the manifest records the constants.
The bundle is consumed by the probing runtime purely through these files.
"""

import difflib
import json
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torchvision import models as tv_models
from torchvision.models.feature_extraction import create_feature_extractor, get_graph_node_names

from .onnx_writer import Graph, Node, write
from .zoo import UNSUPPORTED_NOTE, ZOO_SPECS

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

SELFCHECK_SEED = 90125
SELFCHECK_INPUTS = 8


class ExportError(Exception):
    """Raised when a model or tap list cannot be exported."""


@dataclass
class ExportSpec:
    """What to export: zoo identifier, tap list, dims, normalization."""

    model: str
    taps: tuple = None  # ((tensor_name, display_name), ...); None = zoo default
    input_size: int = 224
    normalization_mean: tuple = IMAGENET_MEAN
    normalization_std: tuple = IMAGENET_STD
    top1_accuracy: float = None
    weights_file: str = None
    extra: dict = field(default_factory=dict)

    def resolved_taps(self):
        if self.taps is not None:
            return tuple((str(t), str(d)) for t, d in self.taps)
        if self.model in ZOO_SPECS:
            return ZOO_SPECS[self.model]["taps"]
        raise ExportError(
            f"no default tap table for {self.model!r}; pass taps explicitly "
            f"(zoo defaults exist for {sorted(ZOO_SPECS)})"
        )


def _build_zoo_model(spec: ExportSpec) -> nn.Module:
    if spec.model not in ZOO_SPECS:
        if hasattr(tv_models, spec.model):
            raise ExportError(f"model {spec.model!r} is not supported: {UNSUPPORTED_NOTE}")
        raise ExportError(
            f"unknown zoo model {spec.model!r}; choices: {sorted(ZOO_SPECS)}"
        )
    module = getattr(tv_models, spec.model)(weights=None)
    if spec.weights_file:
        state = torch.load(spec.weights_file, map_location="cpu", weights_only=True)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        module.load_state_dict(state)
    return module


def _to_pair(value):
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _sym_pads(padding) -> list:
    ph, pw = _to_pair(padding)
    return [ph, pw, ph, pw]


def _np32(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(np.float32)


class _FxConverter:
    """Walks a feature-extractor GraphModule and emits ONNX nodes."""

    def __init__(self, gm, mean, std):
        self.gm = gm
        self.nodes = []
        self.initializers = {}
        self.env = {}
        self.input_name = "pixels"
        self.mean = np.asarray(mean, dtype=np.float32).reshape(1, 3, 1, 1)
        self.std = np.asarray(std, dtype=np.float32).reshape(1, 3, 1, 1)
        self.output_map = {}

    def convert(self):
        for node in self.gm.graph.nodes:
            if node.op == "placeholder":
                self._placeholder(node)
            elif node.op == "call_module":
                self._call_module(node)
            elif node.op == "call_function":
                self._call_function(node)
            elif node.op == "call_method":
                raise ExportError(f"method call {node.target!r} is not exportable")
            elif node.op == "output":
                self._output(node)
            elif node.op == "get_attr":
                raise ExportError(f"get_attr node {node.target!r} is not exportable")
        if not self.output_map:
            raise ExportError("traced graph has no output node")
        return self.nodes, self.initializers, self.output_map

    def _emit(self, op, inputs, output, name, attrs=None):
        self.nodes.append(Node(op, list(inputs), [output], name, attrs or {}))

    def _placeholder(self, node):
        self.initializers["input_mean"] = self.mean
        self.initializers["input_std"] = self.std
        self._emit("Sub", [self.input_name, "input_mean"], "normalized_0", "normalize_sub")
        self._emit("Div", ["normalized_0", "input_std"], "normalized", "normalize_div")
        self.env[node] = "normalized"

    def _call_module(self, node):
        module = self.gm.get_submodule(node.target)
        x = self.env[node.args[0]]
        out = node.name
        prefix = str(node.target)
        if isinstance(module, nn.Conv2d):
            self.initializers[f"{prefix}.weight"] = _np32(module.weight)
            inputs = [x, f"{prefix}.weight"]
            if module.bias is not None:
                self.initializers[f"{prefix}.bias"] = _np32(module.bias)
                inputs.append(f"{prefix}.bias")
            self._emit(
                "Conv", inputs, out, node.name,
                {
                    "dilations": list(_to_pair(module.dilation)),
                    "group": int(module.groups),
                    "kernel_shape": list(_to_pair(module.kernel_size)),
                    "pads": _sym_pads(module.padding),
                    "strides": list(_to_pair(module.stride)),
                },
            )
        elif isinstance(module, nn.BatchNorm2d):
            channels = module.num_features
            scale = _np32(module.weight) if module.affine else np.ones(channels, np.float32)
            bias = _np32(module.bias) if module.affine else np.zeros(channels, np.float32)
            self.initializers[f"{prefix}.scale"] = scale
            self.initializers[f"{prefix}.bias"] = bias
            self.initializers[f"{prefix}.mean"] = _np32(module.running_mean)
            self.initializers[f"{prefix}.var"] = _np32(module.running_var)
            self._emit(
                "BatchNormalization",
                [x, f"{prefix}.scale", f"{prefix}.bias", f"{prefix}.mean", f"{prefix}.var"],
                out, node.name, {"epsilon": float(module.eps)},
            )
        elif isinstance(module, nn.ReLU):
            self._emit("Relu", [x], out, node.name)
        elif isinstance(module, nn.MaxPool2d):
            if module.ceil_mode:
                raise ExportError(f"{prefix}: MaxPool2d ceil_mode=True is not exportable")
            if _to_pair(module.dilation) != (1, 1):
                raise ExportError(f"{prefix}: dilated MaxPool2d is not exportable")
            stride = module.stride if module.stride is not None else module.kernel_size
            self._emit(
                "MaxPool", [x], out, node.name,
                {
                    "kernel_shape": list(_to_pair(module.kernel_size)),
                    "pads": _sym_pads(module.padding),
                    "strides": list(_to_pair(stride)),
                },
            )
        elif isinstance(module, nn.AvgPool2d):
            if module.ceil_mode:
                raise ExportError(f"{prefix}: AvgPool2d ceil_mode=True is not exportable")
            stride = module.stride if module.stride is not None else module.kernel_size
            self._emit(
                "AveragePool", [x], out, node.name,
                {
                    "count_include_pad": 1 if module.count_include_pad else 0,
                    "kernel_shape": list(_to_pair(module.kernel_size)),
                    "pads": _sym_pads(module.padding),
                    "strides": list(_to_pair(stride)),
                },
            )
        elif isinstance(module, nn.AdaptiveAvgPool2d):
            if _to_pair(module.output_size) != (1, 1):
                raise ExportError(
                    f"{prefix}: only AdaptiveAvgPool2d(1) exports (GlobalAveragePool)"
                )
            self._emit("GlobalAveragePool", [x], out, node.name)
        elif isinstance(module, nn.Linear):
            self.initializers[f"{prefix}.weight"] = _np32(module.weight)
            inputs = [x, f"{prefix}.weight"]
            if module.bias is not None:
                self.initializers[f"{prefix}.bias"] = _np32(module.bias)
                inputs.append(f"{prefix}.bias")
            self._emit("Gemm", inputs, out, node.name, {"transB": 1})
        elif isinstance(module, (nn.Dropout, nn.Identity)):
            self._emit("Identity", [x], out, node.name)
        else:
            raise ExportError(
                f"{prefix}: module type {type(module).__name__} is not exportable"
            )
        self.env[node] = out

    def _call_function(self, node):
        fn = node.target
        out = node.name
        if fn in (operator.add, operator.iadd, torch.add):
            a, b = (self.env[arg] for arg in node.args[:2])
            self._emit("Add", [a, b], out, node.name)
        elif fn in (operator.mul, torch.mul):
            a, b = (self.env[arg] for arg in node.args[:2])
            self._emit("Mul", [a, b], out, node.name)
        elif fn is torch.flatten:
            axis = node.args[1] if len(node.args) > 1 else node.kwargs.get("start_dim", 0)
            self._emit("Flatten", [self.env[node.args[0]]], out, node.name,
                       {"axis": int(axis)})
        elif fn is torch.nn.functional.relu:
            self._emit("Relu", [self.env[node.args[0]]], out, node.name)
        elif fn is torch.cat:
            axis = node.args[1] if len(node.args) > 1 else node.kwargs.get("dim", 0)
            self._emit("Concat", [self.env[a] for a in node.args[0]], out, node.name,
                       {"axis": int(axis)})
        else:
            raise ExportError(f"function {getattr(fn, '__name__', fn)!r} is not exportable")
        self.env[node] = out

    def _output(self, node):
        payload = node.args[0]
        if not isinstance(payload, dict):
            raise ExportError("expected a feature-extractor output dict")
        for requested, fx_node in payload.items():
            self.output_map[requested] = self.env[fx_node]


def _alias_outputs(nodes, output_map):
    """Expose each requested output under its qualified (dotted) name."""
    outputs = []
    for requested, tensor in output_map.items():
        if requested == tensor:
            outputs.append(requested)
        else:
            nodes.append(Node("Identity", [tensor], [requested], f"alias_{requested}"))
            outputs.append(requested)
    return outputs


def _selfcheck(gm, taps, logits_name, input_size, mean, std, out_dir):
    """Forward seeded inputs; record tap shapes and logits for consumers.

    Inputs are raw [0, 1] pixels; the exported graph normalizes internally,
    so the torch-side reference applies the same affine here.
    """
    rng = np.random.default_rng(SELFCHECK_SEED)
    batch = rng.random((SELFCHECK_INPUTS, 3, input_size, input_size), dtype=np.float32)
    normalized = (batch - np.asarray(mean, np.float32).reshape(1, 3, 1, 1)) / np.asarray(
        std, np.float32
    ).reshape(1, 3, 1, 1)
    with torch.no_grad():
        out = gm(torch.from_numpy(normalized))
    shapes = {}
    for tensor_name, _ in taps:
        if tensor_name not in out:
            raise ExportError(f"self-check: tap {tensor_name!r} missing from forward outputs")
        shapes[tensor_name] = list(out[tensor_name].shape[1:])
    payload = {
        "seed": SELFCHECK_SEED,
        "n_inputs": SELFCHECK_INPUTS,
        "input_shape": [3, input_size, input_size],
        "normalization_inside_graph": True,
        "tap_shapes": shapes,
        "logits_name": logits_name,
        "logits": out[logits_name].numpy().astype(float).tolist(),
    }
    with open(Path(out_dir) / "selfcheck.json", "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    return shapes


def emit_manifest(spec: ExportSpec, out_path) -> None:
    """Write the bundle manifest (exact runtime schema)."""
    taps = spec.resolved_taps()
    payload = {
        "name": spec.extra.get("name", spec.model),
        "input": {
            "height": spec.input_size,
            "width": spec.input_size,
            "channels": 3,
            "layout": "nchw",
        },
        "normalization": {
            "mean": [float(v) for v in spec.normalization_mean],
            "std": [float(v) for v in spec.normalization_std],
        },
        "taps": [
            {"tap_id": i + 1, "tensor_name": tensor, "display_name": display}
            for i, (tensor, display) in enumerate(taps)
        ],
        "top1_accuracy": spec.top1_accuracy,
    }
    with open(out_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_bundle(spec: ExportSpec, out_dir, module: nn.Module = None) -> Path:
    """Emit model.onnx + manifest.json + selfcheck.json into ``out_dir``.

    ``module`` overrides the zoo lookup (checkpoint-series and custom nets);
    it must be FX-traceable with ops in the exported subset.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = module if module is not None else _build_zoo_model(spec)
    model = model.eval()
    taps = spec.resolved_taps()

    _, eval_nodes = get_graph_node_names(model)
    missing = [t for t, _ in taps if t not in eval_nodes]
    if missing:
        hints = {
            name: difflib.get_close_matches(name, eval_nodes, n=3, cutoff=0.4)
            for name in missing
        }
        raise ExportError(f"tap names not in the traced graph: {hints}")
    logits_name = eval_nodes[-1]
    requested = [t for t, _ in taps]
    if logits_name not in requested:
        requested = requested + [logits_name]

    gm = create_feature_extractor(model, return_nodes={name: name for name in requested})
    converter = _FxConverter(gm, spec.normalization_mean, spec.normalization_std)
    nodes, initializers, output_map = converter.convert()
    outputs = _alias_outputs(nodes, output_map)
    # classification output first, taps after, so tap promotion is additive
    outputs = sorted(outputs, key=lambda n: (n != logits_name, requested.index(n)))
    graph = Graph(
        name=spec.extra.get("name", spec.model),
        nodes=nodes,
        initializers=initializers,
        input_name=converter.input_name,
        input_dims=[None, 3, spec.input_size, spec.input_size],
        outputs=outputs,
    )
    write(out / "model.onnx", graph)
    emit_manifest(spec, out / "manifest.json")
    _selfcheck(
        gm, taps, logits_name, spec.input_size,
        spec.normalization_mean, spec.normalization_std, out,
    )
    return out
