"""Numpy evaluator for the ONNX op subset used by vision CNN exports.

Nodes run in graph order (ONNX graphs are topologically sorted); tensors
are freed after their last consumer so ResNet-sized batches fit in memory.
Convolution goes through im2col + BLAS, which dominates runtime.
"""

import numpy as np

from .errors import InferenceError
from .onnx_io import OnnxModel


def _pair(values, default):
    if values is None:
        return tuple(default)
    return tuple(int(v) for v in values)


def _conv(x, w, b, attrs):
    strides = _pair(attrs.get("strides"), (1, 1))
    dilations = _pair(attrs.get("dilations"), (1, 1))
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    group = int(attrs.get("group", 1))
    n, cin, h, wid = x.shape
    cout, cin_g, kh, kw = w.shape
    sh, sw = strides
    dh, dw = dilations
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    ho = (h + pt + pb - (dh * (kh - 1) + 1)) // sh + 1
    wo = (wid + pl + pr - (dw * (kw - 1) + 1)) // sw + 1
    st = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        (n, cin, kh, kw, ho, wo),
        (st[0], st[1], st[2] * dh, st[3] * dw, st[2] * sh, st[3] * sw),
        writeable=False,
    )
    out = np.empty((n, cout, ho, wo), dtype=np.float32)
    cpg = cout // group
    for g in range(group):
        cols = windows[:, g * cin_g : (g + 1) * cin_g].reshape(n, cin_g * kh * kw, ho * wo)
        wg = w[g * cpg : (g + 1) * cpg].reshape(cpg, cin_g * kh * kw)
        out[:, g * cpg : (g + 1) * cpg] = (wg @ cols).reshape(n, cpg, ho, wo)
    if b is not None:
        out += b.reshape(1, -1, 1, 1)
    return out


def _pool_windows(x, kernel, strides, pads, fill):
    kh, kw = kernel
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=fill)
    n, c, h, w = xp.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    st = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        (n, c, ho, wo, kh, kw),
        (st[0], st[1], st[2] * sh, st[3] * sw, st[2], st[3]),
        writeable=False,
    )


def _max_pool(x, attrs):
    kernel = _pair(attrs["kernel_shape"], None)
    strides = _pair(attrs.get("strides"), kernel)
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    if int(attrs.get("ceil_mode", 0)):
        raise InferenceError("MaxPool ceil_mode=1 is not supported")
    return _pool_windows(x, kernel, strides, pads, -np.inf).max(axis=(4, 5))


def _avg_pool(x, attrs):
    kernel = _pair(attrs["kernel_shape"], None)
    strides = _pair(attrs.get("strides"), kernel)
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    windows = _pool_windows(x, kernel, strides, pads, 0.0)
    total = windows.sum(axis=(4, 5), dtype=np.float32)
    if int(attrs.get("count_include_pad", 0)):
        return total / float(kernel[0] * kernel[1])
    ones = np.ones((1, 1) + x.shape[2:], dtype=np.float32)
    counts = _pool_windows(ones, kernel, strides, pads, 0.0).sum(axis=(4, 5), dtype=np.float32)
    return total / counts


def _batch_norm(x, scale, bias, mean, var, attrs):
    eps = float(attrs.get("epsilon", 1e-5))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    inv = (scale / np.sqrt(var + eps)).astype(np.float32).reshape(shape)
    shift = (bias - mean * scale / np.sqrt(var + eps)).astype(np.float32).reshape(shape)
    return x * inv + shift


def _gemm(a, b, c, attrs):
    if int(attrs.get("transA", 0)):
        a = a.T
    if int(attrs.get("transB", 0)):
        b = b.T
    out = float(attrs.get("alpha", 1.0)) * (a @ b)
    if c is not None:
        out = out + float(attrs.get("beta", 1.0)) * c
    return out.astype(np.float32, copy=False)


def _reshape(data, shape, attrs):
    target = [int(s) for s in shape.tolist()]
    for i, s in enumerate(target):
        if s == 0 and not int(attrs.get("allowzero", 0)):
            target[i] = data.shape[i]
    return data.reshape(target)


def _flatten(x, attrs):
    axis = int(attrs.get("axis", 1))
    lead = int(np.prod(x.shape[:axis], dtype=np.int64)) if axis else 1
    return x.reshape(lead, -1)


def _softmax(x, attrs):
    axis = int(attrs.get("axis", -1))
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class GraphEvaluator:
    """Executes a parsed ONNX model on float32 numpy feeds."""

    def __init__(self, model: OnnxModel):
        self.graph = model.graph
        self.input_names = [name for name, _ in self.graph.inputs]
        self.output_names = list(self.graph.outputs)
        produced = set(self.graph.initializers) | set(self.input_names)
        for node in self.graph.nodes:
            for name in node.inputs:
                if name and name not in produced:
                    raise InferenceError(
                        f"graph is not topologically sorted: {node.op_type} node "
                        f"{node.name!r} consumes undefined tensor {name!r}"
                    )
            produced.update(node.outputs)
        missing = [name for name in self.output_names if name not in produced]
        if missing:
            raise InferenceError(f"graph outputs never produced: {missing}")

    def run(self, feeds: dict, outputs=None) -> dict:
        wanted = list(outputs) if outputs is not None else self.output_names
        values = {}
        for name, arr in self.graph.initializers.items():
            values[name] = arr
        for name in self.input_names:
            if name not in feeds:
                raise InferenceError(f"missing graph input {name!r}")
            values[name] = np.ascontiguousarray(feeds[name], dtype=np.float32)

        remaining = {}
        for node in self.graph.nodes:
            for name in node.inputs:
                if name:
                    remaining[name] = remaining.get(name, 0) + 1
        keep = set(wanted) | set(self.graph.initializers) | set(self.input_names)

        for node in self.graph.nodes:
            try:
                results = self._exec(node, values)
            except InferenceError:
                raise
            except Exception as exc:
                raise InferenceError(
                    f"{node.op_type} node {node.name!r} (outputs {node.outputs}) "
                    f"failed: {exc}"
                ) from exc
            for name, arr in zip(node.outputs, results):
                if name:
                    values[name] = arr
            for name in node.inputs:
                if not name:
                    continue
                remaining[name] -= 1
                if remaining[name] == 0 and name not in keep:
                    values.pop(name, None)

        missing = [name for name in wanted if name not in values]
        if missing:
            raise InferenceError(f"requested tensors were not produced: {missing}")
        return {name: values[name] for name in wanted}

    def _exec(self, node, values):
        op = node.op_type
        ins = [values[name] if name else None for name in node.inputs]
        attrs = node.attrs
        if op == "Conv":
            return [_conv(ins[0], ins[1], ins[2] if len(ins) > 2 else None, attrs)]
        if op == "Relu":
            return [np.maximum(ins[0], 0.0)]
        if op == "Sigmoid":
            return [1.0 / (1.0 + np.exp(-ins[0]))]
        if op == "MaxPool":
            return [_max_pool(ins[0], attrs)]
        if op == "AveragePool":
            return [_avg_pool(ins[0], attrs)]
        if op == "GlobalAveragePool":
            return [ins[0].mean(axis=(2, 3), keepdims=True, dtype=np.float32)]
        if op == "BatchNormalization":
            return [_batch_norm(ins[0], ins[1], ins[2], ins[3], ins[4], attrs)]
        if op == "Add":
            return [ins[0] + ins[1]]
        if op == "Sub":
            return [ins[0] - ins[1]]
        if op == "Mul":
            return [ins[0] * ins[1]]
        if op == "Div":
            return [ins[0] / ins[1]]
        if op == "Gemm":
            return [_gemm(ins[0], ins[1], ins[2] if len(ins) > 2 else None, attrs)]
        if op == "MatMul":
            return [(ins[0] @ ins[1]).astype(np.float32, copy=False)]
        if op == "Flatten":
            return [_flatten(ins[0], attrs)]
        if op == "Reshape":
            return [_reshape(ins[0], ins[1], attrs)]
        if op == "Transpose":
            perm = attrs.get("perm")
            return [np.transpose(ins[0], perm)]
        if op == "Concat":
            return [np.concatenate([v for v in ins], axis=int(attrs["axis"]))]
        if op == "Softmax":
            return [_softmax(ins[0], attrs)]
        if op == "Identity":
            return [ins[0]]
        if op == "Constant":
            return [attrs["value"]]
        raise InferenceError(
            f"unsupported op {op!r} at node {node.name!r} (outputs {node.outputs})"
        )
