"""Self-contained ONNX protobuf reader/writer.

Covers the subset of the format this package produces and consumes:
ModelProto / GraphProto / NodeProto / TensorProto / AttributeProto /
ValueInfoProto with float32/float64/int32/int64 tensors. The writer emits
fields in a fixed order so serialization is byte-stable; the reader accepts
packed and unpacked repeated scalars, so graphs written by standard
protobuf implementations also parse.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ManifestError

FLOAT32, INT32, INT64, FLOAT64 = 1, 6, 7, 11

_DTYPE_TO_ONNX = {
    np.dtype(np.float32): FLOAT32,
    np.dtype(np.int32): INT32,
    np.dtype(np.int64): INT64,
    np.dtype(np.float64): FLOAT64,
}
_ONNX_TO_DTYPE = {v: k for k, v in _DTYPE_TO_ONNX.items()}

# ---------------------------------------------------------------------------
# wire-format primitives


def _varint(value: int) -> bytes:
    if value < 0:
        value += 1 << 64
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field_no: int, wire: int) -> bytes:
    return _varint((field_no << 3) | wire)


def _len_delim(field_no: int, payload: bytes) -> bytes:
    return _tag(field_no, 2) + _varint(len(payload)) + payload


def _uint_field(field_no: int, value: int) -> bytes:
    return _tag(field_no, 0) + _varint(value)


def _read_varint(buf: bytes, pos: int):
    result = 0
    shift = 0
    while True:
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _signed(value: int) -> int:
    return value - (1 << 64) if value >= 1 << 63 else value


def _iter_fields(buf: bytes):
    pos = 0
    end = len(buf)
    while pos < end:
        key, pos = _read_varint(buf, pos)
        field_no, wire = key >> 3, key & 7
        if wire == 0:
            value, pos = _read_varint(buf, pos)
        elif wire == 2:
            length, pos = _read_varint(buf, pos)
            value = buf[pos : pos + length]
            pos += length
        elif wire == 5:
            value = buf[pos : pos + 4]
            pos += 4
        elif wire == 1:
            value = buf[pos : pos + 8]
            pos += 8
        else:
            raise ManifestError(f"unsupported protobuf wire type {wire}")
        yield field_no, wire, value


def _varints_maybe_packed(entries) -> list:
    out = []
    for wire, value in entries:
        if wire == 0:
            out.append(_signed(value))
        else:
            pos = 0
            while pos < len(value):
                item, pos = _read_varint(value, pos)
                out.append(_signed(item))
    return out


def _floats_maybe_packed(entries) -> list:
    out = []
    for wire, value in entries:
        if wire == 5:
            out.append(struct.unpack("<f", value)[0])
        else:
            out.extend(np.frombuffer(value, dtype="<f4").tolist())
    return out


# ---------------------------------------------------------------------------
# message model


@dataclass
class OnnxNode:
    op_type: str
    inputs: list
    outputs: list
    name: str = ""
    attrs: dict = field(default_factory=dict)


@dataclass
class OnnxGraph:
    name: str
    nodes: list
    initializers: dict
    inputs: list  # (name, dims) with dims entries int or None for symbolic
    outputs: list  # tensor names


@dataclass
class OnnxModel:
    graph: OnnxGraph
    opset: int = 13
    ir_version: int = 8


# ---------------------------------------------------------------------------
# writer


def _tensor_bytes(name: str, array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _DTYPE_TO_ONNX:
        raise ManifestError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
    out = bytearray()
    for dim in arr.shape:
        out += _uint_field(1, dim)
    out += _uint_field(2, _DTYPE_TO_ONNX[arr.dtype])
    out += _len_delim(8, name.encode())
    out += _len_delim(9, arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return bytes(out)


def _attr_bytes(name: str, value) -> bytes:
    out = bytearray(_len_delim(1, name.encode()))
    if isinstance(value, float):
        out += _tag(2, 5) + struct.pack("<f", value)
        out += _uint_field(20, 1)
    elif isinstance(value, bool):
        raise ManifestError("bool attributes are ambiguous; use int")
    elif isinstance(value, int):
        out += _uint_field(3, value)
        out += _uint_field(20, 2)
    elif isinstance(value, str):
        out += _len_delim(4, value.encode())
        out += _uint_field(20, 3)
    elif isinstance(value, np.ndarray):
        out += _len_delim(5, _tensor_bytes("", value))
        out += _uint_field(20, 4)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        for v in value:
            out += _uint_field(8, v)
        out += _uint_field(20, 7)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, float) for v in value):
        for v in value:
            out += _tag(7, 5) + struct.pack("<f", v)
        out += _uint_field(20, 6)
    else:
        raise ManifestError(f"unsupported attribute value for {name!r}: {value!r}")
    return bytes(out)


def _node_bytes(node: OnnxNode) -> bytes:
    out = bytearray()
    for inp in node.inputs:
        out += _len_delim(1, inp.encode())
    for outp in node.outputs:
        out += _len_delim(2, outp.encode())
    if node.name:
        out += _len_delim(3, node.name.encode())
    out += _len_delim(4, node.op_type.encode())
    for attr_name in sorted(node.attrs):
        out += _len_delim(5, _attr_bytes(attr_name, node.attrs[attr_name]))
    return bytes(out)


def _value_info_bytes(name: str, dims, elem_type: int = FLOAT32) -> bytes:
    shape = bytearray()
    for dim in dims:
        if dim is None:
            entry = _len_delim(2, b"N")
        else:
            entry = _uint_field(1, int(dim))
        shape += _len_delim(1, entry)
    tensor_type = _uint_field(1, elem_type) + _len_delim(2, bytes(shape))
    type_proto = _len_delim(1, tensor_type)
    return _len_delim(1, name.encode()) + _len_delim(2, type_proto)


def serialize_model(model: OnnxModel) -> bytes:
    g = model.graph
    graph = bytearray()
    for node in g.nodes:
        graph += _len_delim(1, _node_bytes(node))
    graph += _len_delim(2, g.name.encode())
    for name, arr in g.initializers.items():
        graph += _len_delim(5, _tensor_bytes(name, arr))
    for name, dims in g.inputs:
        graph += _len_delim(11, _value_info_bytes(name, dims))
    for name in g.outputs:
        graph += _len_delim(12, _value_info_bytes(name, []))
    out = bytearray()
    out += _uint_field(1, model.ir_version)
    out += _len_delim(2, b"nframe")
    out += _len_delim(7, bytes(graph))
    opset = _len_delim(1, b"") + _uint_field(2, model.opset)
    out += _len_delim(8, opset)
    return bytes(out)


def write_model(path, model: OnnxModel) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


# ---------------------------------------------------------------------------
# reader


def _parse_tensor(buf: bytes):
    dims = []
    data_type = None
    name = ""
    raw = None
    float_entries = []
    int32_entries = []
    int64_entries = []
    for field_no, wire, value in _iter_fields(buf):
        if field_no == 1:
            dims.extend(_varints_maybe_packed([(wire, value)]))
        elif field_no == 2:
            data_type = value
        elif field_no == 4:
            float_entries.append((wire, value))
        elif field_no == 5:
            int32_entries.append((wire, value))
        elif field_no == 7:
            int64_entries.append((wire, value))
        elif field_no == 8:
            name = value.decode()
        elif field_no == 9:
            raw = value
    if data_type not in _ONNX_TO_DTYPE:
        raise ManifestError(f"tensor {name!r}: unsupported ONNX data type {data_type}")
    dtype = _ONNX_TO_DTYPE[data_type]
    if raw is not None:
        arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
    elif float_entries:
        arr = np.array(_floats_maybe_packed(float_entries), dtype=dtype)
    elif int64_entries:
        arr = np.array(_varints_maybe_packed(int64_entries), dtype=dtype)
    elif int32_entries:
        arr = np.array(_varints_maybe_packed(int32_entries), dtype=dtype)
    else:
        arr = np.zeros(0, dtype=dtype)
    return name, arr.reshape(dims if dims else ())


def _parse_attr(buf: bytes):
    name = ""
    payload = {}
    for field_no, wire, value in _iter_fields(buf):
        if field_no == 1:
            name = value.decode()
        elif field_no == 2:
            payload.setdefault("f", struct.unpack("<f", value)[0])
        elif field_no == 3:
            payload["i"] = _signed(value)
        elif field_no == 4:
            payload["s"] = value.decode()
        elif field_no == 5:
            payload["t"] = _parse_tensor(value)[1]
        elif field_no == 7:
            payload.setdefault("floats", []).append((wire, value))
        elif field_no == 8:
            payload.setdefault("ints", []).append((wire, value))
    if "ints" in payload:
        return name, _varints_maybe_packed(payload["ints"])
    if "floats" in payload:
        return name, _floats_maybe_packed(payload["floats"])
    for key in ("i", "f", "s", "t"):
        if key in payload:
            return name, payload[key]
    return name, None


def _parse_value_info(buf: bytes):
    name = ""
    dims = []
    for field_no, _, value in _iter_fields(buf):
        if field_no == 1:
            name = value.decode()
        elif field_no == 2:
            for f2, _, tensor_type in _iter_fields(value):
                if f2 != 1:
                    continue
                for f3, _, shape in _iter_fields(tensor_type):
                    if f3 != 2:
                        continue
                    for f4, _, dim in _iter_fields(shape):
                        if f4 != 1:
                            continue
                        entry = None
                        for f5, w5, v5 in _iter_fields(dim):
                            if f5 == 1 and w5 == 0:
                                entry = v5
                        dims.append(entry)
    return name, dims


def _parse_node(buf: bytes) -> OnnxNode:
    node = OnnxNode(op_type="", inputs=[], outputs=[])
    for field_no, _, value in _iter_fields(buf):
        if field_no == 1:
            node.inputs.append(value.decode())
        elif field_no == 2:
            node.outputs.append(value.decode())
        elif field_no == 3:
            node.name = value.decode()
        elif field_no == 4:
            node.op_type = value.decode()
        elif field_no == 5:
            attr_name, attr_value = _parse_attr(value)
            node.attrs[attr_name] = attr_value
    return node


def _parse_graph(buf: bytes) -> OnnxGraph:
    graph = OnnxGraph(name="", nodes=[], initializers={}, inputs=[], outputs=[])
    initializer_names = set()
    for field_no, _, value in _iter_fields(buf):
        if field_no == 1:
            graph.nodes.append(_parse_node(value))
        elif field_no == 2:
            graph.name = value.decode()
        elif field_no == 5:
            name, arr = _parse_tensor(value)
            graph.initializers[name] = arr
            initializer_names.add(name)
        elif field_no == 11:
            graph.inputs.append(_parse_value_info(value))
        elif field_no == 12:
            graph.outputs.append(_parse_value_info(value)[0])
    graph.inputs = [(n, d) for n, d in graph.inputs if n not in initializer_names]
    return graph


def parse_model(buf: bytes) -> OnnxModel:
    graph = None
    opset = 13
    ir_version = 8
    for field_no, wire, value in _iter_fields(buf):
        if field_no == 1 and wire == 0:
            ir_version = value
        elif field_no == 7:
            graph = _parse_graph(value)
        elif field_no == 8:
            for f2, _, v2 in _iter_fields(value):
                if f2 == 2:
                    opset = v2
    if graph is None:
        raise ManifestError("file holds no ONNX graph")
    return OnnxModel(graph=graph, opset=opset, ir_version=ir_version)


def read_model(path) -> OnnxModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())
