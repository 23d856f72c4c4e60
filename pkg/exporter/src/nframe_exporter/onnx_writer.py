"""Minimal ONNX protobuf writer for the exported graph subset.

Writes fields in a fixed order (byte-stable output). Only float32/int64
tensors and the attribute kinds the exporter emits are supported.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

_FLOAT32, _INT64 = 1, 7


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


def _ld(field_no: int, payload: bytes) -> bytes:
    return _tag(field_no, 2) + _varint(len(payload)) + payload


def _uv(field_no: int, value: int) -> bytes:
    return _tag(field_no, 0) + _varint(value)


@dataclass
class Node:
    op_type: str
    inputs: list
    outputs: list
    name: str = ""
    attrs: dict = field(default_factory=dict)


@dataclass
class Graph:
    name: str
    nodes: list
    initializers: dict
    input_name: str
    input_dims: list  # None entries mean symbolic
    outputs: list


def _tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.float32:
        dtype = _FLOAT32
    elif arr.dtype == np.int64:
        dtype = _INT64
    else:
        raise ValueError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
    out = bytearray()
    for dim in arr.shape:
        out += _uv(1, dim)
    out += _uv(2, dtype)
    out += _ld(8, name.encode())
    out += _ld(9, arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return bytes(out)


def _attr(name: str, value) -> bytes:
    out = bytearray(_ld(1, name.encode()))
    if isinstance(value, float):
        out += _tag(2, 5) + struct.pack("<f", value)
        out += _uv(20, 1)
    elif isinstance(value, int):
        out += _uv(3, value)
        out += _uv(20, 2)
    elif isinstance(value, (list, tuple)):
        for v in value:
            out += _uv(8, int(v))
        out += _uv(20, 7)
    else:
        raise ValueError(f"unsupported attribute {name!r}: {value!r}")
    return bytes(out)


def _node(node: Node) -> bytes:
    out = bytearray()
    for name in node.inputs:
        out += _ld(1, name.encode())
    for name in node.outputs:
        out += _ld(2, name.encode())
    if node.name:
        out += _ld(3, node.name.encode())
    out += _ld(4, node.op_type.encode())
    for attr_name in sorted(node.attrs):
        out += _ld(5, _attr(attr_name, node.attrs[attr_name]))
    return bytes(out)


def _value_info(name: str, dims) -> bytes:
    shape = bytearray()
    for dim in dims:
        entry = _ld(2, b"N") if dim is None else _uv(1, int(dim))
        shape += _ld(1, entry)
    tensor_type = _uv(1, _FLOAT32) + _ld(2, bytes(shape))
    return _ld(1, name.encode()) + _ld(2, _ld(1, tensor_type))


def serialize(graph: Graph, opset: int = 13) -> bytes:
    body = bytearray()
    for node in graph.nodes:
        body += _ld(1, _node(node))
    body += _ld(2, graph.name.encode())
    for name in sorted(graph.initializers):
        body += _ld(5, _tensor(name, graph.initializers[name]))
    body += _ld(11, _value_info(graph.input_name, graph.input_dims))
    for name in graph.outputs:
        body += _ld(12, _value_info(name, []))
    out = bytearray()
    out += _uv(1, 8)  # ir_version
    out += _ld(2, b"nframe-exporter")
    out += _ld(7, bytes(body))
    out += _ld(8, _ld(1, b"") + _uv(2, opset))
    return bytes(out)


def write(path, graph: Graph, opset: int = 13) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(graph, opset))
