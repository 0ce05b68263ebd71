"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic        4 bytes   b"TDCK"
    version      u32       1
    struct_len   u32       length of the structure JSON
    structure    bytes     UTF-8 JSON of UNetStructure fields
    n_layers     u32
    layer table  n_layers entries of
                   name_len u16, name UTF-8,
                   d, s, s_hat, stride, pad   u32 each,
                   activation u8 (0 relu, 1 linear), distortable u8
    payload      for each layer: kernel (d*d*s*s_hat) then bias (s_hat),
                 float64 little-endian, kernel in C order

Identical parameters give identical bytes.
"""

import json
import struct
from dataclasses import asdict

import numpy as np

from ..errors import ParseError
from .unet import ConvSpec, Layer, NetworkParams, UNetStructure

MAGIC = b"TDCK"
VERSION = 1
_ACT = {"relu": 0, "linear": 1}


def dumps(params):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    st = json.dumps(asdict(params.structure), sort_keys=True).encode()
    parts += [struct.pack("<I", len(st)), st, struct.pack("<I", len(params.layers))]
    for layer in params.layers:
        name = layer.name.encode()
        s = layer.spec
        parts += [struct.pack("<H", len(name)), name,
                  struct.pack("<5I2B", s.d, s.s, s.s_hat, s.stride, s.pad,
                              _ACT[s.activation], int(layer.distortable))]
    for layer in params.layers:
        parts.append(np.ascontiguousarray(layer.kernel, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data):
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise ParseError(f"truncated checkpoint reading {what}: need {n} bytes, "
                             f"{len(data) - pos} left", pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise ParseError("not a checkpoint (bad magic)", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    (n,) = struct.unpack("<I", take(4, "structure length"))
    try:
        structure = UNetStructure(**json.loads(take(n, "structure").decode()))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"bad structure record: {exc}", 12) from exc
    (n_layers,) = struct.unpack("<I", take(4, "layer count"))
    table = []
    for _ in range(n_layers):
        (k,) = struct.unpack("<H", take(2, "layer name length"))
        name = take(k, "layer name").decode()
        d, s, t, stride, pad, act, dist = struct.unpack("<5I2B", take(22, "layer record"))
        activation = {v: a for a, v in _ACT.items()}.get(act)
        if activation is None:
            raise ParseError(f"unknown activation code {act}", pos - 2)
        table.append((name, ConvSpec(d, s, t, stride, pad, activation), bool(dist)))
    layers = []
    for name, spec, dist in table:
        ksize = int(np.prod(spec.kernel_shape))
        kernel = np.frombuffer(take(8 * ksize, f"{name} kernel"), dtype="<f8")
        bias = np.frombuffer(take(8 * spec.s_hat, f"{name} bias"), dtype="<f8")
        layers.append(Layer(name, spec, kernel.reshape(spec.kernel_shape).astype(np.float64),
                            bias.astype(np.float64), dist))
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes after payload", pos)
    return NetworkParams(structure, layers)


def save(params, path):
    from ..imageio import atomic_write
    atomic_write(path, dumps(params))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
