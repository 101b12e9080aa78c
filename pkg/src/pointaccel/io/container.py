"""Weight container (PNQW)

Binary format, all fields little-endian::

    header   "PNQW"  version (u16)  entry count (u32)
    entry    name length (u16)  name (UTF-8)  dtype (u8)  frac_bits (i8)
             rank (u8)  rank × dim (u32)  row-major payload

dtype is 0 for int8, 1 for int16, 2 for float32, 3 for int32 and 4 for
int64. frac_bits is ignored for float32.

Float networks are stored as ``<layer>.W`` and ``<layer>.b`` matrices, with
optional ``<layer>.bn.gamma``, ``.bn.beta``, ``.bn.mean``, ``.bn.var`` and
``.bn.eps`` normalization vectors. Quantized networks additionally carry a
one-element ``<layer>.output`` marker for every layer, and an ``input``
marker, whose frac_bits give the activation formats.
"""

import logging
import struct
from collections import namedtuple

import numpy as np

from ..errors import ContainerError, FormatError, ShapeError
from ..fixq import BnParams, FixedFormat, QTensor
from ..pointnet.weights import (
    LayerWeights,
    QuantizedLayer,
    QuantizedWeightSet,
    WeightSet,
)

__all__ = [
    "Entry",
    "load",
    "loads",
    "dump",
    "dumps",
    "pack_weights",
    "unpack_weights",
]

log = logging.getLogger(__name__)

MAGIC = b"PNQW"
VERSION = 1

_HEADER = struct.Struct("<4sHI")

DTYPES = {
    0: np.dtype("<i1"),
    1: np.dtype("<i2"),
    2: np.dtype("<f4"),
    3: np.dtype("<i4"),
    4: np.dtype("<i8"),
}
_CODES = {dtype.str: code for code, dtype in DTYPES.items()}

Entry = namedtuple("Entry", "array frac_bits")
"""Tensor of a container, with its number of fractional bits"""

INPUT = "input"


def _dtype_code(array):
    if array.dtype.kind == "f":
        return 2
    try:
        return _CODES[array.dtype.newbyteorder("<").str]
    except KeyError:
        raise ContainerError(f"Unsupported dtype {array.dtype}") from None


def dumps(entries):
    """Serialize tensors

    Args:
        entries (dict): Entry by name, in the order they are written
    Return:
        bytes
    """

    out = [_HEADER.pack(MAGIC, VERSION, len(entries))]
    for name, (array, frac) in entries.items():
        array = np.asarray(array)
        code = _dtype_code(array)
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<BbB", code, frac if code != 2 else 0, array.ndim))
        out.append(struct.pack(f"<{array.ndim}I", *array.shape))
        out.append(np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes())

    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def read(self, size):
        if self.pos + size > len(self.data):
            raise ContainerError("Truncated container")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt):
        st = struct.Struct(fmt)
        return st.unpack(self.read(st.size))


def loads(data):
    """Deserialize tensors

    Args:
        data (bytes):
    Return:
        dict: Entry by name
    Raise:
        ContainerError
    """

    reader = _Reader(data)
    magic, version, count = reader.unpack(_HEADER.format)

    if magic != MAGIC:
        raise ContainerError(f"Not a weight container (magic {bytes(magic)!r})")
    if version != VERSION:
        raise ContainerError(f"Unsupported container version {version}")

    entries = {}
    for _ in range(count):
        (length,) = reader.unpack("<H")
        try:
            name = bytes(reader.read(length)).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ContainerError("Invalid entry name") from e

        code, frac, rank = reader.unpack("<BbB")
        if code not in DTYPES:
            raise ContainerError(f"'{name}': unknown dtype {code}")
        dims = reader.unpack(f"<{rank}I")

        dtype = DTYPES[code]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        array = np.frombuffer(reader.read(size), dtype=dtype).reshape(dims)

        if name in entries:
            raise ContainerError(f"Duplicate entry '{name}'")
        entries[name] = Entry(array.astype(dtype.newbyteorder("=")), frac)

    if reader.pos != len(reader.data):
        raise ContainerError(f"{len(reader.data) - reader.pos} trailing bytes")

    return entries


def dump(entries, path):
    """Write tensors to a file"""
    with open(path, "wb") as fp:
        fp.write(dumps(entries))


def load(path):
    """Read tensors from a file

    Raise:
        ContainerError: if the file is not a valid container
        OSError: if the file cannot be read
    """
    with open(path, "rb") as fp:
        return loads(fp.read())


_BN = ("gamma", "beta", "mean", "var")


def pack_weights(weights):
    """Container entries of a float or quantized weight set

    Args:
        weights (WeightSet or QuantizedWeightSet):
    Return:
        dict: Entry by name
    """

    entries = {}

    if isinstance(weights, WeightSet):
        for name, (W, b, bn) in weights.items():
            entries[f"{name}.W"] = Entry(np.asarray(W, dtype=np.float32), 0)
            entries[f"{name}.b"] = Entry(np.asarray(b, dtype=np.float32), 0)
            if bn is not None:
                values = (bn.gamma, bn.beta, bn.running_mean, bn.running_var)
                for key, value in zip(_BN, values):
                    entries[f"{name}.bn.{key}"] = Entry(value.astype(np.float32), 0)
                entries[f"{name}.bn.eps"] = Entry(
                    np.array([bn.epsilon], dtype=np.float32), 0
                )
        return entries

    def marker(fmt):
        return Entry(np.zeros(1, dtype=fmt.dtype), fmt.frac_bits)

    entries[INPUT] = marker(weights.input_fmt)
    for name in weights:
        layer = weights[name]
        if layer.weights is not None:
            W = layer.weights
            entries[f"{name}.W"] = Entry(W.codes, W.fmt.frac_bits)
            bias = np.asarray(layer.bias, dtype=np.int64)
            if np.all(np.abs(bias) < 2**31):
                bias = bias.astype(np.int32)
            entries[f"{name}.b"] = Entry(bias, 0)
        entries[f"{name}.output"] = marker(layer.out_fmt)

    return entries


def _bits(entry):
    return entry.array.dtype.itemsize * 8


def unpack_weights(entries):
    """Weight set stored in container entries

    Args:
        entries (dict): Entry by name
    Return:
        WeightSet or QuantizedWeightSet: quantized if the entries carry an
        ``input`` marker
    Raise:
        ContainerError: on missing or inconsistent entries
    """

    def get(key):
        try:
            return entries[key]
        except KeyError:
            raise ContainerError(f"Missing entry '{key}'") from None

    try:
        if INPUT not in entries:
            weights = WeightSet()
            for key in entries:
                if not key.endswith(".W"):
                    continue
                name = key[:-2]
                bn = None
                if f"{name}.bn.gamma" in entries:
                    values = [get(f"{name}.bn.{k}").array.astype(float) for k in _BN]
                    eps = float(get(f"{name}.bn.eps").array[0])
                    bn = BnParams(*values, epsilon=eps)
                W = get(key).array.astype(float)
                b = get(f"{name}.b").array.astype(float)
                weights[name] = LayerWeights(W, b, bn)
            return weights

        inp = get(INPUT)
        bits = _bits(inp)
        layers = {}
        for key in entries:
            if not key.endswith(".output"):
                continue
            name = key[: -len(".output")]
            out = entries[key]
            if _bits(out) != bits:
                raise ContainerError(
                    f"'{name}': {_bits(out)}-bit layer in a {bits}-bit network"
                )
            out_fmt = FixedFormat(bits, out.frac_bits)
            if f"{name}.W" in entries:
                W = get(f"{name}.W")
                qw = QTensor(W.array, FixedFormat(_bits(W), W.frac_bits))
                bias = get(f"{name}.b").array.astype(np.int64)
                layers[name] = QuantizedLayer(qw, bias, out_fmt)
            else:
                layers[name] = QuantizedLayer(None, None, out_fmt)
    except (FormatError, ShapeError) as e:
        raise ContainerError(str(e)) from e

    return QuantizedWeightSet(bits, FixedFormat(bits, inp.frac_bits), layers)
