import struct

import numpy as np
from pytest import fixture, mark, raises

from pointaccel.errors import ContainerError
from pointaccel.io.container import (
    Entry,
    dump,
    dumps,
    load,
    loads,
    pack_weights,
    unpack_weights,
)
from pointaccel.pointnet import (
    LayerWeights,
    QuantizedWeightSet,
    WeightSet,
    build_network,
    quantize_weights,
    random_weights,
)


@fixture
def entries():
    return {
        "a": Entry(np.array([[1, -2], [3, 127]], dtype=np.int8), 5),
        "b": Entry(np.array([1000, -32768], dtype=np.int16), 12),
        "c": Entry(np.array([0.5, -1.25], dtype=np.float32), 0),
        "d": Entry(np.array([2**31 - 1], dtype=np.int32), 0),
        "e": Entry(np.array([2**40], dtype=np.int64), 0),
    }


def test_layout():

    data = dumps({"w": Entry(np.array([[1, -1]], dtype=np.int8), 3)})

    assert data[:4] == b"PNQW"
    assert struct.unpack("<HI", data[4:10]) == (1, 1)
    assert struct.unpack("<H", data[10:12]) == (1,)
    assert data[12:13] == b"w"
    # int8, Q.3, rank 2
    assert data[13:16] == bytes([0, 3, 2])
    assert struct.unpack("<2I", data[16:24]) == (1, 2)
    assert data[24:] == b"\x01\xff"


def test_round_trip(entries, tmp_path):

    data = dumps(entries)
    out = loads(data)

    assert list(out) == list(entries)
    for name, (array, frac) in entries.items():
        assert out[name].array.dtype == array.dtype
        assert np.array_equal(out[name].array, array)
        assert out[name].frac_bits == frac

    # byte-identical
    assert dumps(out) == data

    dump(entries, tmp_path / "w.pnqw")
    assert dumps(load(tmp_path / "w.pnqw")) == data


def test_errors(entries):

    data = dumps(entries)

    with raises(ContainerError, match="magic"):
        loads(b"PNQX" + data[4:])
    with raises(ContainerError, match="version"):
        loads(data[:4] + struct.pack("<H", 2) + data[6:])
    with raises(ContainerError, match="Truncated"):
        loads(data[:-1])
    with raises(ContainerError, match="Truncated"):
        loads(data[:5])
    with raises(ContainerError, match="trailing"):
        loads(data + b"\x00")

    # dtype of the first entry
    with raises(ContainerError, match="dtype"):
        loads(data[:13] + b"\x09" + data[14:])

    twice = dumps({"x": Entry(np.zeros(1, dtype=np.int8), 0)})
    body = twice[10:]
    with raises(ContainerError, match="Duplicate"):
        loads(b"PNQW" + struct.pack("<HI", 1, 2) + body + body)

    with raises(ContainerError):
        dumps({"x": Entry(np.zeros(1, dtype=np.uint16), 0)})


def test_float_weights(rng, small_widths):

    graph = build_network("cls", 16, 5, widths=small_widths)
    weights = random_weights(graph, rng, bn=True)

    entries = pack_weights(weights)
    assert entries["mlp0.W"].array.dtype == np.float32
    assert "mlp0.bn.var" in entries
    assert "fc2.bn.gamma" not in entries

    out = unpack_weights(loads(dumps(entries)))
    assert isinstance(out, WeightSet)
    out.check(graph)

    for name, (W, b, bn) in weights.items():
        assert np.array_equal(out[name].W, W.astype(np.float32))
        assert np.array_equal(out[name].b, b.astype(np.float32))
        if bn is None:
            assert out[name].bn is None
        else:
            assert np.array_equal(out[name].bn.gamma, bn.gamma.astype(np.float32))
            assert out[name].bn.epsilon == np.float32(bn.epsilon)


@mark.parametrize("bits", [8, 16])
def test_quantized_weights(rng, small_widths, bits):

    graph = build_network("seg", 16, m=4, widths=small_widths)
    q = quantize_weights(
        graph, random_weights(graph, rng, bn=True), bits, rng.uniform(-1, 1, (16, 3))
    )

    entries = pack_weights(q)
    assert entries["input"].frac_bits == q.input_fmt.frac_bits
    assert entries["mlp0.W"].array.dtype == np.dtype(f"int{bits}")
    assert "pool.output" in entries
    assert "pool.W" not in entries

    data = dumps(entries)
    out = unpack_weights(loads(data))
    assert isinstance(out, QuantizedWeightSet)
    out.check(graph)

    assert out.bits == bits
    assert out.input_fmt == q.input_fmt
    for layer in graph:
        assert out.fmt(layer.name) == q.fmt(layer.name)
        if layer.has_weights:
            assert out[layer.name].weights == q[layer.name].weights
            assert np.array_equal(out[layer.name].bias, q[layer.name].bias)

    # byte-identical once written back
    assert dumps(pack_weights(out)) == data


def test_unpack_errors(rng, small_widths):

    graph = build_network("vanilla-cls", 8, 5, widths=small_widths)
    entries = pack_weights(quantize_weights(graph, random_weights(graph, rng), 8))

    broken = dict(entries)
    del broken["mlp1.b"]
    with raises(ContainerError, match="mlp1.b"):
        unpack_weights(broken)

    broken = dict(entries)
    broken["mlp1.output"] = Entry(np.zeros(1, dtype=np.int16), 4)
    with raises(ContainerError, match="16-bit"):
        unpack_weights(broken)

    floats = {
        "l.W": Entry(np.zeros((3, 2), dtype=np.float32), 0),
        "l.b": Entry(np.zeros(2, dtype=np.float32), 0),
        "l.bn.gamma": Entry(np.ones(2, dtype=np.float32), 0),
    }
    with raises(ContainerError, match="l.bn.beta"):
        unpack_weights(floats)

    # inconsistent normalization vectors
    floats.update(
        {
            f"l.bn.{k}": Entry(np.ones(n, dtype=np.float32), 0)
            for k, n in [("beta", 2), ("mean", 2), ("var", 3), ("eps", 1)]
        }
    )
    with raises(ContainerError):
        unpack_weights(floats)


def test_zero_weights():
    """Null weights of a full-size network survive the container"""

    graph = build_network("vanilla-cls", 4, 3)
    weights = WeightSet(
        {
            layer.name: LayerWeights(
                np.zeros((layer.in_dim, layer.out_dim)), np.zeros(layer.out_dim), None
            )
            for layer in graph.weighted
        }
    )
    out = unpack_weights(loads(dumps(pack_weights(weights))))
    assert set(out) == set(weights)
    assert all(not np.any(w.W) for w in out.values())
