import numpy as np
from pytest import raises, mark

from pointaccel.errors import ShapeError
from pointaccel.fixq import FixedFormat
from pointaccel.pointnet import (
    LayerKind,
    build_network,
    quantize_weights,
    random_weights,
)
from pointaccel.pointnet.weights import LayerWeights, WeightSet


def test_random_weights(rng, small_widths):

    graph = build_network("cls", 16, 5, widths=small_widths)
    weights = random_weights(graph, rng, bn=True)

    weights.check(graph)
    assert set(weights) == {layer.name for layer in graph.weighted}
    assert weights["mlp0"].W.shape == (3, 8)
    assert weights["mlp0"].bn is not None
    # no normalization on score and transform layers
    assert weights["fc2"].bn is None
    assert weights["tnet1.fc2"].bn is None
    assert np.abs(weights["tnet1.fc2"].W).max() < np.abs(weights["tnet1.fc1"].W).max()


def test_check(rng, small_widths):

    graph = build_network("vanilla-cls", 16, 5, widths=small_widths)
    weights = random_weights(graph, rng)

    broken = WeightSet(weights)
    del broken["fc1"]
    with raises(ShapeError):
        broken.check(graph)

    broken = WeightSet(weights)
    W, b, bn = broken["mlp1"]
    broken["mlp1"] = LayerWeights(W[:, :4], b[:4], bn)
    with raises(ShapeError):
        broken.check(graph)

    broken = WeightSet(weights)
    broken["extra"] = weights["fc1"]
    with raises(ShapeError):
        broken.check(graph)

    # the number of classes follows the graph
    with raises(ShapeError):
        weights.check(build_network("vanilla-cls", 16, 7, widths=small_widths))


def test_folded(rng, small_widths):

    graph = build_network("vanilla-cls", 16, 5, widths=small_widths)
    weights = random_weights(graph, rng, bn=True)
    folded = weights.folded()

    x = rng.normal(size=(4, 3))
    W, b, bn = weights["mlp0"]
    Wf, bf = folded["mlp0"]
    assert np.allclose(x @ Wf + bf, bn(x @ W + b))

    W, b, bn = weights["fc2"]
    assert np.array_equal(folded["fc2"][0], W)


@mark.parametrize("bits", [8, 16])
@mark.parametrize("kind", ["vanilla-cls", "cls", "seg"])
def test_quantize_weights(rng, small_widths, kind, bits):

    graph = build_network(kind, 24, 5, 6, widths=small_widths)
    weights = random_weights(graph, rng, bn=True)
    q = quantize_weights(graph, weights, bits, rng.uniform(-1, 1, (24, 3)))

    q.check(graph)
    assert q.bits == bits
    assert q.input_fmt.total_bits == bits

    for layer in graph:
        if layer.has_weights or layer.kind is LayerKind.TRANSFORM_APPLY:
            assert q.shift(layer) >= 0
        if layer.has_weights:
            entry = q[layer.name]
            assert entry.weights.dims == (layer.in_dim, layer.out_dim)
            assert entry.bias.dtype == np.int64

    # the identity added to a transform stays representable
    for name in graph.transform_outputs:
        assert q.fmt(name).frac_bits <= bits - 2

    # maxpool and concatenation keep the format of their input
    pool = graph["pool"]
    assert q.fmt("pool") == q.fmt(pool.inputs[0])

    if kind == "seg":
        features, glob = graph["concat"].inputs
        assert q.fmt(features) == q.fmt(glob) == q.fmt("concat")


def test_default_formats(rng, small_widths):

    graph = build_network("vanilla-cls", 8, 5, widths=small_widths)
    q = quantize_weights(graph, random_weights(graph, rng), 16)

    assert q.input_fmt == FixedFormat(16, 8)
    for layer in graph:
        assert q.fmt(layer.name).frac_bits <= 8


def test_quantize_mismatch(rng, small_widths):

    graph = build_network("cls", 8, 5, widths=small_widths)
    weights = random_weights(graph, rng)

    with raises(ShapeError):
        quantize_weights(build_network("seg", 8, widths=small_widths), weights, 8)

    q = quantize_weights(graph, weights, 8)
    with raises(ShapeError):
        q.check(build_network("cls", 8, 7, widths=small_widths))
