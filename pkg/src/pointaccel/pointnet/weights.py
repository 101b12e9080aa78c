"""Trained parameters of a network, in float and quantized forms"""

import logging
from collections import namedtuple

import numpy as np

from ..errors import ShapeError
from ..fixq import (
    BnParams,
    FixedFormat,
    choose_format,
    default_format,
    fold_batchnorm,
    quantize,
    quantize_bias,
)
from ..tilemm import Activation
from .graph import POINTS, LayerKind
from .reference import forward_float

__all__ = [
    "LayerWeights",
    "WeightSet",
    "QuantizedLayer",
    "QuantizedWeightSet",
    "random_weights",
    "quantize_weights",
]

log = logging.getLogger(__name__)

LayerWeights = namedtuple("LayerWeights", "W b bn")
"""Float parameters of a layer: K×C matrix, C bias and optional BnParams"""

QuantizedLayer = namedtuple("QuantizedLayer", "weights bias out_fmt")
"""Quantized parameters of a layer

``weights`` is a QTensor and ``bias`` an int64 array pre-scaled to
``frac(in) + frac(weights)``, both ``None`` for layers without weights.
``out_fmt`` is the format of the activations produced by the layer.
"""


def _check_dims(graph, shapes):
    """Compare (matrix dims, bias length) pairs to the layers of a network"""
    for layer in graph.weighted:
        dims, size = shapes[layer.name]
        if tuple(dims) != (layer.in_dim, layer.out_dim) or size != layer.out_dim:
            raise ShapeError(
                f"'{layer.name}': weights {tuple(dims)} and bias {size}, "
                f"expected ({layer.in_dim}, {layer.out_dim})"
            )


class WeightSet(dict):
    """Float parameters of a network, by layer name"""

    def check(self, graph):
        """Verify that names and dimensions match a network

        Raise:
            ShapeError
        """

        missing = [layer.name for layer in graph.weighted if layer.name not in self]
        if missing:
            raise ShapeError(f"Missing weights for {', '.join(missing)}")

        _check_dims(
            graph, {name: (np.shape(W), len(b)) for name, (W, b, bn) in self.items()}
        )
        extra = set(self) - {layer.name for layer in graph.weighted}
        if extra:
            raise ShapeError(f"Unknown layers {', '.join(sorted(extra))}")

        for name, (W, b, bn) in self.items():
            if bn is not None and len(bn) != len(b):
                raise ShapeError(f"'{name}': normalization of size {len(bn)}")

    def folded(self):
        """Parameters with the batch normalizations absorbed

        Return:
            dict: (W, b) float arrays by layer name
        """
        out = {}
        for name, (W, b, bn) in self.items():
            if bn is None:
                out[name] = np.asarray(W, dtype=float), np.asarray(b, dtype=float)
            else:
                out[name] = fold_batchnorm(W, b, bn)
        return out


class QuantizedWeightSet:
    """Quantized parameters and activation formats of a network

    Args:
        bits (int): 8 or 16
        input_fmt (FixedFormat): format of the points
        layers (dict): QuantizedLayer by layer name, for every layer of the
            network
    """

    def __init__(self, bits, input_fmt, layers):
        self.bits = bits
        self.input_fmt = input_fmt
        self.layers = dict(layers)

    def __getitem__(self, name):
        return self.layers[name]

    def __contains__(self, name):
        return name in self.layers

    def __iter__(self):
        return iter(self.layers)

    def fmt(self, name):
        """Format of the activations produced by a layer (or of the points)"""
        if name == POINTS:
            return self.input_fmt
        return self.layers[name].out_fmt

    def in_fmt(self, layer):
        """Format of the main input of a layer"""
        return self.fmt(layer.inputs[0])

    def weight_fmt(self, layer):
        """Format of the weights a layer multiplies with

        The matrix of a transform application is the output of its
        sub-network.
        """
        if layer.kind is LayerKind.TRANSFORM_APPLY:
            return self.fmt(layer.inputs[1])
        return self.layers[layer.name].weights.fmt

    def shift(self, layer):
        """Requantization shift of a layer"""
        return (
            self.in_fmt(layer).frac_bits
            + self.weight_fmt(layer).frac_bits
            - self.layers[layer.name].out_fmt.frac_bits
        )

    def check(self, graph):
        """Verify that names, dimensions and formats match a network

        Raise:
            ShapeError
        """
        missing = [layer.name for layer in graph if layer.name not in self.layers]
        if missing:
            raise ShapeError(f"Missing layers {', '.join(missing)}")

        shapes = {}
        for layer in graph.weighted:
            entry = self.layers[layer.name]
            if entry.weights is None:
                raise ShapeError(f"'{layer.name}': no weights")
            shapes[layer.name] = entry.weights.dims, len(entry.bias)
        _check_dims(graph, shapes)

        for name, entry in self.layers.items():
            if entry.out_fmt.total_bits != self.bits:
                raise ShapeError(
                    f"'{name}': {entry.out_fmt} in a {self.bits}-bit network"
                )

        for layer in graph:
            if layer.has_weights or layer.kind is LayerKind.TRANSFORM_APPLY:
                if self.shift(layer) < 0:
                    raise ShapeError(f"'{layer.name}': negative requantization shift")


def random_weights(graph, rng=None, bn=False):
    """He-initialized random parameters, for tests and benchmarks

    The last layer of each transform sub-network is scaled down so that the
    transforms stay close to the identity.

    Args:
        graph (NetworkGraph):
        rng (numpy.random.Generator):
        bn (bool): if True, every hidden layer gets a random normalization
    Return:
        WeightSet
    """

    if rng is None:
        rng = np.random.default_rng()

    transforms = graph.transform_outputs

    weights = WeightSet()
    for layer in graph.weighted:
        W = rng.normal(0, np.sqrt(2 / layer.in_dim), (layer.in_dim, layer.out_dim))
        b = rng.normal(0, 0.05, layer.out_dim)
        if layer.name in transforms:
            W *= 0.01
            b *= 0.01

        norm = None
        if bn and layer.activation is not Activation.NONE:
            c = layer.out_dim
            norm = BnParams(
                gamma=rng.uniform(0.5, 1.5, c),
                beta=rng.normal(0, 0.1, c),
                running_mean=rng.normal(0, 0.1, c),
                running_var=rng.uniform(0.5, 1.5, c),
            )
        weights[layer.name] = LayerWeights(W, b, norm)

    return weights


def _activation_formats(graph, folded, bits, input_fmt, acts, limits):
    """One pass of format selection over the layers, in execution order"""

    fmts = {POINTS: input_fmt}
    wfmts = {}
    transforms = graph.transform_outputs

    for layer in graph:
        name = layer.name
        fin = fmts[layer.inputs[0]]

        if layer.kind in (LayerKind.MAXPOOL, LayerKind.CONCAT):
            fmts[name] = fin
            continue

        if layer.has_weights:
            wfmts[name] = choose_format(folded[name][0], bits)
            wfrac = wfmts[name].frac_bits
        else:
            wfrac = fmts[layer.inputs[1]].frac_bits

        if acts is None:
            frac = default_format(bits).frac_bits
        else:
            values = acts[name]
            if name in transforms:
                m = int(round(layer.out_dim**0.5))
                values = np.concatenate(
                    [values.ravel(), (values.reshape(m, m) + np.eye(m)).ravel()]
                )
            frac = choose_format(values, bits).frac_bits

        frac = min(frac, fin.frac_bits + wfrac, limits.get(name, bits - 1))
        if name in transforms:
            # The identity must be representable
            frac = min(frac, bits - 2)

        fmts[name] = FixedFormat(bits, frac)

    return fmts, wfmts


def quantize_weights(graph, weights, bits, calib_points=None):
    """Quantize the parameters of a network

    Normalizations are folded, weight formats follow the clipping rule of
    :py:func:`~pointaccel.fixq.choose_format`. Activation formats are chosen
    by running the float network on calibration points, or are the
    configured defaults. Output formats never have more fractional bits
    than the product of their operands, so every shift is non-negative.

    Args:
        graph (NetworkGraph):
        weights (WeightSet):
        bits (int): 8 or 16
        calib_points (numpy.ndarray): n×3 calibration frame
    Return:
        QuantizedWeightSet
    """

    weights.check(graph)
    folded = weights.folded()

    if calib_points is None:
        acts = None
        input_fmt = default_format(bits)
    else:
        calib_points = np.asarray(calib_points, dtype=float)
        acts = forward_float(graph, weights, calib_points)
        input_fmt = choose_format(calib_points, bits)

    # Both halves of a concatenation have to share their format
    limits = {}
    concat = [layer for layer in graph if layer.kind is LayerKind.CONCAT]
    while True:
        fmts, wfmts = _activation_formats(graph, folded, bits, input_fmt, acts, limits)
        if not concat:
            break
        features, pool = concat[0].inputs
        producers = (features, graph[pool].inputs[0])
        fracs = {fmts[p].frac_bits for p in producers}
        if len(fracs) == 1:
            break
        for p in producers:
            limits[p] = min(fracs)

    layers = {}
    for layer in graph:
        name = layer.name
        if layer.has_weights:
            W, b = folded[name]
            qw = quantize(W, wfmts[name])
            if qw.saturated:
                log.debug(f"'{name}': {qw.saturated} weights saturated in {qw.fmt}")
            bias = quantize_bias(b, fmts[layer.inputs[0]].frac_bits + qw.fmt.frac_bits)
            layers[name] = QuantizedLayer(qw, bias, fmts[name])
        else:
            layers[name] = QuantizedLayer(None, None, fmts[name])
        log.debug(f"'{name}' -> {fmts[name]}")

    return QuantizedWeightSet(bits, input_fmt, layers)
