"""Layer-by-layer interpreters of a network graph

:py:func:`run_reference_float` is the double-precision model of the
network. :py:func:`run_reference_quantized` computes the same graph on
integer codes with the untiled matrix product, and is bit-identical to a
compiled program running on the simulated accelerator.
"""

import logging

import numpy as np

from ..accel.sim import transform_weight
from ..errors import ShapeError
from ..fixq import QTensor, quantize
from ..tilemm import Activation, matmul_naive, max_columns
from .graph import POINTS, LayerKind

__all__ = [
    "apply_tnet",
    "forward_float",
    "forward_quantized",
    "run_reference_float",
    "run_reference_quantized",
]

log = logging.getLogger(__name__)


def apply_tnet(X, T):
    """Apply a transform sub-network output to points or features

    Args:
        X (numpy.ndarray): n×M
        T (numpy.ndarray): M×M (or 1×M²) output of the sub-network
    Return:
        numpy.ndarray: ``X · (T + I)``

    >>> apply_tnet(np.array([[1.0, 2.0, 3.0]]), np.zeros((3, 3))).tolist()
    [[1.0, 2.0, 3.0]]
    """

    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)

    if X.ndim != 2:
        raise ShapeError(f"Matrix expected, got dims {X.shape}")

    m = X.shape[1]
    if T.size != m * m:
        raise ShapeError(f"Transform of {T.size} elements for {m} features")

    return X @ (T.reshape(m, m) + np.eye(m))


def _activation(x, act):
    if act is Activation.NONE:
        return x
    x = np.maximum(x, 0)
    if act is Activation.RELU6:
        x = np.minimum(x, 6)
    return x


def _check_points(graph, dims):
    if len(dims) != 2 or dims[1] != graph.in_dim:
        raise ShapeError(f"Points should be n×{graph.in_dim}, got {dims}")
    if dims[0] != graph.n_points:
        raise ShapeError(
            f"{dims[0]} points for a network built for {graph.n_points}"
        )


def forward_float(graph, weights, points):
    """Float forward pass keeping every intermediate result

    Args:
        graph (NetworkGraph):
        weights (WeightSet): normalizations are applied after the affine
            layers, not folded
        points (numpy.ndarray): n×3
    Return:
        dict: activations by layer name
    """

    points = np.asarray(points, dtype=float)
    _check_points(graph, points.shape)

    acts = {POINTS: points}
    for layer in graph:
        X = acts[layer.inputs[0]]

        if layer.has_weights:
            W, b, bn = weights[layer.name]
            y = X @ np.asarray(W, dtype=float) + np.asarray(b, dtype=float)
            if bn is not None:
                y = bn(y)
            y = _activation(y, layer.activation)
        elif layer.kind is LayerKind.MAXPOOL:
            y = X.max(axis=0, keepdims=True)
        elif layer.kind is LayerKind.TRANSFORM_APPLY:
            y = apply_tnet(X, acts[layer.inputs[1]])
        else:
            glob = acts[layer.inputs[1]]
            y = np.hstack([X, np.broadcast_to(glob, (len(X), glob.shape[1]))])

        acts[layer.name] = y

    return acts


def run_reference_float(graph, weights, points):
    """Double-precision inference

    Args:
        graph (NetworkGraph):
        weights (WeightSet):
        points (numpy.ndarray): n×3
    Return:
        numpy.ndarray: 1×k class scores, or n×m per-point scores for
        segmentation
    """
    return forward_float(graph, weights, points)[graph.output.name]


def forward_quantized(graph, qweights, points):
    """Integer forward pass keeping every intermediate result

    Args:
        graph (NetworkGraph):
        qweights (QuantizedWeightSet):
        points (QTensor or numpy.ndarray): n×3, quantized to the input
            format of ``qweights`` if given as real values
    Return:
        dict: QTensor activations by layer name
    """

    if not isinstance(points, QTensor):
        points = quantize(points, qweights.input_fmt)
    _check_points(graph, points.dims)

    acts = {POINTS: points}
    for layer in graph:
        X = acts[layer.inputs[0]]
        entry = qweights[layer.name]

        if layer.has_weights:
            y = matmul_naive(
                X,
                entry.weights,
                entry.bias,
                qweights.shift(layer),
                entry.out_fmt,
                layer.activation,
            )
        elif layer.kind is LayerKind.MAXPOOL:
            y = max_columns(X)
        elif layer.kind is LayerKind.TRANSFORM_APPLY:
            T, bias = transform_weight(acts[layer.inputs[1]])
            y = matmul_naive(X, T, bias, qweights.shift(layer), entry.out_fmt)
        else:
            glob = acts[layer.inputs[1]]
            if glob.fmt != X.fmt:
                raise ShapeError(
                    f"'{layer.name}': cannot concatenate {X.fmt} and {glob.fmt}"
                )
            codes = np.hstack(
                [X.codes, np.broadcast_to(glob.codes, (len(X), glob.dims[1]))]
            )
            y = QTensor(codes, X.fmt)

        acts[layer.name] = y

    return acts


def run_reference_quantized(graph, qweights, points):
    """Integer inference, bit-exact with the accelerator

    Return:
        QTensor: output of the last layer
    """
    return forward_quantized(graph, qweights, points)[graph.output.name]
