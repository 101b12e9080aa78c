"""PointNet topologies as layer graphs

Layers are listed in execution order, each one naming the layers it reads
(``"points"`` being the input cloud). Names are stable identifiers shared by
weight sets, weight containers and compiled programs::

    tnet1.mlp0 .. tnet1.mlp2, tnet1.pool, tnet1.fc0 .. tnet1.fc2, tnet1.apply
    mlp0, mlp1
    tnet2.mlp0 .. tnet2.fc2, tnet2.apply
    mlp2 .. mlp4, pool
    fc0 .. fc2              (classification)
    concat, seg0 .. seg3    (segmentation)

The vanilla network has no transform sub-network.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass
from enum import Enum

from ..config import config
from ..constants import MAX_POINTS, MEASUREMENTS
from ..errors import CapacityError, ShapeError, UnknownNetworkError
from ..tilemm import Activation

__all__ = [
    "NetworkKind",
    "LayerKind",
    "Layer",
    "PointNetWidths",
    "NetworkGraph",
    "OpCount",
    "build_network",
    "count_ops",
    "measured_performance",
]

log = logging.getLogger(__name__)

POINTS = "points"
"""Name of the input of a network"""


class NetworkKind(Enum):
    VANILLA_CLS = "vanilla-cls"
    CLS = "cls"
    SEG = "seg"

    @classmethod
    def parse(cls, name):
        """
        >>> NetworkKind.parse("seg")
        <NetworkKind.SEG: 'seg'>
        """
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise UnknownNetworkError(name)

    @property
    def has_transforms(self):
        return self is not NetworkKind.VANILLA_CLS


class LayerKind(Enum):
    SHARED_MLP = "shared_mlp"
    FC = "fc"
    MAXPOOL = "maxpool"
    TRANSFORM_APPLY = "transform_apply"
    CONCAT = "concat"


@dataclass(frozen=True)
class Layer:
    """Node of a network graph

    Args:
        name (str):
        kind (LayerKind):
        in_dim (int): features per row read
        out_dim (int): features per row produced
        activation (Activation):
        inputs (tuple of str): layers read, in order. A transform application
            reads the features then the transform sub-network output, a
            concatenation the per-point then the global features.
    """

    name: str
    kind: LayerKind
    in_dim: int
    out_dim: int
    activation: Activation = Activation.NONE
    inputs: tuple = ()

    @property
    def has_weights(self):
        return self.kind in (LayerKind.SHARED_MLP, LayerKind.FC)

    @property
    def per_point(self):
        """True if the layer produces one row per point"""
        return self.kind in (
            LayerKind.SHARED_MLP,
            LayerKind.TRANSFORM_APPLY,
            LayerKind.CONCAT,
        )


@dataclass(frozen=True)
class PointNetWidths:
    """Feature widths of the PointNet topology

    The defaults are the canonical dimensions. Smaller widths build reduced
    networks of the same shape.
    """

    tnet_mlp: tuple = (64, 128, 1024)
    tnet_fc: tuple = (512, 256)
    backbone: tuple = (64, 64)
    features: tuple = (64, 128, 1024)
    cls_fc: tuple = (512, 256)
    seg_mlp: tuple = (512, 256, 128)

    @property
    def feature_dim(self):
        """Width of the per-point features transformed by the second transform"""
        return self.backbone[-1]

    @property
    def global_dim(self):
        return self.features[-1]


@dataclass(frozen=True)
class NetworkGraph:
    """Ordered layers of a PointNet"""

    kind: NetworkKind
    n_points: int
    num_classes: int
    num_seg_classes: int
    widths: PointNetWidths
    layers: tuple

    in_dim = 3

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def __contains__(self, name):
        return any(layer.name == name for layer in self.layers)

    @property
    def output(self):
        """Last layer, producing the scores"""
        return self.layers[-1]

    @property
    def weighted(self):
        """Layers carrying a weight matrix"""
        return [layer for layer in self.layers if layer.has_weights]

    @property
    def transform_outputs(self):
        """Layers whose output is a transform matrix"""
        return {
            layer.inputs[1]
            for layer in self.layers
            if layer.kind is LayerKind.TRANSFORM_APPLY
        }

    @property
    def transforms(self):
        """Prefixes and dimensions of the transform sub-networks"""
        return [
            (layer.name.partition(".")[0], layer.out_dim)
            for layer in self.layers
            if layer.kind is LayerKind.TRANSFORM_APPLY
        ]

    def rows(self, layer):
        """Number of rows produced by a layer"""
        return self.n_points if layer.per_point else 1

    def consumers(self, name):
        """Layers reading the output of ``name``"""
        return [layer for layer in self.layers if name in layer.inputs]


class _Builder:
    def __init__(self):
        self.layers = []

    @property
    def last(self):
        return self.layers[-1]

    def add(self, name, kind, in_dim, out_dim, act=Activation.NONE, inputs=None):
        if inputs is None:
            inputs = (self.last.name,)
        self.layers.append(Layer(name, kind, in_dim, out_dim, act, tuple(inputs)))
        return self.last

    def mlp(
        self, names, in_dim, dims, source, kind=LayerKind.SHARED_MLP, last_act=True
    ):
        for i, (name, dim) in enumerate(zip(names, dims)):
            if last_act or i < len(dims) - 1:
                act = Activation.RELU
            else:
                act = Activation.NONE
            inputs = (source,) if i == 0 else None
            self.add(name, kind, in_dim, dim, act, inputs=inputs)
            in_dim = dim
        return self.last

    def pool(self, name):
        dim = self.last.out_dim
        return self.add(name, LayerKind.MAXPOOL, dim, dim)

    def transform(self, prefix, source, dim, widths):
        """Transform sub-network and its application to ``source``"""
        self.mlp(
            [f"{prefix}.mlp{i}" for i in range(len(widths.tnet_mlp))],
            dim,
            widths.tnet_mlp,
            source,
        )
        self.pool(f"{prefix}.pool")
        self.mlp(
            [f"{prefix}.fc{i}" for i in range(len(widths.tnet_fc) + 1)],
            widths.tnet_mlp[-1],
            widths.tnet_fc + (dim * dim,),
            f"{prefix}.pool",
            kind=LayerKind.FC,
            last_act=False,
        )
        return self.add(
            f"{prefix}.apply",
            LayerKind.TRANSFORM_APPLY,
            dim,
            dim,
            inputs=(source, self.last.name),
        )


def build_network(kind, n=MAX_POINTS, k=None, m=None, widths=None):
    """Build a PointNet layer graph

    Args:
        kind (NetworkKind or str): 'vanilla-cls', 'cls' or 'seg'
        n (int): number of points per frame
        k (int): number of classes, from ``pointnet.num_classes`` if omitted
        m (int): number of part classes, from ``pointnet.num_seg_classes``
            if omitted
        widths (PointNetWidths): feature widths, canonical if omitted
    Return:
        NetworkGraph
    Raise:
        CapacityError: if ``n`` is not in ``[1, 4096]``

    >>> graph = build_network("vanilla-cls", 1024)
    >>> [layer.name for layer in graph]
    ['mlp0', 'mlp1', 'mlp2', 'mlp3', 'mlp4', 'pool', 'fc0', 'fc1', 'fc2']
    """

    kind = NetworkKind.parse(kind)

    if not 1 <= n <= MAX_POINTS:
        raise CapacityError(f"{n} points, expected between 1 and {MAX_POINTS}")

    if k is None:
        k = config.get("pointnet", "num_classes", fallback=40)
    if m is None:
        m = config.get("pointnet", "num_seg_classes", fallback=50)
    if widths is None:
        widths = PointNetWidths()

    if min(k, m) < 1:
        raise ShapeError(f"Invalid number of classes {k} / {m}")

    b = _Builder()
    source = POINTS
    in_dim = NetworkGraph.in_dim

    if kind.has_transforms:
        source = b.transform("tnet1", source, in_dim, widths).name

    b.mlp(["mlp0", "mlp1"], in_dim, widths.backbone, source)
    source = b.last.name

    if kind.has_transforms:
        source = b.transform("tnet2", source, widths.feature_dim, widths).name
    features = source

    b.mlp(
        [f"mlp{i + 2}" for i in range(len(widths.features))],
        widths.feature_dim,
        widths.features,
        source,
    )
    b.pool("pool")

    if kind is NetworkKind.SEG:
        concat_dim = widths.feature_dim + widths.global_dim
        b.add(
            "concat",
            LayerKind.CONCAT,
            concat_dim,
            concat_dim,
            inputs=(features, "pool"),
        )
        b.mlp(
            [f"seg{i}" for i in range(len(widths.seg_mlp) + 1)],
            concat_dim,
            widths.seg_mlp + (m,),
            "concat",
            last_act=False,
        )
    else:
        b.mlp(
            [f"fc{i}" for i in range(len(widths.cls_fc) + 1)],
            widths.global_dim,
            widths.cls_fc + (k,),
            "pool",
            kind=LayerKind.FC,
            last_act=False,
        )

    graph = NetworkGraph(kind, n, k, m, widths, tuple(b.layers))
    log.debug(f"{kind.value} network of {len(graph)} layers for {n} points")

    return graph


OpCount = namedtuple("OpCount", "macs ops layers")
"""Operation count of a network, ``layers`` giving the MACs of each layer"""


def count_ops(graph):
    """Count the multiply-accumulates of a network

    Pooling, activations and concatenations are not counted.

    Args:
        graph (NetworkGraph):
    Return:
        OpCount

    >>> count_ops(build_network("vanilla-cls", 4096, 40)).macs
    605431808
    """

    layers = {}
    for layer in graph:
        if layer.kind in (LayerKind.MAXPOOL, LayerKind.CONCAT):
            continue
        layers[layer.name] = graph.rows(layer) * layer.in_dim * layer.out_dim

    macs = sum(layers.values())
    return OpCount(macs, 2 * macs, layers)


def measured_performance(kind, bits):
    """Throughput and processing time measured on the FPGA for 4096 points

    Args:
        kind (NetworkKind or str):
        bits (int): 8 or 16
    Return:
        Measurement: or None if no measurement matches

    >>> row = measured_performance("cls", 8)
    >>> row.gops, round(row.fps, 1)
    (182.1, 50.5)
    """
    return MEASUREMENTS.get((NetworkKind.parse(kind).value, bits))
