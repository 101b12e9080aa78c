"""PointNet networks and their compilation for the accelerator"""

from .compiler import compile_network
from .graph import (
    LayerKind,
    NetworkGraph,
    NetworkKind,
    PointNetWidths,
    build_network,
    count_ops,
    measured_performance,
)
from .reference import apply_tnet, run_reference_float, run_reference_quantized
from .weights import (
    LayerWeights,
    QuantizedWeightSet,
    WeightSet,
    quantize_weights,
    random_weights,
)

__all__ = [
    "LayerKind",
    "LayerWeights",
    "NetworkGraph",
    "NetworkKind",
    "PointNetWidths",
    "QuantizedWeightSet",
    "WeightSet",
    "apply_tnet",
    "build_network",
    "compile_network",
    "count_ops",
    "measured_performance",
    "quantize_weights",
    "random_weights",
    "run_reference_float",
    "run_reference_quantized",
]
