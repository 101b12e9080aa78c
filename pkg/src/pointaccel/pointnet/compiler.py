"""Translation of a network graph into an accelerator program

Every shared MLP, fully connected layer and transform application becomes
one instruction. A max-pooling is fused with the layer producing its input,
and a concatenation is only a memory layout: both halves are written with
the stride of the concatenated rows, the global feature being broadcast to
every point.

Results go through the on-chip input buffer when the next instruction is
their only consumer, to external memory otherwise. The output of a
transform sub-network goes to the weight buffer.
"""

import logging

from ..accel.program import (
    INPUT_BUFFER,
    ExternalMemory,
    Instruction,
    OpKind,
    Program,
    TensorDesc,
    WeightBuffer,
)
from ..accel.store import WeightStore, load_weights
from ..tilemm import OutputOrientation
from .graph import POINTS, LayerKind

__all__ = ["compile_network", "transform_id"]

log = logging.getLogger(__name__)


def transform_id(name):
    """Identifier of the dynamic weight holding the output of a layer

    >>> transform_id("tnet1.fc2")
    'tnet1.transform'
    """
    return f"{name.partition('.')[0]}.transform"


class _Memory:
    """Bump allocator of the external memory"""

    def __init__(self):
        self.size = 0

    def alloc(self, rows, cols):
        offset = self.size
        self.size += rows * cols
        return ExternalMemory(offset)


def compile_network(graph, qweights, store=None):
    """Compile a quantized network

    Args:
        graph (NetworkGraph):
        qweights (QuantizedWeightSet):
        store (WeightStore): where to load the weights, a new store if omitted
    Return:
        Program: validated
    Raise:
        ShapeError: if the weights do not match the graph
    """

    qweights.check(graph)

    if store is None:
        store = WeightStore()

    n = graph.n_points
    mem = _Memory()

    # Fusion of the max-poolings into their producers
    pooled = {}
    for layer in graph:
        if layer.kind is LayerKind.MAXPOOL:
            pooled[layer.inputs[0]] = layer.name

    order = [
        layer
        for layer in graph
        if layer.kind not in (LayerKind.MAXPOOL, LayerKind.CONCAT)
    ]

    # Where each value is read from, by name
    locations = {POINTS: mem.alloc(n, graph.in_dim)}
    input_desc = TensorDesc(
        POINTS, locations[POINTS], n, graph.in_dim, qweights.input_fmt
    )

    # Fixed destinations: concatenation halves
    destinations = {}
    for layer in graph:
        if layer.kind is LayerKind.CONCAT:
            region = mem.alloc(n, layer.out_dim)
            features, glob = layer.inputs
            feat_dim = graph[features].out_dim
            destinations[features] = ExternalMemory(region.offset, layer.out_dim)
            destinations[glob] = ExternalMemory(
                region.offset + feat_dim, layer.out_dim, broadcast=n
            )
            locations[layer.name] = region
            locations[features] = destinations[features]

    transforms = graph.transform_outputs

    for layer in graph.weighted:
        entry = qweights[layer.name]
        load_weights(store, layer.name, entry.weights, entry.bias)

    instructions = []
    outputs = []

    for j, layer in enumerate(order):
        value = pooled.get(layer.name, layer.name)
        last = j == len(order) - 1
        rows = graph.rows(layer)

        if value in transforms:
            dst = WeightBuffer(transform_id(value))
        elif value in destinations:
            dst = destinations[value]
        elif last:
            dst = mem.alloc(rows, layer.out_dim)
            outputs.append(
                TensorDesc(
                    "output", dst, rows, layer.out_dim, qweights[layer.name].out_fmt
                )
            )
        else:
            readers = graph.consumers(value)
            if len(readers) == 1 and readers[0] is order[j + 1]:
                dst = INPUT_BUFFER
            else:
                dst = mem.alloc(1 if value in pooled.values() else rows, layer.out_dim)
                locations[value] = dst

        source = layer.inputs[0]
        if source in locations:
            src = locations[source]
        else:
            src = INPUT_BUFFER

        if layer.kind is LayerKind.TRANSFORM_APPLY:
            weight_id = transform_id(layer.inputs[1])
        else:
            weight_id = layer.name

        if layer.name in pooled:
            op, orientation = OpKind.MATMUL_MAXPOOL, OutputOrientation.COLUMN
        else:
            op, orientation = OpKind.MATMUL, OutputOrientation.ROW

        instructions.append(
            Instruction(
                op_kind=op,
                n_rows=rows,
                k_dim=layer.in_dim,
                c_dim=layer.out_dim,
                input_src=src,
                weight_id=weight_id,
                output_dst=dst,
                orientation=orientation,
                activation=layer.activation,
                requant_shift=qweights.shift(layer),
                in_fmt=qweights.in_fmt(layer),
                out_fmt=qweights[layer.name].out_fmt,
                name=layer.name,
            )
        )

    program = Program(instructions, store, input_desc, outputs, mem.size)
    program.validate()

    log.debug(
        f"{graph.kind.value} compiled to {len(program)} instructions, "
        f"{store.nbytes} bytes of weights, {mem.size} elements of memory"
    )

    return program
