"""On-chip weight storage

Trained weights are pre-loaded into block RAM once; entries are immutable.
"""

import logging
from collections import namedtuple

import numpy as np

from ..config import config
from ..errors import CapacityError, ShapeError, WeightStoreError
from ..fixq import QTensor, accumulator_bits

__all__ = ["WeightEntry", "WeightStore", "load_weights"]

log = logging.getLogger(__name__)

WEIGHT_CAPACITY = 64 * 1024 * 1024
"""Default weight store capacity in bytes"""

WeightEntry = namedtuple("WeightEntry", "weights bias")
"""K×C weight matrix (QTensor) and its C pre-scaled biases (int64 array)"""


def entry_nbytes(weights, bias):
    """Storage size of a weight entry, biases being stored at accumulator width"""
    return weights.codes.size * weights.fmt.bytes + len(bias) * (
        accumulator_bits(weights.fmt) // 8
    )


class WeightStore:
    """Identifier-indexed weight matrices and biases

    Args:
        capacity_bytes (int): maximum storage; taken from the
            ``accel.weight_capacity_bytes`` configuration when omitted
    """

    def __init__(self, capacity_bytes=None):
        if capacity_bytes is None:
            capacity_bytes = config.get(
                "accel", "weight_capacity_bytes", fallback=WEIGHT_CAPACITY
            )
        self.capacity_bytes = capacity_bytes
        self._entries = {}

    def __contains__(self, weight_id):
        return weight_id in self._entries

    def __getitem__(self, weight_id):
        try:
            return self._entries[weight_id]
        except KeyError:
            raise WeightStoreError(f"Unbound weight '{weight_id}'") from None

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    @property
    def nbytes(self):
        return sum(entry_nbytes(*e) for e in self._entries.values())

    def load(self, weight_id, W, bias=None):
        """Bind a weight matrix and its biases to an identifier

        Args:
            weight_id (str):
            W (QTensor): K×C
            bias (array of int): C biases pre-scaled to ``frac(in) + frac(W)``,
                zeros if omitted
        Raise:
            WeightStoreError: if the identifier is already bound
            CapacityError: if the store would overflow
        """

        if weight_id in self._entries:
            raise WeightStoreError(f"Weight '{weight_id}' already loaded")

        if not isinstance(W, QTensor) or len(W.dims) != 2:
            raise ShapeError(f"Weight '{weight_id}' should be a matrix")

        if bias is None:
            bias = np.zeros(W.dims[1], dtype=np.int64)
        bias = np.asarray(bias, dtype=np.int64).ravel()

        if len(bias) != W.dims[1]:
            raise ShapeError(
                f"Weight '{weight_id}': {len(bias)} biases for {W.dims[1]} channels"
            )

        size = entry_nbytes(W, bias)
        if self.nbytes + size > self.capacity_bytes:
            raise CapacityError(
                f"Weight '{weight_id}' ({size} bytes) exceeds the store capacity "
                f"of {self.capacity_bytes} bytes"
            )

        bias.flags.writeable = False
        self._entries[weight_id] = WeightEntry(W, bias)
        log.debug(f"Weight '{weight_id}' {W.dims[0]}×{W.dims[1]} {W.fmt} loaded")


def load_weights(store, weight_id, W, bias=None):
    """Pre-load weights into a store, see :py:meth:`WeightStore.load`"""
    store.load(weight_id, W, bias)
