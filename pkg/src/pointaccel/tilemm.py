"""Block-partitioned integer matrix multiplication

The PE array computes ``A·W + bias`` for an n×K input and a K×C weight
matrix. The loop over points (rows of ``A``) is never unrolled: points are
streamed. The loop over the dot-product direction is unrolled by
``m_unroll`` (multipliers per PE) and the loop over output channels by
``n_unroll`` (number of PEs), both partially, so the weight matrix is
processed in ``m_unroll × n_unroll`` tiles. Ragged edges are zero-padded.

Partial sums stay in a wide first-stage buffer (see
:py:func:`~pointaccel.fixq.accumulator_bits`) and are narrowed exactly once
per output element, after which the activation is applied by the
comparator array. Max-pooling reuses the same comparators on the
column-oriented output.

>>> from pointaccel.fixq import FixedFormat
>>> fmt = FixedFormat(8, 0)
>>> A = QTensor([[2]], fmt)
>>> W = QTensor([[3]], fmt)
>>> out = matmul_tiled(
...     A, W, [0], TileConfig(), OutputOrientation.ROW, Activation.NONE, 0, fmt
... )
>>> out.codes.tolist()
[[6]]
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .constants import DEFAULT_TILE, OUTPUT_BLOCK_ROWS
from .errors import ProgramError, ShapeError, UnknownActivationError, FormatError
from .fixq import QTensor, _requantize, accumulator_bits, wrap

__all__ = [
    "TileConfig",
    "OutputOrientation",
    "Activation",
    "matmul_tiled",
    "matmul_maxpool",
    "matmul_naive",
    "apply_activation",
    "max_columns",
    "traversal",
]

log = logging.getLogger(__name__)

# Largest tile depth for which float64 partial products are exact with 16-bit
# operands (depth × 2**30 < 2**53)
_EXACT_DEPTH = 1 << 22


class OutputOrientation(Enum):
    """Order in which output blocks leave the PE array"""

    ROW = "row"
    COLUMN = "column"


class Activation(Enum):
    NONE = "none"
    RELU = "relu"
    RELU6 = "relu6"

    @classmethod
    def parse(cls, name):
        """
        >>> Activation.parse("ReLU6")
        <Activation.RELU6: 'relu6'>
        """
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise UnknownActivationError(name)


@dataclass(frozen=True)
class TileConfig:
    """Unroll factors of the PE array

    Args:
        m_unroll (int): multipliers per PE (dot-product direction)
        n_unroll (int): number of PEs (output channels per pass)
        block_rows (int): points per output block, i.e. depth of the
            second-stage output buffer
    """

    m_unroll: int = DEFAULT_TILE[0]
    n_unroll: int = DEFAULT_TILE[1]
    block_rows: int = OUTPUT_BLOCK_ROWS

    def __post_init__(self):
        if self.m_unroll < 1 or self.n_unroll < 1:
            raise FormatError(
                "Unroll factors should be positive, "
                f"got {self.m_unroll}×{self.n_unroll}"
            )
        if self.block_rows < 1:
            raise FormatError(f"Empty output blocks ({self.block_rows} rows)")

    @classmethod
    def parse(cls, text):
        """
        >>> TileConfig.parse("8,16")
        TileConfig(m_unroll=8, n_unroll=16, block_rows=64)
        """
        m, _, n = text.partition(",")
        return cls(int(m), int(n))

    def passes(self, k_dim, c_dim):
        """Number of tiles needed to cover a K×C weight matrix"""
        return -(-k_dim // self.m_unroll) * -(-c_dim // self.n_unroll)

    @property
    def macs_per_cycle(self):
        return self.m_unroll * self.n_unroll


def apply_activation(x, act, fmt):
    """Comparator-array activation on integer codes

    Args:
        x (array of int): codes of ``fmt``
        act (Activation):
        fmt (FixedFormat): format of the codes, used for the ReLU6 threshold
    Return:
        numpy.ndarray

    >>> from pointaccel.fixq import FixedFormat
    >>> apply_activation([-5, 0, 7], Activation.RELU, FixedFormat(8, 6)).tolist()
    [0, 0, 7]
    >>> apply_activation([1000], Activation.RELU6, FixedFormat(8, 6)).tolist()
    [127]
    """
    x = np.asarray(x, dtype=np.int64)
    act = Activation.parse(act)

    if act is Activation.NONE:
        return x

    x = np.maximum(x, 0)
    if act is Activation.RELU6:
        six = 6 << fmt.frac_bits
        x = np.minimum(x, min(six, fmt.max_code))

    return x


def max_columns(X):
    """Column-wise maximum of a matrix

    Args:
        X (QTensor): n×C matrix
    Return:
        QTensor: 1×C
    """
    if len(X.dims) != 2:
        raise ShapeError(f"Matrix expected, got dims {X.dims}")
    return QTensor(X.codes.max(axis=0, keepdims=True), X.fmt)


def _check(A, W, bias, shift):
    if len(A.dims) != 2 or len(W.dims) != 2:
        raise ShapeError(f"Matrices expected, got {A.dims} and {W.dims}")
    if A.dims[1] != W.dims[0]:
        raise ShapeError(f"Inner dimensions mismatch: {A.dims} by {W.dims}")
    if shift < 0:
        raise ProgramError(f"Negative requantization shift {shift}")

    c_dim = W.dims[1]
    if bias is None:
        bias = np.zeros(c_dim, dtype=np.int64)
    bias = np.asarray(bias, dtype=np.int64).ravel()
    if len(bias) != c_dim:
        raise ShapeError(f"Bias of length {len(bias)} for {c_dim} output channels")

    bits = max(accumulator_bits(A.fmt), accumulator_bits(W.fmt))
    return bias, bits


def traversal(n_rows, c_dim, cfg, orient):
    """Order of the output blocks produced by the PE array

    An output block covers ``block_rows`` streamed points by ``n_unroll``
    channels. All the dot-product tiles of a block are accumulated in the
    first-stage buffer before the block is drained.

    Args:
        n_rows (int):
        c_dim (int):
        cfg (TileConfig):
        orient (OutputOrientation):
    Yield:
        tuple: (tile_row, tile_col)

    >>> list(traversal(100, 40, TileConfig(32, 32), OutputOrientation.ROW))
    [(0, 0), (0, 1), (1, 0), (1, 1)]
    >>> list(traversal(100, 40, TileConfig(32, 32), OutputOrientation.COLUMN))
    [(0, 0), (1, 0), (0, 1), (1, 1)]
    """
    rows = -(-n_rows // cfg.block_rows)
    cols = -(-c_dim // cfg.n_unroll)

    if orient is OutputOrientation.ROW:
        for r in range(rows):
            for c in range(cols):
                yield r, c
    else:
        for c in range(cols):
            for r in range(rows):
                yield r, c


def _accumulate(a, w, bias, cfg, orient, trace=None):
    """First-stage accumulation, one output block at a time

    Blocks are visited in the order of :py:func:`traversal`. Each one sums
    the ``ceil(K / m_unroll)`` partial products of its dot-product tiles
    on top of the bias.
    """
    n, k_dim = a.shape
    c_dim = w.shape[1]
    m, nu, depth = cfg.m_unroll, cfg.n_unroll, cfg.block_rows

    kt = -(-k_dim // m)
    ct = -(-c_dim // nu)

    dtype = np.float64 if m <= _EXACT_DEPTH else np.int64
    a_pad = np.zeros((n, kt * m), dtype=dtype)
    a_pad[:, :k_dim] = a
    w_pad = np.zeros((kt * m, ct * nu), dtype=dtype)
    w_pad[:k_dim, :c_dim] = w
    b_pad = np.zeros(ct * nu, dtype=np.int64)
    b_pad[:c_dim] = bias

    # kt × n × m and kt × m × C, one slab per dot-product tile
    a_tiles = a_pad.reshape(n, kt, m).transpose(1, 0, 2)
    w_tiles = w_pad.reshape(kt, m, ct * nu)

    acc = np.empty((n, ct * nu), dtype=np.int64)
    for r, c in traversal(n, c_dim, cfg, orient):
        rs = slice(r * depth, (r + 1) * depth)
        cs = slice(c * nu, (c + 1) * nu)

        partial = a_tiles[:, rs] @ w_tiles[:, :, cs]
        acc[rs, cs] = b_pad[cs] + partial.astype(np.int64).sum(axis=0)

        if trace is not None:
            trace.append((r, c))

    return acc[:, :c_dim]


def matmul_tiled(A, W, bias, cfg, orient, act, shift, out_fmt, trace=None):
    """Tiled matrix multiplication with requantization and activation

    Args:
        A (QTensor): n×K input feature map
        W (QTensor): K×C weights
        bias (array of int): C biases, pre-scaled to ``frac(A) + frac(W)``
        cfg (TileConfig):
        orient (OutputOrientation):
        act (Activation):
        shift (int): requantization shift
        out_fmt (FixedFormat):
        trace (list): if provided, (tile_row, tile_col) records of the output
            blocks are appended in the order they are produced
    Return:
        QTensor: n×C output
    """
    bias, bits = _check(A, W, bias, shift)
    act = Activation.parse(act)

    acc = wrap(_accumulate(A.codes, W.codes, bias, cfg, orient, trace), bits)
    codes, saturated = _requantize(acc, shift, out_fmt)
    codes = apply_activation(codes, act, out_fmt)

    return QTensor(codes, out_fmt, saturated=saturated)


def matmul_maxpool(A, W, bias, cfg, shift, out_fmt, act=Activation.NONE, trace=None):
    """Matrix multiplication fused with a global max-pooling over points

    The output is produced column by column so that the comparator array
    can reduce each output channel while it is drained.

    Return:
        QTensor: 1×C
    """
    out = matmul_tiled(
        A, W, bias, cfg, OutputOrientation.COLUMN, act, shift, out_fmt, trace=trace
    )
    pooled = max_columns(out)
    pooled.saturated = out.saturated
    return pooled


def matmul_naive(A, W, bias, shift, out_fmt, act=Activation.NONE):
    """Untiled reference of :py:func:`matmul_tiled`"""
    bias, bits = _check(A, W, bias, shift)

    acc = A.codes.astype(np.int64) @ W.codes.astype(np.int64) + bias
    codes, saturated = _requantize(wrap(acc, bits), shift, out_fmt)
    codes = apply_activation(codes, act, out_fmt)

    return QTensor(codes, out_fmt, saturated=saturated)
