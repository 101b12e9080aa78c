"""Fixed-point formats and conversions

All tensors handled by the accelerator are signed, power-of-two scaled
integers (Q-format): a code ``c`` in a format with ``f`` fractional bits
represents the real value ``c * 2**-f``. Rounding is always half away from
zero, and saturation only happens when narrowing.

>>> fmt = FixedFormat(8, 6)
>>> quantize([1.0, -1.0, 0.0], fmt).codes.tolist()
[64, -64, 0]
>>> str(fmt)
'Q8.6'
"""

import logging
from dataclasses import dataclass

import numpy as np

from .config import config
from .errors import FormatError, ProgramError, ShapeError

__all__ = [
    "FixedFormat",
    "QTensor",
    "BnParams",
    "quantize",
    "dequantize",
    "requantize",
    "wrap",
    "accumulator_bits",
    "fold_batchnorm",
    "choose_format",
    "default_format",
    "quantize_bias",
    "round_half_away",
]

log = logging.getLogger(__name__)

CLIP_RATIO = 0.001
"""Default fraction of calibration values allowed to saturate"""


@dataclass(frozen=True)
class FixedFormat:
    """Signed fixed-point format

    Args:
        total_bits (int): 8 or 16
        frac_bits (int): number of fractional bits, ``0 <= frac_bits < total_bits``
    """

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.total_bits not in (8, 16):
            raise FormatError(f"Unsupported width {self.total_bits}, expected 8 or 16")
        if not 0 <= self.frac_bits < self.total_bits:
            raise FormatError(
                f"frac_bits should be in [0, {self.total_bits}), got {self.frac_bits}"
            )

    signed = True

    @classmethod
    def parse(cls, text):
        """Create a format from its 'Q<total>.<frac>' name

        >>> FixedFormat.parse("Q16.8")
        FixedFormat(total_bits=16, frac_bits=8)
        """
        text = text.strip()
        if not text.upper().startswith("Q"):
            raise FormatError(f"Invalid format name '{text}'")
        total, _, frac = text[1:].partition(".")
        try:
            return cls(int(total), int(frac or 0))
        except ValueError as e:
            raise FormatError(f"Invalid format name '{text}'") from e

    def __str__(self):
        return f"Q{self.total_bits}.{self.frac_bits}"

    @property
    def min_code(self):
        return -(1 << (self.total_bits - 1))

    @property
    def max_code(self):
        return (1 << (self.total_bits - 1)) - 1

    @property
    def scale(self):
        """Number of codes per unit"""
        return float(1 << self.frac_bits)

    @property
    def lsb(self):
        """Real value of one code"""
        return 2.0**-self.frac_bits

    @property
    def dtype(self):
        return np.int8 if self.total_bits == 8 else np.int16

    @property
    def bytes(self):
        return self.total_bits // 8

    def saturate(self, codes):
        """Clamp integer codes into the representable range"""
        return np.clip(codes, self.min_code, self.max_code)


class QTensor:
    """Integer tensor with its fixed-point format

    Args:
        codes (array of int): integer codes, row-major with the shape of the tensor
        fmt (FixedFormat): format of the codes
        saturated (int): number of values clipped when the tensor was created
    """

    def __init__(self, codes, fmt, saturated=0):
        codes = np.asarray(codes)

        if codes.ndim == 0:
            codes = codes.reshape(1)

        if codes.size and not np.issubdtype(codes.dtype, np.integer):
            raise FormatError(f"Integer codes expected, got {codes.dtype}")

        if any(d <= 0 for d in codes.shape):
            raise ShapeError(f"Dimensions should be positive, got {codes.shape}")

        if codes.min() < fmt.min_code or codes.max() > fmt.max_code:
            raise FormatError(f"Codes out of range for {fmt}")

        self.codes = codes.astype(fmt.dtype)
        self.fmt = fmt
        self.saturated = int(saturated)

    @property
    def dims(self):
        return self.codes.shape

    def __len__(self):
        return len(self.codes)

    def __eq__(self, other):
        if not isinstance(other, QTensor):
            return NotImplemented
        return self.fmt == other.fmt and np.array_equal(self.codes, other.codes)

    __hash__ = None

    def __repr__(self):  # pragma: no cover
        dims = "×".join(str(d) for d in self.dims)
        return f"<QTensor {dims} {self.fmt}>"

    def reshape(self, *dims):
        return QTensor(self.codes.reshape(*dims), self.fmt)

    def dequantize(self):
        return dequantize(self)


@dataclass(frozen=True)
class BnParams:
    """Batch normalization statistics and affine parameters of one layer"""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

        sizes = {
            len(self.gamma),
            len(self.beta),
            len(self.running_mean),
            len(self.running_var),
        }
        if len(sizes) != 1:
            raise ShapeError(f"BN vectors of unequal lengths {sorted(sizes)}")
        if np.any(self.running_var < 0):
            raise FormatError("Negative running variance")
        if self.epsilon < 0:
            raise FormatError("Negative epsilon")

    def __len__(self):
        return len(self.gamma)

    def __call__(self, x):
        """Apply the normalization to a batch of rows"""
        return (x - self.running_mean) / np.sqrt(
            self.running_var + self.epsilon
        ) * self.gamma + self.beta


def round_half_away(x):
    """Round to nearest integer, ties away from zero

    >>> round_half_away(np.array([0.5, 1.5, -0.5, -2.5, 2.4999])).tolist()
    [1.0, 2.0, -1.0, -3.0, 2.0]
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    fl = np.floor(a)
    return np.copysign(fl + (a - fl >= 0.5), x)


def quantize(values, fmt):
    """Convert real values to codes of a given format

    Out of range values are silently saturated, their count is available
    as the ``saturated`` attribute of the returned tensor.

    Args:
        values (array of float): finite values
        fmt (FixedFormat):
    Return:
        QTensor
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise FormatError("Non finite value to quantize")

    codes = round_half_away(values * fmt.scale)
    clipped = fmt.saturate(codes)
    saturated = int(np.count_nonzero(clipped != codes))

    if saturated:
        log.warning(f"{saturated} values saturated while quantizing to {fmt}")

    return QTensor(clipped.astype(np.int64), fmt, saturated=saturated)


def dequantize(qt):
    """Real values of the codes of a tensor

    >>> dequantize(QTensor([-128, 64], FixedFormat(8, 6))).tolist()
    [-2.0, 1.0]
    """
    return qt.codes.astype(float) * qt.fmt.lsb


def accumulator_bits(fmt):
    """Width of the first-stage accumulator used with operands of a format"""
    return 32 if fmt.total_bits == 8 else 48


def wrap(acc, bits):
    """Two's complement wraparound of integers into a given width

    >>> wrap(np.array([2**31, -2**31 - 1, 5]), 32).tolist()
    [-2147483648, 2147483647, 5]
    """
    acc = np.asarray(acc, dtype=np.int64)
    modulus = np.int64(1) << bits
    half = np.int64(1) << (bits - 1)
    return ((acc + half) % modulus) - half


def _requantize(acc, shift, out_fmt):
    """Shift, round and saturate; also return the number of saturated codes"""
    if shift < 0:
        raise ProgramError(f"Negative requantization shift {shift}")

    acc = np.asarray(acc, dtype=np.int64)

    if shift:
        half = np.int64(1) << (shift - 1)
        codes = np.sign(acc) * ((np.abs(acc) + half) >> shift)
    else:
        codes = acc

    out = out_fmt.saturate(codes)
    return out, int(np.count_nonzero(out != codes))


def requantize(acc, shift, out_fmt):
    """Narrow wide accumulators into a feature format

    Args:
        acc (array of int): wraparound accumulators
        shift (int): ``frac(in) + frac(weight) - frac(out)``
        out_fmt (FixedFormat):
    Return:
        numpy.ndarray: codes of ``out_fmt``

    >>> requantize([128], 7, FixedFormat(8, 6)).tolist()
    [1]
    >>> requantize([2**20], 4, FixedFormat(8, 6)).tolist()
    [127]
    """
    return _requantize(acc, shift, out_fmt)[0]


def quantize_bias(bias, frac_bits):
    """Scale a real bias vector into accumulator codes

    Args:
        bias (array of float):
        frac_bits (int): ``frac(in) + frac(weight)``
    Return:
        numpy.ndarray: int64 codes
    """
    bias = np.asarray(bias, dtype=float)
    return round_half_away(bias * 2.0**frac_bits).astype(np.int64)


def fold_batchnorm(W, b, bn):
    """Absorb a batch normalization into the preceding affine layer

    Args:
        W (numpy.ndarray): K×C weight matrix
        b (numpy.ndarray): C bias vector
        bn (BnParams): normalization of the C outputs
    Return:
        tuple: folded weight matrix and bias
    """
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)

    if W.ndim != 2 or len(b) != W.shape[1] or len(bn) != W.shape[1]:
        raise ShapeError(
            f"Cannot fold BN of size {len(bn)} into {W.shape} weights and {len(b)} bias"
        )

    denom = bn.running_var + bn.epsilon
    if np.any(denom <= 0):
        raise FormatError("Null variance with null epsilon")

    s = bn.gamma / np.sqrt(denom)
    return W * s, (b - bn.running_mean) * s + bn.beta


def choose_format(values, total_bits, clip_ratio=None):
    """Select the number of fractional bits for a tensor

    The largest number of fractional bits is chosen such that at most
    ``clip_ratio`` of the values saturate.

    Args:
        values (array of float): calibration values
        total_bits (int): 8 or 16
        clip_ratio (float): allowed saturated fraction
    Return:
        FixedFormat

    >>> choose_format([0.3, -0.2], 8)
    FixedFormat(total_bits=8, frac_bits=7)
    >>> choose_format([100.0, 3.0], 8)
    FixedFormat(total_bits=8, frac_bits=0)
    """

    if clip_ratio is None:
        clip_ratio = config.get("fixq", "clip_ratio", fallback=CLIP_RATIO)

    values = np.asarray(values, dtype=float).ravel()

    for frac in range(total_bits - 1, 0, -1):
        fmt = FixedFormat(total_bits, frac)
        if not values.size:
            return fmt
        codes = round_half_away(values * fmt.scale)
        out = np.count_nonzero((codes < fmt.min_code) | (codes > fmt.max_code))
        if out <= clip_ratio * values.size:
            return fmt

    return FixedFormat(total_bits, 0)


def default_format(total_bits):
    """Format used for activations when no calibration data is available"""
    frac = config.get("fixq", "frac_bits", total_bits, fallback=total_bits // 2)
    return FixedFormat(total_bits, frac)
