"""Register-file content of the accelerator

A :py:class:`Program` is the whole configuration stream pre-loaded into the
register file before a frame is processed: an ordered list of
:py:class:`Instruction`, the weight store they refer to, and the location of
the input and output tensors in external memory.
"""

import logging
from dataclasses import dataclass
from enum import Enum

from ..constants import MAX_POINTS
from ..errors import CapacityError, ProgramError, ShapeError, WeightStoreError
from ..fixq import FixedFormat
from ..tilemm import Activation, OutputOrientation

__all__ = [
    "OpKind",
    "ExternalMemory",
    "InputBuffer",
    "INPUT_BUFFER",
    "WeightBuffer",
    "Instruction",
    "TensorDesc",
    "Program",
]

log = logging.getLogger(__name__)


class OpKind(Enum):
    MATMUL = "matmul"
    MATMUL_MAXPOOL = "matmul_maxpool"


@dataclass(frozen=True)
class ExternalMemory:
    """Location in external (DDR) memory

    Args:
        offset (int): element offset of the first row
        stride (int): elements between two consecutive rows, 0 for packed rows
        broadcast (int): if non-zero, a single-row result is replicated into
            this many rows
    """

    offset: int
    stride: int = 0
    broadcast: int = 0

    def __str__(self):
        txt = f"ddr@{self.offset}"
        if self.stride:
            txt += f"/{self.stride}"
        if self.broadcast:
            txt += f"x{self.broadcast}"
        return txt

    def row_stride(self, cols):
        return self.stride or cols

    def extent(self, rows, cols):
        """One past the last element covered by a rows×cols access"""
        rows = self.broadcast or rows
        return self.offset + (rows - 1) * self.row_stride(cols) + cols


@dataclass(frozen=True)
class InputBuffer:
    """On-chip input buffer, feeding the next instruction directly"""

    def __str__(self):
        return "input-buffer"


INPUT_BUFFER = InputBuffer()


@dataclass(frozen=True)
class WeightBuffer:
    """On-chip weight buffer

    A 1×M² result routed here is reshaped to M×M, added to the identity and
    bound as a frame-lifetime weight under ``weight_id``.
    """

    weight_id: str

    def __str__(self):
        return f"weight-buffer:{self.weight_id}"


@dataclass(frozen=True)
class Instruction:
    """One matrix multiplication pattern of the register file"""

    op_kind: OpKind
    n_rows: int
    k_dim: int
    c_dim: int
    input_src: object
    weight_id: str
    output_dst: object
    orientation: OutputOrientation
    activation: Activation
    requant_shift: int
    in_fmt: FixedFormat
    out_fmt: FixedFormat
    name: str = ""

    def __post_init__(self):
        if self.n_rows > MAX_POINTS:
            raise CapacityError(
                f"{self.n_rows} points exceed the capacity of {MAX_POINTS}"
            )
        if min(self.n_rows, self.k_dim, self.c_dim) < 1:
            raise ProgramError(
                f"Non positive dimensions {self.n_rows}×{self.k_dim}×{self.c_dim}"
            )
        if (
            self.op_kind is OpKind.MATMUL_MAXPOOL
            and self.orientation is not OutputOrientation.COLUMN
        ):
            raise ProgramError("Max-pooling requires a column-oriented output")
        if self.requant_shift < 0:
            raise ProgramError(f"Negative requantization shift in '{self.name}'")

    @property
    def out_rows(self):
        return 1 if self.op_kind is OpKind.MATMUL_MAXPOOL else self.n_rows

    @property
    def macs(self):
        return self.n_rows * self.k_dim * self.c_dim

    def __str__(self):
        return (
            f"{self.name or '-':14} {self.op_kind.value:15} "
            f"{self.n_rows}x{self.k_dim}x{self.c_dim} "
            f"{self.input_src} -> {self.output_dst} "
            f"w={self.weight_id} {self.activation.value} >>{self.requant_shift}"
        )


@dataclass(frozen=True)
class TensorDesc:
    """Tensor located in external memory"""

    name: str
    location: ExternalMemory
    rows: int
    cols: int
    fmt: FixedFormat


class Program:
    """Ordered instructions, weight bindings and tensor descriptors

    Args:
        instructions (list of Instruction):
        store (WeightStore): static weights
        input (TensorDesc): where the frame is written before execution
        outputs (list of TensorDesc): tensors read back after execution
        memory_size (int): number of elements of external memory used
    """

    def __init__(self, instructions, store, input, outputs, memory_size):
        self.instructions = tuple(instructions)
        self.store = store
        self.input = input
        self.outputs = tuple(outputs)
        self.memory_size = memory_size

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __getitem__(self, i):
        return self.instructions[i]

    def __str__(self):  # pragma: no cover
        return "\n".join(str(i) for i in self.instructions)

    @property
    def macs(self):
        return sum(instr.macs for instr in self.instructions)

    def weight_shape(self, index):
        """Dimensions and format of the weights the instruction at ``index`` refers to

        Return:
            tuple: (k_dim, c_dim, fmt)
        Raise:
            WeightStoreError: if the weight is bound neither in the store nor
                by a previous instruction
        """
        instr = self.instructions[index]
        if instr.weight_id in self.store:
            W = self.store[instr.weight_id].weights
            return W.dims[0], W.dims[1], W.fmt

        for prev in self.instructions[:index]:
            dst = prev.output_dst
            if isinstance(dst, WeightBuffer) and dst.weight_id == instr.weight_id:
                m = int(round(prev.c_dim**0.5))
                return m, m, prev.out_fmt

        raise WeightStoreError(f"Unbound weight '{instr.weight_id}'")

    def validate(self):
        """Check the consistency of the whole program

        Raise:
            ProgramError: on the first inconsistency found
        """

        if not self.instructions:
            raise ProgramError("Empty program")

        last = len(self.instructions) - 1
        published = set()

        for i, instr in enumerate(self.instructions):
            where = f"instruction {i} '{instr.name}'"

            # Weights
            k_dim, c_dim, w_fmt = self.weight_shape(i)
            if (k_dim, c_dim) != (instr.k_dim, instr.c_dim):
                raise ShapeError(
                    f"{where}: weights '{instr.weight_id}' are {k_dim}×{c_dim}, "
                    f"expected {instr.k_dim}×{instr.c_dim}"
                )
            expected = (
                instr.in_fmt.frac_bits + w_fmt.frac_bits - instr.out_fmt.frac_bits
            )
            if instr.requant_shift != expected:
                raise ProgramError(
                    f"{where}: shift {instr.requant_shift} inconsistent with formats "
                    f"{instr.in_fmt}, {w_fmt} -> {instr.out_fmt}"
                )

            # Input routing
            src = instr.input_src
            if isinstance(src, InputBuffer):
                prev = self.instructions[i - 1] if i else None
                if prev is None or not isinstance(prev.output_dst, InputBuffer):
                    raise ProgramError(f"{where}: reads an empty input buffer")
                if (prev.out_rows, prev.c_dim) != (instr.n_rows, instr.k_dim):
                    raise ShapeError(
                        f"{where}: input buffer holds {prev.out_rows}×{prev.c_dim}, "
                        f"expected {instr.n_rows}×{instr.k_dim}"
                    )
                if prev.out_fmt != instr.in_fmt:
                    raise ProgramError(f"{where}: input format mismatch")
            elif isinstance(src, ExternalMemory):
                self._check_extent(where, src, instr.n_rows, instr.k_dim)
            else:
                raise ProgramError(f"{where}: invalid input source {src!r}")

            # Output routing
            dst = instr.output_dst
            if isinstance(dst, InputBuffer):
                if i == last or not isinstance(
                    self.instructions[i + 1].input_src, InputBuffer
                ):
                    raise ProgramError(
                        f"{where}: input buffer output not consumed "
                        "by the next instruction"
                    )
            elif isinstance(dst, ExternalMemory):
                self._check_extent(where, dst, instr.out_rows, instr.c_dim)
                if dst.broadcast and instr.out_rows != 1:
                    raise ProgramError(f"{where}: only a single row can be broadcast")
            elif isinstance(dst, WeightBuffer):
                m = int(round(instr.c_dim**0.5))
                if instr.out_rows != 1 or m * m != instr.c_dim:
                    raise ProgramError(
                        f"{where}: weight buffer output should be 1×M², "
                        f"got {instr.out_rows}×{instr.c_dim}"
                    )
                if dst.weight_id in self.store or dst.weight_id in published:
                    raise WeightStoreError(
                        f"{where}: weight '{dst.weight_id}' already bound"
                    )
                published.add(dst.weight_id)
            else:
                raise ProgramError(f"{where}: invalid output destination {dst!r}")

        if not isinstance(self.instructions[last].output_dst, ExternalMemory):
            raise ProgramError("The last instruction should write to external memory")

        inp = self.input
        self._check_extent("input", inp.location, inp.rows, inp.cols)
        for desc in self.outputs:
            self._check_extent(desc.name, desc.location, desc.rows, desc.cols)

        log.debug(f"Program of {len(self)} instructions validated")

    def _check_extent(self, where, loc, rows, cols):
        if loc.offset < 0 or loc.extent(rows, cols) > self.memory_size:
            raise ProgramError(
                f"{where}: access {rows}×{cols} at {loc} outside of the "
                f"{self.memory_size} elements of external memory"
            )
        if loc.stride and loc.stride < cols:
            raise ProgramError(f"{where}: row stride {loc.stride} shorter than {cols}")
