"""Functional simulation of the accelerator

The whole :py:class:`~pointaccel.accel.program.Program` is validated and
loaded in the register file before the first computation, then the FSM
walks through the instructions. Numerical results are computed with
:py:mod:`pointaccel.tilemm` and never depend on the timing parameters,
which only feed the performance model.
"""

import csv
import io
import logging
from collections import namedtuple
from enum import Enum

import numpy as np

from ..config import config
from ..constants import MAX_POINTS
from ..errors import CapacityError, FormatError, ShapeError
from ..fixq import QTensor
from ..tilemm import matmul_maxpool, matmul_tiled
from .perf import MachineParams, estimate_latency, schedule
from .program import ExternalMemory, InputBuffer, OpKind, WeightBuffer

__all__ = [
    "Accelerator",
    "Run",
    "FsmState",
    "FsmEvent",
    "FsmTrace",
    "run_program",
    "fsm_trace",
    "transform_weight",
]

log = logging.getLogger(__name__)

INPUT_BUFFER_ELEMENTS = MAX_POINTS * 1088
"""Default input buffer size, large enough for the segmentation concatenation"""


class FsmState(Enum):
    IDLE = "IDLE"
    CONFIG = "CONFIG"
    LOAD = "LOAD"
    COMPUTE = "COMPUTE"
    OVERLAP = "OVERLAP"
    DRAIN = "DRAIN"


FsmEvent = namedtuple("FsmEvent", "cycle state buffer_id instruction_index")
"""Entry of the FSM trace. ``buffer_id`` is the ping-pong half in use, or
``None`` for states not bound to a buffer"""


class FsmTrace:
    """Ordered states of the control FSM during one frame"""

    def __init__(self, events):
        self.events = list(events)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    @classmethod
    def from_schedule(cls, stages):
        """Build the trace of a pipeline timeline

        Args:
            stages (list of StageTiming):
        """
        n = len(stages)

        # The register file is loaded at once before anything runs
        events = []
        for i in range(n):
            events.append(FsmEvent(0, FsmState.IDLE, None, i))
            events.append(FsmEvent(0, FsmState.CONFIG, None, i))

        events.append(FsmEvent(0, FsmState.LOAD, 0, 0))

        for i, stage in enumerate(stages):
            events.append(FsmEvent(stage.start, FsmState.COMPUTE, i % 2, i))
            if i + 1 < n:
                nxt = stages[i + 1]
                events.append(FsmEvent(stage.start, FsmState.LOAD, (i + 1) % 2, i + 1))
                if nxt.load:
                    events.append(
                        FsmEvent(stage.start, FsmState.OVERLAP, (i + 1) % 2, i + 1)
                    )
            events.append(
                FsmEvent(stage.start + stage.compute, FsmState.DRAIN, i % 2, i)
            )

        return cls(events)

    @property
    def overlaps(self):
        """Number of loads hidden behind a computation"""
        return sum(1 for e in self.events if e.state is FsmState.OVERLAP)

    def states(self, index=None):
        """States visited, optionally restricted to one instruction"""
        return [
            e.state
            for e in self.events
            if index is None or e.instruction_index == index
        ]

    def to_csv(self):
        """CSV rendition, one event per line

        Return:
            str
        """
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(FsmEvent._fields)
        for e in self.events:
            writer.writerow(
                (
                    e.cycle,
                    e.state.value,
                    "" if e.buffer_id is None else e.buffer_id,
                    e.instruction_index,
                )
            )
        return out.getvalue()


class Run:
    """Results of the execution of a program on one frame

    Attributes:
        outputs (dict): output tensors by name
        report (PerfReport):
        trace (FsmTrace):
    """

    def __init__(self, outputs, report, trace):
        self.outputs = outputs
        self.report = report
        self.trace = trace

    @property
    def saturation_events(self):
        return self.report.saturation_events

    def __getitem__(self, name):
        return self.outputs[name]


def _read(memory, loc, rows, cols, fmt):
    idx = (
        loc.offset
        + np.arange(rows)[:, None] * loc.row_stride(cols)
        + np.arange(cols)[None, :]
    )
    return QTensor(memory[idx], fmt)


def _write(memory, loc, codes):
    rows, cols = codes.shape
    if loc.broadcast:
        codes = np.broadcast_to(codes, (loc.broadcast, cols))
        rows = loc.broadcast
    idx = (
        loc.offset
        + np.arange(rows)[:, None] * loc.row_stride(cols)
        + np.arange(cols)[None, :]
    )
    memory[idx] = codes


def transform_weight(out):
    """Turn a 1×M² result into an M×M weight matrix offset by the identity"""
    m = int(round(out.dims[1] ** 0.5))
    fmt = out.fmt
    codes = out.codes.astype(np.int64).reshape(m, m)
    codes = fmt.saturate(codes + np.eye(m, dtype=np.int64) * (1 << fmt.frac_bits))
    return QTensor(codes, fmt), np.zeros(m, dtype=np.int64)


class Accelerator:
    """Simulated accelerator

    An instance executes one program at a time. It holds no state between
    runs, dynamic weights being bound for the lifetime of a frame only.

    Args:
        params (MachineParams): timing parameters of the performance model
        input_buffer_elements (int): capacity of the on-chip input buffer
    """

    def __init__(self, params=None, input_buffer_elements=None):
        if params is None:
            params = MachineParams()
        if input_buffer_elements is None:
            input_buffer_elements = config.get(
                "accel", "input_buffer_elements", fallback=INPUT_BUFFER_ELEMENTS
            )
        self.params = params
        self.input_buffer_elements = input_buffer_elements

    def run(self, program, input):
        """Execute a program on one input tensor

        Args:
            program (Program):
            input (QTensor): frame matching the input descriptor of the program
        Return:
            Run
        Raise:
            ProgramError: if the program is inconsistent
            CapacityError: if a hardware limit is exceeded
        """

        desc = program.input

        if input.dims[0] > MAX_POINTS:
            raise CapacityError(
                f"{input.dims[0]} points exceed the capacity of {MAX_POINTS}"
            )
        if input.dims != (desc.rows, desc.cols):
            raise ShapeError(
                f"Input of dims {input.dims}, program expects {desc.rows}×{desc.cols}"
            )
        if input.fmt != desc.fmt:
            raise FormatError(f"Input in {input.fmt}, program expects {desc.fmt}")

        # Register file pre-loading
        program.validate()

        memory = np.zeros(program.memory_size, dtype=np.int64)
        _write(memory, desc.location, input.codes.astype(np.int64))

        dynamic = {}
        buffer = None
        saturated = 0
        tile = self.params.tile

        for i, instr in enumerate(program):
            if isinstance(instr.input_src, InputBuffer):
                A = buffer
            else:
                A = _read(
                    memory, instr.input_src, instr.n_rows, instr.k_dim, instr.in_fmt
                )

            if instr.weight_id in program.store:
                W, bias = program.store[instr.weight_id]
            else:
                W, bias = dynamic[instr.weight_id]

            if instr.op_kind is OpKind.MATMUL_MAXPOOL:
                out = matmul_maxpool(
                    A,
                    W,
                    bias,
                    tile,
                    instr.requant_shift,
                    instr.out_fmt,
                    act=instr.activation,
                )
            else:
                out = matmul_tiled(
                    A,
                    W,
                    bias,
                    tile,
                    instr.orientation,
                    instr.activation,
                    instr.requant_shift,
                    instr.out_fmt,
                )

            saturated += out.saturated
            if out.saturated:
                log.debug(f"{out.saturated} values saturated in '{instr.name}'")

            dst = instr.output_dst
            if isinstance(dst, InputBuffer):
                if out.codes.size > self.input_buffer_elements:
                    raise CapacityError(
                        f"'{instr.name}' output of {out.codes.size} elements exceeds "
                        f"the input buffer capacity of {self.input_buffer_elements}"
                    )
                buffer = out
            elif isinstance(dst, WeightBuffer):
                dynamic[dst.weight_id] = transform_weight(out)
            elif isinstance(dst, ExternalMemory):
                _write(memory, dst, out.codes.astype(np.int64))

            log.debug(f"#{i} {instr}")

        outputs = {
            d.name: _read(memory, d.location, d.rows, d.cols, d.fmt)
            for d in program.outputs
        }

        report = estimate_latency(program, self.params, saturation_events=saturated)
        trace = FsmTrace.from_schedule(schedule(program, self.params))

        if saturated:
            log.warning(f"{saturated} values saturated during the frame")

        return Run(outputs, report, trace)


def run_program(program, input, params=None):
    """Execute a program on a fresh accelerator

    Return:
        tuple: outputs by name and PerfReport
    """
    run = Accelerator(params).run(program, input)
    return run.outputs, run.report


def fsm_trace(run):
    """FSM trace of a run

    Args:
        run (Run):
    Return:
        FsmTrace
    """
    return run.trace
