"""Cycle and bandwidth model of the accelerator

Every instruction is a stage of a double-buffered pipeline. While the PE
array computes instruction ``i``, the DMA engine loads the operands of
``i + 1`` into the other half of the ping-pong buffers::

    stage(i) = max(compute(i), load(i + 1)) + overhead

    total = sum(stage)

Results leave through the second stage of the output buffer while the next
instruction computes, so stores never lengthen a stage. They are still
counted in the DMA cycles and bytes moved of the report.

Data routed through the on-chip input buffer or weight buffer costs no DMA
transfer.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass
from math import ceil, log2

from ..config import config
from ..constants import DEFAULT_CLOCK_HZ, HP_PEAK_BITS_PER_S
from ..errors import FormatError
from ..tilemm import TileConfig
from .program import ExternalMemory

__all__ = [
    "MachineParams",
    "PerfReport",
    "StageTiming",
    "schedule",
    "estimate_latency",
]

log = logging.getLogger(__name__)

PER_OP_OVERHEAD = 256
"""Default cycles spent per instruction on buffer swap and descriptor setup"""


@dataclass(frozen=True)
class MachineParams:
    """Timing parameters of the accelerator

    Values left to ``None`` are taken from the ``accel`` section of the
    configuration, or from the platform defaults.

    Args:
        tile (TileConfig): unroll factors of the PE array
        clock_hz (float):
        hp_peak_bits_per_s (float): DDR bandwidth seen through the HP port
        pipeline_fill_cycles (int): latency of the multiplier and adder tree,
            ``m_unroll + log2(m_unroll)`` by default
        per_op_overhead_cycles (int):
        bytes_per_element (int): 1 for INT8, 2 for INT16
    """

    tile: TileConfig = TileConfig()
    clock_hz: float = None
    hp_peak_bits_per_s: float = None
    pipeline_fill_cycles: int = None
    per_op_overhead_cycles: int = None
    bytes_per_element: int = 1

    def __post_init__(self):
        defaults = {
            "clock_hz": config.get("accel", "clock_hz", fallback=DEFAULT_CLOCK_HZ),
            "hp_peak_bits_per_s": config.get(
                "accel", "hp_peak_bits_per_s", fallback=HP_PEAK_BITS_PER_S
            ),
            "pipeline_fill_cycles": self.tile.m_unroll
            + ceil(log2(self.tile.m_unroll)),
            "per_op_overhead_cycles": config.get(
                "accel", "per_op_overhead_cycles", fallback=PER_OP_OVERHEAD
            ),
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

        if self.clock_hz <= 0 or self.hp_peak_bits_per_s <= 0:
            raise FormatError("Clock and bandwidth should be positive")
        if self.pipeline_fill_cycles < 0 or self.per_op_overhead_cycles < 0:
            raise FormatError("Negative cycle counts")
        if self.bytes_per_element not in (1, 2):
            raise FormatError(
                f"bytes_per_element should be 1 or 2, got {self.bytes_per_element}"
            )

    @classmethod
    def for_bits(cls, bits, **kwargs):
        """Parameters for a network quantized on 8 or 16 bits

        >>> MachineParams.for_bits(16).bytes_per_element
        2
        """
        if bits not in (8, 16):
            raise FormatError(f"Unsupported width {bits}, expected 8 or 16")
        return cls(bytes_per_element=bits // 8, **kwargs)

    @property
    def bits_per_cycle(self):
        """DDR bits transferred per accelerator cycle"""
        return self.hp_peak_bits_per_s / self.clock_hz

    @property
    def bias_bytes(self):
        """Bytes per bias in DDR, 48-bit accumulators travel in 64-bit words"""
        return 4 * self.bytes_per_element

    @property
    def roofline_gops(self):
        """Peak throughput of the PE array, one MAC counting as two operations

        >>> MachineParams(clock_hz=150e6).roofline_gops
        307.2
        """
        return 2 * self.tile.macs_per_cycle * self.clock_hz / 1e9

    def dma_cycles(self, nbytes):
        return ceil(nbytes * 8 / self.bits_per_cycle)


@dataclass
class PerfReport:
    """Performance figures of one frame"""

    macs: int
    ops: int
    compute_cycles: int
    dma_cycles: int
    total_cycles: int
    latency_s: float
    effective_gops: float
    bytes_moved: int
    saturation_events: int = 0

    @property
    def fps(self):
        """Frames per second sustained at the modeled latency"""
        return 1 / self.latency_s


StageTiming = namedtuple(
    "StageTiming", "compute load store load_bytes store_bytes start duration"
)
"""Timing of one instruction of the pipeline, in cycles

``load`` and ``store`` are the DMA cycles needed to bring the operands of
the instruction and to write its result back, ``start`` the cycle at which
its computation begins and ``duration`` the length of its stage.
"""


def _load_bytes(program, index, params):
    instr = program[index]
    nbytes = 0

    if isinstance(instr.input_src, ExternalMemory):
        nbytes += instr.n_rows * instr.k_dim * params.bytes_per_element

    # Dynamic weights are already in the weight buffer
    if instr.weight_id in program.store:
        nbytes += instr.k_dim * instr.c_dim * params.bytes_per_element
        nbytes += instr.c_dim * params.bias_bytes

    return nbytes


def _store_bytes(program, index, params):
    instr = program[index]
    dst = instr.output_dst
    if not isinstance(dst, ExternalMemory):
        return 0
    rows = dst.broadcast or instr.out_rows
    return rows * instr.c_dim * params.bytes_per_element


def schedule(program, params):
    """Place every instruction of a program on the pipeline timeline

    Args:
        program (Program):
        params (MachineParams):
    Return:
        list of StageTiming
    """

    tile = params.tile
    n = len(program)

    compute = [
        instr.n_rows * tile.passes(instr.k_dim, instr.c_dim)
        + params.pipeline_fill_cycles
        for instr in program
    ]
    load_bytes = [_load_bytes(program, i, params) for i in range(n)]
    store_bytes = [_store_bytes(program, i, params) for i in range(n)]
    load = [params.dma_cycles(b) for b in load_bytes]
    store = [params.dma_cycles(b) for b in store_bytes]

    stages = []
    start = 0
    for i in range(n):
        next_load = load[i + 1] if i + 1 < n else 0
        duration = max(compute[i], next_load) + params.per_op_overhead_cycles
        stages.append(
            StageTiming(
                compute[i],
                load[i],
                store[i],
                load_bytes[i],
                store_bytes[i],
                start,
                duration,
            )
        )
        start += duration

    return stages


def estimate_latency(program, params=None, saturation_events=0):
    """Performance model of a program, without running it

    Args:
        program (Program): validated program
        params (MachineParams):
        saturation_events (int): carried over from an actual run
    Return:
        PerfReport
    """

    if params is None:
        params = MachineParams()

    stages = schedule(program, params)
    total = sum(s.duration for s in stages)

    macs = program.macs
    latency = total / params.clock_hz

    report = PerfReport(
        macs=macs,
        ops=2 * macs,
        compute_cycles=sum(s.compute for s in stages),
        dma_cycles=sum(s.load + s.store for s in stages),
        total_cycles=total,
        latency_s=latency,
        effective_gops=2 * macs / latency / 1e9,
        bytes_moved=sum(s.load_bytes + s.store_bytes for s in stages),
        saturation_events=saturation_events,
    )

    log.debug(
        f"{len(program)} instructions, {total} cycles, "
        f"{latency * 1e3:.3f} ms, {report.effective_gops:.1f} GOPS"
    )

    return report
