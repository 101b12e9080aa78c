import numpy as np
from pytest import raises, mark, fixture

from pointaccel.accel import (
    ExternalMemory,
    Instruction,
    MachineParams,
    OpKind,
    Program,
    TensorDesc,
    WeightStore,
    estimate_latency,
)
from pointaccel.accel.perf import schedule
from pointaccel.constants import MEASUREMENTS
from pointaccel.errors import FormatError
from pointaccel.pointnet import (
    build_network,
    compile_network,
    quantize_weights,
    random_weights,
)
from pointaccel.fixq import FixedFormat, QTensor
from pointaccel.tilemm import Activation, OutputOrientation, TileConfig


@fixture(scope="module")
def programs():
    """Compiled full-size networks, by (kind, bits)"""
    rng = np.random.default_rng(0)
    out = {}
    for kind in ("vanilla-cls", "cls", "seg"):
        graph = build_network(kind, 4096)
        weights = random_weights(graph, rng)
        for bits in (8, 16):
            out[kind, bits] = compile_network(
                graph, quantize_weights(graph, weights, bits)
            )
    return out


def test_params():

    params = MachineParams()
    assert params.tile == TileConfig(32, 32)
    assert params.clock_hz == 150e6
    assert params.pipeline_fill_cycles == 32 + 5
    assert params.per_op_overhead_cycles == 256
    assert params.bias_bytes == 4
    assert MachineParams.for_bits(16).bias_bytes == 8
    assert params.roofline_gops == 307.2
    assert MachineParams(tile=TileConfig(8, 8)).pipeline_fill_cycles == 8 + 3

    # 682.67 bits per cycle
    assert params.dma_cycles(0) == 0
    assert params.dma_cycles(85) == 1
    assert params.dma_cycles(86) == 2

    with raises(FormatError):
        MachineParams(clock_hz=0)
    with raises(FormatError):
        MachineParams(bytes_per_element=4)
    with raises(FormatError):
        MachineParams.for_bits(12)


def test_toy_schedule(toy_program):

    params = MachineParams()
    stages = schedule(toy_program, params)

    assert [s.compute for s in stages] == [4 + 37, 4 + 37]
    # points + weights + 32-bit biases, then weights + biases
    assert [s.load_bytes for s in stages] == [12 + 24 + 32, 32 + 16]
    assert [s.store_bytes for s in stages] == [0, 4]
    assert [s.load for s in stages] == [1, 1]
    assert [s.store for s in stages] == [0, 1]
    assert [s.start for s in stages] == [0, 297]
    assert [s.duration for s in stages] == [297, 297]

    report = estimate_latency(toy_program, params)
    assert report.total_cycles == 297 + 297
    assert report.macs == 224
    assert report.ops == 448
    assert report.compute_cycles == 82
    assert report.dma_cycles == 3
    assert report.bytes_moved == 120
    assert report.latency_s == 594 / 150e6
    assert report.saturation_events == 0


def test_single_pass():
    """One point through a single 32×32 tile"""

    fmt = FixedFormat(8, 4)
    store = WeightStore()
    store.load("w", QTensor(np.zeros((32, 32), dtype=int), fmt))
    instr = Instruction(
        OpKind.MATMUL,
        1,
        32,
        32,
        ExternalMemory(0),
        "w",
        ExternalMemory(32),
        OutputOrientation.ROW,
        Activation.NONE,
        4,
        fmt,
        fmt,
        name="only",
    )
    program = Program(
        [instr],
        store,
        TensorDesc("points", ExternalMemory(0), 1, 32, fmt),
        [TensorDesc("output", ExternalMemory(32), 1, 32, fmt)],
        64,
    )

    params = MachineParams(pipeline_fill_cycles=0, per_op_overhead_cycles=0)
    (stage,) = schedule(program, params)
    assert stage.compute == 1
    assert estimate_latency(program, params).compute_cycles == 1


def test_overhead_and_fill(toy_program):

    base = estimate_latency(toy_program, MachineParams())
    bare = estimate_latency(
        toy_program, MachineParams(per_op_overhead_cycles=0, pipeline_fill_cycles=0)
    )
    assert base.total_cycles - bare.total_cycles == 2 * (256 + 37)


def test_bandwidth_bound(toy_program):
    """A slow DDR makes the stages wait for their transfers"""

    params = MachineParams(hp_peak_bits_per_s=150e6 * 8, per_op_overhead_cycles=0)
    stages = schedule(toy_program, params)

    assert [s.load for s in stages] == [68, 48]
    assert stages[0].duration == max(41, 48)
    assert stages[1].duration == max(41, 0)


@mark.slow
def test_orderings(programs):

    params = {bits: MachineParams.for_bits(bits) for bits in (8, 16)}
    latency = {
        key: estimate_latency(program, params[key[1]]).latency_s
        for key, program in programs.items()
    }

    for bits in (8, 16):
        assert (
            latency["vanilla-cls", bits] < latency["cls", bits] < latency["seg", bits]
        )

    for kind in ("vanilla-cls", "cls", "seg"):
        assert latency[kind, 16] >= latency[kind, 8]


@mark.slow
def test_roofline(programs):

    for tile in (TileConfig(), TileConfig(8, 8), TileConfig(64, 16)):
        for (kind, bits), program in programs.items():
            params = MachineParams.for_bits(bits, tile=tile)
            report = estimate_latency(program, params)
            assert report.effective_gops <= params.roofline_gops
            assert report.ops == 2 * report.macs


@mark.slow
def test_classification_latency(programs):
    """Modeled INT8 classification within a factor 2 of the measured 19.8 ms"""

    report = estimate_latency(programs["cls", 8], MachineParams.for_bits(8))
    measured = MEASUREMENTS["cls", 8].latency_s

    assert measured / 2 <= report.latency_s <= 2 * measured
    assert report.macs == 1_783_021_824


@mark.slow
def test_tile_independence(programs):

    program = programs["vanilla-cls", 8]
    small = estimate_latency(program, MachineParams(tile=TileConfig(8, 8)))
    large = estimate_latency(program, MachineParams())

    assert small.macs == large.macs
    assert small.compute_cycles > large.compute_cycles


def test_stores_hidden(toy_program):
    """Stores drain behind the next computation and never lengthen a stage"""

    params = MachineParams(hp_peak_bits_per_s=150e6 * 8, per_op_overhead_cycles=0)
    stages = schedule(toy_program, params)
    report = estimate_latency(toy_program, params)

    assert [s.store for s in stages] == [0, 4]
    assert report.total_cycles == 48 + 41
    assert report.dma_cycles == 68 + 48 + 4


@mark.slow
def test_stage_formula(programs):

    params = MachineParams(hp_peak_bits_per_s=1e9)
    program = programs["cls", 8]
    stages = schedule(program, params)
    loads = [s.load for s in stages[1:]] + [0]

    for stage, next_load in zip(stages, loads):
        assert stage.duration == max(stage.compute, next_load) + 256

    by_name = {instr.name: stage for instr, stage in zip(program, stages)}
    # 4096 points, 64×64 weights
    assert by_name["tnet2.mlp0"].compute == 4096 * 2 * 2 + 37
    assert by_name["tnet2.mlp0"].duration == 16677

    report = estimate_latency(program, params)
    assert report.total_cycles == sum(s.duration for s in stages)
