import numpy as np
from pytest import fixture, mark, raises

from pointaccel.accel import (
    INPUT_BUFFER,
    Accelerator,
    ExternalMemory,
    MachineParams,
    OpKind,
    WeightBuffer,
    WeightStore,
)
from pointaccel.errors import ShapeError
from pointaccel.fixq import quantize
from pointaccel.pointnet import (
    build_network,
    compile_network,
    quantize_weights,
    random_weights,
    run_reference_quantized,
)
from pointaccel.pointnet.compiler import transform_id
from pointaccel.tilemm import OutputOrientation, TileConfig


@fixture
def compiled(rng, small_widths):
    """Compile a small network and return (graph, qweights, program, points)"""

    def _compile(kind, bits=8, n=24):
        graph = build_network(kind, n, 5, 6, widths=small_widths)
        points = rng.uniform(-1, 1, (n, 3))
        weights = random_weights(graph, rng, bn=True)
        q = quantize_weights(graph, weights, bits, points)
        return graph, q, compile_network(graph, q), points

    return _compile


def test_vanilla(compiled):

    graph, q, program, _ = compiled("vanilla-cls")
    names = [instr.name for instr in program]

    assert names == ["mlp0", "mlp1", "mlp2", "mlp3", "mlp4", "fc0", "fc1", "fc2"]
    assert program.macs == sum(instr.macs for instr in program)

    mlp4 = program[4]
    assert mlp4.op_kind is OpKind.MATMUL_MAXPOOL
    assert mlp4.orientation is OutputOrientation.COLUMN
    assert mlp4.out_rows == 1
    assert program[3].op_kind is OpKind.MATMUL

    # Every intermediate result stays on chip
    assert program[0].input_src == ExternalMemory(0)
    assert all(instr.input_src is INPUT_BUFFER for instr in program[1:])
    assert all(instr.output_dst is INPUT_BUFFER for instr in program[:-1])
    assert isinstance(program[-1].output_dst, ExternalMemory)

    (output,) = program.outputs
    assert output.name == "output"
    assert (output.rows, output.cols) == (1, 5)
    assert output.fmt == q["fc2"].out_fmt
    assert program.input.rows == 24
    assert program.input.fmt == q.input_fmt

    assert set(program.store) == {layer.name for layer in graph.weighted}


def test_cls(compiled):

    graph, q, program, _ = compiled("cls")
    instr = {i.name: i for i in program}

    assert transform_id("tnet2.fc2") == "tnet2.transform"
    assert instr["tnet1.fc2"].output_dst == WeightBuffer("tnet1.transform")
    assert instr["tnet2.fc2"].output_dst == WeightBuffer("tnet2.transform")
    assert instr["tnet1.apply"].weight_id == "tnet1.transform"
    assert instr["tnet1.apply"].k_dim == instr["tnet1.apply"].c_dim == 3
    assert instr["tnet2.apply"].k_dim == 8

    # Transforms are produced at run time, never stored
    assert "tnet1.transform" not in program.store
    assert "tnet2.transform" not in program.store

    # Points and the backbone output are read twice, from external memory
    assert instr["tnet1.mlp0"].input_src == program.input.location
    assert instr["tnet1.apply"].input_src == program.input.location
    assert isinstance(instr["mlp1"].output_dst, ExternalMemory)
    assert instr["tnet2.mlp0"].input_src == instr["mlp1"].output_dst
    assert instr["tnet2.apply"].input_src == instr["mlp1"].output_dst


def test_seg_layout(compiled):

    graph, q, program, _ = compiled("seg")
    instr = {i.name: i for i in program}

    concat = graph["concat"]
    features = instr["tnet2.apply"].output_dst
    glob = instr["mlp4"].output_dst

    assert features.stride == glob.stride == concat.out_dim == 40
    assert glob.offset == features.offset + 8
    assert glob.broadcast == 24
    assert features.broadcast == 0
    assert instr["seg0"].input_src == ExternalMemory(features.offset)
    assert instr["seg0"].k_dim == 40

    (output,) = program.outputs
    assert (output.rows, output.cols) == (24, 6)


def test_seg_full_size():

    graph = build_network("seg", 4096, m=50)
    q = quantize_weights(graph, random_weights(graph, np.random.default_rng(1)), 16)
    program = compile_network(graph, q)

    glob = {i.name: i for i in program}["mlp4"].output_dst
    assert glob.stride == 1088
    assert glob.broadcast == 4096


def test_store_argument(rng, small_widths):

    graph = build_network("vanilla-cls", 8, 5, widths=small_widths)
    q = quantize_weights(graph, random_weights(graph, rng), 8)

    store = WeightStore()
    program = compile_network(graph, q, store)
    assert program.store is store
    assert len(store) == len(graph.weighted)


def test_mismatch(rng, small_widths):

    graph = build_network("vanilla-cls", 8, 5, widths=small_widths)
    q = quantize_weights(graph, random_weights(graph, rng), 8)

    with raises(ShapeError):
        compile_network(build_network("cls", 8, 5, widths=small_widths), q)


@mark.parametrize("bits", [8, 16])
@mark.parametrize("kind", ["vanilla-cls", "cls", "seg"])
def test_bit_exact(compiled, kind, bits):
    """The compiled program matches the untiled interpreter bit for bit"""

    graph, q, program, points = compiled(kind, bits)
    expected = run_reference_quantized(graph, q, points)

    X = quantize(points, q.input_fmt)
    for tile in (TileConfig(), TileConfig(3, 5)):
        run = Accelerator(MachineParams.for_bits(bits, tile=tile)).run(program, X)
        assert run["output"] == expected
        assert run.report.macs == program.macs


@mark.slow
def test_full_size_determinism():

    rng = np.random.default_rng(3)
    graph = build_network("cls", 512, 40)
    points = rng.uniform(-1, 1, (512, 3))
    q = quantize_weights(graph, random_weights(graph, rng, bn=True), 8, points)
    program = compile_network(graph, q)

    X = quantize(points, q.input_fmt)
    first = Accelerator().run(program, X)
    second = Accelerator().run(program, X)

    assert first["output"] == second["output"]
    assert first["output"] == run_reference_quantized(graph, q, points)
    assert first.trace.to_csv() == second.trace.to_csv()
