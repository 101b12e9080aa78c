from pytest import raises, mark

from pointaccel.constants import MEASUREMENTS
from pointaccel.errors import CapacityError, UnknownNetworkError
from pointaccel.pointnet import (
    LayerKind,
    NetworkKind,
    build_network,
    count_ops,
    measured_performance,
)
from pointaccel.tilemm import Activation


def test_kind():

    assert NetworkKind.parse("vanilla-cls") is NetworkKind.VANILLA_CLS
    assert NetworkKind.parse(NetworkKind.SEG) is NetworkKind.SEG
    assert not NetworkKind.VANILLA_CLS.has_transforms

    with raises(UnknownNetworkError):
        NetworkKind.parse("resnet")


def test_cls_layers():

    graph = build_network("cls", 1024, 40)
    names = [layer.name for layer in graph]

    tnet = ["mlp0", "mlp1", "mlp2", "pool", "fc0", "fc1", "fc2", "apply"]
    assert names == (
        [f"tnet1.{n}" for n in tnet]
        + ["mlp0", "mlp1"]
        + [f"tnet2.{n}" for n in tnet]
        + ["mlp2", "mlp3", "mlp4", "pool", "fc0", "fc1", "fc2"]
    )

    assert graph["tnet1.fc2"].out_dim == 9
    assert graph["tnet2.fc2"].out_dim == 64 * 64
    assert graph["tnet1.apply"].inputs == ("points", "tnet1.fc2")
    assert graph["mlp0"].inputs == ("tnet1.apply",)
    assert graph["tnet2.apply"].inputs == ("mlp1", "tnet2.fc2")
    assert graph.transform_outputs == {"tnet1.fc2", "tnet2.fc2"}
    assert graph.transforms == [("tnet1", 3), ("tnet2", 64)]

    # no activation on the score and transform layers
    assert graph["fc2"].activation is Activation.NONE
    assert graph["tnet1.fc2"].activation is Activation.NONE
    assert graph["mlp4"].activation is Activation.RELU

    assert graph.output.name == "fc2"
    assert graph.output.out_dim == 40
    assert graph.rows(graph["mlp0"]) == 1024
    assert graph.rows(graph["fc0"]) == 1
    assert [layer.name for layer in graph.consumers("mlp1")] == [
        "tnet2.mlp0",
        "tnet2.apply",
    ]
    assert "concat" not in graph


def test_seg_layers():

    graph = build_network("seg", 2048, m=50)
    concat = graph["concat"]

    assert concat.kind is LayerKind.CONCAT
    assert concat.inputs == ("tnet2.apply", "pool")
    assert concat.out_dim == 64 + 1024
    assert [graph[f"seg{i}"].out_dim for i in range(4)] == [512, 256, 128, 50]
    assert graph.output.name == "seg3"
    assert graph.rows(graph.output) == 2048


def test_capacity():

    build_network("cls", 4096)
    build_network("cls", 1)

    with raises(CapacityError):
        build_network("cls", 4097)
    with raises(CapacityError):
        build_network("seg", 0)


def test_op_counts():

    assert count_ops(build_network("vanilla-cls", 4096, 40)).macs == 605_431_808
    assert count_ops(build_network("cls", 4096, 40)).macs == 1_783_021_824
    assert count_ops(build_network("seg", 4096, m=50)).macs == 4_761_360_640

    ops = count_ops(build_network("cls", 4096, 40))
    assert ops.ops == 2 * ops.macs
    assert sum(ops.layers.values()) == ops.macs
    assert ops.layers["tnet1.apply"] == 4096 * 3 * 3
    assert "pool" not in ops.layers


@mark.parametrize("kind", ["vanilla-cls", "cls", "seg"])
def test_linearity(kind):
    """Per-point layers scale with n, the others are paid once per frame"""

    one = count_ops(build_network(kind, 1))
    two = count_ops(build_network(kind, 2))
    full = count_ops(build_network(kind, 4096))

    graph = build_network(kind, 1)
    per_frame = sum(
        macs for name, macs in one.layers.items() if not graph[name].per_point
    )
    per_point = one.macs - per_frame

    assert two.macs - one.macs == per_point
    assert full.macs == 4096 * per_point + per_frame


@mark.parametrize("kind", ["vanilla-cls", "cls", "seg"])
@mark.parametrize("bits", [8, 16])
def test_measured_consistency(kind, bits):
    """Counted operations agree with the measured throughput × latency"""

    graph = build_network(kind, 4096)
    ops = count_ops(graph).ops
    measured = measured_performance(kind, bits)

    assert 0.95 <= ops / measured.ops <= 1.05


@mark.parametrize("kind", ["vanilla-cls", "cls", "seg"])
def test_measured_widths_agree(kind):

    int8 = MEASUREMENTS[kind, 8].ops
    int16 = MEASUREMENTS[kind, 16].ops
    assert abs(int16 / int8 - 1) <= 0.01 + 1e-12


def test_measured_fps():

    assert round(measured_performance("cls", 8).fps, 1) == 50.5
    assert round(measured_performance("seg", 8).fps, 1) == 28.9
    assert measured_performance("cls", 12) is None
