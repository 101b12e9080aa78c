import numpy as np
from pytest import fixture

from pointaccel.accel import (
    INPUT_BUFFER,
    ExternalMemory,
    Instruction,
    OpKind,
    Program,
    TensorDesc,
    WeightStore,
)
from pointaccel.config import config
from pointaccel.fixq import FixedFormat, QTensor
from pointaccel.pointnet import PointNetWidths
from pointaccel.tilemm import Activation, OutputOrientation

np.set_printoptions(linewidth=200)


@fixture(autouse=True, scope="session")
def config_override():
    """Reproducible configuration, whatever the user settings are"""
    config.set("accel", "clock_hz", 150e6)
    config.set("velodyne", "queue_frames", 4)


@fixture
def rng():
    return np.random.default_rng(20240601)


@fixture
def small_widths():
    """Same topology as the canonical networks, with narrow layers"""
    return PointNetWidths(
        tnet_mlp=(8, 16, 32),
        tnet_fc=(16, 8),
        backbone=(8, 8),
        features=(8, 16, 32),
        cls_fc=(16, 8),
        seg_mlp=(16, 8, 8),
    )


def build_toy_program(rng, store=None):
    """Two chained instructions: a 4×3 → 4×8 layer followed by a pooled 8 → 4
    layer, all in Q8.4"""

    fmt = FixedFormat(8, 4)
    if store is None:
        store = WeightStore()

    store.load("a", Helper.random_qtensor(rng, (3, 8), fmt), rng.integers(-50, 50, 8))
    store.load("b", Helper.random_qtensor(rng, (8, 4), fmt), rng.integers(-50, 50, 4))

    common = dict(activation=Activation.RELU, requant_shift=4, in_fmt=fmt, out_fmt=fmt)
    instructions = [
        Instruction(
            OpKind.MATMUL,
            4,
            3,
            8,
            ExternalMemory(0),
            "a",
            INPUT_BUFFER,
            OutputOrientation.ROW,
            name="first",
            **common,
        ),
        Instruction(
            OpKind.MATMUL_MAXPOOL,
            4,
            8,
            4,
            INPUT_BUFFER,
            "b",
            ExternalMemory(12),
            OutputOrientation.COLUMN,
            name="second",
            **common,
        ),
    ]
    return Program(
        instructions,
        store,
        TensorDesc("points", ExternalMemory(0), 4, 3, fmt),
        [TensorDesc("output", ExternalMemory(12), 1, 4, fmt)],
        16,
    )


@fixture
def toy_program(rng):
    return build_toy_program(rng)


class Helper:
    @staticmethod
    def random_qtensor(rng, dims, fmt):
        codes = rng.integers(fmt.min_code, fmt.max_code + 1, size=dims)
        return QTensor(codes, fmt)

    @staticmethod
    def naive_matmul(A, W, bias):
        """Triple-loop integer product, without any wraparound"""
        a = A.codes.tolist()
        w = W.codes.tolist()
        n, k_dim = A.dims
        c_dim = W.dims[1]
        out = []
        for i in range(n):
            row = []
            for j in range(c_dim):
                acc = int(bias[j])
                for k in range(k_dim):
                    acc += a[i][k] * w[k][j]
                row.append(acc)
            out.append(row)
        return out

    @staticmethod
    def q(bits, frac):
        return FixedFormat(bits, frac)


@fixture
def helper():
    return Helper


def pytest_configure(config):
    """Declare the custom markers in pytest's '--markers' helper option"""
    config.addinivalue_line("markers", "slow: Test taking more than a few seconds")
    config.addinivalue_line(
        "markers", "network: Test opening UDP sockets on the loopback interface"
    )
