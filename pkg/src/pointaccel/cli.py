"""Command-line interface

.. code-block:: text

    pointaccel quantize float.pnqw int8.pnqw --net cls --bits 8 --calib frame.csv
    pointaccel decode --in drive.vlpcap --out frames/
    pointaccel infer --net cls --weights int8.pnqw --points frames/frame-0000.csv
    pointaccel bench --net seg --bits 16

Exit codes are 0 on success, 2 for unreadable or malformed inputs, 3 when
the weights do not match the network, and 4 when a hardware capacity is
exceeded. The verbosity is set by ``-v`` flags or by the ``POINTACCEL_LOG``
environment variable (debug, info, warning or error).
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .accel import Accelerator, MachineParams, estimate_latency
from .constants import MAX_POINTS
from .errors import (
    CapacityError,
    ContainerError,
    FormatError,
    ParseError,
    PointAccelError,
    ProgramError,
    ShapeError,
    UnknownNetworkError,
)
from .fixq import quantize
from .io import container
from .io.capture import iter_capture
from .io.points import read_points, write_labels, write_points
from .io.report import dump as dump_report
from .pointnet import (
    NetworkKind,
    QuantizedWeightSet,
    build_network,
    compile_network,
    count_ops,
    measured_performance,
    quantize_weights,
    random_weights,
)
from .tilemm import TileConfig
from .velodyne import (
    FrameAssembler,
    Partition,
    RoiBox,
    Subsample,
    fit_to_capacity,
    listen,
    roi_filter,
)

__all__ = ["main"]

log = logging.getLogger(__name__)

EXIT_FORMAT = 2
EXIT_MISMATCH = 3
EXIT_CAPACITY = 4

LEVELS = ["warning", "info", "debug"]


def _network(kind, n, weights=None):
    """Network graph whose number of classes follows the weights, if any"""

    kind = NetworkKind.parse(kind)
    last = build_network(kind, 1).output.name

    classes = None
    if weights is not None and last in weights:
        entry = weights[last]
        if isinstance(weights, QuantizedWeightSet):
            classes = entry.weights.dims[1] if entry.weights is not None else None
        else:
            classes = np.shape(entry.W)[1]

    if kind is NetworkKind.SEG:
        return build_network(kind, n, m=classes)
    return build_network(kind, n, k=classes)


def _tile(text):
    try:
        return TileConfig.parse(text)
    except (ValueError, FormatError) as e:
        raise argparse.ArgumentTypeError(f"invalid tile '{text}': {e}")


def _roi(text):
    try:
        return RoiBox.parse(text)
    except FormatError as e:
        raise argparse.ArgumentTypeError(str(e))


def cmd_quantize(args):
    """Fold, quantize and store the parameters of a trained network"""

    weights = container.unpack_weights(container.load(args.input))
    if isinstance(weights, QuantizedWeightSet):
        raise ContainerError(f"{args.input} is already quantized")

    calib = None
    n = MAX_POINTS
    if args.calib:
        calib = read_points(args.calib).points
        n = len(calib)

    graph = _network(args.net, n, weights)
    qweights = quantize_weights(graph, weights, args.bits, calib)
    container.dump(container.pack_weights(qweights), args.output)

    folded = weights.folded()
    for layer in graph.weighted:
        W = folded[layer.name][0]
        qw = qweights[layer.name].weights
        fmt = qw.fmt
        inside = np.abs(W) <= fmt.max_code * fmt.lsb
        err = np.abs(qw.dequantize() - W)[inside]
        print(
            f"{layer.name:<12} {str(fmt):<7} "
            f"max_err={(err.max() if err.size else 0.0):.3e} "
            f"half_ulp={fmt.lsb / 2:.3e} "
            f"saturated={quantize(W, fmt).saturated}"
        )

    print(f"input        {qweights.input_fmt}")
    log.info(f"{len(graph.weighted)} layers quantized to {args.output}")


def _records(source, frames, timeout):
    """Records of a capture file, or of a live sensor for 'udp:PORT'"""

    if source.startswith("udp:"):
        try:
            port = int(source[4:])
        except ValueError:
            raise ParseError(f"Invalid source '{source}'") from None

        with listen(port) as stream:
            while True:
                record = stream.get(timeout=timeout)
                if record is None:
                    log.info(f"No packet for {timeout} s, stopping")
                    return
                yield record
                if frames is not None and frames.done:
                    return
    else:
        with open(source, "rb") as fp:
            yield from iter_capture(fp)


class _Counter:
    def __init__(self, limit):
        self.limit = limit
        self.frames = 0

    @property
    def done(self):
        return self.limit is not None and self.frames >= self.limit


def cmd_decode(args):
    """Convert sensor packets into point cloud files, one per frame"""

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    mode = Partition() if args.mode == "partition" else Subsample(args.seed)
    counter = _Counter(args.frames)
    decoded = in_roi = kept = files = 0

    def emit(polar):
        nonlocal decoded, in_roi, kept, files
        cloud = polar.to_cartesian()
        region = roi_filter(cloud, args.roi)
        parts = fit_to_capacity(region, args.cap, mode)

        for j, part in enumerate(parts):
            name = f"frame-{polar.index:04d}"
            if len(parts) > 1:
                name += f"-{j}"
            write_points(part, out / f"{name}.csv")
            files += 1

        decoded += len(cloud)
        in_roi += len(region)
        kept += sum(len(p) for p in parts)
        counter.frames += 1

    assembler = FrameAssembler()
    for _, payload in _records(args.input, counter, args.timeout):
        for polar in assembler.feed(payload):
            if not counter.done:
                emit(polar)
        if counter.done:
            break

    if not counter.done:
        last = assembler.flush()
        if last is not None:
            emit(last)

    print(
        f"frames={counter.frames} files={files} decoded={decoded} roi={in_roi} "
        f"capped={kept} rejected={assembler.rejected} "
        f"out_of_order={assembler.dropped_out_of_order}"
    )


def cmd_infer(args):
    """Run a quantized network on the simulated accelerator"""

    frame = read_points(args.points)
    if len(frame) > MAX_POINTS:
        raise CapacityError(
            f"{len(frame)} points exceed the capacity of {MAX_POINTS} points"
        )

    qweights = container.unpack_weights(container.load(args.weights))
    if not isinstance(qweights, QuantizedWeightSet):
        raise ShapeError(f"{args.weights} holds float weights, quantize them first")

    bits = qweights.bits if args.bits is None else args.bits
    if bits != qweights.bits:
        raise ShapeError(f"{args.weights} is a {qweights.bits}-bit network, not {bits}")

    graph = _network(args.net, len(frame), qweights)
    program = compile_network(graph, qweights)

    params = MachineParams.for_bits(bits, tile=args.tile)
    run = Accelerator(params).run(program, quantize(frame.points, qweights.input_fmt))
    scores = run["output"].dequantize()

    if graph.kind is NetworkKind.SEG:
        labels = scores.argmax(axis=1)
        if args.labels:
            write_labels(labels, args.labels)
        else:
            print("label")
            for label in labels:
                print(f"{label:d}")
    else:
        print(f"class {int(scores[0].argmax()):d}")
        print("scores " + ",".join(f"{v:.6f}" for v in scores[0]))

    if args.report:
        with open(args.report, "w") as fp:
            dump_report(run.report, fp, fmt=args.format)

    log.info(
        f"{run.report.latency_s * 1e3:.3f} ms modeled, "
        f"{run.saturation_events} saturation events"
    )


def cmd_bench(args):
    """Performance model of a network, compared to the measured accelerator"""

    graph = build_network(args.net, args.n)
    weights = random_weights(graph, np.random.default_rng(args.seed))
    program = compile_network(graph, quantize_weights(graph, weights, args.bits))

    params = MachineParams.for_bits(args.bits, tile=args.tile, clock_hz=args.clock)
    report = estimate_latency(program, params)
    ops = count_ops(graph)

    lines = [
        ("network", graph.kind.value),
        ("points", graph.n_points),
        ("bits", args.bits),
        ("tile", f"{params.tile.m_unroll}x{params.tile.n_unroll}"),
        ("macs", ops.macs),
        ("ops", ops.ops),
        ("compute_cycles", report.compute_cycles),
        ("dma_cycles", report.dma_cycles),
        ("total_cycles", report.total_cycles),
        ("latency_ms", f"{report.latency_s * 1e3:.3f}"),
        ("effective_gops", f"{report.effective_gops:.1f}"),
        ("roofline_gops", f"{params.roofline_gops:.1f}"),
        ("fps", f"{report.fps:.1f}"),
    ]

    measured = measured_performance(graph.kind, args.bits)
    if measured is not None and graph.n_points == MAX_POINTS:
        lines += [
            ("measured_gops", f"{measured.gops:.1f}"),
            ("measured_latency_ms", f"{measured.latency_s * 1e3:.1f}"),
            ("measured_ops", f"{measured.ops:.4g}"),
            ("consistency", f"{ops.ops / measured.ops:.4f}"),
            ("measured_fps", f"{measured.fps:.1f}"),
        ]

    for key, value in lines:
        print(f"{key:<20} {value}")


def _parser():
    nets = [k.value for k in NetworkKind]

    parser = argparse.ArgumentParser(
        prog="pointaccel", description="PointNet accelerator model"
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="increase verbosity"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help=cmd_quantize.__doc__)
    p.add_argument("input", help="float weight container")
    p.add_argument("output", help="quantized weight container")
    p.add_argument("--net", choices=nets, required=True)
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.add_argument("--calib", help="calibration point cloud (CSV)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("decode", help=cmd_decode.__doc__)
    p.add_argument("--in", dest="input", required=True, help="capture file or udp:PORT")
    p.add_argument("--out", required=True, help="directory of the CSV files")
    p.add_argument("--roi", type=_roi, default=RoiBox(), help="x0,x1,y0,y1")
    p.add_argument("--cap", type=int, default=MAX_POINTS)
    p.add_argument("--mode", choices=("subsample", "partition"), default="subsample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, help="stop after this many frames")
    p.add_argument(
        "--timeout", type=float, default=1.0, help="seconds without packets (UDP)"
    )
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("infer", help=cmd_infer.__doc__)
    p.add_argument("--net", choices=nets, required=True)
    p.add_argument("--weights", required=True, help="quantized weight container")
    p.add_argument("--points", required=True, help="point cloud (CSV)")
    p.add_argument("--bits", type=int, choices=(8, 16))
    p.add_argument("--tile", type=_tile, default=TileConfig(), help="M,N")
    p.add_argument("--report", help="performance report file")
    p.add_argument("--format", choices=("kvn", "xml"))
    p.add_argument("--labels", help="per-point labels file (segmentation)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help=cmd_bench.__doc__)
    p.add_argument("--net", choices=nets, default="cls")
    p.add_argument("--n", type=int, default=MAX_POINTS)
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.add_argument("--clock", type=float, help="accelerator clock in Hz")
    p.add_argument("--tile", type=_tile, default=TileConfig(), help="M,N")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def _setup_logging(verbose):
    level = os.environ.get("POINTACCEL_LOG", "warning").lower()
    if verbose:
        level = LEVELS[min(verbose, len(LEVELS) - 1)]
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    """Entry point of the ``pointaccel`` command

    Return:
        int: exit code
    """

    args = _parser().parse_args(argv)
    _setup_logging(args.verbose)

    try:
        args.func(args)
    except CapacityError as e:
        print(f"capacity exceeded: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ShapeError, ProgramError) as e:
        print(f"weights do not match the network: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ParseError, FormatError, UnknownNetworkError, OSError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except PointAccelError as e:  # pragma: no cover
        print(f"error: {e}", file=sys.stderr)
        return 1

    return 0
