#!/usr/bin/env python

import numpy as np

from pointaccel.accel import Accelerator
from pointaccel.fixq import quantize
from pointaccel.pointnet import (
    build_network,
    compile_network,
    quantize_weights,
    random_weights,
)
from pointaccel.velodyne import (
    RoiBox,
    assemble_frame,
    fit_to_capacity,
    roi_filter,
    synthetic_revolution,
)


def corridor(azimuths):
    """Ranges of a sensor driving between two walls 8 m apart"""
    alpha = np.radians(azimuths)[:, None]
    side = np.abs(np.sin(alpha)) + 1e-3
    return np.broadcast_to(np.minimum(4 / side, 100.0), (len(alpha), 32))


records = synthetic_revolution(3, distances=corridor)

roi = RoiBox(-5, 5, 0, 40)
frames = []
for polar in assemble_frame(records):
    cloud = roi_filter(polar.to_cartesian(), roi)
    frames.extend(fit_to_capacity(cloud))
    print(f"frame #{polar.index}: {len(polar)} returns, {len(cloud)} in the region")

# Same weights for every frame, quantized on the first one
rng = np.random.default_rng(0)
graph = build_network("vanilla-cls", len(frames[0]), 10)
weights = random_weights(graph, rng)
qweights = quantize_weights(graph, weights, 8, frames[0].points)

for frame in frames:
    graph = build_network("vanilla-cls", len(frame), 10)
    run = Accelerator().run(
        compile_network(graph, qweights), quantize(frame.points, qweights.input_fmt)
    )
    scores = run["output"].dequantize()[0]
    print(
        f"frame #{frame.index}: class {scores.argmax()} "
        f"in {run.report.latency_s * 1e3:.2f} ms"
    )
