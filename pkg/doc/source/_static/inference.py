#!/usr/bin/env python

import numpy as np

from pointaccel.accel import Accelerator, MachineParams
from pointaccel.accel.perf import schedule
from pointaccel.fixq import quantize
from pointaccel.tilemm import TileConfig
from pointaccel.pointnet import (
    build_network,
    compile_network,
    count_ops,
    quantize_weights,
    random_weights,
)

rng = np.random.default_rng(42)
points = rng.uniform(-1, 1, (512, 3))

# 16 bits classifier, on a 16x16 processing array
graph = build_network("cls", len(points))
qweights = quantize_weights(graph, random_weights(graph, rng, bn=True), 16, points)
program = compile_network(graph, qweights)
params = MachineParams.for_bits(16, tile=TileConfig(16, 16))

run = Accelerator(params).run(program, quantize(points, qweights.input_fmt))

print("     Layer           Compute      Load     Store    Stage")
print("=" * 57)
for instr, stage in zip(program, schedule(program, params)):
    print(
        f"{instr.name:18} {stage.compute:>9} {stage.load:>9} {stage.store:>9} "
        f"{stage.duration:>8}"
    )

report = run.report
print()
print(f"MACs          {count_ops(graph).macs:,}")
print(f"Latency       {report.latency_s * 1e3:.3f} ms ({report.fps:.1f} frames/s)")
print(f"Throughput    {report.effective_gops:.1f} GOPS of {params.roofline_gops:.1f}")
print(f"Saturations   {run.saturation_events}")
print(f"Class         {run['output'].dequantize()[0].argmax()}")
