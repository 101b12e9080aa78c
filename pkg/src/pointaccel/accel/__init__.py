"""Simulated PointNet accelerator

A :py:class:`Program` is built from instructions referring to weights of a
:py:class:`WeightStore`, then executed by an :py:class:`Accelerator`.
"""

from .perf import MachineParams, PerfReport, estimate_latency
from .program import (
    INPUT_BUFFER,
    ExternalMemory,
    InputBuffer,
    Instruction,
    OpKind,
    Program,
    TensorDesc,
    WeightBuffer,
)
from .sim import Accelerator, FsmState, Run, fsm_trace, run_program
from .store import WeightStore, load_weights

__all__ = [
    "Accelerator",
    "ExternalMemory",
    "FsmState",
    "INPUT_BUFFER",
    "InputBuffer",
    "Instruction",
    "MachineParams",
    "OpKind",
    "PerfReport",
    "Program",
    "Run",
    "TensorDesc",
    "WeightBuffer",
    "WeightStore",
    "estimate_latency",
    "fsm_trace",
    "load_weights",
    "run_program",
]
