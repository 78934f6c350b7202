"""Deterministic scan-cycle interpreter with error-margin multi-execution."""

from .depgraph import BranchDependency, sensor_dependent_branches
from .irgen import ExecProgram, compile_model
from .kernel import KERNEL_NAME
from .machine import (
    DEFAULT_FORK_CAP, ActuationSet, ErrorMarginSpec, MachineState,
    ensure_compiled, run_cycle, run_cycle_multi, run_cycle_traced, taint_eval,
)

__all__ = [
    "ActuationSet", "BranchDependency", "DEFAULT_FORK_CAP", "ErrorMarginSpec",
    "ExecProgram", "KERNEL_NAME", "MachineState", "compile_model",
    "ensure_compiled", "run_cycle", "run_cycle_multi", "run_cycle_traced",
    "sensor_dependent_branches", "taint_eval",
]
