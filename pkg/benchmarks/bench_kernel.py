"""Compares the compiled and pure-Python scan-cycle kernels.

Run:  python benchmarks/bench_kernel.py [--cycles N]

Times raw kernel cycles (run_cycle on the consolidated master) and the full
monitor loop (predict + execute + verify) on the bundled 3-stage plant and
on a 13-stage ring (the ~50-variable scale target).
"""

from __future__ import annotations

import argparse
import statistics
import time

import cbi.runtime.machine as machine
from cbi.monitor import MonitorConfig, run_stream
from cbi.plants import chain_plant, chain_sim_config, default_plant, default_sim_config
from cbi.plantsim import simulate
from cbi.progen import random_snapshot
from cbi.runtime import compile_model, run_cycle
from cbi.runtime._kernel_py import run_kernel as pure_kernel

try:
    from cbi.runtime._kernel import run_kernel as compiled_kernel
except ImportError:
    compiled_kernel = None


def time_run_cycle(prog, snapshots, kernel) -> float:
    machine.run_kernel = kernel
    state = prog.initial_state()
    t0 = time.perf_counter()
    for snap in snapshots:
        state, _ = run_cycle(prog, state, snap)
    return len(snapshots) / (time.perf_counter() - t0)


def time_monitor(model, topology, stream, tau, eps, kernel) -> float:
    machine.run_kernel = kernel
    cfg = MonitorConfig(tau=tau, eps=eps, mode="single")
    t0 = time.perf_counter()
    run_stream(model, topology, stream, cfg, collect=False)
    return len(stream) / (time.perf_counter() - t0)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--cycles", type=int, default=20000)
    args = parser.parse_args()

    kernels = [("pure-python", pure_kernel)]
    if compiled_kernel is not None:
        kernels.insert(0, ("cython", compiled_kernel))
    else:
        print("compiled kernel not built; benchmarking pure Python only")

    import random

    rng = random.Random(0)

    print(f"\n== raw run_cycle, Fig.5-style 2-PLC master, {args.cycles} cycles ==")
    programs, libs, model, topology, tau, eps = default_plant()
    prog = compile_model(model)
    snaps = [random_snapshot(rng, prog) for _ in range(args.cycles)]
    for name, kernel in kernels:
        print(f"  {name:12s} {time_run_cycle(prog, snaps, kernel):>12,.0f} cycles/s")

    stages = 13
    print(f"\n== monitor loop, {stages}-stage ring (~50 variables), {args.cycles} cycles ==")
    programs, libs, model, topology, tau, eps = chain_plant(stages)
    sim_cfg = chain_sim_config(topology, stages, cycles=args.cycles)
    stream = [r for _t, r in simulate(sim_cfg, programs, libs)]
    rates = {}
    for name, kernel in kernels:
        rates[name] = time_monitor(model, topology, stream, tau, eps, kernel)
        print(f"  {name:12s} {rates[name]:>12,.0f} cycles/s")
    if len(rates) == 2:
        print(f"  speedup: {rates['cython'] / rates['pure-python']:.2f}x")


if __name__ == "__main__":
    main()
