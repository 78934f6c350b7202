"""Headless property suites behind `cbi check --self-test`.

Five checks, fixed seeds throughout:
  multi-exec-oracle      ActuationSet == exhaustive 3^k union on random programs
  consolidation          master == isolated runs on disjoint pairs; timing gate
  fp-pruning             mismatched benign plant: single-mode FPR > 0, multi == 0
  attack-recall          every shipped attack window detected; replay latency bound
  roc-regression         threshold sweep monotone, multi <= single, golden CSV match
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from itertools import product

from .consolidate import consolidate
from .errors import TimingViolation
from .monitor import MonitorConfig, roc_csv, roc_sweep, run_stream
from .plants import attack_suite, data_dir, default_plant, default_sim_config
from .plantsim import simulate
from .progen import GenSpec, generate_source, random_margins, random_snapshot
from .runtime import compile_model, run_cycle, run_cycle_multi
from .stlang.parser import parse_program
from .stlang.typecheck import typecheck


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return passed, detail, time.perf_counter() - t0


def _compile_source(source: str):
    prog, lib = parse_program(source)
    typecheck(prog, lib)
    model = consolidate([prog], [lib])
    return compile_model(model)


# ------------------------------------------------------------- criterion 1


def check_multi_exec_oracle(trials: int = 1000, seed: int = 11, max_tainted: int = 4) -> CheckResult:
    def body():
        mismatches = 0
        rng = random.Random(seed)
        for i in range(trials):
            prog = _compile_source(generate_source(seed * 1000 + i, GenSpec(max_if_depth=4)))
            state = prog.initial_state()
            sensors = random_snapshot(rng, prog)
            eps = random_margins(rng, prog, max_tainted=max_tainted)
            _, aset = run_cycle_multi(prog, state, sensors, eps)
            margins = [(n, e) for n, _s, _t in prog.sensors for k, e in eps.items() if k == n and e > 0]
            union = {name: set() for name, _, _ in prog.actuators}
            for deltas in product((-1, 0, 1), repeat=len(margins)):
                pert = dict(sensors)
                for (name, e), d in zip(margins, deltas):
                    pert[name] = sensors[name] + d * e
                _, acts = run_cycle(prog, state, pert)
                for k, v in acts.items():
                    union[k].add(v)
            if {k: frozenset(v) for k, v in union.items()} != dict(aset.values):
                mismatches += 1
        return mismatches == 0, f"{trials} programs, {mismatches} oracle mismatches"

    passed, detail, dt = _timed(body)
    return CheckResult("multi-exec-oracle", passed, detail, dt)


# ------------------------------------------------------------- criterion 2


def check_consolidation_preservation(pairs: int = 100, snapshots: int = 100, seed: int = 7) -> CheckResult:
    def body():
        bad = 0
        for i in range(pairs):
            rng = random.Random(seed + i)
            srcs = [
                generate_source(seed * 2000 + 2 * i + k, GenSpec(n_locals=2), name=f"p{k}", prefix=f"Z{k}")
                for k in (0, 1)
            ]
            parsed = [parse_program(s) for s in srcs]
            for prog_ast, lib in parsed:
                typecheck(prog_ast, lib)
            progs = [p for p, _ in parsed]
            libs = [l for _, l in parsed]
            merged = compile_model(consolidate(progs, libs))
            solo = [compile_model(consolidate([p], [l])) for p, l in parsed]
            st_m = merged.initial_state()
            st_s = [p.initial_state() for p in solo]
            for _ in range(snapshots):
                snaps = [random_snapshot(rng, p) for p in solo]
                st_m, acts_m = run_cycle(merged, st_m, {**snaps[0], **snaps[1]})
                acts_iso = {}
                for j in (0, 1):
                    st_s[j], acts = run_cycle(solo[j], st_s[j], snaps[j])
                    acts_iso.update(acts)
                if acts_m != acts_iso:
                    bad += 1
                    break
        # the timing gate, strict boundary included
        def budgeted(ms, interval):
            src = (
                "PROGRAM t VAR_INPUT END_VAR END_PROGRAM\n"
                f"CONFIGURATION c RESOURCE r ON PLC TASK Main(INTERVAL := T#{interval}ms, PRIORITY := 0);"
                " PROGRAM i WITH Main : t; END_RESOURCE END_CONFIGURATION"
            )
            prog, _ = parse_program(src)
            prog.exec_budget_ms = ms
            return prog

        from .consolidate import check_timing

        timing_ok = True
        try:
            check_timing([budgeted(5, 1000), budgeted(5, 1000)])
        except TimingViolation:
            timing_ok = False
        for budgets, intervals in (((600, 500), (1000, 2000)), ((1000,), (1000,))):
            try:
                check_timing([budgeted(b, i) for b, i in zip(budgets, intervals)])
                timing_ok = False  # these must be rejected
            except TimingViolation:
                pass
        return bad == 0 and timing_ok, f"{pairs} disjoint pairs x {snapshots} snapshots, {bad} divergences"

    passed, detail, dt = _timed(body)
    return CheckResult("consolidation", passed, detail, dt)


# ------------------------------------------------------------- criterion 3


def check_false_positive_pruning(cycles: int = 10000) -> CheckResult:
    def body():
        programs, libs, model, topology, tau, eps = default_plant()
        cfg = default_sim_config(topology, cycles=cycles)
        stream = [r for _t, r in simulate(cfg, programs, libs)]
        _, s_single = run_stream(
            model, topology, stream, MonitorConfig(tau=tau, eps=eps, mode="single")
        )
        _, s_multi = run_stream(
            model, topology, stream, MonitorConfig(tau=tau, eps=eps, mode="lazy")
        )
        ok = s_single["fpr"] > 0.0 and s_multi["fpr"] == 0.0
        return ok, (
            f"{cycles} benign cycles at +2% F_c mismatch: single FPR {s_single['fpr']:.4f}, "
            f"lazy multi FPR {s_multi['fpr']:.4f}"
        )

    passed, detail, dt = _timed(body)
    return CheckResult("fp-pruning", passed, detail, dt)


# ------------------------------------------------------------- criterion 4


def replay_latency_bound(attack, topology, tau, truth) -> int:
    """ceil(tau / (rate * F_c)) with the rate read analytically from the
    modeled flows and the gate states at the window edges; falls back to the
    window length when the divergence rate is negligible."""
    flows = {f.flow_sensor: f for f in topology.flows}
    tank = next(t for t in topology.tanks if t.level_sensor == attack.sensor)

    def net(gates):
        total = 0.0
        for name, sign in [(n, 1.0) for n in tank.inflow] + [(n, -1.0) for n in tank.outflow]:
            rate = flows[name].base_rate
            for g in flows[name].gates:
                rate *= 1.0 if gates[g] else 0.0
            total += sign * rate
        return total

    divergence = abs(net(truth[attack.window[0]].actuators) - net(truth[attack.recorded_from].actuators))
    divergence *= tank.f_c
    tau_level = tau.of(attack.sensor)
    if divergence > tau_level / 10:
        return math.ceil(tau_level / divergence)
    return attack.window[1] - attack.window[0]


def check_attack_recall() -> CheckResult:
    def body():
        programs, libs, model, topology, tau, eps = default_plant()
        attacks = attack_suite()
        cycles = max(a.window[1] for a in attacks) + 200
        cfg = default_sim_config(topology, cycles=cycles)
        pairs = list(simulate(cfg, programs, libs, attacks))
        stream = [r for _t, r in pairs]
        truth = [t for t, _r in pairs]
        verdicts, summary = run_stream(
            model, topology, stream, MonitorConfig(tau=tau, eps=eps, mode="lazy"),
            windows=[a.window for a in attacks],
        )
        missed = [a.name for a in attacks if not any(
            not v.ok and a.window[0] <= v.cycle_index <= a.window[1] for v in verdicts
        )]
        latency_bad = []
        for a in attacks:
            if a.kind != "sensor_replay" or a.stealth:
                continue
            bound = replay_latency_bound(a, topology, tau, truth)
            first = next(
                (v.cycle_index for v in verdicts if not v.ok and a.window[0] <= v.cycle_index <= a.window[1]),
                None,
            )
            if first is None or (first - a.window[0] + 1) > bound + 1:
                latency_bad.append((a.name, first, bound))
        ok = not missed and not latency_bad
        detail = f"{len(attacks)} attacks, recall {summary['tpr']:.0%}"
        if missed:
            detail += f", missed {missed}"
        if latency_bad:
            detail += f", latency violations {latency_bad}"
        return ok, detail

    passed, detail, dt = _timed(body)
    return CheckResult("attack-recall", passed, detail, dt)


# ------------------------------------------------------------- criterion 5

ROC_TAUS = [0.02, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 80.0, 1000.0]
ROC_BENIGN_CYCLES = 3000


def compute_roc_points():
    programs, libs, model, topology, tau, eps = default_plant()
    attacks = attack_suite()
    cfg_b = default_sim_config(topology, cycles=ROC_BENIGN_CYCLES)
    benign = [r for _t, r in simulate(cfg_b, programs, libs)]
    cycles = max(a.window[1] for a in attacks) + 200
    cfg_a = default_sim_config(topology, cycles=cycles)
    attacked = [r for _t, r in simulate(cfg_a, programs, libs, attacks)]
    return roc_sweep(
        model, topology, lambda: iter(benign), lambda: iter(attacked),
        [a.window for a in attacks], ROC_TAUS, eps, tau,
    )


def check_roc_regression(write_golden: bool = False) -> CheckResult:
    def body():
        points = compute_roc_points()
        text = roc_csv(points)
        golden_path = data_dir() / "roc_golden.csv"
        if write_golden:
            golden_path.write_text(text)
        problems = []
        by_mode: dict = {}
        for p in points:
            by_mode.setdefault(p.mode, []).append(p)
        for mode, pts in by_mode.items():
            fprs = [p.fpr for p in sorted(pts, key=lambda p: p.tau_level)]
            if any(a < b - 1e-12 for a, b in zip(fprs, fprs[1:])):
                problems.append(f"{mode} FPR not non-increasing in tau")
        singles = {p.tau_level: p.fpr for p in by_mode.get("single", [])}
        multis = {p.tau_level: p.fpr for p in by_mode.get("multi", [])}
        if any(multis[t] > singles[t] + 1e-12 for t in singles):
            problems.append("multi FPR above single FPR")
        golden = golden_path.read_text() if golden_path.exists() else None
        if golden is None:
            problems.append("golden CSV missing")
        elif golden != text:
            problems.append("golden CSV mismatch")
        return not problems, "; ".join(problems) if problems else f"{len(points)} points match golden"

    passed, detail, dt = _timed(body)
    return CheckResult("roc-regression", passed, detail, dt)


# ----------------------------------------------------------------- the suite


def run_all(fast: bool = False) -> list:
    if fast:
        return [
            check_multi_exec_oracle(trials=120),
            check_consolidation_preservation(pairs=20, snapshots=25),
            check_false_positive_pruning(cycles=2500),
            check_attack_recall(),
            check_roc_regression(),
        ]
    return [
        check_multi_exec_oracle(),
        check_consolidation_preservation(),
        check_false_positive_pruning(),
        check_attack_recall(),
        check_roc_regression(),
    ]
