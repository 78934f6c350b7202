"""The detection loop: per cycle, verify reported sensors against predicted
intervals, execute the consolidated master on the estimated state, and verify
reported actuations against the admissible set.

The master executes on predicted sensor centers (passthrough sensors fall
back to the reported values), mirroring the monitor-side simulation the
architecture calls for: a deviation therefore means the real system and the
simulated one disagree beyond the configured margins. Accepted snapshots
re-anchor both the estimator and the machine's actuator latches, closing
the loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError, EvalError, ForkBudgetExceeded, LabelMissingError
from .estimate import PlantTopology, PredictPlan, ThresholdSpec, predict, predict_n
from .historian import CycleSnapshot
from .runtime import (
    DEFAULT_FORK_CAP, ErrorMarginSpec, ensure_compiled, run_cycle, run_cycle_multi,
)

OK = "OK"
SENSOR_DEVIATION = "SensorDeviation"
ACTUATION_DEVIATION = "ActuationDeviation"
MODEL_FAULT = "ModelFault"

MODES = ("single", "multi", "lazy")


@dataclass
class MonitorConfig:
    tau: ThresholdSpec
    eps: dict = field(default_factory=dict)
    mode: str = "lazy"
    on_alarm: str = "continue"  # continue | halt
    predict_ahead: int = 1  # n-cycle simulation interval (1 = classic closed loop)
    fork_cap: int = DEFAULT_FORK_CAP

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.on_alarm not in ("continue", "halt"):
            raise ConfigError(f"on_alarm must be continue or halt, got {self.on_alarm!r}")
        if self.predict_ahead < 1:
            raise ConfigError("predict_ahead must be >= 1")
        if isinstance(self.eps, ErrorMarginSpec):
            self.eps = dict(self.eps.eps)


@dataclass
class DetectionVerdict:
    cycle_index: int
    status: str
    details: list = field(default_factory=list)  # {variable, reported, expected}
    mode: str = "single"

    @property
    def ok(self) -> bool:
        return self.status == OK

    def to_json(self) -> str:
        return json.dumps(
            {
                "cycle_index": self.cycle_index,
                "status": self.status,
                "mode": self.mode,
                "details": self.details,
            },
            sort_keys=True,
        )


def _interval_json(interval):
    return [interval.lo, interval.hi]


class Monitor:
    """Stateful per-stream monitor; one instance per historian stream."""

    def __init__(self, model, topology: PlantTopology, cfg: MonitorConfig):
        self.model = model
        self.prog = ensure_compiled(model)
        self.topology = topology
        topology.validate_against(model)
        self.cfg = cfg
        self.sensor_names = [name for name, _s, _t in self.prog.sensors]
        self.actuator_names = [name for name, _s, _t in self.prog.actuators]
        self.actuator_slots = [(name, slot) for name, slot, _t in self.prog.actuators]
        self.plan = PredictPlan(topology, cfg.tau, self.sensor_names, self.actuator_names)
        self.machine = self.prog.initial_state()
        self.anchor: CycleSnapshot | None = None
        # actuator maps of [anchor .. latest accepted]; entry k gates step k+1
        self.window_accepted: list = []
        self.accepted: CycleSnapshot | None = None

    # ------------------------------------------------------------- lifecycle

    def start(self, first: CycleSnapshot) -> DetectionVerdict:
        """Accept the first snapshot as the baseline anchor."""
        self._check_keys(first)
        self._accept(first, reset_anchor=True)
        return DetectionVerdict(first.cycle_index, OK, [], self.cfg.mode)

    def step(self, incoming: CycleSnapshot) -> DetectionVerdict:
        if self.accepted is None:
            return self.start(incoming)
        if incoming.cycle_index != self.accepted.cycle_index + 1:
            verdict = DetectionVerdict(
                incoming.cycle_index,
                MODEL_FAULT,
                [{
                    "variable": "cycle_index",
                    "reported": incoming.cycle_index,
                    "expected": self.accepted.cycle_index + 1,
                    "reason": "stream gap",
                }],
                self.cfg.mode,
            )
            self._accept(incoming, reset_anchor=True)
            return verdict
        self._check_keys(incoming)

        # phase 1: sensor estimates from the accepted history
        if self.cfg.predict_ahead == 1:
            pred = predict(self.topology, self.accepted, self.cfg.tau, plan=self.plan)
        else:
            pred = predict_n(
                self.topology,
                self.anchor,
                self.cfg.tau,
                len(self.window_accepted),
                schedule=self.window_accepted,
                plan=self.plan,
            )
        violations = []
        for name in self.sensor_names:
            reported = incoming.sensors[name]
            interval = pred.intervals[name]
            if not interval.contains(float(reported)):
                violations.append(
                    {"variable": name, "reported": reported, "expected": _interval_json(interval)}
                )
        if violations:
            self._accept_after_alarm(incoming)
            return DetectionVerdict(incoming.cycle_index, SENSOR_DEVIATION, violations, self.cfg.mode)

        # phase 2: admissible actuations from the estimated state
        est_inputs = {
            name: pred.centers.get(name, incoming.sensors[name]) for name in self.sensor_names
        }
        try:
            new_state, acts = run_cycle(self.prog, self.machine, est_inputs)
            mismatched = [
                name for name in self.actuator_names if incoming.actuators[name] != acts[name]
            ]
            details = []
            if mismatched and self.cfg.mode == "single":
                details = [
                    {"variable": n, "reported": incoming.actuators[n], "expected": [acts[n]]}
                    for n in mismatched
                ]
            elif mismatched or self.cfg.mode == "multi":
                new_state, aset = run_cycle_multi(
                    self.prog, self.machine, est_inputs, self.cfg.eps, fork_cap=self.cfg.fork_cap
                )
                details = [
                    {
                        "variable": n,
                        "reported": incoming.actuators[n],
                        "expected": sorted(aset.values[n], key=repr),
                    }
                    for n in self.actuator_names
                    if not aset.contains(n, incoming.actuators[n])
                ]
        except (EvalError, ForkBudgetExceeded) as e:
            self._accept_after_alarm(incoming)
            return DetectionVerdict(
                incoming.cycle_index,
                MODEL_FAULT,
                [{"variable": "model", "reported": str(e), "expected": []}],
                self.cfg.mode,
            )
        if details:
            self._accept_after_alarm(incoming)
            return DetectionVerdict(incoming.cycle_index, ACTUATION_DEVIATION, details, self.cfg.mode)

        self.machine = new_state
        self._accept(incoming)
        return DetectionVerdict(incoming.cycle_index, OK, [], self.cfg.mode)

    # -------------------------------------------------------------- internals

    def _check_keys(self, snap: CycleSnapshot) -> None:
        if set(snap.sensors) != set(self.sensor_names):
            raise ConfigError(
                f"cycle {snap.cycle_index}: sensor columns {sorted(snap.sensors)} "
                f"do not match the model {sorted(self.sensor_names)}"
            )
        if set(snap.actuators) != set(self.actuator_names):
            raise ConfigError(f"cycle {snap.cycle_index}: actuator columns do not match the model")

    def _accept(self, snap: CycleSnapshot, reset_anchor: bool = False) -> None:
        # reported actuations re-anchor the machine's latches (closed loop)
        raw = self.machine.raw()
        acts = snap.actuators
        for name, slot in self.actuator_slots:
            raw[slot] = float(acts[name])
        self.accepted = snap
        if (
            reset_anchor
            or self.cfg.predict_ahead == 1
            or len(self.window_accepted) >= self.cfg.predict_ahead
        ):
            self.anchor = snap
            self.window_accepted = [snap.actuators]
        else:
            self.window_accepted.append(snap.actuators)

    def _accept_after_alarm(self, snap: CycleSnapshot) -> None:
        """Continue-mode re-anchor: the reported snapshot becomes the new
        baseline so estimation does not drift after an alarm."""
        self._accept(snap, reset_anchor=True)


def run_stream(model, topology, stream, cfg: MonitorConfig, windows=None, sink=None, collect=True):
    """Fold the monitor over a snapshot stream.

    Returns (verdicts, summary). With windows=[(start, end), ...] the summary
    carries tpr/fpr; alarms inside any window count toward detection, alarms
    outside count as false positives. sink, when given, receives every
    verdict as it is produced; collect=False keeps memory constant on long
    streams (the returned verdict list is then empty).
    """
    monitor = Monitor(model, topology, cfg)
    verdicts = []
    by_status: dict = {}
    cycles = 0
    alarms = 0
    fp_cycles = 0
    window_hits: dict = {}
    windows = [tuple(w) for w in windows] if windows else []
    halted = False
    for snap in stream:
        verdict = monitor.step(snap)
        if sink is not None:
            sink(verdict)
        if collect:
            verdicts.append(verdict)
        cycles += 1
        by_status[verdict.status] = by_status.get(verdict.status, 0) + 1
        if not verdict.ok:
            alarms += 1
            inside = [w for w in windows if w[0] <= verdict.cycle_index <= w[1]]
            if inside:
                for w in inside:
                    window_hits.setdefault(w, verdict.cycle_index)
            else:
                fp_cycles += 1
            if cfg.on_alarm == "halt":
                halted = True
                break
    benign_cycles = cycles - sum(min(w[1], cycles - 1) - w[0] + 1 for w in windows if w[0] < cycles)
    summary = {
        "cycles": cycles,
        "alarms": alarms,
        "by_status": dict(sorted(by_status.items())),
        "halted": halted,
        "fpr": (fp_cycles / benign_cycles) if benign_cycles > 0 else 0.0,
    }
    if windows:
        summary["tpr"] = sum(1 for w in windows if w in window_hits) / len(windows)
        summary["first_detection"] = {str(list(w)): window_hits.get(w) for w in windows}
    return verdicts, summary


@dataclass
class RocPoint:
    tau_level: float
    mode: str
    tpr: float
    fpr: float


def roc_sweep(model, topology, benign_factory, attacked_factory, windows, taus, eps, base_tau):
    """One (tpr, fpr) point per threshold per mode, sorted by threshold.

    benign_factory/attacked_factory are zero-argument callables returning
    fresh snapshot iterators (streams are consumed once per point).
    """
    if not windows:
        raise LabelMissingError("roc_sweep needs labeled attack windows for the attacked stream")
    points = []
    for mode in ("single", "multi"):
        for tau_level in sorted(taus):
            tau = base_tau.scaled_for_levels(topology, tau_level)
            cfg = MonitorConfig(tau=tau, eps=eps, mode="single" if mode == "single" else "lazy",
                                on_alarm="continue")
            _, benign_summary = run_stream(model, topology, benign_factory(), cfg, collect=False)
            _, attacked_summary = run_stream(
                model, topology, attacked_factory(), cfg, windows=windows, collect=False
            )
            points.append(
                RocPoint(tau_level=tau_level, mode=mode, tpr=attacked_summary["tpr"],
                         fpr=benign_summary["fpr"])
            )
    return points


def roc_csv(points) -> str:
    lines = ["tau,mode,tpr,fpr"]
    for p in points:
        lines.append(f"{p.tau_level:.9g},{p.mode},{p.tpr:.9g},{p.fpr:.9g}")
    return "\n".join(lines) + "\n"
