"""Closed-loop physical state estimation.

From the accepted snapshot of cycle n-1, predict admissible sensor intervals
for cycle n: gated flows evolve as base_rate * product of actuator gates,
tank levels advance by (inflow - outflow) * F_c with a +/- tau band clamped
to capacity. Sensors without a model are passthrough and never alarm; a
modeled sensor whose dependencies are missing from the snapshot is demoted
to passthrough with a logged warning.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .historian import CycleSnapshot
from .stlang.ast import ukey

log = logging.getLogger("cbi.estimate")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigError(f"interval lower bound {self.lo} exceeds upper bound {self.hi}")

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def intersect_clamped(self, bounds: "Interval") -> "Interval":
        """Intersection, collapsing to the nearest bound when disjoint."""
        lo = max(self.lo, bounds.lo)
        hi = min(self.hi, bounds.hi)
        if lo > hi:
            edge = bounds.hi if self.lo > bounds.hi else bounds.lo
            return Interval(edge, edge)
        return Interval(lo, hi)

    @property
    def center(self) -> float:
        return (self.lo + self.hi) / 2.0


PASSTHROUGH = Interval(-math.inf, math.inf)


@dataclass
class TankModel:
    level_sensor: str
    inflow: list  # flow sensor names
    outflow: list
    f_c: float
    capacity: Interval

    def __post_init__(self):
        if self.f_c <= 0:
            raise ConfigError(f"tank {self.level_sensor!r}: F_c must be > 0")


@dataclass
class FlowModel:
    flow_sensor: str
    base_rate: float
    gates: list  # actuator names


@dataclass
class PlantTopology:
    tanks: list = field(default_factory=list)
    flows: list = field(default_factory=list)

    def flow_by_sensor(self) -> dict:
        return {ukey(f.flow_sensor): f for f in self.flows}

    def modeled_sensors(self) -> set:
        names = {ukey(t.level_sensor) for t in self.tanks}
        names |= {ukey(f.flow_sensor) for f in self.flows}
        return names

    def validate_against(self, model) -> None:
        """Every referenced sensor/actuator must exist in the io map."""
        sensors = {ukey(e.name) for e in model.io_map.values() if e.role == "sensor"}
        actuators = {ukey(e.name) for e in model.io_map.values() if e.role == "actuator"}
        flow_names = {ukey(f.flow_sensor) for f in self.flows}
        for f in self.flows:
            if ukey(f.flow_sensor) not in sensors:
                raise ConfigError(f"flow sensor {f.flow_sensor!r} not in io map")
            for g in f.gates:
                if ukey(g) not in actuators:
                    raise ConfigError(f"flow {f.flow_sensor!r}: gate {g!r} is not an actuator")
        for t in self.tanks:
            if ukey(t.level_sensor) not in sensors:
                raise ConfigError(f"level sensor {t.level_sensor!r} not in io map")
            for name in [*t.inflow, *t.outflow]:
                if ukey(name) not in sensors and ukey(name) not in flow_names:
                    raise ConfigError(f"tank {t.level_sensor!r}: unknown flow {name!r}")


@dataclass(frozen=True)
class ThresholdSpec:
    """Per-sensor deviation threshold; sensors absent from the map have 0."""

    tau: dict = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for name, value in self.tau.items():
            if value < 0:
                raise ConfigError(f"threshold for {name!r} must be >= 0, got {value}")
            norm[ukey(name)] = float(value)
        object.__setattr__(self, "_norm", norm)

    def of(self, name: str) -> float:
        return self._norm.get(ukey(name), 0.0)

    def scaled_for_levels(self, topology: PlantTopology, tau_level: float) -> "ThresholdSpec":
        """Copy with every tank-level threshold replaced (ROC sweeps)."""
        levels = {ukey(t.level_sensor) for t in topology.tanks}
        out = {k: v for k, v in self.tau.items() if ukey(k) not in levels}
        for t in topology.tanks:
            out[t.level_sensor] = tau_level
        return ThresholdSpec(out)


@dataclass
class Prediction:
    intervals: dict  # sensor name -> Interval (every snapshot sensor)
    centers: dict  # modeled sensor name -> physical estimate (capacity-clamped)
    passthrough: set  # sensor names without usable models this cycle
    demoted: dict = field(default_factory=dict)  # sensor -> missing dependencies


class PredictPlan:
    """Key resolution and threshold lookups, done once per (topology, tau,
    snapshot column set) instead of per cycle."""

    __slots__ = ("flows", "tanks")

    def __init__(self, topology: PlantTopology, tau: ThresholdSpec, sensor_names, actuator_names):
        smap = {ukey(n): n for n in sensor_names}
        amap = {ukey(n): n for n in actuator_names}
        flow_index = {}
        self.flows = []  # (snapshot name or None, base_rate, [gate names], tau, missing gates)
        for f in topology.flows:
            name = smap.get(ukey(f.flow_sensor))
            gates = [amap.get(ukey(g)) for g in f.gates]
            missing = [g for g, resolved in zip(f.gates, gates) if resolved is None]
            flow_index[ukey(f.flow_sensor)] = len(self.flows)
            self.flows.append((name or f.flow_sensor, f.base_rate, gates, tau.of(f.flow_sensor), missing))
        self.tanks = []  # (name or None, [(kind, ref, sign)], f_c, cap, tau, missing)
        for t in topology.tanks:
            name = smap.get(ukey(t.level_sensor))
            terms = []
            missing = [] if name else [t.level_sensor]
            for ref, sign in [(n, 1.0) for n in t.inflow] + [(n, -1.0) for n in t.outflow]:
                key = ukey(ref)
                if key in flow_index:
                    terms.append(("flow", flow_index[key], sign))
                elif key in smap:
                    terms.append(("sensor", smap[key], sign))
                else:
                    missing.append(ref)
            self.tanks.append(
                (name or t.level_sensor, terms, t.f_c, t.capacity, tau.of(t.level_sensor), missing)
            )


def predict(
    topology: PlantTopology, accepted: CycleSnapshot, tau: ThresholdSpec, plan: PredictPlan = None
) -> Prediction:
    """Admissible sensor intervals for the cycle after `accepted`."""
    if plan is None:
        plan = PredictPlan(topology, tau, accepted.sensors.keys(), accepted.actuators.keys())
    demoted: dict = {}
    acts = accepted.actuators
    sensors = accepted.sensors
    intervals: dict = {}
    centers: dict = {}

    rates = []
    for name, base, gates, t, missing in plan.flows:
        if missing:
            demoted[name] = list(missing)
            log.warning("flow %s demoted to passthrough: missing %s", name, missing)
            rates.append(None)
            continue
        rate = base
        for g in gates:
            if not acts[g]:
                rate = 0.0
                break
        rates.append(rate)
        centers[name] = rate
        intervals[name] = Interval(rate - t, rate + t)

    for name, terms, f_c, capacity, t, missing in plan.tanks:
        if missing:
            demoted[name] = demoted.get(name, []) + list(missing)
            log.warning("tank %s demoted to passthrough: missing %s", name, missing)
            continue
        total = 0.0
        dead = None
        for kind, ref, sign in terms:
            if kind == "flow":
                rate = rates[ref]
                if rate is None:
                    dead = plan.flows[ref][0]
                    break
                total += sign * rate
            else:
                total += sign * float(sensors[ref])
        if dead is not None:
            demoted[name] = demoted.get(name, []) + [dead]
            log.warning("tank %s demoted to passthrough: missing %s", name, dead)
            continue
        center = float(sensors[name]) + total * f_c
        intervals[name] = Interval(center - t, center + t).intersect_clamped(capacity)
        centers[name] = min(max(center, capacity.lo), capacity.hi)

    passthrough = set()
    for name in sensors:
        if name not in intervals:
            intervals[name] = PASSTHROUGH
            passthrough.add(name)
    return Prediction(intervals=intervals, centers=centers, passthrough=passthrough, demoted=demoted)


def predict_n(
    topology: PlantTopology,
    accepted: CycleSnapshot,
    tau: ThresholdSpec,
    n: int,
    schedule=None,
    plan: PredictPlan = None,
) -> Prediction:
    """n-step prediction: iterate the one-step model, widening by tau per
    step and taking the interval hull across steps.

    schedule[k] supplies the actuator commands applied during step k
    (defaults to holding the accepted commands constant).
    """
    if n < 1:
        raise ConfigError("predict_n requires n >= 1")
    if schedule is None:
        schedule = [accepted.actuators] * n
    if len(schedule) < n:
        raise ConfigError(f"actuation schedule has {len(schedule)} steps, need {n}")
    if plan is None:
        plan = PredictPlan(topology, tau, accepted.sensors.keys(), schedule[0].keys())

    current = accepted
    hulls: dict = {}
    centers: dict = {}
    passthrough: set = set()
    demoted: dict = {}
    for k in range(1, n + 1):
        step_snap = CycleSnapshot(
            cycle_index=current.cycle_index,
            sensors=current.sensors,
            actuators=schedule[k - 1],
            timestamp=None,
        )
        pred = predict(topology, step_snap, tau, plan=plan)
        demoted.update(pred.demoted)
        passthrough = pred.passthrough
        capacity_of = {name: cap for name, _terms, _fc, cap, _t, _m in plan.tanks}
        for name, base in pred.intervals.items():
            if name in pred.passthrough:
                hulls[name] = PASSTHROUGH
                continue
            c = pred.centers[name]
            t = tau.of(name)
            widened = Interval(c - k * t, c + k * t)
            cap = capacity_of.get(name)
            if cap is not None:
                widened = widened.intersect_clamped(cap)
            hulls[name] = widened if name not in hulls else hulls[name].hull(widened)
        centers = pred.centers
        next_sensors = dict(current.sensors)
        for name, c in pred.centers.items():
            next_sensors[name] = c
        current = CycleSnapshot(
            cycle_index=current.cycle_index + 1,
            sensors=next_sensors,
            actuators=schedule[k - 1],
            timestamp=None,
        )
    return Prediction(intervals=hulls, centers=centers, passthrough=passthrough, demoted=demoted)


# ------------------------------------------------------------------- loading


def load_topology(path):
    """Topology JSON -> (PlantTopology, ThresholdSpec or None)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: topology must be a JSON object")
    tanks = []
    for i, t in enumerate(doc.get("tanks", [])):
        try:
            cap = t.get("capacity", [-math.inf, math.inf])
            tanks.append(
                TankModel(
                    level_sensor=t["level_sensor"],
                    inflow=list(t.get("inflow", [])),
                    outflow=list(t.get("outflow", [])),
                    f_c=float(t["F_c"]),
                    capacity=Interval(float(cap[0]), float(cap[1])),
                )
            )
        except (KeyError, TypeError, IndexError) as e:
            raise ConfigError(f"{path}: tanks[{i}]: {e!r}") from e
    flows = []
    for i, f in enumerate(doc.get("flows", [])):
        try:
            flows.append(
                FlowModel(
                    flow_sensor=f["flow_sensor"],
                    base_rate=float(f["base_rate"]),
                    gates=list(f.get("gates", [])),
                )
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"{path}: flows[{i}]: {e!r}") from e
    thresholds = None
    if "thresholds" in doc:
        thresholds = ThresholdSpec({str(k): float(v) for k, v in doc["thresholds"].items()})
    return PlantTopology(tanks=tanks, flows=flows), thresholds


def load_thresholds(path) -> ThresholdSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: thresholds must be a JSON object")
    return ThresholdSpec({str(k): float(v) for k, v in doc.items()})


def load_margins(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: error margins must be a JSON object")
    return {str(k): float(v) for k, v in doc.items()}
