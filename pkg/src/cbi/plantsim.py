"""Ground-truth plant simulator and attack injector.

The physical process is a set of tanks coupled by actuator-gated flows.
Commands issued in cycle n are applied during the next physics step (one
cycle of actuation latency). True parameters may carry multiplicative
mismatch against the declared topology, and sensors sample with bounded
uniform noise; both are the model-error sources the monitor's error margins
must absorb.

Two aligned streams are emitted per run: ground truth (what the plant did)
and as-reported (what the historian receives). They differ only inside
attack windows.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .consolidate import StModel, check_timing, consolidate
from .errors import ConfigError
from .estimate import PlantTopology
from .historian import CycleSnapshot, quantize
from .runtime import compile_model, run_cycle
from .stlang import ast
from .stlang.ast import Literal, ukey, walk_exprs, walk_statements
from .stlang.parser import parse_program
from .stlang.typecheck import typecheck

ATTACK_KINDS = ("logic_replace", "sensor_replay", "sensor_bias", "actuation_override", "threshold_tamper")


@dataclass
class AttackScenario:
    name: str
    kind: str
    window: tuple  # (start_cycle, end_cycle) inclusive
    stealth: bool = False
    plc: str = ""  # logic_replace, threshold_tamper
    new_source: str = ""  # logic_replace
    sensor: str = ""  # sensor_replay, sensor_bias
    recorded_from: int = 0  # sensor_replay
    amount: float = 0.0  # sensor_bias
    ramp: bool = False  # sensor_bias: bias ramps linearly across the window
    actuator: str = ""  # actuation_override
    value: object = None  # actuation_override
    match_value: float = 0.0  # threshold_tamper: constant to replace
    occurrence: int = 0  # threshold_tamper: which occurrence of match_value
    new_value: float = 0.0  # threshold_tamper

    def active(self, cycle: int) -> bool:
        return self.window[0] <= cycle <= self.window[1]


@dataclass
class SimConfig:
    topology: PlantTopology
    cycles: int
    seed: int = 0
    init_levels: dict = field(default_factory=dict)  # level sensor -> value
    init_actuators: dict = field(default_factory=dict)  # actuator -> bool
    mismatch_f_c: dict = field(default_factory=dict)  # level sensor -> eta
    mismatch_base_rate: dict = field(default_factory=dict)  # flow sensor -> eta
    noise: dict = field(default_factory=dict)  # sensor -> additive bound


def tamper_constant(prog, match_value: float, occurrence: int, new_value: float):
    """Copy of the program with the occurrence-th literal equal to match_value
    replaced by new_value (data-only attack on a threshold constant)."""
    out = copy.deepcopy(prog)
    count = 0
    for st in walk_statements(out.body):
        for top in ast.statement_exprs(st):
            for e in walk_exprs(top):
                if isinstance(e, Literal) and not isinstance(e.value, bool) and float(e.value) == float(match_value):
                    if count == occurrence:
                        e.value = new_value if isinstance(e.value, float) else int(new_value)
                        return out
                    count += 1
    raise ConfigError(
        f"threshold_tamper: constant {match_value} occurrence {occurrence} not found in {prog.name}"
    )


class _PlcRuntime:
    """One physical PLC: its compiled program, persistent state, input wiring."""

    def __init__(self, prog_ast, lib, plant_sensors: set):
        self.prog_ast = prog_ast
        self.lib = lib
        self.plant_sensors = plant_sensors
        self.original = compile_model(consolidate([prog_ast], [lib]))
        self.exec = self.original
        self.state = self.exec.initial_state()
        self.shadow_state = None  # original-logic state during stealth windows
        self.plant_sensor_inputs = [
            name for name, _slot, _ty in self.original.sensors if ukey(name) in plant_sensors
        ]

    def inputs_for(self, exec_prog, samples: dict, commands: dict) -> dict:
        """Wire VAR_INPUTs: plant sensors from samples, the rest from the
        shared actuator command state (cross-PLC reads)."""
        inputs = {}
        for name, _slot, _ty in exec_prog.sensors:
            key = ukey(name)
            if key in self.plant_sensors:
                inputs[name] = samples[key]
            elif key in commands:
                inputs[name] = commands[key]
            else:
                raise ConfigError(f"{self.prog_ast.name}: input {name!r} is neither sensor nor actuator")
        return inputs

    def reads_sensor(self, sensor: str) -> bool:
        return any(ukey(n) == ukey(sensor) for n in self.plant_sensor_inputs)

    def swap_logic(self, exec_prog):
        """Install replacement logic, carrying over shared latched values."""
        new_state = exec_prog.initial_state()
        for name, slot, _ty in exec_prog.actuators:
            key = ukey(name)
            if key in self.exec.slot_index:
                new_state.raw()[slot] = self.state.raw()[self.exec.slot_index[key]]
        self.exec = exec_prog
        self.state = new_state


def _validate_attacks(attacks, model: StModel, cfg: SimConfig, plc_names):
    sensors = {ukey(e.name) for e in model.io_map.values() if e.role == "sensor"}
    actuators = {ukey(e.name) for e in model.io_map.values() if e.role == "actuator"}
    for a in attacks:
        if a.kind not in ATTACK_KINDS:
            raise ConfigError(f"attack {a.name!r}: unknown kind {a.kind!r}")
        start, end = a.window
        if not (0 <= start <= end < cfg.cycles):
            raise ConfigError(f"attack {a.name!r}: window {a.window} outside run of {cfg.cycles} cycles")
        if a.kind in ("sensor_replay", "sensor_bias") and ukey(a.sensor) not in sensors:
            raise ConfigError(f"attack {a.name!r}: unknown sensor {a.sensor!r}")
        if a.kind == "actuation_override" and ukey(a.actuator) not in actuators:
            raise ConfigError(f"attack {a.name!r}: unknown actuator {a.actuator!r}")
        if a.kind in ("logic_replace", "threshold_tamper") and ukey(a.plc) not in plc_names:
            raise ConfigError(f"attack {a.name!r}: unknown plc {a.plc!r}")
        if a.kind == "sensor_replay":
            span = end - start
            if a.recorded_from < 0 or a.recorded_from + span >= start:
                raise ConfigError(
                    f"attack {a.name!r}: replay source [{a.recorded_from}, {a.recorded_from + span}] "
                    f"must end before the window starts"
                )


def simulate(cfg: SimConfig, programs, libs, attacks=()):
    """Yields (truth, reported) CycleSnapshot pairs, one per cycle."""
    check_timing(programs)
    model = consolidate(programs, libs)
    cfg.topology.validate_against(model)
    attacks = list(attacks)
    _validate_attacks(attacks, model, cfg, {ukey(p.name) for p in programs})

    plant_sensors = {ukey(e.name) for e in model.io_map.values() if e.role == "sensor"}
    level_keys = [ukey(t.level_sensor) for t in cfg.topology.tanks]
    for k, t in zip(level_keys, cfg.topology.tanks):
        if t.level_sensor not in cfg.init_levels and k not in {ukey(x) for x in cfg.init_levels}:
            raise ConfigError(f"init_levels missing {t.level_sensor!r}")

    plcs = [_PlcRuntime(p, l, plant_sensors) for p, l in zip(programs, libs)]
    by_name = {ukey(p.prog_ast.name): p for p in plcs}

    # tampered/replacement programs are compiled once, up front
    replacements = {}
    for a in attacks:
        if a.kind == "logic_replace":
            prog2, lib2 = parse_program(a.new_source)
            typecheck(prog2, lib2)
            replacements[a.name] = compile_model(consolidate([prog2], [lib2]))
        elif a.kind == "threshold_tamper":
            target = by_name[ukey(a.plc)]
            tampered = tamper_constant(target.prog_ast, a.match_value, a.occurrence, a.new_value)
            replacements[a.name] = compile_model(consolidate([tampered], [target.lib]))

    rng = random.Random(cfg.seed)
    init_levels = {ukey(k): float(v) for k, v in cfg.init_levels.items()}
    levels = {k: init_levels[k] for k in level_keys}
    true_f_c = {
        ukey(t.level_sensor): t.f_c * (1.0 + _by_key(cfg.mismatch_f_c, t.level_sensor))
        for t in cfg.topology.tanks
    }
    true_base = {
        ukey(f.flow_sensor): f.base_rate * (1.0 + _by_key(cfg.mismatch_base_rate, f.flow_sensor))
        for f in cfg.topology.flows
    }
    noise = {ukey(k): float(v) for k, v in cfg.noise.items()}

    # actuator command state; commands issued in cycle n gate the n+1 advance
    commands = {ukey(e.name): False for e in model.io_map.values() if e.role == "actuator"}
    for k, v in cfg.init_actuators.items():
        if ukey(k) not in commands:
            raise ConfigError(f"init_actuators: unknown actuator {k!r}")
        commands[ukey(k)] = bool(v)
    applied = dict(commands)
    # the PLCs' internal latches start from the same state as the devices
    for plc in plcs:
        for name, _slot, _ty in plc.exec.actuators:
            if ukey(name) in commands:
                plc.state.set(name, commands[ukey(name)])

    sensor_entries = [(e.name, ukey(e.name), e.ty) for e in model.io_map.values() if e.role == "sensor"]
    actuator_entries = [(e.name, ukey(e.name)) for e in model.io_map.values() if e.role == "actuator"]
    interval_s = model.master.task_interval_ms / 1000.0
    history: list = []  # per-cycle true samples, for replay sources

    def flow_rates(gates_state) -> dict:
        """Gated rates for one step. Noise on a flow sensor models the rate
        itself fluctuating (process noise), so it drives the physics and is
        what the flow meter reads; a gated-off line carries exactly zero."""
        rates = {}
        for f in cfg.topology.flows:
            key = ukey(f.flow_sensor)
            rate = true_base[key]
            for g in f.gates:
                rate *= 1.0 if gates_state[ukey(g)] else 0.0
            bound = noise.get(key, 0.0)
            if bound and rate != 0.0:
                rate = max(0.0, rate + rng.uniform(-bound, bound))
            rates[key] = rate
        return rates

    for cycle in range(cfg.cycles):
        rates_now = flow_rates(applied)
        if cycle > 0:
            for t in cfg.topology.tanks:
                key = ukey(t.level_sensor)
                net = sum(rates_now[ukey(n)] for n in t.inflow) - sum(rates_now[ukey(n)] for n in t.outflow)
                levels[key] = min(max(levels[key] + net * true_f_c[key], t.capacity.lo), t.capacity.hi)

        samples = {}
        for name, key, ty in sensor_entries:
            if key in levels:
                value = levels[key]
                bound = noise.get(key, 0.0)
                if bound:
                    value += rng.uniform(-bound, bound)
            elif key in rates_now:
                value = rates_now[key]
            else:
                value = 0.0
            samples[key] = quantize(value)

        # reporting-layer sensor tampering (the PLCs still see true samples)
        reported_sensors = dict(samples)
        for a in attacks:
            if not a.active(cycle):
                continue
            if a.kind == "sensor_replay":
                src = a.recorded_from + (cycle - a.window[0])
                reported_sensors[ukey(a.sensor)] = history[src][ukey(a.sensor)]
            elif a.kind == "sensor_bias":
                frac = 1.0
                if a.ramp:
                    span = max(1, a.window[1] - a.window[0])
                    frac = (cycle - a.window[0]) / span
                key = ukey(a.sensor)
                reported_sensors[key] = quantize(reported_sensors[key] + a.amount * frac)

        # logic swaps and stealth shadows at window edges
        for a in attacks:
            if a.kind in ("logic_replace", "threshold_tamper"):
                target = by_name[ukey(a.plc)]
                if cycle == a.window[0]:
                    if a.stealth:
                        target.shadow_state = target.state.copy()
                    target.swap_logic(replacements[a.name])
                elif cycle == a.window[1] + 1:
                    target.swap_logic(target.original)
                    target.shadow_state = None
            elif a.kind in ("sensor_replay", "sensor_bias") and a.stealth:
                for plc in plcs:
                    if plc.reads_sensor(a.sensor):
                        if cycle == a.window[0]:
                            plc.shadow_state = plc.state.copy()
                        elif cycle == a.window[1] + 1:
                            plc.shadow_state = None

        # PLC executions in manifest order; later PLCs see earlier commands.
        # The shadow pool is the attacker's self-consistent world: original
        # logic applied to the *reported* sensors.
        reported_commands = {}
        computed_commands = {}
        shadow_commands_pool = dict(commands)
        for plc in plcs:
            inputs = plc.inputs_for(plc.exec, samples, commands)
            plc.state, acts = run_cycle(plc.exec, plc.state, inputs)
            for k, v in acts.items():
                computed_commands[ukey(k)] = v
                commands[ukey(k)] = v
            if plc.shadow_state is not None:
                shadow_inputs = plc.inputs_for(plc.original, reported_sensors, shadow_commands_pool)
                plc.shadow_state, shadow_acts = run_cycle(plc.original, plc.shadow_state, shadow_inputs)
                for k, v in shadow_acts.items():
                    reported_commands[ukey(k)] = v
                    shadow_commands_pool[ukey(k)] = v
            else:
                for k, v in acts.items():
                    shadow_commands_pool[ukey(k)] = v

        # actuation overrides: the device does `value`, stealth reports the computed one
        for a in attacks:
            if a.kind == "actuation_override" and a.active(cycle):
                key = ukey(a.actuator)
                forced = bool(a.value) if isinstance(commands[key], bool) else a.value
                if not a.stealth:
                    reported_commands[key] = forced
                else:
                    reported_commands.setdefault(key, computed_commands.get(key, commands[key]))
                commands[key] = forced

        history.append(dict(samples))
        applied = dict(commands)

        truth = CycleSnapshot(
            cycle_index=cycle,
            sensors={name: samples[key] for name, key, _ty in sensor_entries},
            actuators={name: commands[key] for name, key in actuator_entries},
            timestamp=quantize(cycle * interval_s),
        )
        reported = CycleSnapshot(
            cycle_index=cycle,
            sensors={name: reported_sensors[key] for name, key, _ty in sensor_entries},
            actuators={
                name: reported_commands.get(key, commands[key]) for name, key in actuator_entries
            },
            timestamp=truth.timestamp,
        )
        yield truth, reported


def _by_key(mapping: dict, name: str) -> float:
    for k, v in mapping.items():
        if ukey(k) == ukey(name):
            return float(v)
    return 0.0


# ----------------------------------------------------------------- file I/O


def load_sim_config(path, topology: PlantTopology) -> SimConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    required = {"cycles"}
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    mismatch = doc.get("mismatch", {})
    return SimConfig(
        topology=topology,
        cycles=int(doc["cycles"]),
        seed=int(doc.get("seed", 0)),
        init_levels={str(k): float(v) for k, v in doc.get("init_levels", {}).items()},
        init_actuators={str(k): bool(v) for k, v in doc.get("init_actuators", {}).items()},
        mismatch_f_c={str(k): float(v) for k, v in mismatch.get("F_c", {}).items()},
        mismatch_base_rate={str(k): float(v) for k, v in mismatch.get("base_rate", {}).items()},
        noise={str(k): float(v) for k, v in doc.get("noise", {}).items()},
    )


def load_attacks(path) -> list:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if isinstance(doc, dict):
        doc = doc.get("attacks")
    if not isinstance(doc, list):
        raise ConfigError(f"{path}: attacks must be a list (or object with 'attacks')")
    out = []
    for i, item in enumerate(doc):
        if "kind" not in item or "window" not in item:
            raise ConfigError(f"{path}: attacks[{i}] missing 'kind' or 'window'")
        fields = dict(item)
        window = fields.pop("window")
        out.append(
            AttackScenario(
                name=str(fields.pop("name", f"attack{i}")),
                kind=str(fields.pop("kind")),
                window=(int(window[0]), int(window[1])),
                stealth=bool(fields.pop("stealth", False)),
                plc=str(fields.pop("plc", "")),
                new_source=str(fields.pop("new_source", "")),
                sensor=str(fields.pop("sensor", "")),
                recorded_from=int(fields.pop("recorded_from", 0)),
                amount=float(fields.pop("amount", 0.0)),
                ramp=bool(fields.pop("ramp", False)),
                actuator=str(fields.pop("actuator", "")),
                value=fields.pop("value", None),
                match_value=float(fields.pop("match_value", 0.0)),
                occurrence=int(fields.pop("occurrence", 0)),
                new_value=float(fields.pop("new_value", 0.0)),
            )
        )
        if fields:
            raise ConfigError(f"{path}: attacks[{i}] has unknown keys {sorted(fields)}")
    return out
