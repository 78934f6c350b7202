"""Bundled plants: the default 3-stage recirculating plant (package data)
and a parametric n-stage ring used for scale tests.

The default plant is three tanks in a closed water loop: stage 1 batches to
stage 2, stage 2 to stage 3, stage 3 returns to stage 1 through the stage-1
inlet valve. Every stage's normal hysteresis thresholds are crossed by the
benign limit cycle; the high-side bounds (Level1 >= 800, Level3 >= 900) are
declared safety checks that benign runs never reach.
"""

from __future__ import annotations

import shutil
from pathlib import Path

from .consolidate import StModel, consolidate, load_project
from .errors import ConfigError
from .estimate import Interval, PlantTopology, ThresholdSpec, load_margins, load_topology
from .plantsim import AttackScenario, SimConfig, load_attacks, load_sim_config
from .stlang.parser import parse_program
from .stlang.typecheck import typecheck

DATA_FILES = (
    "plc1.st", "plc2.st", "plc3.st",
    "manifest.json", "topology.json", "tau.json", "eps.json", "sim.json", "attacks.json",
)


def data_dir() -> Path:
    return Path(__file__).parent / "plantdata"


def export(dest) -> Path:
    """Copy the default plant's files into dest (for CLI walkthroughs)."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for name in DATA_FILES:
        shutil.copy(data_dir() / name, dest / name)
    return dest


def default_plant():
    """(programs, libs, model, topology, tau, eps) for the bundled plant."""
    root = data_dir()
    programs, libs = load_project(root / "manifest.json")
    model = consolidate(programs, libs)
    topology, tau = load_topology(root / "topology.json")
    if tau is None:
        raise ConfigError("bundled topology must carry thresholds")
    eps = load_margins(root / "eps.json")
    topology.validate_against(model)
    return programs, libs, model, topology, tau, eps


def default_sim_config(topology: PlantTopology, **overrides) -> SimConfig:
    cfg = load_sim_config(data_dir() / "sim.json", topology)
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown sim override {key!r}")
        setattr(cfg, key, value)
    return cfg


def attack_suite() -> list:
    """The shipped attack scenarios (also available as attacks.json)."""
    return load_attacks(data_dir() / "attacks.json")


# ------------------------------------------------------------ scaled variant

_STAGE_TEMPLATE = """PROGRAM stage{i}
  VAR_INPUT
    Level{i} : REAL;
    Level{j} : REAL;
    Flow{i} : REAL;
  END_VAR
  VAR_IN_OUT
    Pump{i} : BOOL;
    Valve{i} : BOOL;
  END_VAR
  IF Level{i} >= 650.0 THEN
    Pump{i} := 1;
  ELSIF Level{i} <= 350.0 THEN
    Pump{i} := 0;
  END_IF;
  IF Level{j} <= 780.0 THEN
    Valve{i} := 1;
  ELSE
    Valve{i} := 0;
  END_IF;
END_PROGRAM
CONFIGURATION Cfg{i}
  RESOURCE Res0 ON PLC
    TASK Main(INTERVAL := T#1s, PRIORITY := 0);
    PROGRAM Inst0 WITH Main : stage{i};
  END_RESOURCE
END_CONFIGURATION
"""


def chain_plant(stages: int):
    """An n-stage ring of tanks; stage i pumps into stage i+1 (mod n).

    The consolidated model has 2n sensors and 2n actuators (4n+ variables
    once locals are counted), which is how the 50-variable scale target is
    exercised without hand-writing a plant that large.
    """
    if stages < 2:
        raise ConfigError("chain_plant needs at least 2 stages")
    programs, libs = [], []
    for i in range(1, stages + 1):
        j = i % stages + 1
        src = _STAGE_TEMPLATE.format(i=i, j=j)
        prog, lib = parse_program(src)
        prog.exec_budget_ms = 1.0
        typecheck(prog, lib)
        programs.append(prog)
        libs.append(lib)
    model = consolidate(programs, libs)

    from .estimate import FlowModel, TankModel

    tanks, flows, tau, eps = [], [], {}, {}
    for i in range(1, stages + 1):
        j = i % stages + 1
        tanks.append(
            TankModel(
                level_sensor=f"Level{i}",
                inflow=[f"Flow{(i - 2) % stages + 1}"],
                outflow=[f"Flow{i}"],
                f_c=1.0,
                capacity=Interval(0.0, 1000.0),
            )
        )
        flows.append(FlowModel(flow_sensor=f"Flow{i}", base_rate=10.0, gates=[f"Pump{i}", f"Valve{i}"]))
        tau[f"Level{i}"] = 5.0
        tau[f"Flow{i}"] = 1.0
        eps[f"Level{i}"] = 0.5
    topology = PlantTopology(tanks=tanks, flows=flows)
    topology.validate_against(model)
    return programs, libs, model, topology, ThresholdSpec(tau), eps


def chain_sim_config(topology: PlantTopology, stages: int, cycles: int, seed: int = 1) -> SimConfig:
    return SimConfig(
        topology=topology,
        cycles=cycles,
        seed=seed,
        init_levels={f"Level{i}": 400.0 + (i % 3) * 120.0 for i in range(1, stages + 1)},
        init_actuators={f"Pump{i}": i % 2 == 0 for i in range(1, stages + 1)},
        noise={f"Level{i}": 0.02 for i in range(1, stages + 1)},
    )
