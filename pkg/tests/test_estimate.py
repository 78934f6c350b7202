"""State-estimation tests: intervals, gated flows, demotion, n-step widening."""

from __future__ import annotations

import math
import random

import pytest

from cbi.errors import ConfigError
from cbi.estimate import (
    FlowModel, Interval, PlantTopology, TankModel, ThresholdSpec, predict, predict_n,
)
from cbi.historian import CycleSnapshot


def snap(sensors, actuators, idx=0):
    return CycleSnapshot(cycle_index=idx, sensors=sensors, actuators=actuators)


def simple_tank(capacity=(0.0, 1000.0), f_c=1.0):
    return PlantTopology(
        tanks=[TankModel("Level", ["Fin"], ["Fout"], f_c, Interval(*capacity))],
        flows=[],
    )


# ------------------------------------------------------------- spec examples


def test_tank_prediction_direct_substitution():
    topo = simple_tank()
    tau = ThresholdSpec({"Level": 5.0})
    pred = predict(topo, snap({"Level": 500.0, "Fin": 10.0, "Fout": 5.0}, {}), tau)
    assert pred.intervals["Level"] == Interval(500.0, 510.0)
    assert pred.centers["Level"] == 505.0


def test_gated_flow_zero_product():
    topo = PlantTopology(flows=[FlowModel("F", 2.0, ["Pump", "Valve"])])
    tau = ThresholdSpec({"F": 0.5})
    pred = predict(topo, snap({"F": 2.0}, {"Pump": True, "Valve": False}), tau)
    assert pred.intervals["F"] == Interval(-0.5, 0.5)
    assert pred.centers["F"] == 0.0


def test_modeled_flow_feeds_tank():
    topo = PlantTopology(
        tanks=[TankModel("Level", ["F"], [], 2.0, Interval(0.0, 1000.0))],
        flows=[FlowModel("F", 3.0, ["Pump"])],
    )
    tau = ThresholdSpec({"Level": 1.0})
    pred = predict(topo, snap({"Level": 100.0, "F": 0.0}, {"Pump": True}), tau)
    # the tank uses the gated model rate (3.0), not the reported flow value
    assert pred.centers["Level"] == 106.0


def test_passthrough_sensor_never_alarms():
    topo = simple_tank()
    pred = predict(topo, snap({"Level": 1.0, "Fin": 0.0, "Fout": 0.0, "Ph": 7.2}, {}), ThresholdSpec())
    assert pred.intervals["Ph"].contains(-1e300) and pred.intervals["Ph"].contains(1e300)
    assert "Ph" in pred.passthrough


def test_missing_dependency_demotes_with_warning(caplog):
    topo = simple_tank()
    with caplog.at_level("WARNING", logger="cbi.estimate"):
        pred = predict(topo, snap({"Level": 500.0, "Fin": 10.0}, {}), ThresholdSpec({"Level": 5}))
    assert pred.intervals["Level"] == Interval(-math.inf, math.inf)
    assert pred.demoted["Level"] == ["Fout"]
    assert "Fout" in caplog.text


def test_capacity_clamping():
    topo = simple_tank(capacity=(0.0, 508.0))
    tau = ThresholdSpec({"Level": 5.0})
    pred = predict(topo, snap({"Level": 500.0, "Fin": 10.0, "Fout": 5.0}, {}), tau)
    assert pred.intervals["Level"] == Interval(500.0, 508.0)
    assert pred.centers["Level"] == 505.0
    # fully outside: collapses to the nearest capacity edge
    topo2 = simple_tank(capacity=(0.0, 498.0))
    pred2 = predict(topo2, snap({"Level": 500.0, "Fin": 10.0, "Fout": 5.0}, {}), tau)
    assert pred2.intervals["Level"] == Interval(498.0, 498.0)
    assert pred2.centers["Level"] == 498.0


def test_predict_n_base_case_identical():
    topo = simple_tank()
    tau = ThresholdSpec({"Level": 5.0})
    s = snap({"Level": 500.0, "Fin": 10.0, "Fout": 5.0}, {})
    assert predict_n(topo, s, tau, 1).intervals["Level"] == predict(topo, s, tau).intervals["Level"]


def test_predict_n_linear_accumulation():
    topo = simple_tank()
    tau = ThresholdSpec({"Level": 5.0})
    s = snap({"Level": 100.0, "Fin": 5.0, "Fout": 0.0}, {})
    pred = predict_n(topo, s, tau, 3)
    # center advanced by 15, interval hull = final center +/- 15
    assert pred.centers["Level"] == 115.0
    assert pred.intervals["Level"] == Interval(100.0, 130.0)


def test_predict_n_requires_positive_n():
    with pytest.raises(ConfigError):
        predict_n(simple_tank(), snap({"Level": 1.0, "Fin": 0.0, "Fout": 0.0}, {}), ThresholdSpec(), 0)


def test_predict_n_uses_schedule():
    topo = PlantTopology(
        tanks=[TankModel("Level", ["F"], [], 1.0, Interval(0.0, 1000.0))],
        flows=[FlowModel("F", 10.0, ["Pump"])],
    )
    tau = ThresholdSpec({"Level": 1.0})
    s = snap({"Level": 100.0, "F": 10.0}, {"Pump": True})
    pred = predict_n(topo, s, tau, 2, schedule=[{"Pump": True}, {"Pump": False}])
    assert pred.centers["Level"] == 110.0  # second step gated off


# --------------------------------------------------------------- properties


def test_tau_monotone_wider_intervals():
    topo = simple_tank()
    s = snap({"Level": 500.0, "Fin": 10.0, "Fout": 5.0}, {})
    small = predict(topo, s, ThresholdSpec({"Level": 2.0})).intervals["Level"]
    big = predict(topo, s, ThresholdSpec({"Level": 8.0})).intervals["Level"]
    assert big.lo <= small.lo and small.hi <= big.hi


def test_monte_carlo_interval_soundness():
    """Any per-cycle model error within tau keeps the true value inside the
    predicted interval (after physical capacity clamping)."""
    rng = random.Random(7)
    for _ in range(300):
        f_c = rng.uniform(0.5, 2.0)
        cap = Interval(0.0, rng.uniform(600.0, 1200.0))
        topo = PlantTopology(
            tanks=[TankModel("Level", ["Fin"], ["Fout"], f_c, cap)],
            flows=[
                FlowModel("Fin", rng.uniform(0.0, 12.0), ["P1"]),
                FlowModel("Fout", rng.uniform(0.0, 12.0), ["P2"]),
            ],
        )
        tau_level = rng.uniform(0.5, 8.0)
        tau = ThresholdSpec({"Level": tau_level})
        level = rng.uniform(0.0, cap.hi)
        acts = {"P1": rng.random() < 0.7, "P2": rng.random() < 0.7}
        s = snap({"Level": level, "Fin": 0.0, "Fout": 0.0}, acts)
        pred = predict(topo, s, tau)
        rate = (topo.flows[0].base_rate * acts["P1"] - topo.flows[1].base_rate * acts["P2"]) * f_c
        true_next = level + rate + rng.uniform(-tau_level, tau_level)
        true_next = min(max(true_next, cap.lo), cap.hi)
        assert pred.intervals["Level"].contains(true_next)


def test_benign_exact_model_always_contained():
    rng = random.Random(3)
    topo = PlantTopology(
        tanks=[TankModel("Level", ["Fin"], ["Fout"], 1.0, Interval(0.0, 1000.0))],
        flows=[FlowModel("Fin", 10.0, ["P1"]), FlowModel("Fout", 8.0, ["P2"])],
    )
    tau = ThresholdSpec({"Level": 5.0, "Fin": 0.5, "Fout": 0.5})
    level = 400.0
    for i in range(1000):
        acts = {"P1": rng.random() < 0.6, "P2": rng.random() < 0.6}
        s = snap({"Level": level, "Fin": 10.0 * acts["P1"], "Fout": 8.0 * acts["P2"]}, acts, idx=i)
        pred = predict(topo, s, tau)
        level = min(max(level + 10.0 * acts["P1"] - 8.0 * acts["P2"], 0.0), 1000.0)
        assert pred.intervals["Level"].contains(level), i
