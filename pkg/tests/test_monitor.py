"""Detection-loop tests: verdict semantics, spec scenarios, ROC properties."""

from __future__ import annotations

import json
import math

import pytest

from cbi.errors import LabelMissingError
from cbi.estimate import ThresholdSpec, predict
from cbi.historian import CycleSnapshot
from cbi.monitor import (
    ACTUATION_DEVIATION, MODEL_FAULT, OK, SENSOR_DEVIATION,
    DetectionVerdict, Monitor, MonitorConfig, RocPoint, roc_csv, roc_sweep, run_stream,
)
from cbi.plants import attack_suite, default_plant, default_sim_config
from cbi.plantsim import AttackScenario, simulate
from cbi.runtime import run_cycle_multi


@pytest.fixture(scope="module")
def plant():
    return default_plant()


@pytest.fixture(scope="module")
def benign_stream(plant):
    programs, libs, model, topology, tau, eps = plant
    cfg = default_sim_config(topology, cycles=2500)
    return [r for _t, r in simulate(cfg, programs, libs)]


@pytest.fixture(scope="module")
def attacked_run(plant):
    programs, libs, model, topology, tau, eps = plant
    attacks = attack_suite()
    cfg = default_sim_config(topology, cycles=4400)
    pairs = list(simulate(cfg, programs, libs, attacks))
    return attacks, pairs


def monitor_cfg(plant, **kw):
    *_, tau, eps = plant
    return MonitorConfig(tau=tau, eps=eps, **kw)


# ----------------------------------------------------------------- benign run


def test_benign_stream_all_ok_multi(plant, benign_stream):
    _p, _l, model, topology, *_ = plant
    verdicts, summary = run_stream(model, topology, benign_stream, monitor_cfg(plant, mode="lazy"))
    assert summary["alarms"] == 0
    assert all(v.ok for v in verdicts)


def test_empty_stream(plant):
    _p, _l, model, topology, *_ = plant
    verdicts, summary = run_stream(model, topology, [], monitor_cfg(plant))
    assert verdicts == []
    assert summary["cycles"] == 0 and summary["alarms"] == 0


def test_ok_verdict_soundness(plant, benign_stream):
    """verdict OK => sensors inside predicted intervals AND actuations inside
    the multi-execution admissible set (asserted directly against the parts)."""
    programs, libs, model, topology, tau, eps = plant
    cfg = monitor_cfg(plant, mode="lazy")
    monitor = Monitor(model, topology, cfg)
    prev = None
    machine_before = None
    for snap in benign_stream[:400]:
        if prev is None:
            monitor.step(snap)
            prev = snap
            machine_before = monitor.machine.copy()
            continue
        verdict = monitor.step(snap)
        if verdict.ok:
            pred = predict(topology, prev, tau)
            for name, value in snap.sensors.items():
                assert pred.intervals[name].contains(float(value))
            est = {n: pred.centers.get(n, snap.sensors[n]) for n in snap.sensors}
            _, aset = run_cycle_multi(model, machine_before, est, eps)
            for name, value in snap.actuators.items():
                assert aset.contains(name, value)
        prev = snap
        machine_before = monitor.machine.copy()


def test_closed_loop_accepts_reported_snapshot(plant, benign_stream):
    _p, _l, model, topology, *_ = plant
    monitor = Monitor(model, topology, monitor_cfg(plant))
    for snap in benign_stream[:50]:
        verdict = monitor.step(snap)
        if verdict.ok:
            assert monitor.accepted is snap


# ------------------------------------------------------------------- verdicts


def test_stream_gap_is_model_fault(plant, benign_stream):
    _p, _l, model, topology, *_ = plant
    monitor = Monitor(model, topology, monitor_cfg(plant))
    monitor.step(benign_stream[0])
    verdict = monitor.step(benign_stream[5])
    assert verdict.status == MODEL_FAULT
    assert verdict.details[0]["reason"] == "stream gap"
    # re-anchored: the following contiguous cycle is judged normally
    verdict = monitor.step(benign_stream[6])
    assert verdict.ok


def test_verdict_json_round_trip():
    v = DetectionVerdict(7, SENSOR_DEVIATION, [{"variable": "x", "reported": 1.0, "expected": [0.0, 0.5]}], "lazy")
    doc = json.loads(v.to_json())
    assert doc["cycle_index"] == 7 and doc["status"] == SENSOR_DEVIATION


def test_non_ok_verdicts_carry_details(plant, attacked_run):
    _p, _l, model, topology, *_ = plant
    attacks, pairs = attacked_run
    stream = [r for _t, r in pairs]
    verdicts, _ = run_stream(model, topology, stream, monitor_cfg(plant, mode="lazy"))
    for v in verdicts:
        if not v.ok:
            assert v.details


# ------------------------------------------------------------- attack windows


def test_all_attack_windows_detected(plant, attacked_run):
    _p, _l, model, topology, *_ = plant
    attacks, pairs = attacked_run
    stream = [r for _t, r in pairs]
    verdicts, summary = run_stream(
        model, topology, stream, monitor_cfg(plant, mode="lazy"), windows=[a.window for a in attacks]
    )
    assert summary["tpr"] == 1.0


def test_replay_detection_latency_matches_bound(plant, attacked_run):
    """Non-stealth replay: detected within ceil(tau / (rate * F_c)) cycles of
    the window start, +/- 1; the rate is the net modeled drain/fill rate from
    the truth stream's gates at the window boundary."""
    programs, libs, model, topology, tau, eps = plant
    attacks, pairs = attacked_run
    stream = [r for _t, r in pairs]
    truth = [t for t, _r in pairs]
    verdicts, _ = run_stream(model, topology, stream, monitor_cfg(plant, mode="lazy"))
    flows = {f.flow_sensor: f for f in topology.flows}
    for attack in attacks:
        if attack.kind != "sensor_replay" or attack.stealth:
            continue
        tank = next(t for t in topology.tanks if t.level_sensor == attack.sensor)
        gates = truth[attack.window[0]].actuators
        live = 0.0
        for name, sign in [(n, 1.0) for n in tank.inflow] + [(n, -1.0) for n in tank.outflow]:
            rate = flows[name].base_rate
            for g in flows[name].gates:
                rate *= 1.0 if gates[g] else 0.0
            live += sign * rate
        rec_gates = truth[attack.recorded_from].actuators
        rec = 0.0
        for name, sign in [(n, 1.0) for n in tank.inflow] + [(n, -1.0) for n in tank.outflow]:
            rate = flows[name].base_rate
            for g in flows[name].gates:
                rate *= 1.0 if rec_gates[g] else 0.0
            rec += sign * rate
        divergence = abs(live - rec) * tank.f_c
        tau_level = tau.of(attack.sensor)
        if divergence > tau_level / 10:
            bound = math.ceil(tau_level / divergence)
        else:
            bound = attack.window[1] - attack.window[0]
        first = next(
            v.cycle_index for v in verdicts
            if not v.ok and attack.window[0] <= v.cycle_index <= attack.window[1]
        )
        latency = first - attack.window[0] + 1  # first attacked cycle counts as 1
        assert latency <= bound + 1, (attack.name, latency, bound)


def test_data_only_attack_actuation_deviation(plant, attacked_run):
    _p, _l, model, topology, *_ = plant
    attacks, pairs = attacked_run
    stream = [r for _t, r in pairs]
    verdicts, _ = run_stream(model, topology, stream, monitor_cfg(plant, mode="lazy"))
    tamper = next(a for a in attacks if a.name == "tamper-plc1-pump-threshold")
    hits = [v for v in verdicts if not v.ok and tamper.window[0] <= v.cycle_index <= tamper.window[1]]
    assert any(
        v.status == ACTUATION_DEVIATION and any(d["variable"] == "Pump1" for d in v.details)
        for v in hits
    )


def test_drift_attack_trips_control_logic_before_exceeding_bound(plant, attacked_run):
    """Slow-evolving bias: every pre-detection cycle passes the sensor check
    (per-cycle bias <= tau), the accepted drift stays <= m*tau, and detection
    comes from the simulated control logic diverging, not the sensor check."""
    programs, libs, model, topology, tau, eps = plant
    attacks, pairs = attacked_run
    stream = [r for _t, r in pairs]
    truth = [t for t, _r in pairs]
    verdicts, _ = run_stream(model, topology, stream, monitor_cfg(plant, mode="lazy"))
    drift = next(a for a in attacks if a.name == "drift-level3-safety-bound")
    start, end = drift.window
    hits = [v for v in verdicts if not v.ok and start <= v.cycle_index <= end]
    first = hits[0]
    assert first.status == ACTUATION_DEVIATION
    m = first.cycle_index - start
    span = end - start
    per_cycle = drift.amount / span
    assert per_cycle <= tau.of(drift.sensor)
    accepted_drift = abs(stream[first.cycle_index - 1].sensors[drift.sensor]
                         - truth[first.cycle_index - 1].sensors[drift.sensor])
    assert accepted_drift <= m * tau.of(drift.sensor) + 1e-9


# ------------------------------------------------------------------ ROC sweep


def test_multi_alarms_subset_of_single(plant, benign_stream, attacked_run):
    _p, _l, model, topology, *_ = plant
    attacks, pairs = attacked_run
    for stream in (benign_stream, [r for _t, r in pairs]):
        v_single, _ = run_stream(model, topology, stream, monitor_cfg(plant, mode="single"))
        v_multi, _ = run_stream(model, topology, stream, monitor_cfg(plant, mode="lazy"))
        single_act = {v.cycle_index for v in v_single if v.status == ACTUATION_DEVIATION}
        multi_act = {v.cycle_index for v in v_multi if v.status == ACTUATION_DEVIATION}
        assert multi_act <= single_act


def test_roc_sweep_monotone_and_multi_below_single(plant, benign_stream, attacked_run):
    _p, _l, model, topology, tau, eps = plant
    attacks, pairs = attacked_run
    attacked = [r for _t, r in pairs]
    taus = [0.02, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 80.0, 1000.0]
    points = roc_sweep(
        model, topology, lambda: iter(benign_stream), lambda: iter(attacked),
        [a.window for a in attacks], taus, eps, tau,
    )
    by_mode = {}
    for p in points:
        by_mode.setdefault(p.mode, []).append(p)
    for mode, pts in by_mode.items():
        assert [p.tau_level for p in pts] == sorted(taus)
        fprs = [p.fpr for p in pts]
        assert all(a >= b - 1e-12 for a, b in zip(fprs, fprs[1:])), (mode, fprs)
    singles = {p.tau_level: p.fpr for p in by_mode["single"]}
    multis = {p.tau_level: p.fpr for p in by_mode["multi"]}
    assert all(multis[t] <= singles[t] + 1e-12 for t in taus)
    # limit cases: tau -> infinity silences sensor checks entirely in multi mode
    assert multis[1000.0] == 0.0
    # tau -> 0 alarms on benign mismatch
    assert singles[0.02] > 0.0 and multis[0.02] > 0.0


def test_roc_requires_labels(plant, benign_stream):
    _p, _l, model, topology, tau, eps = plant
    with pytest.raises(LabelMissingError):
        roc_sweep(model, topology, lambda: iter([]), lambda: iter([]), [], [1.0], eps, tau)


def test_roc_csv_format():
    text = roc_csv([RocPoint(5.0, "single", 1.0, 0.25)])
    assert text == "tau,mode,tpr,fpr\n5,single,1,0.25\n"


# ------------------------------------------------------------------ modes


def test_halt_mode_stops_at_first_alarm(plant, attacked_run):
    _p, _l, model, topology, *_ = plant
    attacks, pairs = attacked_run
    stream = [r for _t, r in pairs]
    verdicts, summary = run_stream(model, topology, stream, monitor_cfg(plant, mode="lazy", on_alarm="halt"))
    assert summary["halted"] is True
    assert not verdicts[-1].ok
    assert all(v.ok for v in verdicts[:-1])


def test_predict_ahead_n_benign_containment(plant, benign_stream):
    """n-cycle simulation interval: benign streams stay green there too."""
    _p, _l, model, topology, *_ = plant
    verdicts, summary = run_stream(
        model, topology, benign_stream[:800], monitor_cfg(plant, mode="lazy", predict_ahead=5)
    )
    assert summary["alarms"] == 0


def test_predict_ahead_containment_at_least_single_step(plant, benign_stream):
    _p, _l, model, topology, *_ = plant
    v1, s1 = run_stream(model, topology, benign_stream[:800], monitor_cfg(plant, mode="lazy", predict_ahead=1))
    v5, s5 = run_stream(model, topology, benign_stream[:800], monitor_cfg(plant, mode="lazy", predict_ahead=5))
    ok1 = sum(1 for v in v1 if v.ok)
    ok5 = sum(1 for v in v5 if v.ok)
    assert ok5 >= ok1


def test_mode_recorded_in_verdicts(plant, benign_stream):
    _p, _l, model, topology, *_ = plant
    verdicts, _ = run_stream(model, topology, benign_stream[:10], monitor_cfg(plant, mode="multi"))
    assert all(v.mode == "multi" for v in verdicts)
