"""Historian CSV round trips, header validation, parse errors, streaming."""

from __future__ import annotations

import random

import pytest

from cbi.errors import HistorianParseError
from cbi.historian import CycleSnapshot, quantize, read_historian, write_historian


def make_stream(model, n, seed=0):
    rng = random.Random(seed)
    sensors = [(e.name, e.ty) for e in model.io_map.values() if e.role == "sensor"]
    actuators = [(e.name, e.ty) for e in model.io_map.values() if e.role == "actuator"]
    out = []
    for i in range(n):
        svals = {name: quantize(rng.uniform(-100, 1100)) for name, _ in sensors}
        avals = {name: rng.random() < 0.5 for name, _ in actuators}
        out.append(CycleSnapshot(cycle_index=i, sensors=svals, actuators=avals, timestamp=quantize(i * 1.0)))
    return out


def test_round_trip_identity_1000_rows(fig5_model, tmp_path):
    stream = make_stream(fig5_model, 1000)
    path = tmp_path / "h.csv"
    assert write_historian(stream, path, fig5_model) == 1000
    back = list(read_historian(path, fig5_model))
    assert back == stream


def test_reserialization_byte_stable(fig5_model, tmp_path):
    stream = make_stream(fig5_model, 200, seed=5)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_historian(stream, p1, fig5_model)
    write_historian(read_historian(p1, fig5_model), p2, fig5_model)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_mismatch_names_column(fig5_model, tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("cycle_index,timestamp,YellowAmount,Banana,YellowValve,ConveyorMove\n")
    with pytest.raises(HistorianParseError) as ei:
        list(read_historian(path, fig5_model))
    assert ei.value.column == "Banana"


def test_bad_value_names_row_and_column(fig5_model, tmp_path):
    path = tmp_path / "h.csv"
    path.write_text(
        "cycle_index,timestamp,YellowAmount,CanWeight,YellowValve,ConveyorMove\n"
        "0,0,1.5,2.5,0,0\n"
        "1,1,1.5,oops,0,0\n"
    )
    with pytest.raises(HistorianParseError) as ei:
        list(read_historian(path, fig5_model))
    assert ei.value.row == 3
    assert ei.value.column == "CanWeight"


def test_bool_must_be_zero_or_one(fig5_model, tmp_path):
    path = tmp_path / "h.csv"
    path.write_text(
        "cycle_index,timestamp,YellowAmount,CanWeight,YellowValve,ConveyorMove\n"
        "0,0,1.5,2.5,TRUE,0\n"
    )
    with pytest.raises(HistorianParseError) as ei:
        list(read_historian(path, fig5_model))
    assert ei.value.column == "YellowValve"


def test_reader_is_streaming(fig5_model, tmp_path):
    import inspect

    path = tmp_path / "h.csv"
    write_historian(make_stream(fig5_model, 10), path, fig5_model)
    it = read_historian(path, fig5_model)
    assert inspect.isgenerator(it)
    first = next(it)
    assert first.cycle_index == 0


def test_empty_file_yields_nothing(fig5_model, tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("")
    assert list(read_historian(path, fig5_model)) == []
