"""Historian streams: one CycleSnapshot per scan cycle, CSV on disk.

REAL values are serialized with 9 significant digits; everything the
toolchain emits is quantized to that grid at the source (see quantize), so
write -> read is the identity and re-serialization is byte-stable. Files
stream row by row in constant memory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import HistorianParseError
from .stlang import ast
from .stlang.ast import ukey


def quantize(x: float) -> float:
    """Snap a REAL to the 9-significant-digit serialization grid."""
    return float(f"{x:.9g}")


@dataclass
class CycleSnapshot:
    cycle_index: int
    sensors: dict
    actuators: dict
    timestamp: Optional[float] = None

    def restricted(self, sensor_names, actuator_names) -> "CycleSnapshot":
        return CycleSnapshot(
            cycle_index=self.cycle_index,
            sensors={k: self.sensors[k] for k in sensor_names},
            actuators={k: self.actuators[k] for k in actuator_names},
            timestamp=self.timestamp,
        )


def _column_layout(model):
    sensors = [(e.name, e.ty) for e in model.io_map.values() if e.role == "sensor"]
    actuators = [(e.name, e.ty) for e in model.io_map.values() if e.role == "actuator"]
    return sensors, actuators


def _format_value(value, ty: str) -> str:
    if ty == ast.BOOL:
        return "1" if value else "0"
    if ty == ast.INT:
        return str(int(value))
    return f"{float(value):.9g}"


def _parse_value(text: str, ty: str, row: int, column: str):
    try:
        if ty == ast.BOOL:
            if text == "1":
                return True
            if text == "0":
                return False
            raise ValueError(f"BOOL must be 0 or 1, got {text!r}")
        if ty == ast.INT:
            return int(text)
        return float(text)
    except ValueError as e:
        raise HistorianParseError(row, column, str(e)) from None


def write_historian(stream: Iterable[CycleSnapshot], path, model) -> int:
    """Write snapshots to CSV; returns the number of rows written."""
    sensors, actuators = _column_layout(model)
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle_index", "timestamp"] + [n for n, _ in sensors] + [n for n, _ in actuators])
        for snap in stream:
            row = [str(snap.cycle_index), "" if snap.timestamp is None else f"{snap.timestamp:.9g}"]
            row += [_format_value(snap.sensors[n], ty) for n, ty in sensors]
            row += [_format_value(snap.actuators[n], ty) for n, ty in actuators]
            writer.writerow(row)
            count += 1
    return count


def read_historian(path, model) -> Iterator[CycleSnapshot]:
    """Stream snapshots from CSV; validates the header against the model."""
    sensors, actuators = _column_layout(model)
    expected = ["cycle_index", "timestamp"] + [n for n, _ in sensors] + [n for n, _ in actuators]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return
        if [ukey(h) for h in header] != [ukey(h) for h in expected]:
            extra = [h for h in header if ukey(h) not in {ukey(e) for e in expected}]
            missing = [e for e in expected if ukey(e) not in {ukey(h) for h in header}]
            column = (extra or missing or ["?"])[0]
            raise HistorianParseError(1, column, "header does not match the model's io map")
        n_sens = len(sensors)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise HistorianParseError(line_no, "?", f"expected {len(expected)} fields, got {len(row)}")
            try:
                cycle_index = int(row[0])
            except ValueError:
                raise HistorianParseError(line_no, "cycle_index", f"not an integer: {row[0]!r}") from None
            ts = None if row[1] == "" else float(row[1])
            svals = {}
            for (name, ty), text in zip(sensors, row[2 : 2 + n_sens]):
                svals[name] = _parse_value(text, ty, line_no, name)
            avals = {}
            for (name, ty), text in zip(actuators, row[2 + n_sens :]):
                avals[name] = _parse_value(text, ty, line_no, name)
            yield CycleSnapshot(cycle_index=cycle_index, sensors=svals, actuators=avals, timestamp=ts)
