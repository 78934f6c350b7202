"""Exception hierarchy shared across the toolchain."""

from __future__ import annotations


class CbiError(Exception):
    """Base class for all toolchain errors."""


class SourceError(CbiError):
    """Error tied to a source location."""

    def __init__(self, span, message: str):
        self.span = span
        self.message = message
        super().__init__(f"{span}: {message}" if span is not None else message)


class StSyntaxError(SourceError):
    def __init__(self, span, expected, found: str):
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(self.expected))
        super().__init__(span, f"expected {exp}, found {found}")


class StTypeError(SourceError):
    pass


class DuplicateNameError(SourceError):
    def __init__(self, span, name: str, kind: str = "variable"):
        self.name = name
        super().__init__(span, f"duplicate {kind} name {name!r}")


class PouRecursionError(CbiError):
    """POU call graph contains a cycle (IEC forbids recursion)."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("recursive POU call chain: " + " -> ".join(self.cycle))


class ConsolidationError(CbiError):
    pass


class TypeConflictError(ConsolidationError):
    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"conflicting declarations for {name!r}" + (f": {detail}" if detail else ""))


class WriteWriteConflictError(ConsolidationError):
    def __init__(self, name: str, plc_a: str, plc_b: str):
        self.name = name
        self.plc_a = plc_a
        self.plc_b = plc_b
        super().__init__(f"actuator {name!r} is assigned by both {plc_a!r} and {plc_b!r}")


class EmptyInputError(ConsolidationError):
    def __init__(self):
        super().__init__("no programs to consolidate")


class TimingViolation(CbiError):
    """Sum of execution budgets is not strictly below the smallest task interval."""

    def __init__(self, sum_ms: float, min_interval_ms: float):
        self.sum_ms = sum_ms
        self.min_interval_ms = min_interval_ms
        super().__init__(
            f"execution budgets sum to {sum_ms}ms, not below smallest task interval {min_interval_ms}ms"
        )


class EvalError(CbiError):
    """Runtime fault inside a scan cycle (division by zero, CASE fallthrough)."""

    def __init__(self, span, reason: str):
        self.span = span
        self.reason = reason
        super().__init__(f"{span}: {reason}" if span is not None else reason)


class ForkBudgetExceeded(CbiError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"multi-execution exceeded fork budget of {limit}")


class MissingDependencyError(CbiError):
    def __init__(self, sensor: str, missing):
        self.sensor = sensor
        self.missing = list(missing)
        super().__init__(f"estimator for {sensor!r} missing dependencies: {', '.join(self.missing)}")


class StreamGapError(CbiError):
    def __init__(self, expected_index: int, got_index: int):
        self.expected_index = expected_index
        self.got_index = got_index
        super().__init__(f"historian stream gap: expected cycle {expected_index}, got {got_index}")


class LabelMissingError(CbiError):
    pass


class HistorianParseError(CbiError):
    def __init__(self, row: int, column: str, detail: str = ""):
        self.row = row
        self.column = column
        super().__init__(f"historian row {row}, column {column!r}: {detail or 'unparseable value'}")


class ConfigError(CbiError):
    pass
