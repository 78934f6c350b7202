"""Scan-cycle execution: single runs and error-margin multi-execution.

Multi-execution uses restart semantics: a fork that reaches a branch whose
condition carries taint of unpinned margin sensors is abandoned and replaced
by children that pin each such sensor to each offset in {-1, 0, +1}, re-run
from the start of the cycle with pinned sensors read as s + delta*eps. A
completed fork whose final actuator values still carry unpinned taint spawns
the same way, which makes the produced ActuationSet exactly equal to the
exhaustive union over all 3^k full offset assignments.
"""

from __future__ import annotations

from array import array
from collections import deque
from dataclasses import dataclass, field
from itertools import product

from ..errors import ConfigError, EvalError, ForkBudgetExceeded
from ..stlang import ast
from ..stlang.ast import ukey
from .irgen import (
    STATUS_CASE_FALLTHROUGH, STATUS_DIV_ZERO, STATUS_FORK, STATUS_HALT,
    ExecProgram, compile_model,
)
from .kernel import run_kernel

DEFAULT_FORK_CAP = 3 ** 6


def _typed(value: float, ty: str):
    if ty == ast.BOOL:
        return value != 0.0
    if ty == ast.INT:
        return int(value)
    return float(value)


class MachineState:
    """All persistent variable values of one model instance."""

    __slots__ = ("prog", "_values")

    def __init__(self, prog: ExecProgram, values: array):
        self.prog = prog
        self._values = values

    def copy(self) -> "MachineState":
        return MachineState(self.prog, self._values[:])

    def raw(self) -> array:
        return self._values

    def get(self, name: str):
        slot = self.prog.slot_index[ukey(name)]
        return _typed(self._values[slot], self.prog.slots[slot].ty)

    def set(self, name: str, value) -> None:
        slot = self.prog.slot_index.get(ukey(name))
        if slot is None:
            raise ConfigError(f"unknown variable {name!r}")
        self._values[slot] = float(value)

    def set_values(self, mapping) -> None:
        for name, value in mapping.items():
            self.set(name, value)

    @property
    def values(self) -> dict:
        out = {}
        for i, s in enumerate(self.prog.slots):
            if "." not in s.name and "#" not in s.name:
                out[s.name] = _typed(self._values[i], s.ty)
        return out

    @property
    def fb_instances(self) -> dict:
        out: dict = {}
        for i, s in enumerate(self.prog.slots):
            if "." in s.name and "#" not in s.name:
                inst, fld = s.name.rsplit(".", 1)
                out.setdefault(inst, {})[fld] = _typed(self._values[i], s.ty)
        return out


@dataclass(frozen=True)
class ErrorMarginSpec:
    """Per-sensor absolute error margin; sensors absent from the map have 0."""

    eps: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.eps.items():
            if value < 0:
                raise ConfigError(f"error margin for {name!r} must be >= 0, got {value}")

    def of(self, name: str) -> float:
        for k, v in self.eps.items():
            if ukey(k) == ukey(name):
                return float(v)
        return 0.0


@dataclass
class ActuationSet:
    """Per-actuator admissible end-of-cycle values from multi-execution."""

    values: dict  # actuator name -> frozenset of typed values
    fork_count: int  # completed forks (before pruning)
    paths: frozenset = frozenset()  # distinct branch-decision signatures
    deduped_fork_count: int = 0

    def contains(self, name: str, value) -> bool:
        vs = self.values[name]
        if isinstance(value, bool) or all(isinstance(v, bool) for v in vs):
            return bool(value) in vs
        return value in vs or float(value) in vs

    def singleton(self) -> dict:
        return {k: next(iter(v)) for k, v in self.values.items() if len(v) == 1}


def ensure_compiled(model) -> ExecProgram:
    if isinstance(model, ExecProgram):
        return model
    cached = getattr(model, "_compiled", None)
    if cached is None:
        cached = compile_model(model)
        model._compiled = cached
    return cached


def _latch(prog: ExecProgram, values: array, sensors: dict) -> None:
    lookup = sensors
    for name, slot, _ty in prog.sensors:
        try:
            values[slot] = float(lookup[name])
        except KeyError:
            raise ConfigError(f"snapshot is missing sensor {name!r}") from None


def _templates(prog: ExecProgram):
    """(sig buffer template, zero taint template), cached per program.

    The taint template is passed as-is to untainted runs (track_taint=0
    leaves it untouched); tainted runs copy it per fork.
    """
    templates = getattr(prog, "_scratch_templates", None)
    if templates is None:
        n_br = sum(1 for i in range(0, len(prog.code), 4) if prog.code[i] == 21)
        templates = (
            array("q", bytearray(8 * max(1, n_br))),
            array("Q", bytearray(8 * prog.n_slots)),
        )
        prog._scratch_templates = templates
    return templates


def _raise_eval_error(prog: ExecProgram, status: int, arg: int):
    span = prog.spans[arg] if 0 <= arg < len(prog.spans) else ast.NO_SPAN
    if status == STATUS_DIV_ZERO:
        raise EvalError(span, "division by zero")
    raise EvalError(span, "CASE fell through without ELSE")


def run_cycle(model, state: MachineState, sensors: dict):
    """One deterministic scan cycle: latch inputs, run body, read actuators.

    Returns (new MachineState, {actuator: typed value}).
    """
    prog = ensure_compiled(model)
    vals = state.raw()[:]
    _latch(prog, vals, sensors)
    sig_template, zero_taints = _templates(prog)
    sig_buf = sig_template[:]
    status, a, _mask, _n = run_kernel(prog.code, prog.consts, vals, zero_taints, 0, sig_buf, False)
    if status != STATUS_HALT:
        _raise_eval_error(prog, status, a)
    acts = {name: _typed(vals[slot], ty) for name, slot, ty in prog.actuators}
    return MachineState(prog, vals), acts


def run_cycle_traced(model, state: MachineState, sensors: dict):
    """run_cycle plus the executed branch decisions as [(site_id, taken)]."""
    prog = ensure_compiled(model)
    vals = state.raw()[:]
    _latch(prog, vals, sensors)
    sig_template, zero_taints = _templates(prog)
    sig_buf = sig_template[:]
    status, a, _mask, n_sig = run_kernel(prog.code, prog.consts, vals, zero_taints, 0, sig_buf, False)
    if status != STATUS_HALT:
        _raise_eval_error(prog, status, a)
    acts = {name: _typed(vals[slot], ty) for name, slot, ty in prog.actuators}
    decisions = [(sig_buf[i] >> 1, bool(sig_buf[i] & 1)) for i in range(n_sig)]
    return MachineState(prog, vals), acts, decisions


def _margin_sensors(prog: ExecProgram, eps) -> list:
    """[(name, slot, ty, eps)] for sensors with eps > 0, in io_map order."""
    if isinstance(eps, dict):
        eps = ErrorMarginSpec(eps)
    by_key = {ukey(k): float(v) for k, v in eps.eps.items()}
    sensor_keys = {ukey(name) for name, _, _ in prog.sensors}
    for k in by_key:
        if k not in sensor_keys:
            raise ConfigError(f"error margin names unknown sensor {k!r}")
    out = []
    for name, slot, ty in prog.sensors:
        e = by_key.get(ukey(name), 0.0)
        if e > 0.0:
            if ty == ast.INT and e != int(e):
                raise ConfigError(f"error margin for INT sensor {name!r} must be integral")
            out.append((name, slot, ty, e))
    if len(out) > 64:
        raise ConfigError("multi-execution supports at most 64 sensors with nonzero margins")
    return out


def run_cycle_multi(
    model,
    state: MachineState,
    sensors: dict,
    eps,
    fork_cap: int = DEFAULT_FORK_CAP,
    dedup: bool = True,
):
    """Error-margin multi-execution of one cycle.

    Returns (MachineState from the all-zero-offset fork, ActuationSet).
    """
    prog = ensure_compiled(model)
    margins = _margin_sensors(prog, eps)
    k = len(margins)
    base = state.raw()
    sig_template, taints_template = _templates(prog)
    sig_buf = sig_template[:]

    act_values: dict = {name: set() for name, _, _ in prog.actuators}
    paths = set()
    recorded = set()  # (signature, outputs) pairs, for dedup accounting
    fork_count = 0
    zero_values = None

    root = (None,) * k
    pending = deque([root])
    seen = {root}

    def spawn(asg, mask):
        idxs = [i for i in range(k) if (mask >> i) & 1]
        for deltas in product((-1, 0, 1), repeat=len(idxs)):
            child = list(asg)
            for i, d in zip(idxs, deltas):
                child[i] = d
            child = tuple(child)
            if child not in seen:
                seen.add(child)
                pending.append(child)
        if len(pending) > fork_cap:
            raise ForkBudgetExceeded(fork_cap)

    while pending:
        asg = pending.popleft()
        vals = base[:]
        _latch(prog, vals, sensors)
        taints = taints_template[:]
        run_mask = 0
        for i, (name, slot, ty, e) in enumerate(margins):
            d = asg[i]
            if d is None:
                run_mask |= 1 << i
            elif d:
                vals[slot] = float(sensors[name]) + d * e
            taints[slot] = 1 << i
        status, a, mask, n_sig = run_kernel(
            prog.code, prog.consts, vals, taints, run_mask, sig_buf, True
        )
        if status == STATUS_FORK:
            spawn(asg, mask)
            continue
        if status != STATUS_HALT:
            _raise_eval_error(prog, status, a)
        act_taint = 0
        for _name, slot, _ty in prog.actuators:
            act_taint |= taints[slot]
        pend_mask = act_taint & run_mask
        if pend_mask:
            spawn(asg, pend_mask)
            continue
        fork_count += 1
        sig = tuple(sig_buf[i] for i in range(n_sig))
        outputs = tuple(_typed(vals[slot], ty) for _n, slot, ty in prog.actuators)
        for (name, _, _), value in zip(prog.actuators, outputs):
            act_values[name].add(value)
        paths.add(sig)
        recorded.add((sig, outputs))
        if all(d is None or d == 0 for d in asg):
            zero_values = vals

    assert zero_values is not None  # the all-zero chain always completes
    result = ActuationSet(
        values={name: frozenset(vs) for name, vs in act_values.items()},
        fork_count=fork_count,
        paths=frozenset(paths),
        deduped_fork_count=len(recorded) if dedup else fork_count,
    )
    return MachineState(prog, zero_values), result


# ------------------------------------------------------------- dynamic taint


def taint_eval(expr, state: MachineState, taints: dict):
    """Evaluate one expression with value-carried taint.

    taints maps variable name -> iterable of sensor names; returns
    (typed value, frozenset of sensor names). Literals are untainted, a
    binary operator unions its operand taints.
    """
    prog = state.prog
    lib = prog.model.lib
    env = {}
    for name, slot in prog.slot_index.items():
        if "#" not in prog.slots[slot].name:
            env[name] = (_typed(state.raw()[slot], prog.slots[slot].ty), frozenset())
    for name, tset in taints.items():
        key = ukey(name)
        if key in env:
            env[key] = (env[key][0], frozenset(tset))
    return _taint_expr(expr, env, lib)


def _taint_expr(expr, env, lib):
    if isinstance(expr, ast.Literal):
        return expr.value, frozenset()
    if isinstance(expr, ast.VarRef):
        if expr.key not in env:
            raise ConfigError(f"unknown variable {expr.name!r}")
        return env[expr.key]
    if isinstance(expr, ast.Unary):
        v, t = _taint_expr(expr.operand, env, lib)
        return (not v, t) if expr.op == "NOT" else (-v, t)
    if isinstance(expr, ast.Binary):
        lv, lt = _taint_expr(expr.left, env, lib)
        rv, rt = _taint_expr(expr.right, env, lib)
        return _apply_binary(expr.op, lv, rv), lt | rt
    if isinstance(expr, ast.Call):
        fn = lib.functions[expr.key]
        fenv = {}
        taint = frozenset()
        for d, arg in zip(fn.inputs, expr.args):
            v, t = _taint_expr(arg, env, lib)
            fenv[d.key] = (v, t)
        for d in fn.locals:
            fenv[d.key] = (d.init.value if d.init else _zero(d.ty), frozenset())
        fenv[fn.key] = (_zero(fn.ret_ty), frozenset())
        _taint_body(fn.body, fenv, lib)
        return fenv[fn.key]
    raise ConfigError(f"cannot evaluate {type(expr).__name__}")


def _zero(ty):
    return False if ty == ast.BOOL else 0 if ty == ast.INT else 0.0


def _apply_binary(op, a, b):
    if op == "AND":
        return bool(a) and bool(b)
    if op == "OR":
        return bool(a) or bool(b)
    if op == "XOR":
        return bool(a) != bool(b)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise EvalError(ast.NO_SPAN, "division by zero")
        if isinstance(a, int) and isinstance(b, int) and not isinstance(a, bool):
            return int(a / b)
        return a / b
    if op == "MOD":
        if b == 0:
            raise EvalError(ast.NO_SPAN, "division by zero")
        return a - int(a / b) * b
    if op == "=":
        return a == b
    if op == "<>":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _taint_body(body, env, lib):
    """Statement evaluation inside function bodies (data taint only)."""
    for st in body:
        if isinstance(st, ast.Assign):
            env[st.target.key] = _taint_expr(st.value, env, lib)
        elif isinstance(st, ast.If):
            done = False
            for cond, arm in st.arms:
                cv, _ct = _taint_expr(cond, env, lib)
                if cv:
                    _taint_body(arm, env, lib)
                    done = True
                    break
            if not done and st.else_body:
                _taint_body(st.else_body, env, lib)
        elif isinstance(st, ast.Case):
            sv, _t = _taint_expr(st.selector, env, lib)
            done = False
            for arm in st.arms:
                if _label_match(arm.labels, sv):
                    _taint_body(arm.body, env, lib)
                    done = True
                    break
            if not done:
                if st.else_body is None:
                    raise EvalError(st.span, "CASE fell through without ELSE")
                _taint_body(st.else_body, env, lib)
        else:
            raise ConfigError("function bodies cannot contain function-block calls")


def _label_match(labels, value) -> bool:
    for label in labels:
        if isinstance(label, tuple):
            if label[0] <= value <= label[1]:
                return True
        elif label == value:
            return True
    return False
