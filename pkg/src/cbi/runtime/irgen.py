"""Compiles a consolidated model into flat register code for the cycle kernel.

Functions and function blocks are inlined (the frontend rejects recursion),
so one scan cycle is a single linear instruction stream: every branch
executes at most once per cycle. Values live in one double array; BOOL is
0.0/1.0 and INT stays integral under the emitted opcodes.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..stlang import ast
from ..stlang.ast import (
    Assign, Binary, Call, Case, FbCall, If, Literal, Unary, VarRef, ukey,
)

# opcodes
OP_HALT = 0
OP_CONST = 1
OP_COPY = 2
OP_ADD = 3
OP_SUB = 4
OP_MUL = 5
OP_DIV_REAL = 6
OP_DIV_INT = 7
OP_MOD_INT = 8
OP_NEG = 9
OP_NOT = 10
OP_AND = 11
OP_OR = 12
OP_XOR = 13
OP_EQ = 14
OP_NE = 15
OP_LT = 16
OP_LE = 17
OP_GT = 18
OP_GE = 19
OP_JMP = 20
OP_BR = 21
OP_CASE_ERR = 22

# kernel exit statuses
STATUS_HALT = 0
STATUS_FORK = 1
STATUS_DIV_ZERO = 2
STATUS_CASE_FALLTHROUGH = 3

_CMP_OPS = {"=": OP_EQ, "<>": OP_NE, "<": OP_LT, "<=": OP_LE, ">": OP_GT, ">=": OP_GE}
_BOOL_OPS = {"AND": OP_AND, "OR": OP_OR, "XOR": OP_XOR}
_ARITH_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL}


@dataclass
class BranchSite:
    site_id: int
    span: ast.Span
    kind: str  # 'if', 'elsif', 'case-arm'
    plc: str
    statement_index: int  # top-level master body statement this site belongs to


@dataclass
class SlotInfo:
    name: str  # display path, e.g. "Level1" or "Dose1.Acc"
    ty: str
    init: float


@dataclass
class ExecProgram:
    model: object
    code: array  # int32, stride 4: op, a, b, c
    consts: array  # double
    slots: list  # list[SlotInfo]
    slot_index: dict  # ukey path -> slot
    sensors: list  # [(name, slot, ty)] in io_map order
    actuators: list  # [(name, slot, ty)]
    sites: list  # list[BranchSite]
    spans: list  # instruction index -> Span (error reporting)
    n_temps: int

    @property
    def n_slots(self) -> int:
        return len(self.slots) + self.n_temps

    def initial_values(self) -> array:
        vals = array("d", bytearray(8 * self.n_slots))
        for i, s in enumerate(self.slots):
            vals[i] = s.init
        return vals

    def initial_state(self):
        from .machine import MachineState

        return MachineState(self, self.initial_values())


class _Compiler:
    def __init__(self, model):
        self.model = model
        self.lib = model.lib
        self.code: list = []
        self.consts: list = []
        self.const_ids: dict = {}
        self.slots: list = []
        self.slot_index: dict = {}
        self.sites: list = []
        self.spans: list = []
        self.temp_base = 0  # patched after slot allocation
        self.temp_counter = 0
        self.max_temps = 0
        self.fn_site_counter = 0
        self.current_plc = ""
        self.current_stmt_index = -1

    # ----------------------------------------------------------------- slots

    def add_slot(self, path: str, display: str, ty: str, init: float) -> int:
        key = ukey(path)
        if key in self.slot_index:
            raise ConfigError(f"internal: duplicate slot {path}")
        idx = len(self.slots)
        self.slots.append(SlotInfo(name=display, ty=ty, init=init))
        self.slot_index[key] = idx
        return idx

    def slot_of(self, path: str) -> int:
        return self.slot_index[ukey(path)]

    @staticmethod
    def default_init(decl) -> float:
        if decl.init is None:
            return 0.0
        v = decl.init.value
        if isinstance(v, bool):
            return 1.0 if v else 0.0
        return float(v)

    def alloc_fb_instance(self, path: str, fb_ty: str):
        """Persistent slots for one function-block instance (recursively)."""
        fb = self.lib.function_blocks[ukey(fb_ty)]
        for d in fb.all_decls():
            sub = f"{path}.{d.name}"
            if d.kind == ast.KIND_FB_STATE:
                self.alloc_fb_instance(sub, d.ty)
            else:
                self.add_slot(sub, sub, d.ty, self.default_init(d))

    # ------------------------------------------------------------------ emit

    def emit(self, op: int, a: int = 0, b: int = 0, c: int = 0, span=ast.NO_SPAN) -> int:
        idx = len(self.code)
        self.code.append([op, a, b, c])
        self.spans.append(span)
        return idx

    def const_id(self, value: float) -> int:
        got = self.const_ids.get(value)
        if got is None:
            got = len(self.consts)
            self.consts.append(value)
            self.const_ids[value] = got
        return got

    def new_temp(self) -> int:
        idx = self.temp_counter
        self.temp_counter += 1
        self.max_temps = max(self.max_temps, self.temp_counter)
        return ~idx  # negative marker; resolved to temp_base + idx at the end

    # ----------------------------------------------------------- expressions

    def compile_expr(self, expr, scope: dict, dst=None) -> int:
        """Emit code leaving the expression value in dst (allocated if None)."""
        if isinstance(expr, Literal):
            v = expr.value
            val = (1.0 if v else 0.0) if isinstance(v, bool) else float(v)
            if dst is None:
                dst = self.new_temp()
            self.emit(OP_CONST, dst, self.const_id(val), span=expr.span)
            return dst
        if isinstance(expr, VarRef):
            src = scope[expr.key]
            if dst is None:
                return src
            self.emit(OP_COPY, dst, src, span=expr.span)
            return dst
        if isinstance(expr, Unary):
            a = self.compile_expr(expr.operand, scope)
            if dst is None:
                dst = self.new_temp()
            self.emit(OP_NOT if expr.op == "NOT" else OP_NEG, dst, a, span=expr.span)
            return dst
        if isinstance(expr, Binary):
            a = self.compile_expr(expr.left, scope)
            b = self.compile_expr(expr.right, scope)
            if dst is None:
                dst = self.new_temp()
            op = self._binary_opcode(expr)
            self.emit(op, dst, a, b, span=expr.span)
            return dst
        if isinstance(expr, Call):
            return self.compile_fn_call(expr, scope, dst)
        raise ConfigError(f"internal: cannot compile {type(expr).__name__}")

    @staticmethod
    def _binary_opcode(expr: Binary) -> int:
        op = expr.op
        if op in _ARITH_OPS:
            return _ARITH_OPS[op]
        if op == "/":
            return OP_DIV_INT if expr.ty == ast.INT else OP_DIV_REAL
        if op == "MOD":
            return OP_MOD_INT
        if op in _BOOL_OPS:
            return _BOOL_OPS[op]
        return _CMP_OPS[op]

    def compile_fn_call(self, call: Call, scope: dict, dst):
        fn = self.lib.functions[call.key]
        self.fn_site_counter += 1
        prefix = f"{fn.name}#{self.fn_site_counter}"
        fscope = {}
        for d in fn.inputs:
            fscope[d.key] = self.add_slot(f"{prefix}.{d.name}", f"{prefix}.{d.name}", d.ty, 0.0)
        for d in fn.locals:
            fscope[d.key] = self.add_slot(f"{prefix}.{d.name}", f"{prefix}.{d.name}", d.ty, 0.0)
        ret_slot = self.add_slot(f"{prefix}.__ret", f"{prefix}.__ret", fn.ret_ty, 0.0)
        fscope[fn.key] = ret_slot

        for d, arg in zip(fn.inputs, call.args):
            self.compile_expr(arg, scope, dst=fscope[d.key])
        # locals and the result start from defined values on every invocation
        for d in fn.locals:
            self.emit(OP_CONST, fscope[d.key], self.const_id(self.default_init(d)), span=call.span)
        self.emit(OP_CONST, ret_slot, self.const_id(0.0), span=call.span)
        self.compile_body(fn.body, fscope, reset_temps=False)
        if dst is None:
            return ret_slot
        self.emit(OP_COPY, dst, ret_slot, span=call.span)
        return dst

    # ------------------------------------------------------------ statements

    def compile_body(self, body, scope: dict, reset_temps: bool):
        for st in body:
            if reset_temps:
                self.temp_counter = 0
            self.compile_stmt(st, scope, reset_temps)

    def compile_stmt(self, st, scope: dict, reset_temps: bool):
        if isinstance(st, Assign):
            self.compile_expr(st.value, scope, dst=scope[st.target.key])
            return
        if isinstance(st, If):
            self.compile_if(st, scope, reset_temps)
            return
        if isinstance(st, Case):
            self.compile_case(st, scope, reset_temps)
            return
        if isinstance(st, FbCall):
            self.compile_fb_call(st, scope, reset_temps)
            return
        raise ConfigError(f"internal: cannot compile {type(st).__name__}")

    def new_site(self, span, kind: str) -> int:
        site = BranchSite(
            site_id=len(self.sites),
            span=span,
            kind=kind,
            plc=self.current_plc,
            statement_index=self.current_stmt_index,
        )
        self.sites.append(site)
        return site.site_id

    def compile_if(self, st: If, scope: dict, reset_temps: bool):
        end_jumps = []
        for i, (cond, arm_body) in enumerate(st.arms):
            cond_slot = self.compile_expr(cond, scope)
            site = self.new_site(cond.span, "if" if i == 0 else "elsif")
            br = self.emit(OP_BR, cond_slot, site, 0, span=cond.span)
            self.compile_body(arm_body, scope, reset_temps)
            end_jumps.append(self.emit(OP_JMP, 0, span=st.span))
            self.code[br][3] = len(self.code)  # else target
        if st.else_body is not None:
            self.compile_body(st.else_body, scope, reset_temps)
        for j in end_jumps:
            self.code[j][1] = len(self.code)

    def compile_case(self, st: Case, scope: dict, reset_temps: bool):
        # all arm tests execute before any arm body, so the selector slot is
        # safe to reuse across tests even when bodies reset the temp region
        sel = self.compile_expr(st.selector, scope)
        end_jumps = []
        for arm in st.arms:
            test = self.new_temp()
            first = True
            for label in arm.labels:
                if isinstance(label, tuple):
                    lo, hi = label
                    t1 = self.new_temp()
                    t2 = self.new_temp()
                    self.emit(OP_GE, t1, sel, self._const_slot(float(lo), st.span), span=st.span)
                    self.emit(OP_LE, t2, sel, self._const_slot(float(hi), st.span), span=st.span)
                    part = self.new_temp()
                    self.emit(OP_AND, part, t1, t2, span=st.span)
                else:
                    part = self.new_temp()
                    self.emit(OP_EQ, part, sel, self._const_slot(float(label), st.span), span=st.span)
                if first:
                    self.emit(OP_COPY, test, part, span=st.span)
                    first = False
                else:
                    self.emit(OP_OR, test, test, part, span=st.span)
            site = self.new_site(st.span, "case-arm")
            br = self.emit(OP_BR, test, site, 0, span=st.span)
            self.compile_body(arm.body, scope, reset_temps)
            end_jumps.append(self.emit(OP_JMP, 0, span=st.span))
            self.code[br][3] = len(self.code)
        if st.else_body is not None:
            self.compile_body(st.else_body, scope, reset_temps)
        else:
            self.emit(OP_CASE_ERR, 0, 0, 0, span=st.span)
        for j in end_jumps:
            self.code[j][1] = len(self.code)

    def _const_slot(self, value: float, span) -> int:
        t = self.new_temp()
        self.emit(OP_CONST, t, self.const_id(value), span=span)
        return t

    def compile_fb_call(self, st: FbCall, scope: dict, reset_temps: bool, prefix: str = ""):
        inst_path = f"{prefix}{st.instance}"
        fb_ty = self._instance_types[ukey(inst_path)]
        fb = self.lib.function_blocks[ukey(fb_ty)]
        fbscope = {}
        for d in fb.all_decls():
            if d.kind == ast.KIND_FB_STATE:
                self._instance_types[ukey(f"{inst_path}.{d.name}")] = d.ty
            else:
                fbscope[d.key] = self.slot_of(f"{inst_path}.{d.name}")
        for name, expr in st.inputs:
            self.compile_expr(expr, scope, dst=self.slot_of(f"{inst_path}.{name}"))
        # nested FbCalls inside the body refer to nested instances
        self._compile_fb_body(fb.body, fbscope, inst_path)
        for name, target in st.outputs:
            self.emit(OP_COPY, scope[target.key], self.slot_of(f"{inst_path}.{name}"), span=st.span)

    def _compile_fb_body(self, body, fbscope, inst_path):
        for st in body:
            if isinstance(st, FbCall):
                self.compile_fb_call(st, fbscope, reset_temps=False, prefix=f"{inst_path}.")
            elif isinstance(st, If):
                end_jumps = []
                for i, (cond, arm_body) in enumerate(st.arms):
                    cond_slot = self.compile_expr(cond, fbscope)
                    site = self.new_site(cond.span, "if" if i == 0 else "elsif")
                    br = self.emit(OP_BR, cond_slot, site, 0, span=cond.span)
                    self._compile_fb_body(arm_body, fbscope, inst_path)
                    end_jumps.append(self.emit(OP_JMP, 0, span=st.span))
                    self.code[br][3] = len(self.code)
                if st.else_body is not None:
                    self._compile_fb_body(st.else_body, fbscope, inst_path)
                for j in end_jumps:
                    self.code[j][1] = len(self.code)
            else:
                self.compile_stmt(st, fbscope, reset_temps=False)

    # ------------------------------------------------------------------ main

    def compile(self) -> ExecProgram:
        master = self.model.master
        scope = {}
        self._instance_types = {}
        for d in master.all_decls():
            if d.kind == ast.KIND_FB_STATE:
                self._instance_types[d.key] = d.ty
                self.alloc_fb_instance(d.name, d.ty)
            else:
                scope[d.key] = self.add_slot(d.name, d.name, d.ty, self.default_init(d))

        seg_of = {}
        for plc, (start, end) in self.model.segment_spans.items():
            for i in range(start, end):
                seg_of[i] = plc

        for idx, st in enumerate(master.body):
            self.current_stmt_index = idx
            self.current_plc = seg_of.get(idx, master.name)
            self.temp_counter = 0
            self.compile_stmt(st, scope, reset_temps=True)
        self.emit(OP_HALT)

        # resolve temp markers (~t) to slots after the persistent region
        self.temp_base = len(self.slots)
        flat = array("i")
        for op, a, b, c in self.code:
            flat.extend(
                (
                    op,
                    a if a >= 0 or op in (OP_JMP,) else self.temp_base + ~a,
                    b if b >= 0 else self.temp_base + ~b,
                    c if c >= 0 else self.temp_base + ~c,
                )
            )

        io = self.model.io_map
        sensors, actuators = [], []
        for key, entry in io.items():
            if entry.role == "sensor":
                sensors.append((entry.name, self.slot_index[key], entry.ty))
            elif entry.role == "actuator":
                actuators.append((entry.name, self.slot_index[key], entry.ty))

        return ExecProgram(
            model=self.model,
            code=flat,
            consts=array("d", self.consts),
            slots=self.slots,
            slot_index=self.slot_index,
            sensors=sensors,
            actuators=actuators,
            sites=self.sites,
            spans=self.spans,
            n_temps=self.max_temps,
        )


def compile_model(model) -> ExecProgram:
    return _Compiler(model).compile()
