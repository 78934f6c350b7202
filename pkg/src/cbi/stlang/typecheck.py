"""Type checking and name resolution.

Annotates every expression with its type in place and returns the program.
INT widens implicitly to REAL; BOOL never mixes with numerics. The single
sanctioned exception: integer literals 1/0 assigned (or passed) to a BOOL
target are read as TRUE/FALSE when allow_int_bool_literals is on.

Strictness flag table (allow_int_bool_literals):
    True  (default)  x: BOOL := 1;   accepted, literal treated as TRUE
    False            x: BOOL := 1;   StTypeError
Both settings reject every other INT<->BOOL mixing (e.g. x: BOOL := 2,
arithmetic on BOOL, comparisons between BOOL and numerics).
"""

from __future__ import annotations

from ..errors import StTypeError
from . import ast
from .ast import (
    BOOL, INT, REAL, Assign, Binary, Call, Case, FbCall, FunctionBlockDef,
    FunctionDef, If, Literal, PouLibrary, StProgram, Unary, VarRef, ukey,
)

_NUMERIC = (INT, REAL)


class _Scope:
    """Flat namespace of one POU: scalar vars, fb instances, optional return var."""

    def __init__(self, decls, lib: PouLibrary, ret_name=None, ret_ty=None):
        self.scalars = {}
        self.instances = {}
        self.readonly = set()
        self.lib = lib
        for d in decls:
            if d.kind == ast.KIND_FB_STATE:
                if ukey(d.ty) not in lib.function_blocks:
                    raise StTypeError(d.span, f"unknown function block type {d.ty!r}")
                self.instances[d.key] = d
            else:
                self.scalars[d.key] = d
                if d.kind == ast.KIND_INPUT:
                    self.readonly.add(d.key)
        self.ret_key = ukey(ret_name) if ret_name else None
        self.ret_ty = ret_ty

    def var_type(self, ref: VarRef) -> str:
        if self.ret_key is not None and ref.key == self.ret_key:
            return self.ret_ty
        decl = self.scalars.get(ref.key)
        if decl is None:
            if ref.key in self.instances:
                raise StTypeError(ref.span, f"function-block instance {ref.name!r} used as a value")
            raise StTypeError(ref.span, f"undeclared identifier {ref.name!r}")
        return decl.ty


def _coercible(src_ty: str, dst_ty: str) -> bool:
    return src_ty == dst_ty or (src_ty == INT and dst_ty == REAL)


def _check_store(value, dst_ty: str, span, scope, flags, what: str):
    """Typecheck expr `value` flowing into a slot of type dst_ty."""
    vty = _infer(value, scope, flags)
    if vty == dst_ty:
        return
    if vty == INT and dst_ty == REAL:
        return
    if (
        dst_ty == BOOL
        and flags["allow_int_bool_literals"]
        and isinstance(value, Literal)
        and value.ty == INT
        and value.value in (0, 1)
    ):
        value.ty = BOOL  # annotation only; pretty printing keeps the源 spelling
        return
    raise StTypeError(span, f"{what}: cannot assign {vty} to {dst_ty}")


def _infer(expr, scope: _Scope, flags) -> str:
    if isinstance(expr, Literal):
        return expr.ty
    if isinstance(expr, VarRef):
        expr.ty = scope.var_type(expr)
        return expr.ty
    if isinstance(expr, Unary):
        ty = _infer(expr.operand, scope, flags)
        if expr.op == "NOT":
            if ty != BOOL:
                raise StTypeError(expr.span, f"NOT requires BOOL, got {ty}")
            expr.ty = BOOL
        else:
            if ty not in _NUMERIC:
                raise StTypeError(expr.span, f"unary - requires INT or REAL, got {ty}")
            expr.ty = ty
        return expr.ty
    if isinstance(expr, Binary):
        lt = _infer(expr.left, scope, flags)
        rt = _infer(expr.right, scope, flags)
        expr.ty = _binary_type(expr.op, lt, rt, expr.span)
        return expr.ty
    if isinstance(expr, Call):
        fn = scope.lib.functions.get(expr.key)
        if fn is None:
            raise StTypeError(expr.span, f"unknown function {expr.name!r}")
        if len(expr.args) != len(fn.inputs):
            raise StTypeError(
                expr.span, f"{fn.name} expects {len(fn.inputs)} arguments, got {len(expr.args)}"
            )
        for arg, decl in zip(expr.args, fn.inputs):
            _check_store(arg, decl.ty, arg.span, scope, flags, f"argument {decl.name}")
        expr.ty = fn.ret_ty
        return expr.ty
    raise StTypeError(getattr(expr, "span", ast.NO_SPAN), f"unsupported expression {type(expr).__name__}")


def _binary_type(op: str, lt: str, rt: str, span) -> str:
    if op in ("AND", "OR", "XOR"):
        if lt == BOOL and rt == BOOL:
            return BOOL
        raise StTypeError(span, f"{op} requires BOOL operands, got {lt} and {rt}")
    if op in ("+", "-", "*", "/"):
        if lt in _NUMERIC and rt in _NUMERIC:
            return REAL if REAL in (lt, rt) else INT
        raise StTypeError(span, f"{op} requires numeric operands, got {lt} and {rt}")
    if op == "MOD":
        if lt == INT and rt == INT:
            return INT
        raise StTypeError(span, f"MOD requires INT operands, got {lt} and {rt}")
    if op in ("<", "<=", ">", ">="):
        if lt in _NUMERIC and rt in _NUMERIC:
            return BOOL
        raise StTypeError(span, f"{op} requires numeric operands, got {lt} and {rt}")
    if op in ("=", "<>"):
        if (lt in _NUMERIC and rt in _NUMERIC) or (lt == BOOL and rt == BOOL):
            return BOOL
        raise StTypeError(span, f"{op} requires matching operand kinds, got {lt} and {rt}")
    raise StTypeError(span, f"unknown operator {op}")


def _check_body(body, scope: _Scope, flags):
    for st in body:
        if isinstance(st, Assign):
            key = st.target.key
            if scope.ret_key is not None and key == scope.ret_key:
                st.target.ty = scope.ret_ty
            else:
                st.target.ty = scope.var_type(st.target)
                if key in scope.readonly:
                    raise StTypeError(st.span, f"cannot assign to input variable {st.target.name!r}")
            _check_store(st.value, st.target.ty, st.span, scope, flags, f"assignment to {st.target.name}")
        elif isinstance(st, If):
            for cond, arm_body in st.arms:
                if _infer(cond, scope, flags) != BOOL:
                    raise StTypeError(cond.span, f"IF condition must be BOOL, got {cond.ty}")
                _check_body(arm_body, scope, flags)
            if st.else_body:
                _check_body(st.else_body, scope, flags)
        elif isinstance(st, Case):
            if _infer(st.selector, scope, flags) != INT:
                raise StTypeError(st.selector.span, f"CASE selector must be INT, got {st.selector.ty}")
            seen = set()
            for arm in st.arms:
                for label in arm.labels:
                    values = range(label[0], label[1] + 1) if isinstance(label, tuple) else (label,)
                    for v in values:
                        if v in seen:
                            raise StTypeError(st.span, f"duplicate CASE label {v}")
                        seen.add(v)
                _check_body(arm.body, scope, flags)
            if st.else_body:
                _check_body(st.else_body, scope, flags)
        elif isinstance(st, FbCall):
            _check_fb_call(st, scope, flags)
        else:
            raise StTypeError(st.span, f"unsupported statement {type(st).__name__}")


def _check_fb_call(st: FbCall, scope: _Scope, flags):
    decl = scope.instances.get(st.key)
    if decl is None:
        raise StTypeError(st.span, f"{st.instance!r} is not a function-block instance")
    fb = scope.lib.function_blocks[ukey(decl.ty)]
    in_types = {d.key: d for d in fb.inputs}
    out_types = {d.key: d for d in fb.outputs}
    seen = set()
    for name, expr in st.inputs:
        d = in_types.get(ukey(name))
        if d is None:
            raise StTypeError(st.span, f"{fb.name} has no input {name!r}")
        if ukey(name) in seen:
            raise StTypeError(st.span, f"input {name!r} bound twice")
        seen.add(ukey(name))
        _check_store(expr, d.ty, expr.span, scope, flags, f"input {name}")
    for name, target in st.outputs:
        d = out_types.get(ukey(name))
        if d is None:
            raise StTypeError(st.span, f"{fb.name} has no output {name!r}")
        target.ty = scope.var_type(target)
        if target.key in scope.readonly:
            raise StTypeError(target.span, f"cannot bind output to input variable {target.name!r}")
        if not _coercible(d.ty, target.ty):
            raise StTypeError(target.span, f"output {name}: cannot assign {d.ty} to {target.ty}")


def _check_decl_inits(decls, scope, flags):
    for d in decls:
        if d.kind != ast.KIND_FB_STATE and d.init is not None:
            _check_store(d.init, d.ty, d.span, scope, flags, f"initializer of {d.name}")


def typecheck_library(lib: PouLibrary, allow_int_bool_literals: bool = True) -> PouLibrary:
    flags = {"allow_int_bool_literals": allow_int_bool_literals}
    for fn in lib.functions.values():
        for d in [*fn.inputs, *fn.locals]:
            if d.kind == ast.KIND_FB_STATE:
                raise StTypeError(d.span, f"function {fn.name} cannot hold function-block instance {d.name!r}")
        scope = _Scope([*fn.inputs, *fn.locals], lib, ret_name=fn.name, ret_ty=fn.ret_ty)
        _check_decl_inits([*fn.inputs, *fn.locals], scope, flags)
        _check_body(fn.body, scope, flags)
        if not any(
            isinstance(st, Assign) and st.target.key == fn.key for st in ast.walk_statements(fn.body)
        ):
            raise StTypeError(fn.span, f"function {fn.name} never assigns its return value")
    for fb in lib.function_blocks.values():
        scope = _Scope(fb.all_decls(), lib)
        _check_decl_inits(fb.all_decls(), scope, flags)
        _check_body(fb.body, scope, flags)
    return lib


def typecheck(prog: StProgram, lib: PouLibrary, allow_int_bool_literals: bool = True) -> StProgram:
    """Annotate and validate one program against its library."""
    flags = {"allow_int_bool_literals": allow_int_bool_literals}
    typecheck_library(lib, allow_int_bool_literals)
    scope = _Scope(prog.all_decls(), lib)
    _check_decl_inits(prog.all_decls(), scope, flags)
    _check_body(prog.body, scope, flags)
    return prog
