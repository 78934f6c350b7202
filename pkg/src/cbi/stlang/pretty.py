"""Canonical pretty-printer; parse(pretty(ast)) is structurally identical to ast."""

from __future__ import annotations

from .ast import (
    Assign, Binary, Call, Case, FbCall, FunctionBlockDef, FunctionDef, If,
    Literal, PouLibrary, StProgram, Unary, VarRef,
)

_LEVELS = {
    "OR": 1, "XOR": 2, "AND": 3,
    "=": 4, "<>": 4,
    "<": 5, "<=": 5, ">": 5, ">=": 5,
    "+": 6, "-": 6,
    "*": 7, "/": 7, "MOD": 7,
}
_UNARY_LEVEL = 8
_IND = "  "


def format_literal(lit: Literal) -> str:
    v = lit.value
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, int):
        return str(v)
    text = repr(float(v))
    return text


def format_expr(expr, parent_level: int = 0, right_side: bool = False) -> str:
    if isinstance(expr, Literal):
        return format_literal(expr)
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(format_expr(a) for a in expr.args)})"
    if isinstance(expr, Unary):
        op = "NOT " if expr.op == "NOT" else "-"
        inner = format_expr(expr.operand, _UNARY_LEVEL)
        text = f"{op}{inner}"
        needs = parent_level >= _UNARY_LEVEL and isinstance(expr.operand, (Unary,))
        return f"({text})" if needs else text
    if isinstance(expr, Binary):
        level = _LEVELS[expr.op]
        left = format_expr(expr.left, level, right_side=False)
        right = format_expr(expr.right, level, right_side=True)
        text = f"{left} {expr.op} {right}"
        if parent_level > level or (parent_level == level and right_side):
            return f"({text})"
        return text
    raise TypeError(f"cannot format {type(expr).__name__}")


def _format_label(label) -> str:
    if isinstance(label, tuple):
        return f"{label[0]}..{label[1]}"
    return str(label)


def format_stmt(st, depth: int) -> list[str]:
    pad = _IND * depth
    if isinstance(st, Assign):
        return [f"{pad}{st.target.name} := {format_expr(st.value)};"]
    if isinstance(st, If):
        lines = []
        for i, (cond, body) in enumerate(st.arms):
            kw = "IF" if i == 0 else "ELSIF"
            lines.append(f"{pad}{kw} {format_expr(cond)} THEN")
            for s in body:
                lines.extend(format_stmt(s, depth + 1))
        if st.else_body is not None:
            lines.append(f"{pad}ELSE")
            for s in st.else_body:
                lines.extend(format_stmt(s, depth + 1))
        lines.append(f"{pad}END_IF;")
        return lines
    if isinstance(st, Case):
        lines = [f"{pad}CASE {format_expr(st.selector)} OF"]
        for arm in st.arms:
            lines.append(f"{pad}{_IND}{', '.join(_format_label(l) for l in arm.labels)}:")
            for s in arm.body:
                lines.extend(format_stmt(s, depth + 2))
        if st.else_body is not None:
            lines.append(f"{pad}ELSE")
            for s in st.else_body:
                lines.extend(format_stmt(s, depth + 1))
        lines.append(f"{pad}END_CASE;")
        return lines
    if isinstance(st, FbCall):
        args = [f"{n} := {format_expr(e)}" for n, e in st.inputs]
        args += [f"{n} => {v.name}" for n, v in st.outputs]
        return [f"{pad}{st.instance}({', '.join(args)});"]
    raise TypeError(f"cannot format {type(st).__name__}")


def _format_var_block(kw: str, decls, depth: int) -> list[str]:
    if not decls:
        return []
    pad = _IND * depth
    lines = [f"{pad}{kw}"]
    for d in decls:
        init = f" := {format_literal(d.init)}" if d.init is not None else ""
        lines.append(f"{pad}{_IND}{d.name} : {d.ty}{init};")
    lines.append(f"{pad}END_VAR")
    return lines


def format_interval(ms: int) -> str:
    if ms % 1000 == 0:
        return f"T#{ms // 1000}s"
    return f"T#{ms}ms"


def pretty_program(prog: StProgram, segments=None) -> str:
    """Program block text. segments: optional [(comment, start_idx)] markers
    emitted before the given body statement indexes (used for the master)."""
    lines = [f"PROGRAM {prog.name}"]
    lines += _format_var_block("VAR_INPUT", prog.inputs, 1)
    lines += _format_var_block("VAR_OUTPUT", prog.outputs, 1)
    lines += _format_var_block("VAR_IN_OUT", prog.inouts, 1)
    lines += _format_var_block("VAR", prog.locals, 1)
    marks = {}
    if segments:
        for comment, start in segments:
            marks.setdefault(start, []).append(comment)
    for idx, st in enumerate(prog.body):
        for comment in marks.get(idx, ()):
            lines.append(f"{_IND}(* {comment} *)")
        lines.extend(format_stmt(st, 1))
    lines.append("END_PROGRAM")
    return "\n".join(lines) + "\n"


def pretty_function(fn: FunctionDef) -> str:
    lines = [f"FUNCTION {fn.name} : {fn.ret_ty}"]
    lines += _format_var_block("VAR_INPUT", fn.inputs, 1)
    lines += _format_var_block("VAR", fn.locals, 1)
    for st in fn.body:
        lines.extend(format_stmt(st, 1))
    lines.append("END_FUNCTION")
    return "\n".join(lines) + "\n"


def pretty_function_block(fb: FunctionBlockDef) -> str:
    lines = [f"FUNCTION_BLOCK {fb.name}"]
    lines += _format_var_block("VAR_INPUT", fb.inputs, 1)
    lines += _format_var_block("VAR_OUTPUT", fb.outputs, 1)
    lines += _format_var_block("VAR", fb.locals, 1)
    for st in fb.body:
        lines.extend(format_stmt(st, 1))
    lines.append("END_FUNCTION_BLOCK")
    return "\n".join(lines) + "\n"


def pretty_configuration(prog: StProgram, config_name: str = "MasterConfig") -> str:
    return "\n".join(
        [
            f"CONFIGURATION {config_name}",
            f"{_IND}RESOURCE Res0 ON PLC",
            f"{_IND}{_IND}TASK Main(INTERVAL := {format_interval(prog.task_interval_ms)}, PRIORITY := 0);",
            f"{_IND}{_IND}PROGRAM Inst0 WITH Main : {prog.name};",
            f"{_IND}END_RESOURCE",
            "END_CONFIGURATION",
        ]
    ) + "\n"


def pretty_project(prog: StProgram, lib: PouLibrary, segments=None, config_name: str = "MasterConfig") -> str:
    """Full source: functions, function blocks, program, configuration."""
    parts = []
    for key in sorted(lib.functions):
        parts.append(pretty_function(lib.functions[key]))
    for key in sorted(lib.function_blocks):
        parts.append(pretty_function_block(lib.function_blocks[key]))
    parts.append(pretty_program(prog, segments=segments))
    parts.append(pretty_configuration(prog, config_name))
    return "\n".join(parts)
