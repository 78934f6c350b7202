"""Recursive-descent parser producing the AST in ast.py.

One source file holds one PROGRAM, any number of FUNCTION / FUNCTION_BLOCK
definitions, and a CONFIGURATION whose TASK interval becomes the program's
task_interval_ms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import DuplicateNameError, PouRecursionError, StSyntaxError
from . import ast
from .ast import (
    Assign, Binary, Call, Case, CaseArm, FbCall, FunctionBlockDef, FunctionDef,
    If, Literal, PouLibrary, StProgram, Unary, VarDecl, VarRef, ukey,
)
from .lexer import Token, tokenize

_TYPE_KEYWORDS = {"BOOL", "INT", "REAL"}

# binary operator precedence, loosest first
_BIN_LEVELS = [
    {"OR"},
    {"XOR"},
    {"AND"},
    {"=", "<>"},
    {"<", "<=", ">", ">="},
    {"+", "-"},
    {"*", "/", "MOD"},
]


@dataclass
class TaskBinding:
    task_name: str
    interval_ms: int
    program_name: str


@dataclass
class ParsedFile:
    programs: list = field(default_factory=list)
    library: PouLibrary = field(default_factory=PouLibrary)
    bindings: list = field(default_factory=list)  # list[TaskBinding]


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    # ------------------------------------------------------------- utilities

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.toks[self.i]
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def accept(self, *kinds: str):
        if self.peek().kind in kinds:
            return self.advance()
        return None

    def expect(self, *kinds: str) -> Token:
        tok = self.peek()
        if tok.kind in kinds:
            return self.advance()
        raise StSyntaxError(tok.span, set(kinds), tok.kind)

    # ------------------------------------------------------------- top level

    def parse_file(self) -> ParsedFile:
        out = ParsedFile()
        while True:
            tok = self.peek()
            if tok.kind == "EOF":
                break
            if tok.kind == "PROGRAM":
                out.programs.append(self.parse_program_block())
            elif tok.kind == "FUNCTION":
                fn = self.parse_function()
                self._define_pou(out, fn.key, fn.name, fn.span, functions=fn)
            elif tok.kind == "FUNCTION_BLOCK":
                fb = self.parse_function_block()
                self._define_pou(out, fb.key, fb.name, fb.span, blocks=fb)
            elif tok.kind == "CONFIGURATION":
                out.bindings.extend(self.parse_configuration())
            else:
                raise StSyntaxError(
                    tok.span, {"PROGRAM", "FUNCTION", "FUNCTION_BLOCK", "CONFIGURATION"}, tok.kind
                )
        return out

    def _define_pou(self, out: ParsedFile, key, name, span, functions=None, blocks=None):
        if key in out.library.functions or key in out.library.function_blocks:
            raise DuplicateNameError(span, name, "POU")
        if functions is not None:
            out.library.functions[key] = functions
        else:
            out.library.function_blocks[key] = blocks

    # ------------------------------------------------------------------ POUs

    def parse_program_block(self) -> StProgram:
        start = self.expect("PROGRAM")
        name = self.expect("IDENT").value
        prog = StProgram(span=start.span, name=name)
        self._parse_var_blocks(prog.inputs, prog.outputs, prog.inouts, prog.locals)
        prog.body = self.parse_statements(until={"END_PROGRAM"})
        self.expect("END_PROGRAM")
        self.accept(";")
        self._check_unique_decls(prog.all_decls(), name)
        return prog

    def parse_function(self) -> FunctionDef:
        start = self.expect("FUNCTION")
        name = self.expect("IDENT").value
        self.expect(":")
        ret_ty = self.expect(*_TYPE_KEYWORDS).kind
        fn = FunctionDef(span=start.span, name=name, ret_ty=ret_ty)
        outputs, inouts = [], []
        self._parse_var_blocks(fn.inputs, outputs, inouts, fn.locals)
        if outputs or inouts:
            raise StSyntaxError(start.span, {"VAR_INPUT", "VAR"}, "VAR_OUTPUT/VAR_IN_OUT in FUNCTION")
        fn.body = self.parse_statements(until={"END_FUNCTION"})
        self.expect("END_FUNCTION")
        self.accept(";")
        self._check_unique_decls([*fn.inputs, *fn.locals], name, extra={ukey(name)})
        return fn

    def parse_function_block(self) -> FunctionBlockDef:
        start = self.expect("FUNCTION_BLOCK")
        name = self.expect("IDENT").value
        fb = FunctionBlockDef(span=start.span, name=name)
        inouts: list = []
        self._parse_var_blocks(fb.inputs, fb.outputs, inouts, fb.locals)
        if inouts:
            raise StSyntaxError(start.span, {"VAR_INPUT", "VAR_OUTPUT", "VAR"}, "VAR_IN_OUT in FUNCTION_BLOCK")
        fb.body = self.parse_statements(until={"END_FUNCTION_BLOCK"})
        self.expect("END_FUNCTION_BLOCK")
        self.accept(";")
        self._check_unique_decls(fb.all_decls(), name)
        return fb

    def _check_unique_decls(self, decls, owner, extra=frozenset()):
        seen = set(extra)
        for d in decls:
            if d.key in seen:
                raise DuplicateNameError(d.span, d.name)
            seen.add(d.key)

    # ----------------------------------------------------------- var blocks

    def _parse_var_blocks(self, inputs, outputs, inouts, locals_):
        kinds = {
            "VAR_INPUT": (inputs, ast.KIND_INPUT),
            "VAR_OUTPUT": (outputs, ast.KIND_OUTPUT),
            "VAR_IN_OUT": (inouts, ast.KIND_INOUT),
            "VAR": (locals_, ast.KIND_LOCAL),
        }
        while self.peek().kind in kinds:
            dest, kind = kinds[self.advance().kind]
            while self.peek().kind != "END_VAR":
                dest.extend(self._parse_decl_line(kind))
            self.expect("END_VAR")
            self.accept(";")

    def _parse_decl_line(self, kind: str) -> list[VarDecl]:
        names = [self.expect("IDENT")]
        while self.accept(","):
            names.append(self.expect("IDENT"))
        self.expect(":")
        ty_tok = self.expect(*_TYPE_KEYWORDS, "IDENT")
        if ty_tok.kind == "IDENT":
            # a function-block instance; only legal as local state
            if kind != ast.KIND_LOCAL:
                raise StSyntaxError(ty_tok.span, _TYPE_KEYWORDS, ty_tok.value)
            ty, decl_kind = ty_tok.value, ast.KIND_FB_STATE
        else:
            ty, decl_kind = ty_tok.kind, kind
        init = None
        if self.accept(":="):
            init = self._parse_literal()
        self.expect(";")
        return [VarDecl(span=t.span, name=t.value, ty=ty, kind=decl_kind, init=init) for t in names]

    def _parse_literal(self) -> Literal:
        tok = self.peek()
        neg = self.accept("-")
        tok = self.expect("INT_LIT", "REAL_LIT", "TRUE", "FALSE")
        if tok.kind == "INT_LIT":
            return Literal(span=tok.span, value=-tok.value if neg else tok.value)
        if tok.kind == "REAL_LIT":
            return Literal(span=tok.span, value=-tok.value if neg else tok.value)
        if neg:
            raise StSyntaxError(tok.span, {"INT_LIT", "REAL_LIT"}, tok.kind)
        return Literal(span=tok.span, value=(tok.kind == "TRUE"))

    # ----------------------------------------------------------- statements

    def parse_statements(self, until: set) -> list:
        stmts = []
        stop = until | {"EOF"}
        while self.peek().kind not in stop:
            while self.accept(";"):
                pass
            if self.peek().kind in stop:
                break
            stmts.append(self.parse_statement())
        return stmts

    def parse_statement(self):
        tok = self.peek()
        if tok.kind == "IF":
            return self.parse_if()
        if tok.kind == "CASE":
            return self.parse_case()
        if tok.kind == "IDENT":
            if self.peek(1).kind == ":=":
                name = self.advance()
                self.advance()
                value = self.parse_expr()
                self.expect(";")
                return Assign(span=tok.span, target=VarRef(span=name.span, name=name.value), value=value)
            if self.peek(1).kind == "(":
                return self.parse_fb_call()
            raise StSyntaxError(self.peek(1).span, {":=", "("}, self.peek(1).kind)
        raise StSyntaxError(tok.span, {"IF", "CASE", "IDENT"}, tok.kind)

    def parse_if(self) -> If:
        start = self.expect("IF")
        arms = []
        cond = self.parse_expr()
        self.expect("THEN")
        arms.append((cond, self.parse_statements({"ELSIF", "ELSE", "END_IF"})))
        while self.accept("ELSIF"):
            cond = self.parse_expr()
            self.expect("THEN")
            arms.append((cond, self.parse_statements({"ELSIF", "ELSE", "END_IF"})))
        else_body = None
        if self.accept("ELSE"):
            else_body = self.parse_statements({"END_IF"})
        self.expect("END_IF")
        self.accept(";")
        return If(span=start.span, arms=arms, else_body=else_body)

    def parse_case(self) -> Case:
        start = self.expect("CASE")
        selector = self.parse_expr()
        self.expect("OF")
        arms = []
        while self.peek().kind in ("INT_LIT", "-"):
            labels = [self._parse_case_label()]
            while self.accept(","):
                labels.append(self._parse_case_label())
            self.expect(":")
            # INT_LIT / '-' cannot start a statement, so they mark the next label
            body = self.parse_statements({"ELSE", "END_CASE", "INT_LIT", "-"})
            arms.append(CaseArm(labels=labels, body=body))
        else_body = None
        if self.accept("ELSE"):
            else_body = self.parse_statements({"END_CASE"})
        self.expect("END_CASE")
        self.accept(";")
        return Case(span=start.span, selector=selector, arms=arms, else_body=else_body)

    def _parse_case_label(self):
        lo = self._parse_signed_int()
        if self.accept(".."):
            hi = self._parse_signed_int()
            if hi < lo:
                raise StSyntaxError(self.peek().span, {"label range lo <= hi"}, f"{lo}..{hi}")
            return (lo, hi)
        return lo

    def _parse_signed_int(self) -> int:
        neg = self.accept("-")
        tok = self.expect("INT_LIT")
        return -tok.value if neg else tok.value

    def parse_fb_call(self) -> FbCall:
        name = self.expect("IDENT")
        self.expect("(")
        inputs, outputs = [], []
        if self.peek().kind != ")":
            while True:
                arg = self.expect("IDENT")
                op = self.expect(":=", "=>")
                if op.kind == ":=":
                    inputs.append((arg.value, self.parse_expr()))
                else:
                    target = self.expect("IDENT")
                    outputs.append((arg.value, VarRef(span=target.span, name=target.value)))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect(";")
        return FbCall(span=name.span, instance=name.value, inputs=inputs, outputs=outputs)

    # ---------------------------------------------------------- expressions

    def parse_expr(self, level: int = 0):
        if level >= len(_BIN_LEVELS):
            return self.parse_unary()
        left = self.parse_expr(level + 1)
        while self.peek().kind in _BIN_LEVELS[level]:
            op = self.advance()
            right = self.parse_expr(level + 1)
            left = Binary(span=op.span, op=op.kind, left=left, right=right)
        return left

    def parse_unary(self):
        tok = self.peek()
        if tok.kind == "NOT":
            self.advance()
            return Unary(span=tok.span, op="NOT", operand=self.parse_unary())
        if tok.kind == "-":
            self.advance()
            return Unary(span=tok.span, op="-", operand=self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        tok = self.peek()
        if tok.kind in ("INT_LIT", "REAL_LIT", "TRUE", "FALSE"):
            self.advance()
            if tok.kind == "INT_LIT":
                return Literal(span=tok.span, value=tok.value)
            if tok.kind == "REAL_LIT":
                return Literal(span=tok.span, value=tok.value)
            return Literal(span=tok.span, value=(tok.kind == "TRUE"))
        if tok.kind == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind == "IDENT":
            self.advance()
            if self.peek().kind == "(":
                self.advance()
                args = []
                if self.peek().kind != ")":
                    args.append(self.parse_expr())
                    while self.accept(","):
                        args.append(self.parse_expr())
                self.expect(")")
                return Call(span=tok.span, name=tok.value, args=args)
            return VarRef(span=tok.span, name=tok.value)
        raise StSyntaxError(tok.span, {"literal", "identifier", "("}, tok.kind)

    # -------------------------------------------------------- configuration

    def parse_configuration(self) -> list[TaskBinding]:
        self.expect("CONFIGURATION")
        self.expect("IDENT")
        bindings = []
        while self.accept("RESOURCE"):
            self.expect("IDENT")
            self.expect("ON")
            self.expect("IDENT")
            tasks = {}
            while True:
                if self.accept("TASK"):
                    task_name = self.expect("IDENT").value
                    self.expect("(")
                    interval = None
                    while True:
                        key = self.expect("INTERVAL", "PRIORITY")
                        self.expect(":=")
                        if key.kind == "INTERVAL":
                            interval = self.expect("TIME").value
                        else:
                            self.expect("INT_LIT")
                        if not self.accept(","):
                            break
                    self.expect(")")
                    self.accept(";")
                    if interval is None:
                        raise StSyntaxError(key.span, {"INTERVAL"}, "TASK without INTERVAL")
                    tasks[ukey(task_name)] = interval
                elif self.accept("PROGRAM"):
                    self.expect("IDENT")  # instance name
                    self.expect("WITH")
                    task = self.expect("IDENT")
                    self.expect(":")
                    prog = self.expect("IDENT")
                    self.accept(";")
                    if ukey(task.value) not in tasks:
                        raise StSyntaxError(task.span, set(tasks) or {"TASK"}, task.value)
                    bindings.append(TaskBinding(task.value, tasks[ukey(task.value)], prog.value))
                else:
                    break
            self.expect("END_RESOURCE")
        self.expect("END_CONFIGURATION")
        self.accept(";")
        return bindings


def _check_no_recursion(lib: PouLibrary):
    """Reject any cycle in the POU call graph (functions + function blocks)."""
    edges: dict[str, set] = {}

    def callee_keys(body, decls):
        instance_types = {d.key: ukey(d.ty) for d in decls if d.kind == ast.KIND_FB_STATE}
        found = set()
        for st in ast.walk_statements(body):
            for top in ast.statement_exprs(st):
                for e in ast.walk_exprs(top):
                    if isinstance(e, Call):
                        found.add(e.key)
            if isinstance(st, FbCall) and st.key in instance_types:
                found.add(instance_types[st.key])
        return found

    for key, fn in lib.functions.items():
        edges[key] = callee_keys(fn.body, [*fn.inputs, *fn.locals])
    for key, fb in lib.function_blocks.items():
        edges[key] = callee_keys(fb.body, fb.all_decls())

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {k: WHITE for k in edges}
    stack_names: list[str] = []

    def visit(node):
        color[node] = GRAY
        stack_names.append(node)
        for nxt in sorted(edges.get(node, ())):
            if nxt not in color:
                continue
            if color[nxt] == GRAY:
                cycle = stack_names[stack_names.index(nxt):] + [nxt]
                raise PouRecursionError(cycle)
            if color[nxt] == WHITE:
                visit(nxt)
        stack_names.pop()
        color[node] = BLACK

    for k in sorted(edges):
        if color[k] == WHITE:
            visit(k)


def parse_file(source: str) -> ParsedFile:
    parsed = Parser(tokenize(source)).parse_file()
    _check_no_recursion(parsed.library)
    return parsed


def parse_program(source: str):
    """Parse one PLC project file into (StProgram, PouLibrary).

    The file must contain exactly one PROGRAM and a CONFIGURATION binding it
    to a TASK, whose INTERVAL becomes the program's task interval.
    """
    parsed = parse_file(source)
    if len(parsed.programs) != 1:
        raise StSyntaxError(ast.NO_SPAN, {"exactly one PROGRAM"}, f"{len(parsed.programs)} programs")
    prog = parsed.programs[0]
    interval = None
    for binding in parsed.bindings:
        if ukey(binding.program_name) == prog.key:
            interval = binding.interval_ms
    if interval is None:
        raise StSyntaxError(ast.NO_SPAN, {"CONFIGURATION binding program " + prog.name}, "none")
    if interval <= 0:
        raise StSyntaxError(prog.span, {"task interval > 0"}, str(interval))
    prog.task_interval_ms = interval
    return prog, parsed.library
