"""AST for the supported structured-text subset.

Nodes compare structurally: source spans and inferred types are excluded
from equality so that parse(pretty(parse(x))) == parse(x).
Identifiers are case-insensitive; nodes keep the spelling as written and
all lookups go through ukey().
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


def ukey(name: str) -> str:
    """Canonical (upper-case) key for a case-insensitive identifier."""
    return name.upper()


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0)

BOOL = "BOOL"
INT = "INT"
REAL = "REAL"
SCALAR_TYPES = (BOOL, INT, REAL)


# ---------------------------------------------------------------- expressions


@dataclass
class Expr:
    span: Span = field(compare=False, repr=False)


@dataclass
class Literal(Expr):
    value: Union[bool, int, float]
    ty: str = field(default=None, compare=False)  # set for literals at parse time

    def __post_init__(self):
        if self.ty is None:
            if isinstance(self.value, bool):
                self.ty = BOOL
            elif isinstance(self.value, int):
                self.ty = INT
            else:
                self.ty = REAL


@dataclass
class VarRef(Expr):
    name: str
    ty: Optional[str] = field(default=None, compare=False)

    @property
    def key(self) -> str:
        return ukey(self.name)


@dataclass
class Unary(Expr):
    op: str  # 'NOT' or '-'
    operand: Expr
    ty: Optional[str] = field(default=None, compare=False)


@dataclass
class Binary(Expr):
    op: str  # OR XOR AND = <> < <= > >= + - * / MOD
    left: Expr
    right: Expr
    ty: Optional[str] = field(default=None, compare=False)


@dataclass
class Call(Expr):
    name: str
    args: list  # list[Expr], positional
    ty: Optional[str] = field(default=None, compare=False)

    @property
    def key(self) -> str:
        return ukey(self.name)


# ----------------------------------------------------------------- statements


@dataclass
class Stmt:
    span: Span = field(compare=False, repr=False)


@dataclass
class Assign(Stmt):
    target: VarRef
    value: Expr


@dataclass
class If(Stmt):
    # arms[0] is the IF arm, the rest are ELSIF arms
    arms: list  # list[tuple[Expr, list[Stmt]]]
    else_body: Optional[list] = None


@dataclass
class CaseArm:
    labels: list  # list[int | tuple[int, int]] (single value or lo..hi range)
    body: list  # list[Stmt]


@dataclass
class Case(Stmt):
    selector: Expr
    arms: list  # list[CaseArm]
    else_body: Optional[list] = None


@dataclass
class FbCall(Stmt):
    instance: str
    inputs: list  # list[tuple[str, Expr]]   name := expr
    outputs: list  # list[tuple[str, VarRef]] name => var

    @property
    def key(self) -> str:
        return ukey(self.instance)


# --------------------------------------------------------------- declarations

KIND_INPUT = "input"
KIND_OUTPUT = "output"
KIND_INOUT = "inout"
KIND_LOCAL = "local"
KIND_FB_STATE = "fb_state"


@dataclass
class VarDecl:
    span: Span = field(compare=False, repr=False)
    name: str = ""
    ty: str = ""  # BOOL/INT/REAL, or a function-block name for fb_state
    kind: str = KIND_LOCAL
    init: Optional[Literal] = None

    @property
    def key(self) -> str:
        return ukey(self.name)


@dataclass
class StProgram:
    span: Span = field(compare=False, repr=False)
    name: str = ""
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    inouts: list = field(default_factory=list)
    locals: list = field(default_factory=list)
    body: list = field(default_factory=list)
    task_interval_ms: int = 0
    exec_budget_ms: Optional[float] = field(default=None, compare=False)

    def all_decls(self):
        return [*self.inputs, *self.outputs, *self.inouts, *self.locals]

    @property
    def key(self) -> str:
        return ukey(self.name)


@dataclass
class FunctionDef:
    span: Span = field(compare=False, repr=False)
    name: str = ""
    ret_ty: str = ""
    inputs: list = field(default_factory=list)
    locals: list = field(default_factory=list)
    body: list = field(default_factory=list)

    @property
    def key(self) -> str:
        return ukey(self.name)


@dataclass
class FunctionBlockDef:
    span: Span = field(compare=False, repr=False)
    name: str = ""
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    locals: list = field(default_factory=list)  # persistent instance state
    body: list = field(default_factory=list)

    @property
    def key(self) -> str:
        return ukey(self.name)

    def all_decls(self):
        return [*self.inputs, *self.outputs, *self.locals]


@dataclass
class PouLibrary:
    functions: dict = field(default_factory=dict)  # ukey -> FunctionDef
    function_blocks: dict = field(default_factory=dict)  # ukey -> FunctionBlockDef

    def merged_with(self, other: "PouLibrary") -> "PouLibrary":
        """Union of two libraries; identical re-definitions are unified."""
        from ..errors import TypeConflictError

        out = PouLibrary(dict(self.functions), dict(self.function_blocks))
        for key, fn in other.functions.items():
            if key in out.functions and out.functions[key] != fn:
                raise TypeConflictError(fn.name, "function defined differently in two projects")
            out.functions.setdefault(key, fn)
        for key, fb in other.function_blocks.items():
            if key in out.function_blocks and out.function_blocks[key] != fb:
                raise TypeConflictError(fb.name, "function block defined differently in two projects")
            out.function_blocks.setdefault(key, fb)
        return out


def walk_statements(body):
    """Yield every statement in a body, depth first."""
    for st in body:
        yield st
        if isinstance(st, If):
            for _, arm_body in st.arms:
                yield from walk_statements(arm_body)
            if st.else_body:
                yield from walk_statements(st.else_body)
        elif isinstance(st, Case):
            for arm in st.arms:
                yield from walk_statements(arm.body)
            if st.else_body:
                yield from walk_statements(st.else_body)


def walk_exprs(expr):
    yield expr
    if isinstance(expr, Unary):
        yield from walk_exprs(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk_exprs(expr.left)
        yield from walk_exprs(expr.right)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from walk_exprs(a)


def statement_exprs(st):
    """Top-level expressions appearing in one statement (not recursing into bodies)."""
    if isinstance(st, Assign):
        return [st.value]
    if isinstance(st, If):
        return [cond for cond, _ in st.arms]
    if isinstance(st, Case):
        return [st.selector]
    if isinstance(st, FbCall):
        return [e for _, e in st.inputs]
    return []
