"""Frontend tests: lexing, parsing, typing, pretty-print round trips."""

from __future__ import annotations

import pytest

from cbi.errors import (
    DuplicateNameError, PouRecursionError, StSyntaxError, StTypeError,
)
from cbi.progen import GenSpec, generate_source
from cbi.stlang import (
    BOOL, INT, REAL, Binary, If, Literal, parse_program, pretty_project, typecheck,
)
from cbi.stlang.lexer import parse_time_literal, tokenize
from cbi.stlang.ast import NO_SPAN

MINIMAL_CFG = """
CONFIGURATION c
  RESOURCE r ON PLC
    TASK Main(INTERVAL := T#1s, PRIORITY := 0);
    PROGRAM i WITH Main : p;
  END_RESOURCE
END_CONFIGURATION
"""


def wrap(body: str, decls: str = "") -> str:
    return f"PROGRAM p\n{decls}\n{body}\nEND_PROGRAM\n" + MINIMAL_CFG


# ----------------------------------------------------------------------- lexer


def test_time_literals():
    assert parse_time_literal("T#1s", NO_SPAN) == 1000
    assert parse_time_literal("T#500ms", NO_SPAN) == 500
    assert parse_time_literal("T#1m30s", NO_SPAN) == 90_000
    assert parse_time_literal("t#0.5s", NO_SPAN) == 500
    with pytest.raises(StSyntaxError):
        parse_time_literal("T#xyz", NO_SPAN)


def test_comments_and_case_insensitive_keywords():
    toks = tokenize("(* hi\nthere *) if Then // trailing\nEND_IF")
    assert [t.kind for t in toks] == ["IF", "THEN", "END_IF", "EOF"]
    assert toks[0].span.line == 2  # span tracks lines across the comment


# ---------------------------------------------------------------------- parser


def test_fig5_plc1_shape(fig5_programs):
    (p1, _p2), _ = fig5_programs
    assert p1.name == "plc1"
    assert p1.task_interval_ms == 1000
    assert [(d.name, d.ty) for d in p1.inputs] == [("YellowAmount", REAL)]
    assert [(d.name, d.ty) for d in p1.inouts] == [("YellowValve", BOOL)]
    assert len(p1.body) == 1 and isinstance(p1.body[0], If)


def test_empty_program_parses():
    prog, lib = parse_program(wrap("", "VAR_INPUT END_VAR"))
    assert prog.body == []
    assert prog.inputs == []
    typecheck(prog, lib)


def test_missing_configuration_rejected():
    with pytest.raises(StSyntaxError):
        parse_program("PROGRAM p END_PROGRAM")


def test_syntax_error_cites_location_and_expected():
    src = wrap("x := ;", "VAR x : INT; END_VAR")
    with pytest.raises(StSyntaxError) as ei:
        parse_program(src)
    assert ei.value.span.line > 0
    assert ei.value.expected


def test_duplicate_variable_names_rejected_case_insensitively():
    with pytest.raises(DuplicateNameError):
        parse_program(wrap("", "VAR x : INT; X : REAL; END_VAR"))


def test_recursive_function_rejected():
    src = (
        "FUNCTION f : INT\n  VAR_INPUT n : INT; END_VAR\n  f := f(n);\nEND_FUNCTION\n"
        + wrap("x := f(1);", "VAR x : INT; END_VAR")
    )
    with pytest.raises(PouRecursionError):
        parse_program(src)


def test_mutually_recursive_pous_rejected():
    src = (
        "FUNCTION f : INT\n  VAR_INPUT n : INT; END_VAR\n  f := g(n);\nEND_FUNCTION\n"
        "FUNCTION g : INT\n  VAR_INPUT n : INT; END_VAR\n  g := f(n);\nEND_FUNCTION\n"
        + wrap("x := f(1);", "VAR x : INT; END_VAR")
    )
    with pytest.raises(PouRecursionError):
        parse_program(src)


def test_operator_precedence():
    prog, _ = parse_program(wrap("x := 1 + 2 * 3;", "VAR x : INT; END_VAR"))
    value = prog.body[0].value
    assert isinstance(value, Binary) and value.op == "+"
    assert isinstance(value.right, Binary) and value.right.op == "*"


def test_case_with_ranges_parses():
    src = wrap(
        "CASE n OF\n  1, 3..5:\n    x := 1;\n  7:\n    x := 2;\nELSE\n  x := 0;\nEND_CASE;",
        "VAR n : INT; x : INT; END_VAR",
    )
    prog, lib = parse_program(src)
    typecheck(prog, lib)
    case = prog.body[0]
    assert case.arms[0].labels == [1, (3, 5)]
    assert case.arms[1].labels == [7]


# ------------------------------------------------------------------- typecheck


def test_comparison_yields_bool():
    prog, lib = parse_program(
        wrap("ok := CanWeight > 100.0;", "VAR_INPUT CanWeight : REAL; END_VAR VAR ok : BOOL; END_VAR")
    )
    typecheck(prog, lib)
    assert prog.body[0].value.ty == BOOL


def test_not_on_real_rejected():
    prog, lib = parse_program(
        wrap("ok := NOT(CanWeight);", "VAR_INPUT CanWeight : REAL; END_VAR VAR ok : BOOL; END_VAR")
    )
    with pytest.raises(StTypeError):
        typecheck(prog, lib)


def test_int_literal_to_bool_flag_table():
    src = wrap("v := 1;", "VAR_IN_OUT v : BOOL; END_VAR")
    prog, lib = parse_program(src)
    typecheck(prog, lib)  # default: accepted, literal reads as TRUE
    assert prog.body[0].value.ty == BOOL

    prog2, lib2 = parse_program(src)
    with pytest.raises(StTypeError):
        typecheck(prog2, lib2, allow_int_bool_literals=False)

    # only the literals 0/1 are sanctioned, under either flag setting
    prog3, lib3 = parse_program(wrap("v := 2;", "VAR_IN_OUT v : BOOL; END_VAR"))
    with pytest.raises(StTypeError):
        typecheck(prog3, lib3)


def test_bool_arith_mixing_rejected():
    prog, lib = parse_program(
        wrap("x := v + 1;", "VAR_IN_OUT v : BOOL; END_VAR VAR x : INT; END_VAR")
    )
    with pytest.raises(StTypeError) as ei:
        typecheck(prog, lib)
    assert "BOOL" in str(ei.value) and "INT" in str(ei.value)


def test_int_widens_to_real():
    prog, lib = parse_program(
        wrap("x := YellowAmount > 0;", "VAR_INPUT YellowAmount : REAL; END_VAR VAR x : BOOL; END_VAR")
    )
    typecheck(prog, lib)


def test_assign_to_input_rejected():
    prog, lib = parse_program(wrap("s := 1.0;", "VAR_INPUT s : REAL; END_VAR"))
    with pytest.raises(StTypeError):
        typecheck(prog, lib)


def test_real_to_int_narrowing_rejected():
    prog, lib = parse_program(wrap("n := 1.5;", "VAR n : INT; END_VAR"))
    with pytest.raises(StTypeError):
        typecheck(prog, lib)


def test_undeclared_identifier_rejected():
    prog, lib = parse_program(wrap("x := ghost;", "VAR x : REAL; END_VAR"))
    with pytest.raises(StTypeError) as ei:
        typecheck(prog, lib)
    assert "ghost" in str(ei.value)


def test_fb_state_in_function_rejected():
    src = (
        "FUNCTION_BLOCK acc\n  VAR_INPUT a : REAL; END_VAR\n  VAR_OUTPUT q : REAL; END_VAR\n"
        "  q := a;\nEND_FUNCTION_BLOCK\n"
        "FUNCTION f : REAL\n  VAR_INPUT x : REAL; END_VAR\n  VAR inst : acc; END_VAR\n"
        "  f := x;\nEND_FUNCTION\n" + wrap("y := f(1.0);", "VAR y : REAL; END_VAR")
    )
    prog, lib = parse_program(src)
    with pytest.raises(StTypeError):
        typecheck(prog, lib)


# ------------------------------------------------------------------ round trip


def test_round_trip_fig5(fig5_programs):
    (p1, p2), libs = fig5_programs[0], fig5_programs[1]
    for prog, lib in ((p1, libs[0]), (p2, libs[1])):
        text = pretty_project(prog, lib, config_name="cfg")
        prog2, lib2 = parse_program(text)
        assert prog2 == prog
        assert lib2 == lib
        # pretty-printing is a fixed point
        assert pretty_project(prog2, lib2, config_name="cfg") == text


@pytest.mark.parametrize("seed", range(20))
def test_round_trip_generated_corpus(seed):
    """parse . pretty . parse is the identity on generated programs."""
    source = generate_source(seed, GenSpec(max_if_depth=4))
    prog, lib = parse_program(source)
    typecheck(prog, lib)
    text = pretty_project(prog, lib, config_name="cfg")
    prog2, lib2 = parse_program(text)
    assert prog2 == prog
    assert lib2 == lib
    assert pretty_project(prog2, lib2, config_name="cfg") == text
