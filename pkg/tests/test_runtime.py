"""Interpreter tests: kernel semantics vs the independent reference
interpreter, taint evaluation, static branch dependencies, eval faults."""

from __future__ import annotations

import random

import pytest

from cbi.errors import ConfigError, EvalError
from cbi.progen import GenSpec, generate_source, random_snapshot
from cbi.runtime import (
    compile_model, run_cycle, run_cycle_traced, sensor_dependent_branches, taint_eval,
)
from cbi.consolidate import consolidate
from cbi.stlang import parse_program, typecheck
from cbi.stlang.parser import Parser
from cbi.stlang.lexer import tokenize

from reference_interp import initial_env, ref_cycle

CFG = """
CONFIGURATION c
  RESOURCE r ON PLC
    TASK Main(INTERVAL := T#100ms, PRIORITY := 0);
    PROGRAM i WITH Main : {name};
  END_RESOURCE
END_CONFIGURATION
"""


def build(src_body: str, name="p"):
    prog, lib = parse_program(src_body + CFG.format(name=name))
    typecheck(prog, lib)
    return consolidate([prog], [lib])


def parse_expr(text: str):
    return Parser(tokenize(text)).parse_expr()


# ------------------------------------------------------------- spec examples


def test_fig5_yellow_valve_opens(fig5_prog):
    state = fig5_prog.initial_state()
    _, acts = run_cycle(fig5_prog, state, {"YellowAmount": 5.0, "CanWeight": 0.0})
    assert acts["YellowValve"] is True


def test_fig5_boundary_zero_not_greater(fig5_prog):
    state = fig5_prog.initial_state()
    _, acts = run_cycle(fig5_prog, state, {"YellowAmount": 0.0, "CanWeight": 0.0})
    assert acts["YellowValve"] is False


def test_fig5_conveyor_moves_when_full_and_valve_closed(fig5_prog):
    state = fig5_prog.initial_state()
    state.set_values({"YellowValve": False})
    _, acts = run_cycle(fig5_prog, state, {"YellowAmount": 0.0, "CanWeight": 150.0})
    assert acts["ConveyorMove"] is True


def test_inputs_latched_once_outputs_at_end():
    # the second segment sees the same latched sensor value, and an actuator
    # assigned twice reports only its final value
    model = build(
        "PROGRAM p\n"
        "  VAR_INPUT s : REAL; END_VAR\n"
        "  VAR_IN_OUT a : REAL; b : REAL; END_VAR\n"
        "  a := s + 1.0;\n"
        "  a := s + 2.0;\n"
        "  b := a;\n"
        "END_PROGRAM\n"
    )
    prog = compile_model(model)
    _, acts = run_cycle(prog, prog.initial_state(), {"s": 1.0})
    assert acts == {"a": 3.0, "b": 3.0}


def test_fb_state_persists_across_cycles():
    model = build(
        "FUNCTION_BLOCK counter\n"
        "  VAR_INPUT inc : REAL; END_VAR\n"
        "  VAR_OUTPUT total : REAL; END_VAR\n"
        "  VAR acc : REAL; END_VAR\n"
        "  acc := acc + inc;\n"
        "  total := acc;\n"
        "END_FUNCTION_BLOCK\n"
        "PROGRAM p\n"
        "  VAR_INPUT s : REAL; END_VAR\n"
        "  VAR_IN_OUT out : REAL; END_VAR\n"
        "  VAR c : counter; END_VAR\n"
        "  c(inc := s, total => out);\n"
        "END_PROGRAM\n"
    )
    prog = compile_model(model)
    state = prog.initial_state()
    for i in range(1, 4):
        state, acts = run_cycle(prog, state, {"s": 2.0})
        assert acts["out"] == 2.0 * i
    assert state.fb_instances["c"]["acc"] == 6.0


def test_div_by_zero_raises_eval_error():
    model = build(
        "PROGRAM p\n  VAR_INPUT s : REAL; END_VAR\n  VAR_IN_OUT a : REAL; END_VAR\n"
        "  a := 1.0 / s;\nEND_PROGRAM\n"
    )
    prog = compile_model(model)
    with pytest.raises(EvalError) as ei:
        run_cycle(prog, prog.initial_state(), {"s": 0.0})
    assert "zero" in str(ei.value)
    assert ei.value.span.line > 0


def test_case_fallthrough_without_else_raises():
    model = build(
        "PROGRAM p\n  VAR_INPUT n : INT; END_VAR\n  VAR_IN_OUT a : INT; END_VAR\n"
        "  CASE n OF\n    1: a := 1;\n  END_CASE;\nEND_PROGRAM\n"
    )
    prog = compile_model(model)
    _, acts = run_cycle(prog, prog.initial_state(), {"n": 1})
    assert acts["a"] == 1
    with pytest.raises(EvalError) as ei:
        run_cycle(prog, prog.initial_state(), {"n": 2})
    assert "CASE" in str(ei.value)


def test_missing_sensor_rejected(fig5_prog):
    with pytest.raises(ConfigError):
        run_cycle(fig5_prog, fig5_prog.initial_state(), {"YellowAmount": 1.0})


def test_int_semantics_trunc_toward_zero():
    model = build(
        "PROGRAM p\n  VAR_INPUT n : INT; END_VAR\n  VAR_IN_OUT q : INT; r : INT; END_VAR\n"
        "  q := n / 2;\n  r := n MOD 3;\nEND_PROGRAM\n"
    )
    prog = compile_model(model)
    _, acts = run_cycle(prog, prog.initial_state(), {"n": -7})
    assert acts == {"q": -3, "r": -1}
    _, acts = run_cycle(prog, prog.initial_state(), {"n": 7})
    assert acts == {"q": 3, "r": 1}


# -------------------------------------------- dual-route semantic equivalence


@pytest.mark.parametrize("seed", range(25))
def test_run_cycle_matches_reference_interpreter(seed):
    source = generate_source(seed + 100, GenSpec())
    prog_ast, lib = parse_program(source)
    typecheck(prog_ast, lib)
    model = consolidate([prog_ast], [lib])
    prog = compile_model(model)
    state = prog.initial_state()
    env = initial_env(model)
    rng = random.Random(seed)
    for _ in range(30):
        snapshot = random_snapshot(rng, prog)
        state, acts = run_cycle(prog, state, snapshot)
        env, ref_acts = ref_cycle(model, env, snapshot)
        for name, value in ref_acts.items():
            got = acts[name]
            if isinstance(value, float):
                assert got == pytest.approx(value, rel=1e-12, abs=1e-12), (name, snapshot)
            else:
                assert got == value, (name, snapshot)


# ------------------------------------------------------------------ taint op


def test_taint_eval_binary_union(fig5_prog):
    state = fig5_prog.initial_state()
    expr = parse_expr("YellowAmount + 2.0")
    value, taint = taint_eval(expr, state, {"YellowAmount": {"YellowAmount"}})
    assert taint == {"YellowAmount"}
    expr2 = parse_expr("YellowAmount > CanWeight")
    _, taint2 = taint_eval(expr2, state, {"YellowAmount": {"YellowAmount"}, "CanWeight": {"CanWeight"}})
    assert taint2 == {"YellowAmount", "CanWeight"}


def test_taint_eval_literal_untainted(fig5_prog):
    value, taint = taint_eval(parse_expr("1.5 * 2.0"), fig5_prog.initial_state(), {})
    assert value == 3.0 and taint == frozenset()


def test_statement_taint_propagates_through_local():
    # x := S1 + 1.0 under a trivially-true branch still carries S1's taint:
    # multi-execution must fork the later branch on x
    from cbi.runtime import run_cycle_multi

    model = build(
        "PROGRAM p\n  VAR_INPUT S1 : REAL; END_VAR\n  VAR_IN_OUT a : BOOL; END_VAR\n"
        "  VAR x : REAL; END_VAR\n"
        "  IF TRUE THEN\n    x := S1 + 1.0;\n  END_IF;\n"
        "  IF x > 1.0 THEN\n    a := 1;\n  ELSE\n    a := 0;\n  END_IF;\nEND_PROGRAM\n"
    )
    prog = compile_model(model)
    _, aset = run_cycle_multi(prog, prog.initial_state(), {"S1": 0.05}, {"S1": 0.1})
    assert aset.values["a"] == frozenset({True, False})


# -------------------------------------------------- static branch dependencies


def test_fig5_branch_dependencies(fig5_model):
    deps = sensor_dependent_branches(fig5_model)
    assert len(deps) == 2
    assert deps[0].sensors == frozenset({"YellowAmount"})
    assert deps[0].plc == "plc1"
    assert deps[1].sensors == frozenset({"CanWeight", "YellowAmount"})
    assert deps[1].plc == "plc2"


def test_constant_condition_has_empty_deps():
    model = build(
        "PROGRAM p\n  VAR_INPUT s : REAL; END_VAR\n  VAR_IN_OUT a : BOOL; END_VAR\n"
        "  IF 1.0 > 0.5 THEN\n    a := 1;\n  END_IF;\nEND_PROGRAM\n"
    )
    deps = sensor_dependent_branches(model)
    assert deps[0].sensors == frozenset()


def test_local_assignment_carries_deps():
    model = build(
        "PROGRAM p\n  VAR_INPUT S1 : REAL; END_VAR\n  VAR_IN_OUT a : BOOL; END_VAR\n"
        "  VAR x : REAL; END_VAR\n  x := S1 + 1.0;\n"
        "  IF x > 3.0 THEN\n    a := 1;\n  END_IF;\nEND_PROGRAM\n"
    )
    deps = sensor_dependent_branches(model)
    assert deps[0].sensors == frozenset({"S1"})


@pytest.mark.parametrize("seed", range(10))
def test_perturbation_oracle_subset_of_static_deps(seed):
    """Any sensor whose perturbation flips a branch decision must be reported."""
    source = generate_source(seed + 300, GenSpec(allow_pou_calls=False))
    prog_ast, lib = parse_program(source)
    typecheck(prog_ast, lib)
    model = consolidate([prog_ast], [lib])
    prog = compile_model(model)
    static = sensor_dependent_branches(model)
    assert len(static) == len(prog.sites)  # numbering aligns for pou-free programs

    rng = random.Random(seed)
    observed: dict = {}
    state = prog.initial_state()
    for _ in range(25):
        snapshot = random_snapshot(rng, prog)
        _, _, base = run_cycle_traced(prog, state, snapshot)
        base = dict(base)
        for name, _slot, ty in prog.sensors:
            pert = dict(snapshot)
            pert[name] = pert[name] + (3 if ty == "INT" else 7.31)
            _, _, sig = run_cycle_traced(prog, state, pert)
            for site, taken in sig:
                if site in base and base[site] != taken:
                    observed.setdefault(site, set()).add(name)
    for site, names in observed.items():
        assert names <= set(static[site].sensors), (site, names, static[site].sensors)


# ---------------------------------------------------------------- kernel twin


@pytest.mark.parametrize("seed", range(8))
def test_pure_and_selected_kernels_agree(seed):
    import cbi.runtime.machine as machine
    from cbi.runtime._kernel_py import run_kernel as pure_kernel

    source = generate_source(seed + 500, GenSpec())
    prog_ast, lib = parse_program(source)
    typecheck(prog_ast, lib)
    model = consolidate([prog_ast], [lib])
    prog = compile_model(model)
    rng = random.Random(seed)
    snapshots = [random_snapshot(rng, prog) for _ in range(20)]

    def run_all():
        outs = []
        state = prog.initial_state()
        for snap in snapshots:
            state, acts = run_cycle(prog, state, snap)
            outs.append(tuple(sorted(acts.items())))
        return outs

    selected = run_all()
    original = machine.run_kernel
    machine.run_kernel = pure_kernel
    try:
        pure = run_all()
    finally:
        machine.run_kernel = original
    assert selected == pure
