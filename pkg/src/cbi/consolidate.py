"""Merging N PLC programs into one master model.

Shared I/O variables (same name, same type) unify into one slot; same-name
locals of different PLCs stay private and are deterministically renamed.
Bodies concatenate in plc_order; later segments see earlier segments'
same-cycle writes, exactly like the sequential master listing.
"""

from __future__ import annotations

import copy
import itertools
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigError, EmptyInputError, TimingViolation, TypeConflictError,
    WriteWriteConflictError,
)
from .stlang import ast
from .stlang.ast import (
    Assign, Case, FbCall, If, Literal, PouLibrary, StProgram, VarDecl, VarRef, ukey,
)
from .stlang.parser import parse_program
from .stlang.typecheck import typecheck

ROLE_SENSOR = "sensor"
ROLE_ACTUATOR = "actuator"
ROLE_INTERNAL = "internal"

_KIND_RANK = {ast.KIND_INPUT: 0, ast.KIND_OUTPUT: 1, ast.KIND_INOUT: 2}


@dataclass
class IoEntry:
    name: str  # display spelling
    ty: str
    role: str
    owner_plc: str


@dataclass
class StModel:
    master: StProgram
    lib: PouLibrary
    plc_order: list
    segment_spans: dict  # plc name -> (start, end) half-open statement range
    io_map: dict  # ukey -> IoEntry
    source_programs: list = field(default_factory=list, repr=False)

    def sensors(self):
        return [e.name for e in self.io_map.values() if e.role == ROLE_SENSOR]

    def actuators(self):
        return [e.name for e in self.io_map.values() if e.role == ROLE_ACTUATOR]


@dataclass
class CounterexampleCycle:
    snapshot: dict
    order_a: tuple
    order_b: tuple
    diffs: dict  # actuator name -> (value under order_a, value under order_b)


def write_set(prog: StProgram) -> set:
    """Keys of shared (non-local) variables the program assigns."""
    io_keys = {d.key for d in [*prog.inputs, *prog.outputs, *prog.inouts]}
    written = set()
    for st in ast.walk_statements(prog.body):
        if isinstance(st, Assign) and st.target.key in io_keys:
            written.add(st.target.key)
        elif isinstance(st, FbCall):
            for _, target in st.outputs:
                if target.key in io_keys:
                    written.add(target.key)
    return written


def _rename_body(body, rename: dict):
    """Rewrite VarRef names and FbCall instance names (body must be a private copy)."""

    def fix_expr(e):
        for sub in ast.walk_exprs(e):
            if isinstance(sub, VarRef) and sub.key in rename:
                sub.name = rename[sub.key]

    for st in ast.walk_statements(body):
        if isinstance(st, Assign):
            if st.target.key in rename:
                st.target.name = rename[st.target.key]
            fix_expr(st.value)
        elif isinstance(st, If):
            for cond, _ in st.arms:
                fix_expr(cond)
        elif isinstance(st, Case):
            fix_expr(st.selector)
        elif isinstance(st, FbCall):
            if st.key in rename:
                st.instance = rename[st.key]
            for _, e in st.inputs:
                fix_expr(e)
            for _, v in st.outputs:
                if v.key in rename:
                    v.name = rename[v.key]


def consolidate(programs: list, libs: list, plc_order=None) -> StModel:
    """Merge parsed+typechecked programs into one master StModel."""
    if not programs:
        raise EmptyInputError()
    if plc_order is None:
        plc_order = [p.name for p in programs]
    by_name = {ukey(p.name): p for p in programs}
    if len(by_name) != len(programs):
        raise TypeConflictError("program names", "duplicate PLC names")
    ordered = [by_name[ukey(n)] for n in plc_order]

    lib = PouLibrary()
    for l in libs:
        lib = lib.merged_with(l)

    # pass 1: unified I/O table
    unified: dict = {}  # key -> [VarDecl merged view, owner_plc]
    for prog in ordered:
        for d in [*prog.inputs, *prog.outputs, *prog.inouts]:
            cur = unified.get(d.key)
            if cur is None:
                unified[d.key] = [VarDecl(span=d.span, name=d.name, ty=d.ty, kind=d.kind, init=d.init), prog.name]
            else:
                merged = cur[0]
                if merged.ty != d.ty:
                    raise TypeConflictError(d.name, f"{merged.ty} vs {d.ty}")
                if d.init is not None:
                    if merged.init is not None and merged.init != d.init:
                        raise TypeConflictError(d.name, "differing initializers")
                    if merged.init is None:
                        merged.init = d.init
                if _KIND_RANK[d.kind] > _KIND_RANK[merged.kind]:
                    merged.kind = d.kind

    # write-write conflicts on shared variables
    writers: dict = {}
    for prog in ordered:
        for key in sorted(write_set(prog)):
            if key in writers and writers[key] != prog.name:
                raise WriteWriteConflictError(unified[key][0].name, writers[key], prog.name)
            writers.setdefault(key, prog.name)

    # an input-kind unified var written by someone must be promoted (reader declared
    # it input, writer had it output/inout, already ranked); sensors are the rest
    for key, plc in writers.items():
        if unified[key][0].kind == ast.KIND_INPUT:
            unified[key][0].kind = ast.KIND_INOUT

    # pass 2: private locals, renamed on cross-PLC collision
    local_decls: list = []  # (plc, VarDecl copy)
    taken = set(unified)
    all_local_keys: dict = {}
    for prog in ordered:
        for d in prog.locals:
            all_local_keys.setdefault(d.key, []).append(prog.name)
    renames: dict = {}  # plc -> {old_key: new_name}
    for prog in ordered:
        renames[prog.name] = {}
        for d in prog.locals:
            clash = d.key in taken or len(all_local_keys[d.key]) > 1
            name = d.name
            if clash:
                name = f"{prog.name}_{d.name}"
                n = 2
                while ukey(name) in taken:
                    name = f"{prog.name}_{d.name}_{n}"
                    n += 1
                renames[prog.name][d.key] = name
            taken.add(ukey(name))
            local_decls.append((prog.name, VarDecl(span=d.span, name=name, ty=d.ty, kind=d.kind, init=d.init)))

    # concatenated body with renamed private refs
    body: list = []
    segment_spans: dict = {}
    for prog in ordered:
        seg = copy.deepcopy(prog.body)
        if renames[prog.name]:
            _rename_body(seg, renames[prog.name])
        start = len(body)
        body.extend(seg)
        segment_spans[prog.name] = (start, len(body))

    master = StProgram(span=ast.NO_SPAN, name="master")
    for key, (decl, _) in unified.items():
        dest = {ast.KIND_INPUT: master.inputs, ast.KIND_OUTPUT: master.outputs, ast.KIND_INOUT: master.inouts}[decl.kind]
        dest.append(decl)
    master.locals = [d for _, d in local_decls]
    master.body = body
    master.task_interval_ms = min(p.task_interval_ms for p in ordered)

    io_map: dict = {}
    for key, (decl, owner) in unified.items():
        role = ROLE_SENSOR if decl.kind == ast.KIND_INPUT else ROLE_ACTUATOR
        io_map[key] = IoEntry(name=decl.name, ty=decl.ty, role=role, owner_plc=writers.get(key, owner))
    for plc, decl in local_decls:
        io_map[decl.key] = IoEntry(name=decl.name, ty=decl.ty, role=ROLE_INTERNAL, owner_plc=plc)

    model = StModel(
        master=master,
        lib=lib,
        plc_order=[p.name for p in ordered],
        segment_spans=segment_spans,
        io_map=io_map,
        source_programs=list(ordered),
    )
    typecheck(master, lib)  # consolidation must never produce an ill-typed master
    return model


def check_timing(programs: list) -> None:
    """Sum of execution budgets must be strictly below the smallest task interval."""
    if not programs:
        raise EmptyInputError()
    missing = [p.name for p in programs if p.exec_budget_ms is None]
    if missing:
        raise ConfigError(f"exec_budget_ms not declared for: {', '.join(missing)}")
    total = sum(p.exec_budget_ms for p in programs)
    smallest = min(p.task_interval_ms for p in programs)
    if not total < smallest:
        raise TimingViolation(total, smallest)


def permutation_equivalence_check(model: StModel, trials: int = 50, seed: int = 0, max_permutations: int = 24):
    """Execute random snapshots under every plc_order permutation (sampled for N > 4).

    Returns None when all permutations agree on end-of-cycle actuator values,
    else the first CounterexampleCycle. A counterexample signals a same-cycle
    inter-PLC read-after-write dependence the operator must acknowledge.
    """
    from .runtime import compile_model, run_cycle  # deferred: runtime depends on this module

    rng = random.Random(seed)
    base_order = tuple(model.plc_order)
    n = len(base_order)
    if n <= 1:
        return None
    if n <= 4:
        orders = list(itertools.permutations(base_order))
    else:
        orders = [base_order]
        seen = {base_order}
        while len(orders) < max_permutations:
            perm = tuple(rng.sample(base_order, n))
            if perm not in seen:
                seen.add(perm)
                orders.append(perm)

    programs = model.source_programs
    libs = [model.lib]
    compiled = {}
    for order in orders:
        m = consolidate(programs, libs, plc_order=list(order))
        compiled[order] = (m, compile_model(m))

    sensors = [model.io_map[k].name for k in sorted(model.io_map) if model.io_map[k].role == ROLE_SENSOR]
    actuators = [model.io_map[k].name for k in sorted(model.io_map) if model.io_map[k].role == ROLE_ACTUATOR]
    types = {model.io_map[k].name: model.io_map[k].ty for k in model.io_map}

    def rand_value(ty):
        if ty == ast.BOOL:
            return rng.random() < 0.5
        if ty == ast.INT:
            return rng.randint(-20, 1020)
        return round(rng.uniform(-100.0, 1100.0), 6)

    for _ in range(trials):
        snapshot = {name: rand_value(types[name]) for name in sensors}
        act_init = {name: rand_value(types[name]) for name in actuators}
        results = {}
        for order in orders:
            m, prog = compiled[order]
            state = prog.initial_state()
            state.set_values(act_init)
            _, acts = run_cycle(prog, state, snapshot)
            results[order] = acts
        baseline = results[orders[0]]
        for order in orders[1:]:
            diffs = {a: (baseline[a], results[order][a]) for a in actuators if baseline[a] != results[order][a]}
            if diffs:
                return CounterexampleCycle(
                    snapshot={**snapshot, **{f"init:{k}": v for k, v in act_init.items()}},
                    order_a=orders[0],
                    order_b=order,
                    diffs=diffs,
                )
    return None


# ---------------------------------------------------------------- project I/O


def load_manifest(path) -> list:
    """Manifest JSON: [{plc_name, st_source_path, exec_budget_ms}, ...]."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if isinstance(doc, dict):
        doc = doc.get("plcs")
    if not isinstance(doc, list) or not doc:
        raise ConfigError(f"{path}: manifest must be a non-empty list (or object with 'plcs')")
    entries = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            raise ConfigError(f"{path}: entry {i} must be an object")
        for field_name in ("plc_name", "st_source_path", "exec_budget_ms"):
            if field_name not in item:
                raise ConfigError(f"{path}: entry {i} missing {field_name!r}")
        budget = item["exec_budget_ms"]
        if not isinstance(budget, (int, float)) or budget <= 0:
            raise ConfigError(f"{path}: entry {i}: exec_budget_ms must be a positive number")
        entries.append((str(item["plc_name"]), str(item["st_source_path"]), float(budget)))
    return entries


def load_project(manifest_path):
    """Parse and typecheck every PLC listed in the manifest.

    Returns (programs, libs) with exec budgets applied, in manifest order.
    """
    manifest_path = Path(manifest_path)
    entries = load_manifest(manifest_path)
    programs, libs = [], []
    for plc_name, rel_path, budget in entries:
        source_path = manifest_path.parent / rel_path
        try:
            source = source_path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {source_path}: {e}") from e
        prog, lib = parse_program(source)
        if ukey(prog.name) != ukey(plc_name):
            raise ConfigError(
                f"{source_path}: program is named {prog.name!r}, manifest says {plc_name!r}"
            )
        prog.exec_budget_ms = budget
        typecheck(prog, lib)
        programs.append(prog)
        libs.append(lib)
    return programs, libs
