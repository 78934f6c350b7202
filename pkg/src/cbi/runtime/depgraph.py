"""Static sensor-dependency sets for branch sites (reporting aid).

Intra-POU, like the backwards data-flow pass it mirrors: branches inside
functions or function blocks are not enumerated; calls contribute their
argument dependencies conservatively. Assignments under a branch inherit the
branch condition's dependencies, so a sensor can reach a later condition
through a variable assigned on a sensor-dependent path. A reported set is
the condition's own data dependencies; a constant condition reports empty.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..stlang import ast
from ..stlang.ast import ukey


@dataclass
class BranchDependency:
    index: int
    span: ast.Span
    kind: str  # 'if' | 'elsif' | 'case-arm'
    plc: str
    sensors: frozenset


def _expr_deps(expr, env: dict) -> frozenset:
    deps = frozenset()
    for e in ast.walk_exprs(expr):
        if isinstance(e, ast.VarRef):
            deps |= env.get(e.key, frozenset())
    return deps


def sensor_dependent_branches(model) -> list:
    """Branch sites of the master body with their sensor dependency sets."""
    sensor_names = {ukey(e.name): e.name for e in model.io_map.values() if e.role == "sensor"}
    env = {key: frozenset((name,)) for key, name in sensor_names.items()}
    inst_deps: dict = {}
    out: list = []

    seg_of = {}
    for plc, (start, end) in model.segment_spans.items():
        for i in range(start, end):
            seg_of[i] = plc

    def walk(body, ctx: frozenset, plc: str):
        for st in body:
            if isinstance(st, ast.Assign):
                env[st.target.key] = _expr_deps(st.value, env) | ctx
            elif isinstance(st, ast.If):
                merged: dict = {}
                arm_ctx = ctx
                for i, (cond, arm_body) in enumerate(st.arms):
                    cond_deps = _expr_deps(cond, env)
                    out.append(
                        BranchDependency(
                            index=len(out),
                            span=cond.span,
                            kind="if" if i == 0 else "elsif",
                            plc=plc,
                            sensors=cond_deps,
                        )
                    )
                    arm_ctx = arm_ctx | cond_deps
                    snapshot = dict(env)
                    walk(arm_body, arm_ctx, plc)
                    for key in set(env) | set(snapshot):
                        if env.get(key) != snapshot.get(key):
                            merged[key] = merged.get(key, frozenset()) | env.get(key, frozenset())
                    env.clear()
                    env.update(snapshot)
                if st.else_body is not None:
                    snapshot = dict(env)
                    walk(st.else_body, arm_ctx, plc)
                    for key in set(env) | set(snapshot):
                        if env.get(key) != snapshot.get(key):
                            merged[key] = merged.get(key, frozenset()) | env.get(key, frozenset())
                    env.clear()
                    env.update(snapshot)
                for key, extra in merged.items():
                    env[key] = env.get(key, frozenset()) | extra
            elif isinstance(st, ast.Case):
                sel_deps = _expr_deps(st.selector, env)
                merged = {}

                def case_body(body_i):
                    snapshot = dict(env)
                    walk(body_i, ctx | sel_deps, plc)
                    for key in set(env) | set(snapshot):
                        if env.get(key) != snapshot.get(key):
                            merged[key] = merged.get(key, frozenset()) | env.get(key, frozenset())
                    env.clear()
                    env.update(snapshot)

                # sites interleave with arm bodies, matching execution order
                for arm in st.arms:
                    out.append(
                        BranchDependency(
                            index=len(out),
                            span=st.span,
                            kind="case-arm",
                            plc=plc,
                            sensors=sel_deps,
                        )
                    )
                    case_body(arm.body)
                if st.else_body is not None:
                    case_body(st.else_body)
                for key, extra in merged.items():
                    env[key] = env.get(key, frozenset()) | extra
            elif isinstance(st, ast.FbCall):
                arg_deps = frozenset()
                for _, e in st.inputs:
                    arg_deps |= _expr_deps(e, env)
                inst_deps[st.key] = inst_deps.get(st.key, frozenset()) | arg_deps | ctx
                for _, target in st.outputs:
                    env[target.key] = inst_deps[st.key]

    for idx, st in enumerate(model.master.body):
        walk([st], frozenset(), seg_of.get(idx, model.master.name))
    return out
