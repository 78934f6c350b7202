"""Random structured-text program generator for the property suites.

Generates well-typed single-PLC projects (program + configuration, plus a
small library when function/function-block statements are drawn). Sensor
comparisons drive branching so error-margin forking gets exercised; REAL
actuators may be assigned sensor arithmetic directly, which exercises the
end-of-cycle fork trigger.
"""

from __future__ import annotations

import random
from dataclasses import dataclass


@dataclass
class GenSpec:
    n_real_sensors: int = 3
    n_int_sensors: int = 1
    n_bool_actuators: int = 2
    n_real_actuators: int = 1
    n_locals: int = 2
    max_if_depth: int = 4
    max_top_statements: int = 7
    allow_case: bool = True
    allow_pou_calls: bool = True
    # restricted mode for the epsilon-monotonicity property: every comparison
    # pits one sensor directly against its single fixed threshold, actuators
    # only take constants
    single_threshold_mode: bool = False


_FB_SOURCE = """
FUNCTION_BLOCK {name}
  VAR_INPUT Feed : REAL; Gate : BOOL; END_VAR
  VAR_OUTPUT Level : REAL; END_VAR
  VAR Store : REAL; END_VAR
  IF Gate THEN
    Store := Store + Feed;
  END_IF;
  Level := Store;
END_FUNCTION_BLOCK
"""

_FN_SOURCE = """
FUNCTION {name} : REAL
  VAR_INPUT X : REAL; Lo : REAL; Hi : REAL; END_VAR
  IF X < Lo THEN
    {name} := Lo;
  ELSIF X > Hi THEN
    {name} := Hi;
  ELSE
    {name} := X;
  END_IF;
END_FUNCTION
"""


class _Gen:
    def __init__(self, rng: random.Random, spec: GenSpec, prefix: str):
        self.rng = rng
        self.spec = spec
        self.p = prefix
        self.real_sensors = [f"{prefix}S{i}" for i in range(spec.n_real_sensors)]
        self.int_sensors = [f"{prefix}N{i}" for i in range(spec.n_int_sensors)]
        self.bool_acts = [f"{prefix}A{i}" for i in range(spec.n_bool_actuators)]
        self.real_acts = [f"{prefix}R{i}" for i in range(spec.n_real_actuators)]
        self.real_locals = [f"{prefix}L{i}" for i in range(spec.n_locals)]
        self.int_locals = [f"{prefix}M{i}" for i in range(max(1, spec.n_locals - 1))]
        self.uses_fb = False
        self.uses_fn = False
        self.fb_name = f"{prefix}TANKFB"
        self.fn_name = f"{prefix}CLIP"
        # fixed per-sensor thresholds for the restricted mode
        self.thresholds = {s: round(rng.uniform(-10, 10), 1) for s in self.real_sensors}
        self.int_thresholds = {s: rng.randint(-5, 5) for s in self.int_sensors}

    # ------------------------------------------------------------ expressions

    def const_real(self) -> str:
        return repr(round(self.rng.uniform(-10.0, 10.0), 2))

    def const_int(self) -> str:
        return str(self.rng.randint(-8, 8))

    def real_expr(self, depth: int) -> str:
        r = self.rng
        if depth <= 0 or r.random() < 0.4:
            pool = self.real_sensors + self.real_locals + [None]
            pick = r.choice(pool)
            return self.const_real() if pick is None else pick
        if self.spec.allow_pou_calls and r.random() < 0.08:
            self.uses_fn = True
            lo = round(r.uniform(-10, 0), 1)
            return f"{self.fn_name}({self.real_expr(depth - 1)}, {lo!r}, {round(lo + r.uniform(1, 10), 1)!r})"
        op = r.choice(["+", "-", "*", "+", "-"])
        left = self.real_expr(depth - 1)
        if op == "*":
            # multiply by small constants only: locals persist across cycles,
            # so compounding products would overflow to inf/nan in long runs
            return f"({left} * {round(r.uniform(-3.0, 3.0), 2)!r})"
        right = self.real_expr(depth - 1) if r.random() < 0.7 else self.const_real()
        return f"({left} {op} {right})"

    def int_expr(self, depth: int) -> str:
        r = self.rng
        if depth <= 0 or r.random() < 0.5:
            pool = self.int_sensors + self.int_locals + [None]
            pick = r.choice(pool)
            return self.const_int() if pick is None else pick
        op = r.choice(["+", "-", "*"])
        if op == "*":
            return f"({self.int_expr(depth - 1)} * {r.randint(1, 3)})"
        return f"({self.int_expr(depth - 1)} {op} {self.int_expr(depth - 1)})"

    def condition(self, depth: int = 2) -> str:
        r = self.rng
        if self.spec.single_threshold_mode:
            # only half-line predicates against one fixed threshold per sensor:
            # the class where ActuationSet is provably monotone in epsilon
            if self.int_sensors and r.random() < 0.25:
                s = r.choice(self.int_sensors)
                return f"{s} {r.choice(['<', '<=', '>', '>='])} {self.int_thresholds[s]}"
            s = r.choice(self.real_sensors)
            return f"{s} {r.choice(['<', '<=', '>', '>='])} {self.thresholds[s]!r}"
        if depth > 0 and r.random() < 0.3:
            op = r.choice(["AND", "OR", "XOR"])
            return f"({self.condition(depth - 1)} {op} {self.condition(depth - 1)})"
        if depth > 0 and r.random() < 0.12:
            return f"NOT ({self.condition(depth - 1)})"
        if self.bool_acts and r.random() < 0.15:
            return r.choice(self.bool_acts)
        if self.int_sensors and r.random() < 0.2:
            return f"{self.int_expr(1)} {r.choice(['<', '<=', '>', '>=', '=', '<>'])} {self.const_int()}"
        cmp_op = r.choice(["<", "<=", ">", ">=", "=", "<>"]) if r.random() < 0.2 else r.choice(["<", "<=", ">", ">="])
        return f"{self.real_expr(1)} {cmp_op} {self.const_real()}"

    # ------------------------------------------------------------- statements

    def assign_stmt(self) -> str:
        r = self.rng
        restricted = self.spec.single_threshold_mode
        choices = ["bool_act"]
        if not restricted:
            choices += ["real_act"] * 2 + ["local"] * 3 + ["int_local"]
        kind = r.choice(choices)
        if kind == "bool_act":
            return f"{r.choice(self.bool_acts)} := {r.choice(['TRUE', 'FALSE', '1', '0'])};"
        if kind == "real_act" and self.real_acts:
            return f"{r.choice(self.real_acts)} := {self.real_expr(2)};"
        if kind == "int_local":
            return f"{r.choice(self.int_locals)} := {self.int_expr(2)};"
        return f"{r.choice(self.real_locals)} := {self.real_expr(2)};"

    def fb_stmt(self) -> str:
        self.uses_fb = True
        r = self.rng
        return (
            f"{self.p}Dose(Feed := {self.real_expr(1)}, Gate := {self.condition(1)}, "
            f"Level => {r.choice(self.real_locals)});"
        )

    def if_stmt(self, depth: int, indent: str) -> list:
        r = self.rng
        lines = [f"{indent}IF {self.condition()} THEN"]
        lines += self.block(depth + 1, indent + "  ")
        for _ in range(r.randint(0, 2)):
            lines.append(f"{indent}ELSIF {self.condition()} THEN")
            lines += self.block(depth + 1, indent + "  ")
        if r.random() < 0.7:
            lines.append(f"{indent}ELSE")
            lines += self.block(depth + 1, indent + "  ")
        lines.append(f"{indent}END_IF;")
        return lines

    def case_stmt(self, depth: int, indent: str) -> list:
        r = self.rng
        sel = r.choice(self.int_sensors + self.int_locals) if not self.spec.single_threshold_mode else r.choice(self.int_sensors or self.int_locals)
        lines = [f"{indent}CASE {sel} OF"]
        used = set()
        for _ in range(r.randint(1, 3)):
            if r.random() < 0.3:
                lo = r.randint(-6, 4)
                hi = lo + r.randint(1, 3)
                if any(v in used for v in range(lo, hi + 1)):
                    continue
                used.update(range(lo, hi + 1))
                label = f"{lo}..{hi}"
            else:
                v = r.randint(-8, 8)
                if v in used:
                    continue
                used.add(v)
                label = str(v)
            lines.append(f"{indent}  {label}:")
            lines += self.block(depth + 1, indent + "    ")
        lines.append(f"{indent}ELSE")
        lines += self.block(depth + 1, indent + "  ")
        lines.append(f"{indent}END_CASE;")
        return lines

    def block(self, depth: int, indent: str) -> list:
        r = self.rng
        lines = []
        for _ in range(r.randint(1, 2 if depth > 1 else 3)):
            roll = r.random()
            if depth < self.spec.max_if_depth and roll < 0.45:
                lines += self.if_stmt(depth, indent)
            elif (
                self.spec.allow_case
                and depth < self.spec.max_if_depth
                and (self.int_sensors or self.int_locals)
                and roll < 0.55
            ):
                lines += self.case_stmt(depth, indent)
            elif self.spec.allow_pou_calls and not self.spec.single_threshold_mode and roll < 0.62:
                lines.append(indent + self.fb_stmt())
            else:
                lines.append(indent + self.assign_stmt())
        return lines

    # ------------------------------------------------------------------ file

    def generate(self, name: str) -> str:
        body = []
        for _ in range(self.rng.randint(2, self.spec.max_top_statements)):
            body += self.block(1, "  ")
        decls = [f"PROGRAM {name}", "  VAR_INPUT"]
        decls += [f"    {s} : REAL;" for s in self.real_sensors]
        decls += [f"    {s} : INT;" for s in self.int_sensors]
        decls += ["  END_VAR", "  VAR_IN_OUT"]
        decls += [f"    {a} : BOOL;" for a in self.bool_acts]
        decls += [f"    {a} : REAL;" for a in self.real_acts]
        decls += ["  END_VAR", "  VAR"]
        decls += [f"    {v} : REAL;" for v in self.real_locals]
        decls += [f"    {v} : INT;" for v in self.int_locals]
        if self.uses_fb:
            decls.append(f"    {self.p}Dose : {self.fb_name};")
        decls += ["  END_VAR"]
        parts = []
        if self.uses_fb:
            parts.append(_FB_SOURCE.format(name=self.fb_name))
        if self.uses_fn:
            parts.append(_FN_SOURCE.format(name=self.fn_name))
        parts.append("\n".join(decls + body + ["END_PROGRAM"]))
        parts.append(
            "\n".join(
                [
                    f"CONFIGURATION {name}_cfg",
                    "  RESOURCE Res0 ON PLC",
                    "    TASK Main(INTERVAL := T#100ms, PRIORITY := 0);",
                    f"    PROGRAM Inst0 WITH Main : {name};",
                    "  END_RESOURCE",
                    "END_CONFIGURATION",
                ]
            )
        )
        return "\n".join(parts)


def generate_source(seed: int, spec: GenSpec | None = None, name: str = "gen", prefix: str = "") -> str:
    """Deterministic random project source for the given seed.

    The body is generated before the declaration block, so library usage
    flags are settled by the time declarations are emitted.
    """
    gen = _Gen(random.Random(seed), spec or GenSpec(), prefix)
    return gen.generate(name)


def random_snapshot(rng: random.Random, prog) -> dict:
    """Random sensor snapshot for a compiled program."""
    from .stlang import ast

    out = {}
    for name, _slot, ty in prog.sensors:
        if ty == ast.INT:
            out[name] = rng.randint(-10, 10)
        elif ty == ast.BOOL:
            out[name] = rng.random() < 0.5
        else:
            out[name] = rng.uniform(-12.0, 12.0)
    return out


def random_margins(rng: random.Random, prog, max_tainted: int = 4) -> dict:
    """Random error margins on up to max_tainted sensors of a compiled program."""
    from .stlang import ast

    names = [(name, ty) for name, _slot, ty in prog.sensors]
    rng.shuffle(names)
    chosen = names[: rng.randint(1, min(max_tainted, len(names)))]
    eps = {}
    for name, ty in chosen:
        eps[name] = rng.randint(1, 3) if ty == ast.INT else round(rng.uniform(0.05, 4.0), 3)
    return eps
