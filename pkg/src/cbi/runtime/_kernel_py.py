"""Pure-Python scan-cycle kernel; semantics identical to the compiled twin."""

from __future__ import annotations

from .irgen import (
    OP_ADD, OP_AND, OP_BR, OP_CASE_ERR, OP_CONST, OP_COPY, OP_DIV_INT,
    OP_DIV_REAL, OP_EQ, OP_GE, OP_GT, OP_HALT, OP_JMP, OP_LE, OP_LT,
    OP_MOD_INT, OP_MUL, OP_NE, OP_NEG, OP_NOT, OP_OR, OP_SUB, OP_XOR,
    STATUS_CASE_FALLTHROUGH, STATUS_DIV_ZERO, STATUS_FORK, STATUS_HALT,
)

KERNEL_NAME = "pure-python"


def run_kernel(code, consts, values, taints, trigger_mask, sig_buf, track_taint):
    """Execute one scan cycle over the flat instruction stream.

    Returns (status, arg, mask, sig_len):
      STATUS_HALT             arg unused
      STATUS_FORK             arg = branch site id, mask = offending taint bits
      STATUS_DIV_ZERO         arg = instruction index
      STATUS_CASE_FALLTHROUGH arg = instruction index
    sig_buf collects (site_id << 1 | taken) per executed branch.
    """
    pc = 0
    n_sig = 0
    tt = track_taint
    while True:
        base = pc * 4
        op = code[base]
        a = code[base + 1]
        b = code[base + 2]
        c = code[base + 3]
        if op == OP_BR:
            if tt and (taints[a] & trigger_mask):
                return (STATUS_FORK, b, taints[a] & trigger_mask, n_sig)
            if values[a] != 0.0:
                sig_buf[n_sig] = (b << 1) | 1
                n_sig += 1
                pc += 1
            else:
                sig_buf[n_sig] = b << 1
                n_sig += 1
                pc = c
            continue
        if op == OP_COPY:
            values[a] = values[b]
            if tt:
                taints[a] = taints[b]
        elif op == OP_CONST:
            values[a] = consts[b]
            if tt:
                taints[a] = 0
        elif op == OP_ADD:
            values[a] = values[b] + values[c]
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_SUB:
            values[a] = values[b] - values[c]
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_MUL:
            values[a] = values[b] * values[c]
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_DIV_REAL:
            d = values[c]
            if d == 0.0:
                return (STATUS_DIV_ZERO, pc, 0, n_sig)
            values[a] = values[b] / d
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_DIV_INT:
            d = values[c]
            if d == 0.0:
                return (STATUS_DIV_ZERO, pc, 0, n_sig)
            values[a] = float(int(values[b] / d))
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_MOD_INT:
            d = values[c]
            if d == 0.0:
                return (STATUS_DIV_ZERO, pc, 0, n_sig)
            n = values[b]
            values[a] = n - float(int(n / d)) * d
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_NEG:
            values[a] = -values[b]
            if tt:
                taints[a] = taints[b]
        elif op == OP_NOT:
            values[a] = 0.0 if values[b] != 0.0 else 1.0
            if tt:
                taints[a] = taints[b]
        elif op == OP_AND:
            values[a] = 1.0 if (values[b] != 0.0 and values[c] != 0.0) else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_OR:
            values[a] = 1.0 if (values[b] != 0.0 or values[c] != 0.0) else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_XOR:
            values[a] = 1.0 if (values[b] != 0.0) != (values[c] != 0.0) else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_EQ:
            values[a] = 1.0 if values[b] == values[c] else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_NE:
            values[a] = 1.0 if values[b] != values[c] else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_LT:
            values[a] = 1.0 if values[b] < values[c] else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_LE:
            values[a] = 1.0 if values[b] <= values[c] else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_GT:
            values[a] = 1.0 if values[b] > values[c] else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_GE:
            values[a] = 1.0 if values[b] >= values[c] else 0.0
            if tt:
                taints[a] = taints[b] | taints[c]
        elif op == OP_JMP:
            pc = a
            continue
        elif op == OP_HALT:
            return (STATUS_HALT, 0, 0, n_sig)
        elif op == OP_CASE_ERR:
            return (STATUS_CASE_FALLTHROUGH, pc, 0, n_sig)
        else:
            raise RuntimeError(f"bad opcode {op} at {pc}")
        pc += 1
