# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scan-cycle kernel; semantics identical to the pure-Python twin."""

from libc.math cimport trunc

KERNEL_NAME = "cython"

DEF OP_HALT = 0
DEF OP_CONST = 1
DEF OP_COPY = 2
DEF OP_ADD = 3
DEF OP_SUB = 4
DEF OP_MUL = 5
DEF OP_DIV_REAL = 6
DEF OP_DIV_INT = 7
DEF OP_MOD_INT = 8
DEF OP_NEG = 9
DEF OP_NOT = 10
DEF OP_AND = 11
DEF OP_OR = 12
DEF OP_XOR = 13
DEF OP_EQ = 14
DEF OP_NE = 15
DEF OP_LT = 16
DEF OP_LE = 17
DEF OP_GT = 18
DEF OP_GE = 19
DEF OP_JMP = 20
DEF OP_BR = 21
DEF OP_CASE_ERR = 22

DEF STATUS_HALT = 0
DEF STATUS_FORK = 1
DEF STATUS_DIV_ZERO = 2
DEF STATUS_CASE_FALLTHROUGH = 3


def run_kernel(const int[::1] code, const double[::1] consts, double[::1] values,
               unsigned long long[::1] taints, unsigned long long trigger_mask,
               long long[::1] sig_buf, bint track_taint):
    cdef Py_ssize_t pc = 0
    cdef Py_ssize_t base
    cdef int op, a, b, c
    cdef long long n_sig = 0
    cdef double d, n
    cdef unsigned long long hit
    while True:
        base = pc * 4
        op = code[base]
        a = code[base + 1]
        b = code[base + 2]
        c = code[base + 3]
        if op == OP_BR:
            if track_taint:
                hit = taints[a] & trigger_mask
                if hit != 0:
                    return (STATUS_FORK, b, hit, n_sig)
            if values[a] != 0.0:
                sig_buf[n_sig] = (b << 1) | 1
                n_sig += 1
                pc += 1
            else:
                sig_buf[n_sig] = b << 1
                n_sig += 1
                pc = c
            continue
        elif op == OP_COPY:
            values[a] = values[b]
            if track_taint:
                taints[a] = taints[b]
        elif op == OP_CONST:
            values[a] = consts[b]
            if track_taint:
                taints[a] = 0
        elif op == OP_ADD:
            values[a] = values[b] + values[c]
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_SUB:
            values[a] = values[b] - values[c]
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_MUL:
            values[a] = values[b] * values[c]
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_DIV_REAL:
            d = values[c]
            if d == 0.0:
                return (STATUS_DIV_ZERO, pc, 0, n_sig)
            values[a] = values[b] / d
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_DIV_INT:
            d = values[c]
            if d == 0.0:
                return (STATUS_DIV_ZERO, pc, 0, n_sig)
            values[a] = trunc(values[b] / d)
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_MOD_INT:
            d = values[c]
            if d == 0.0:
                return (STATUS_DIV_ZERO, pc, 0, n_sig)
            n = values[b]
            values[a] = n - trunc(n / d) * d
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_NEG:
            values[a] = -values[b]
            if track_taint:
                taints[a] = taints[b]
        elif op == OP_NOT:
            values[a] = 0.0 if values[b] != 0.0 else 1.0
            if track_taint:
                taints[a] = taints[b]
        elif op == OP_AND:
            values[a] = 1.0 if (values[b] != 0.0 and values[c] != 0.0) else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_OR:
            values[a] = 1.0 if (values[b] != 0.0 or values[c] != 0.0) else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_XOR:
            values[a] = 1.0 if (values[b] != 0.0) != (values[c] != 0.0) else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_EQ:
            values[a] = 1.0 if values[b] == values[c] else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_NE:
            values[a] = 1.0 if values[b] != values[c] else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_LT:
            values[a] = 1.0 if values[b] < values[c] else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_LE:
            values[a] = 1.0 if values[b] <= values[c] else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_GT:
            values[a] = 1.0 if values[b] > values[c] else 0.0
            if track_taint:
                taints[a] = taints[b] | taints[c]
        elif op == OP_GE:
            values[a] = 1.0 if values[b] >= values[c] else 0.0
            if track_taint:
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
