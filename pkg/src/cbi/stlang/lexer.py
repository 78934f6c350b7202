"""Tokenizer for the structured-text subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import StSyntaxError
from .ast import Span

KEYWORDS = {
    "PROGRAM", "END_PROGRAM",
    "FUNCTION", "END_FUNCTION",
    "FUNCTION_BLOCK", "END_FUNCTION_BLOCK",
    "VAR", "VAR_INPUT", "VAR_OUTPUT", "VAR_IN_OUT", "END_VAR",
    "IF", "THEN", "ELSIF", "ELSE", "END_IF",
    "CASE", "OF", "END_CASE",
    "AND", "OR", "XOR", "NOT", "MOD",
    "TRUE", "FALSE",
    "BOOL", "INT", "REAL",
    "CONFIGURATION", "END_CONFIGURATION",
    "RESOURCE", "END_RESOURCE", "ON", "TASK", "WITH",
    "INTERVAL", "PRIORITY",
}

# Longest first so ':=', '<=', '..' win over their prefixes.
_SYMBOLS = [":=", "<>", "<=", ">=", "=>", "..", "+", "-", "*", "/", "=", "<", ">", "(", ")", ":", ";", ","]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\(\*.*?\*\)|//[^\n]*)
  | (?P<time>[Tt]\#[0-9][0-9a-zA-Z_.]*)
  | (?P<real>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>""" + "|".join(re.escape(s) for s in _SYMBOLS) + r""")
    """,
    re.VERBOSE | re.DOTALL,
)

_TIME_PART_RE = re.compile(r"(\d+(?:\.\d+)?)(ms|s|m|h|d)", re.IGNORECASE)
_TIME_UNIT_MS = {"ms": 1.0, "s": 1000.0, "m": 60000.0, "h": 3600000.0, "d": 86400000.0}


@dataclass(frozen=True)
class Token:
    kind: str  # keyword text, symbol text, or one of IDENT/INT/REAL/TIME/EOF
    value: object
    span: Span

    def __repr__(self):
        return f"Token({self.kind!r}, {self.value!r}, {self.span})"


def parse_time_literal(text: str, span: Span) -> int:
    """T#... duration to integer milliseconds."""
    body = text[2:]
    pos = 0
    total = 0.0
    while pos < len(body):
        m = _TIME_PART_RE.match(body, pos)
        if not m:
            raise StSyntaxError(span, {"time literal"}, text)
        total += float(m.group(1)) * _TIME_UNIT_MS[m.group(2).lower()]
        pos = m.end()
    if pos == 0:
        raise StSyntaxError(span, {"time literal"}, text)
    return int(round(total))


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise StSyntaxError(Span(line, pos - line_start + 1), {"token"}, source[pos])
        span = Span(line, pos - line_start + 1)
        text = m.group(0)
        if m.lastgroup in ("ws", "comment"):
            pass
        elif m.lastgroup == "time":
            tokens.append(Token("TIME", parse_time_literal(text, span), span))
        elif m.lastgroup == "real":
            tokens.append(Token("REAL_LIT", float(text), span))
        elif m.lastgroup == "int":
            tokens.append(Token("INT_LIT", int(text), span))
        elif m.lastgroup == "ident":
            upper = text.upper()
            if upper in KEYWORDS:
                tokens.append(Token(upper, upper, span))
            else:
                tokens.append(Token("IDENT", text, span))
        else:
            tokens.append(Token(text, text, span))
        # track line numbers across the consumed text
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", None, Span(line, pos - line_start + 1)))
    return tokens
