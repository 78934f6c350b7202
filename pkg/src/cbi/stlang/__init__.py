"""Structured-text frontend: parsing, type checking, pretty printing."""

from . import ast
from .ast import (
    BOOL, INT, REAL,
    Assign, Binary, Call, Case, CaseArm, FbCall, FunctionBlockDef, FunctionDef,
    If, Literal, PouLibrary, Span, StProgram, Unary, VarDecl, VarRef, ukey,
)
from .parser import parse_file, parse_program
from .pretty import pretty_program, pretty_project
from .typecheck import typecheck, typecheck_library

__all__ = [
    "ast", "BOOL", "INT", "REAL",
    "Assign", "Binary", "Call", "Case", "CaseArm", "FbCall",
    "FunctionBlockDef", "FunctionDef", "If", "Literal", "PouLibrary",
    "Span", "StProgram", "Unary", "VarDecl", "VarRef", "ukey",
    "parse_file", "parse_program", "pretty_program", "pretty_project",
    "typecheck", "typecheck_library",
]
