"""OpenMP-style directives for a small Zig-flavoured kernel language.

Pipeline: ``tokenize`` -> ``parse`` -> ``preprocess`` -> ``run_program``.
"""

from .clauses import ClauseSet, ReductionOp, ScheduleKind, ScheduleSpec, decode, encode
from .errors import CheckError, KernelRuntimeError, LexError, Located, ParseError, PreprocessError
from .interp import Program, RunResult, run_program
from .parser import parse, parse_source
from .preprocess import preprocess
from .tokens import tokenize

__all__ = [
    "CheckError", "ClauseSet", "KernelRuntimeError", "LexError", "Located", "ParseError",
    "PreprocessError", "Program", "ReductionOp", "RunResult", "ScheduleKind", "ScheduleSpec",
    "decode", "encode", "parse", "parse_source", "preprocess", "run_program", "tokenize",
]
