"""Tokenizer for the kernel language.

A directive comment ``//$omp`` produces a single ``omp_sentinel`` token and the
rest of that line is tokenized as ordinary code. OpenMP words are never given
their own tags here; the parser reinterprets identifiers on demand.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import LexError

SENTINEL = b"//$omp"


class TokenTag(enum.Enum):
    identifier = "identifier"
    int_literal = "integer literal"
    float_literal = "float literal"
    string_literal = "string literal"
    omp_sentinel = "//$omp"
    eof = "end of file"

    # keywords
    kw_fn = "fn"
    kw_var = "var"
    kw_const = "const"
    kw_while = "while"
    kw_if = "if"
    kw_else = "else"
    kw_return = "return"
    kw_break = "break"
    kw_continue = "continue"
    kw_true = "true"
    kw_false = "false"
    kw_undefined = "undefined"
    kw_null = "null"
    kw_struct = "struct"
    kw_and = "and"
    kw_or = "or"

    # punctuation
    l_paren = "("
    r_paren = ")"
    l_brace = "{"
    r_brace = "}"
    l_bracket = "["
    r_bracket = "]"
    comma = ","
    semicolon = ";"
    colon = ":"
    period = "."
    period_asterisk = ".*"
    question_mark = "?"
    equal = "="
    equal_equal = "=="
    bang_equal = "!="
    angle_left = "<"
    angle_left_equal = "<="
    angle_right = ">"
    angle_right_equal = ">="
    plus = "+"
    minus = "-"
    asterisk = "*"
    slash = "/"
    percent = "%"
    plus_percent = "+%"
    minus_percent = "-%"
    asterisk_percent = "*%"
    ampersand = "&"
    pipe = "|"
    caret = "^"
    tilde = "~"
    bang = "!"
    shift_left = "<<"
    shift_right = ">>"
    plus_equal = "+="
    minus_equal = "-="
    asterisk_equal = "*="
    slash_equal = "/="
    percent_equal = "%="
    ampersand_equal = "&="
    pipe_equal = "|="
    caret_equal = "^="
    shift_left_equal = "<<="
    shift_right_equal = ">>="

    # OpenMP keywords: only produced by the parser re-reading an identifier
    omp_parallel = "parallel"
    omp_while_ws = "while"
    omp_atomic = "atomic"
    omp_private = "private"
    omp_firstprivate = "firstprivate"
    omp_shared = "shared"
    omp_reduction = "reduction"
    omp_default = "default"
    omp_none = "none"
    omp_nowait = "nowait"
    omp_schedule = "schedule"
    omp_static = "static"
    omp_dynamic = "dynamic"
    omp_guided = "guided"
    omp_runtime = "runtime"
    omp_collapse = "collapse"

    @property
    def is_omp_keyword(self) -> bool:
        return self.name.startswith("omp_") and self is not TokenTag.omp_sentinel


KEYWORDS = {
    tag.value.encode(): tag for tag in TokenTag if tag.name.startswith("kw_")
}

# string -> keyword map consulted by the parser's eat_token
OMP_KEYWORDS = {tag.value: tag for tag in TokenTag if tag.is_omp_keyword}

_PUNCT = sorted(
    (tag.value.encode() for tag in TokenTag
     if not tag.name.startswith(("kw_", "omp_")) and not tag.value[0].isalpha()
     and tag is not TokenTag.omp_sentinel),
    key=len,
    reverse=True,
)
_PUNCT_TAGS = {tag.value.encode(): tag for tag in TokenTag if tag.value.encode() in _PUNCT}

_TOKEN_RE = re.compile(
    rb"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<float>[0-9]+\.[0-9]+(?:[eE][+-]?[0-9]+)?|[0-9]+[eE][+-]?[0-9]+)
  | (?P<int>0x[0-9a-fA-F]+|[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\[^\n])*")
  | (?P<punct>"""
    + b"|".join(re.escape(p) for p in _PUNCT)
    + rb")",
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class Token:
    tag: TokenTag
    start: int
    end: int
    text: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def _is_sentinel(src: bytes, pos: int) -> bool:
    if not src.startswith(SENTINEL, pos):
        return False
    after = pos + len(SENTINEL)
    return after == len(src) or src[after] in b" \t\r\n"


def tokenize(source: str | bytes, *, openmp: bool = True) -> list[Token]:
    """Split ``source`` into tokens ending with an ``eof`` token.

    With ``openmp=False`` directive comments are skipped like any other
    comment, which yields the directive-stripped program.
    """
    src = source.encode("utf-8") if isinstance(source, str) else bytes(source)
    try:
        src.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise LexError("invalid UTF-8 byte", exc.start, src) from None

    tokens: list[Token] = []
    pos, n = 0, len(src)
    match = _TOKEN_RE.match
    while pos < n:
        m = match(src, pos)
        if m is None:
            if src[pos] == ord('"'):
                raise LexError("unterminated string literal", pos, src)
            raise LexError(f"illegal byte 0x{src[pos]:02x}", pos, src)
        kind = m.lastgroup
        end = m.end()
        if kind == "ws":
            pass
        elif kind == "comment":
            if openmp and _is_sentinel(src, pos):
                end = pos + len(SENTINEL)
                tokens.append(Token(TokenTag.omp_sentinel, pos, end, "//$omp"))
        else:
            text = m.group().decode("utf-8")
            if kind == "ident":
                tag = KEYWORDS.get(m.group(), TokenTag.identifier)
            elif kind == "int":
                tag = TokenTag.int_literal
            elif kind == "float":
                tag = TokenTag.float_literal
            elif kind == "string":
                tag = TokenTag.string_literal
            else:
                tag = _PUNCT_TAGS[m.group()]
            tokens.append(Token(tag, pos, end, text))
        pos = end
    tokens.append(Token(TokenTag.eof, n, n, ""))
    return tokens
