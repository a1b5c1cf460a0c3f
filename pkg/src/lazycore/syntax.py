"""Abstract syntax, parser and deparser for the lazy core language.

The concrete syntax is a small R-flavoured surface::

    f <- function(x, y = "d") x + y;
    f("a");
    delayedAssign(z, "late", environment());
    eval(substitute(x), environment())

``+`` is string concatenation, the only primitive operation. ``;`` separates
statements inside ``{ ... }`` and at the top level of a program. Whitespace,
newlines included, carries no meaning.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

RESERVED = frozenset({"function", "environment", "substitute", "eval", "delayedAssign"})

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


@dataclass(frozen=True)
class SourceSpan:
    """Half-open character range ``[start, end)`` into a source text.

    ``line`` and ``column`` are 1-based and refer to ``start``. ``source``
    names the text the span points into (``"main"`` for a program file).
    """

    start: int
    end: int
    line: int = 1
    column: int = 1
    source: str = "main"

    def __str__(self) -> str:
        return f"{self.source}:{self.line}:{self.column}"

    @property
    def key(self) -> str:
        return f"{self.source}:{self.start}-{self.end}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


def _span() -> Optional[SourceSpan]:
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class StrLit:
    text: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Concat:
    lhs: "Expr"
    rhs: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Assign:
    name: str
    rhs: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Param:
    name: str
    default: Optional["Expr"] = None


@dataclass(frozen=True)
class Function:
    params: tuple[Param, ...]
    body: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Call:
    callee: "Expr"
    args: tuple["Expr", ...]
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class EnvCapture:
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Substitute:
    name: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Eval:
    code: "Expr"
    env: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class DelayedAssign:
    name: str
    code: "Expr"
    env: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Block:
    exprs: tuple["Expr", ...]
    span: Optional[SourceSpan] = _span()

    def __post_init__(self):
        if not self.exprs:
            raise ValueError("Block needs at least one expression")


Expr = Union[StrLit, Var, Concat, Assign, Function, Call, EnvCapture,
             Substitute, Eval, DelayedAssign, Block]


def is_identifier(name: str) -> bool:
    return _IDENT_RE.fullmatch(name) is not None and name not in RESERVED


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<string>")
  | (?P<arrow><-)
  | (?P<punct>[+(){};,=])
  | (?P<reserved_op><<)
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, STRING, PUNCT, EOF
    value: str
    start: int
    end: int


class _Lexer:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def span(self, start: int, end: int) -> SourceSpan:
        line = self.text.count("\n", 0, start) + 1
        column = start - (self.text.rfind("\n", 0, start) + 1) + 1
        return SourceSpan(start, end, line, column, self.source)

    def error(self, message: str, start: int, end: int) -> ParseError:
        return ParseError(message, self.span(start, min(end, len(self.text))))

    def tokens(self) -> list[Token]:
        text = self.text
        out = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise self.error(f"unexpected character {text[pos]!r}", pos, pos + 1)
            kind = m.lastgroup
            if kind == "ws":
                pos = m.end()
            elif kind == "ident":
                out.append(Token("IDENT", m.group(), pos, m.end()))
                pos = m.end()
            elif kind == "string":
                tok, pos = self._string(pos)
                out.append(tok)
            elif kind == "reserved_op":
                raise self.error("'<<-' is not supported", pos, pos + 2)
            else:
                out.append(Token("PUNCT", m.group(), pos, m.end()))
                pos = m.end()
        out.append(Token("EOF", "", len(text), len(text)))
        return out

    def _string(self, start: int) -> tuple[Token, int]:
        text = self.text
        chars = []
        pos = start + 1
        while True:
            if pos >= len(text):
                raise self.error("unterminated string", start, len(text))
            c = text[pos]
            if c == '"':
                return Token("STRING", "".join(chars), start, pos + 1), pos + 1
            if c == "\\":
                esc = text[pos + 1:pos + 2]
                if esc not in _ESCAPES:
                    raise self.error(f"bad escape '\\{esc}'", pos, pos + 2)
                chars.append(_ESCAPES[esc])
                pos += 2
            else:
                chars.append(c)
                pos += 1


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str, source: str):
        self.lexer = _Lexer(text, source)
        self.toks = self.lexer.tokens()
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def at(self, value: str) -> bool:
        return self.tok.kind == "PUNCT" and self.tok.value == value

    def expect(self, value: str) -> Token:
        if not self.at(value):
            raise self._unexpected(f"expected '{value}'")
        return self.advance()

    def _unexpected(self, what: str) -> ParseError:
        tok = self.tok
        found = "end of input" if tok.kind == "EOF" else repr(tok.value)
        return self.lexer.error(f"{what}, found {found}", tok.start, max(tok.end, tok.start))

    def span(self, start: int) -> SourceSpan:
        end = self.toks[self.i - 1].end if self.i else start
        return self.lexer.span(start, max(start, end))

    def ident(self) -> Token:
        tok = self.tok
        if tok.kind != "IDENT":
            raise self._unexpected("expected identifier")
        if tok.value in RESERVED:
            raise self.lexer.error(f"reserved word '{tok.value}' used as identifier",
                                   tok.start, tok.end)
        return self.advance()

    # program := expr { ";" expr } [";"] EOF
    def program(self) -> Expr:
        start = self.tok.start
        exprs = [self.expr()]
        while self.at(";"):
            self.advance()
            if self.tok.kind == "EOF":
                break
            exprs.append(self.expr())
        if self.tok.kind != "EOF":
            raise self._unexpected("expected ';' or end of input")
        if len(exprs) == 1:
            return exprs[0]
        return Block(tuple(exprs), self.span(start))

    def expr(self) -> Expr:
        tok = self.tok
        if tok.kind == "IDENT" and self.peek().kind == "PUNCT" and self.peek().value == "<-":
            name = self.ident().value
            self.advance()
            rhs = self.expr()
            return Assign(name, rhs, self.span(tok.start))
        return self.concat()

    def concat(self) -> Expr:
        start = self.tok.start
        lhs = self.postfix()
        while self.at("+"):
            self.advance()
            rhs = self.postfix()
            lhs = Concat(lhs, rhs, self.span(start))
        if self.at("<-"):
            raise self._unexpected("assignment target must be an identifier")
        return lhs

    def postfix(self) -> Expr:
        start = self.tok.start
        e = self.primary()
        while self.at("("):
            self.advance()
            args = self.comma_list(")", self.expr)
            e = Call(e, tuple(args), self.span(start))
        return e

    def comma_list(self, close: str, item) -> list:
        items = []
        if self.at(close):
            self.advance()
            return items
        items.append(item())
        while self.at(","):
            self.advance()
            items.append(item())
        self.expect(close)
        return items

    def primary(self) -> Expr:
        tok = self.tok
        start = tok.start
        if tok.kind == "STRING":
            self.advance()
            return StrLit(tok.value, self.span(start))
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if self.at("{"):
            self.advance()
            exprs = [self.expr()]
            while self.at(";"):
                self.advance()
                if self.at("}"):
                    break
                exprs.append(self.expr())
            self.expect("}")
            return Block(tuple(exprs), self.span(start))
        if tok.kind != "IDENT":
            raise self._unexpected("expected expression")
        if tok.value not in RESERVED:
            self.advance()
            return Var(tok.value, self.span(start))
        return self.special()

    def special(self) -> Expr:
        kw = self.advance()
        start = kw.start
        self.expect("(")
        if kw.value == "function":
            params = self.comma_list(")", self.param)
            names = [p.name for p in params]
            if len(set(names)) != len(names):
                raise self.lexer.error("duplicate parameter name", start, self.tok.start)
            body = self.expr()
            return Function(tuple(params), body, self.span(start))
        if kw.value == "environment":
            self.expect(")")
            return EnvCapture(self.span(start))
        if kw.value == "substitute":
            name = self.ident().value
            self.expect(")")
            return Substitute(name, self.span(start))
        if kw.value == "eval":
            code = self.expr()
            self.expect(",")
            env = self.expr()
            self.expect(")")
            return Eval(code, env, self.span(start))
        # delayedAssign
        name = self.ident().value
        self.expect(",")
        code = self.expr()
        self.expect(",")
        env = self.expr()
        self.expect(")")
        return DelayedAssign(name, code, env, self.span(start))

    def param(self) -> Param:
        name = self.ident().value
        default = None
        if self.at("="):
            self.advance()
            default = self.expr()
        return Param(name, default)


def parse(text: str, source: str = "main") -> Expr:
    """Parse a program. Raises :class:`ParseError` on malformed input."""
    return _Parser(text, source).program()


# ---------------------------------------------------------------------------
# Deparser


def quote(text: str) -> str:
    out = (text.replace("\\", "\\\\").replace('"', '\\"')
           .replace("\n", "\\n").replace("\t", "\\t"))
    return f'"{out}"'


def _operand(e: Expr, right: bool) -> str:
    s = deparse(e)
    if isinstance(e, (Assign, Function)) or (right and isinstance(e, Concat)):
        return f"({s})"
    return s


def deparse(e: Expr) -> str:
    """Render ``e`` as source text; ``parse(deparse(e)) == e``."""
    if isinstance(e, StrLit):
        return quote(e.text)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Concat):
        return f"{_operand(e.lhs, False)} + {_operand(e.rhs, True)}"
    if isinstance(e, Assign):
        return f"{e.name} <- {deparse(e.rhs)}"
    if isinstance(e, Function):
        params = ", ".join(p.name if p.default is None else f"{p.name} = {deparse(p.default)}"
                           for p in e.params)
        body = deparse(e.body)
        if isinstance(e.body, Assign):
            body = f"({body})"
        return f"function({params}) {body}"
    if isinstance(e, Call):
        callee = deparse(e.callee)
        if isinstance(e.callee, (Assign, Concat, Function)):
            callee = f"({callee})"
        return f"{callee}({', '.join(deparse(a) for a in e.args)})"
    if isinstance(e, EnvCapture):
        return "environment()"
    if isinstance(e, Substitute):
        return f"substitute({e.name})"
    if isinstance(e, Eval):
        return f"eval({deparse(e.code)}, {deparse(e.env)})"
    if isinstance(e, DelayedAssign):
        return f"delayedAssign({e.name}, {deparse(e.code)}, {deparse(e.env)})"
    if isinstance(e, Block):
        return "{ " + "; ".join(deparse(x) for x in e.exprs) + " }"
    raise TypeError(f"cannot deparse {type(e).__name__}")
