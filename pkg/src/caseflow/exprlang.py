"""Small total expression language for edge conditions and rule guards.

Infix grammar with C-like precedence (``not`` binds tighter than ``and``,
``and`` tighter than ``or``; comparisons bind tighter than boolean
operators). Supported constructs: boolean/integer/decimal/string literals,
variable references, comparisons (``=``, ``!=``, ``<``, ``<=``, ``>``,
``>=``), boolean operators, arithmetic (``+``, ``-``, ``*``, ``/``) and
parentheses. No function calls, no side effects; expressions are immutable
after parse and evaluation is re-entrant.

Evaluation is total via typed errors: unbound variables, type mismatches and
division by zero raise instead of looping or returning defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

Scalar = Union[bool, int, float, str]


class ExpressionError(Exception):
    """Base class for parse and evaluation errors."""


class ExprSyntaxError(ExpressionError):
    """Syntax error with 1-based line/column position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class EvalError(ExpressionError):
    """Base class for evaluation failures."""


class UnboundVariableError(EvalError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class TypeMismatchError(EvalError):
    pass


class DivisionByZeroError(EvalError):
    def __init__(self) -> None:
        super().__init__("division by zero")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Scalar


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Compare:
    op: str  # = != < <= > >=
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Arith:
    op: str  # + - * /
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class Not:
    operand: "Expression"


@dataclass(frozen=True)
class And:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Or:
    left: "Expression"
    right: "Expression"


Expression = Union[Literal, Var, Compare, Arith, Neg, Not, And, Or]

TRUE = Literal(True)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_KEYWORDS = {"true", "false", "and", "or", "not"}
_TWO_CHAR = ("<=", ">=", "!=", "==", "<>")
_ONE_CHAR = "=<>+-*/()"


@dataclass(frozen=True)
class _Token:
    kind: str  # num str ident kw op eof
    text: str
    value: Scalar | None
    line: int
    column: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i = 1, 1, 0
    n = len(src)
    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (src[j].isdigit() or (src[j] == "." and not seen_dot)):
                if src[j] == ".":
                    seen_dot = True
                j += 1
            text = src[i:j]
            value: Scalar = float(text) if seen_dot else int(text)
            tokens.append(_Token("num", text, value, line, start_col))
            col += j - i
            i = j
            continue
        if ch == '"':
            j = i + 1
            buf: list[str] = []
            while j < n:
                c = src[j]
                if c == "\\" and j + 1 < n:
                    nxt = src[j + 1]
                    if nxt in ('"', "\\"):
                        buf.append(nxt)
                        j += 2
                        continue
                if c == '"':
                    break
                if c == "\n":
                    raise ExprSyntaxError("unterminated string literal", line, start_col)
                buf.append(c)
                j += 1
            else:
                raise ExprSyntaxError("unterminated string literal", line, start_col)
            tokens.append(_Token("str", src[i : j + 1], "".join(buf), line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            kind = "kw" if text in _KEYWORDS else "ident"
            tokens.append(_Token(kind, text, None, line, start_col))
            col += j - i
            i = j
            continue
        two = src[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(_Token("op", two, None, line, start_col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(_Token("op", ch, None, line, start_col))
            i += 1
            col += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(_Token("eof", "", None, line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.column)
        self.advance()

    def parse(self) -> Expression:
        expr = self.or_expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected trailing input {tok.text!r}", tok.line, tok.column)
        return expr

    def or_expr(self) -> Expression:
        left = self.and_expr()
        while self.peek().kind == "kw" and self.peek().text == "or":
            self.advance()
            left = Or(left, self.and_expr())
        return left

    def and_expr(self) -> Expression:
        left = self.not_expr()
        while self.peek().kind == "kw" and self.peek().text == "and":
            self.advance()
            left = And(left, self.not_expr())
        return left

    def not_expr(self) -> Expression:
        if self.peek().kind == "kw" and self.peek().text == "not":
            self.advance()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expression:
        left = self.additive()
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("=", "==", "!=", "<>", "<", "<=", ">", ">="):
            self.advance()
            op = {"==": "=", "<>": "!="}.get(tok.text, tok.text)
            return Compare(op, left, self.additive())
        return left

    def additive(self) -> Expression:
        left = self.multiplicative()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in ("+", "-"):
                self.advance()
                left = Arith(tok.text, left, self.multiplicative())
            else:
                return left

    def multiplicative(self) -> Expression:
        left = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in ("*", "/"):
                self.advance()
                left = Arith(tok.text, left, self.unary())
            else:
                return left

    def unary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "num" or tok.kind == "str":
            self.advance()
            assert tok.value is not None or tok.kind == "str"
            return Literal(tok.value)  # type: ignore[arg-type]
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.advance()
            return Literal(tok.text == "true")
        if tok.kind == "ident":
            self.advance()
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            inner = self.or_expr()
            self.expect_op(")")
            return inner
        raise ExprSyntaxError(
            f"expected expression, found {tok.text or 'end of input'!r}", tok.line, tok.column
        )


def parse_expression(src: str) -> Expression:
    """Parse source text into an immutable expression tree."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 1, 1)
    return _Parser(_tokenize(src)).parse()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _require_number(value: Scalar, context: str) -> int | float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeMismatchError(f"{context} requires a number, got {type(value).__name__}")
    return value


def _require_bool(value: Scalar, context: str) -> bool:
    if not isinstance(value, bool):
        raise TypeMismatchError(f"{context} requires a boolean, got {type(value).__name__}")
    return value


def evaluate(expr: Expression, bindings: Mapping[str, Scalar]) -> Scalar:
    """Evaluate an expression against variable bindings.

    Deterministic and side-effect free; every failure is a typed
    :class:`EvalError`.
    """
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in bindings:
            raise UnboundVariableError(expr.name)
        return bindings[expr.name]
    if isinstance(expr, Not):
        return not _require_bool(evaluate(expr.operand, bindings), "'not'")
    if isinstance(expr, And):
        left = _require_bool(evaluate(expr.left, bindings), "'and'")
        if not left:
            return False
        return _require_bool(evaluate(expr.right, bindings), "'and'")
    if isinstance(expr, Or):
        left = _require_bool(evaluate(expr.left, bindings), "'or'")
        if left:
            return True
        return _require_bool(evaluate(expr.right, bindings), "'or'")
    if isinstance(expr, Neg):
        return -_require_number(evaluate(expr.operand, bindings), "unary '-'")
    if isinstance(expr, Arith):
        left = _require_number(evaluate(expr.left, bindings), f"'{expr.op}'")
        right = _require_number(evaluate(expr.right, bindings), f"'{expr.op}'")
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if right == 0:
            raise DivisionByZeroError()
        result = left / right
        if isinstance(left, int) and isinstance(right, int) and left % right == 0:
            return left // right
        return result
    if isinstance(expr, Compare):
        left = evaluate(expr.left, bindings)
        right = evaluate(expr.right, bindings)
        return _compare(expr.op, left, right)
    raise TypeMismatchError(f"unknown expression node {type(expr).__name__}")


def _compare(op: str, left: Scalar, right: Scalar) -> bool:
    numeric = (
        isinstance(left, (int, float))
        and isinstance(right, (int, float))
        and not isinstance(left, bool)
        and not isinstance(right, bool)
    )
    same_kind = (
        numeric
        or (isinstance(left, str) and isinstance(right, str))
        or (isinstance(left, bool) and isinstance(right, bool))
    )
    if not same_kind:
        raise TypeMismatchError(
            f"cannot compare {type(left).__name__} with {type(right).__name__}"
        )
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if isinstance(left, bool):
        raise TypeMismatchError("ordering comparison on booleans")
    if op == "<":
        return left < right  # type: ignore[operator]
    if op == "<=":
        return left <= right  # type: ignore[operator]
    if op == ">":
        return left > right  # type: ignore[operator]
    if op == ">=":
        return left >= right  # type: ignore[operator]
    raise TypeMismatchError(f"unknown comparison operator {op!r}")


def evaluate_bool(expr: Expression, bindings: Mapping[str, Scalar]) -> bool:
    """Evaluate an expression used for routing; non-boolean results error."""
    value = evaluate(expr, bindings)
    if not isinstance(value, bool):
        raise TypeMismatchError(
            f"routing guard must produce a boolean, got {type(value).__name__}"
        )
    return value


def render(expr: Expression) -> str:
    """Render an expression tree back to parseable source text."""
    if isinstance(expr, Literal):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        if isinstance(expr.value, str):
            escaped = expr.value.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return str(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Not):
        return f"not ({render(expr.operand)})"
    if isinstance(expr, And):
        return f"({render(expr.left)} and {render(expr.right)})"
    if isinstance(expr, Or):
        return f"({render(expr.left)} or {render(expr.right)})"
    if isinstance(expr, Neg):
        return f"-({render(expr.operand)})"
    if isinstance(expr, (Arith, Compare)):
        return f"({render(expr.left)} {expr.op} {render(expr.right)})"
    raise TypeMismatchError(f"unknown expression node {type(expr).__name__}")
