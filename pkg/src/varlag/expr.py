"""Symbolic scalar expressions: parsing, exact differentiation, numeric evaluation.

Every coefficient function in the pipeline (source-form components, transition
maps, Lagrangians, bump profiles written as formulas) is an immutable AST over
named variables.  Differentiation is exact on the AST; equality of expressions
is always decided by evaluation on sample points, never structurally.

Grammar (normative)::

    expr   := term { ("+"|"-") term }
    term   := factor { ("*"|"/") factor }
    factor := base [ "^" integer ]
    base   := number | ident | ident "(" expr { "," expr } ")" | "(" expr ")" | "-" base

Supported functions: sin, cos, tan, exp, log, sqrt.  Exponents must be integer
literals (an optional leading minus is accepted).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

import numpy as np

from .errors import (
    EvaluationDomainError,
    MissingBindingError,
    ParseError,
)

__all__ = ["Expression", "parse", "FUNCTIONS", "Binding"]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")

Binding = Mapping[str, Union[float, np.ndarray]]


# --- AST nodes -------------------------------------------------------------
#
# Nodes are plain frozen dataclasses; Expression wraps the root and owns the
# public API.  Smart constructors (_add, _mul, ...) fold constant subtrees and
# drop algebraic no-ops so derivative trees stay small.  Nothing beyond that:
# no canonical forms, no general simplification.


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


Node = Union[Const, Var, Neg, BinOp, Pow, Call]


def _const(v: float) -> Const:
    return Const(float(v))


def _is_const(n: Node, value=None) -> bool:
    return isinstance(n, Const) and (value is None or n.value == value)


def _add(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return _const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return _const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return _const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return _const(a.value / b.value)
    if _is_const(a, 0.0):
        return _const(0.0)
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a: Node) -> Node:
    if _is_const(a):
        return _const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a: Node, k: int) -> Node:
    if k == 0:
        return _const(1.0)
    if k == 1:
        return a
    if _is_const(a):
        return _const(a.value**k)
    return Pow(a, k)


def _call(fn: str, a: Node) -> Node:
    if _is_const(a):
        return _const(getattr(math, fn)(a.value))
    return Call(fn, a)


def _diff(node: Node, v: str) -> Node:
    if isinstance(node, Const):
        return _const(0.0)
    if isinstance(node, Var):
        return _const(1.0 if node.name == v else 0.0)
    if isinstance(node, Neg):
        return _neg(_diff(node.arg, v))
    if isinstance(node, BinOp):
        da, db = _diff(node.left, v), _diff(node.right, v)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, node.right), _mul(node.left, db))
        # quotient rule
        num = _sub(_mul(da, node.right), _mul(node.left, db))
        return _div(num, _pow(node.right, 2))
    if isinstance(node, Pow):
        du = _diff(node.base, v)
        return _mul(_mul(_const(node.exponent), _pow(node.base, node.exponent - 1)), du)
    if isinstance(node, Call):
        da = _diff(node.arg, v)
        u = node.arg
        outer = {
            "sin": lambda: _call("cos", u),
            "cos": lambda: _neg(_call("sin", u)),
            "tan": lambda: _div(_const(1.0), _pow(_call("cos", u), 2)),
            "exp": lambda: _call("exp", u),
            "log": lambda: _div(_const(1.0), u),
            "sqrt": lambda: _div(_const(0.5), _call("sqrt", u)),
        }[node.fn]()
        return _mul(outer, da)
    raise TypeError(f"unknown node {node!r}")


def _subs(node: Node, mapping: Mapping[str, Node]) -> Node:
    if isinstance(node, Const):
        return node
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return _neg(_subs(node.arg, mapping))
    if isinstance(node, BinOp):
        a, b = _subs(node.left, mapping), _subs(node.right, mapping)
        return {"+": _add, "-": _sub, "*": _mul, "/": _div}[node.op](a, b)
    if isinstance(node, Pow):
        return _pow(_subs(node.base, mapping), node.exponent)
    if isinstance(node, Call):
        return _call(node.fn, _subs(node.arg, mapping))
    raise TypeError(f"unknown node {node!r}")


def _free_vars(node: Node, out: set):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _free_vars(node.arg, out)
    elif isinstance(node, BinOp):
        _free_vars(node.left, out)
        _free_vars(node.right, out)
    elif isinstance(node, Pow):
        _free_vars(node.base, out)
    elif isinstance(node, Call):
        _free_vars(node.arg, out)


# Precedence levels used for printing with minimal parentheses.
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _print(node: Node) -> tuple[str, int]:
    """Return (text, precedence); text re-parses to an equivalent tree."""
    if isinstance(node, Const):
        v = node.value
        if v < 0:
            return f"-{_wrap(_print(_const(-v)), _PREC_NEG)}", _PREC_NEG
        if v == int(v) and abs(v) < 1e16:
            return str(int(v)), _PREC_ATOM
        return repr(v), _PREC_ATOM
    if isinstance(node, Var):
        return node.name, _PREC_ATOM
    if isinstance(node, Neg):
        return f"-{_wrap(_print(node.arg), _PREC_NEG)}", _PREC_NEG
    if isinstance(node, BinOp):
        prec = _PREC_ADD if node.op in "+-" else _PREC_MUL
        left = _wrap(_print(node.left), prec)
        # right operand of - and / needs strictly higher precedence
        right = _wrap(_print(node.right), prec + (1 if node.op in "-/" else 0))
        return f"{left} {node.op} {right}", prec
    if isinstance(node, Pow):
        base = _wrap(_print(node.base), _PREC_ATOM)
        return f"{base}^{node.exponent}", _PREC_POW
    if isinstance(node, Call):
        return f"{node.fn}({_print(node.arg)[0]})", _PREC_ATOM
    raise TypeError(f"unknown node {node!r}")


def _wrap(printed: tuple[str, int], need: int) -> str:
    text, prec = printed
    return f"({text})" if prec < need else text


def _codegen(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"_b[{node.name!r}]"
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_codegen(node.left)} {node.op} {_codegen(node.right)})"
    if isinstance(node, Pow):
        return f"({_codegen(node.base)} ** {node.exponent})"
    if isinstance(node, Call):
        return f"_np.{node.fn}({_codegen(node.arg)})"
    raise TypeError(f"unknown node {node!r}")


class Expression:
    """Immutable symbolic expression over named real variables.

    Construction goes through :func:`parse` or the arithmetic operators;
    differentiation is exact on the AST and evaluation is IEEE double
    (numpy-vectorised: binding values may be scalars or equal-shape arrays).
    """

    __slots__ = ("root", "free_vars", "_fn")

    def __init__(self, root: Node):
        self.root = root
        names: set = set()
        _free_vars(root, names)
        self.free_vars = frozenset(names)
        self._fn = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def constant(value: float) -> "Expression":
        return Expression(_const(value))

    @staticmethod
    def variable(name: str) -> "Expression":
        return Expression(Var(name))

    @staticmethod
    def _coerce(other) -> Node:
        if isinstance(other, Expression):
            return other.root
        if isinstance(other, (int, float)):
            return _const(other)
        return NotImplemented

    def __add__(self, other):
        return Expression(_add(self.root, self._coerce(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Expression(_sub(self.root, self._coerce(other)))

    def __rsub__(self, other):
        return Expression(_sub(self._coerce(other), self.root))

    def __mul__(self, other):
        return Expression(_mul(self.root, self._coerce(other)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Expression(_div(self.root, self._coerce(other)))

    def __rtruediv__(self, other):
        return Expression(_div(self._coerce(other), self.root))

    def __neg__(self):
        return Expression(_neg(self.root))

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise TypeError("only integer exponents are supported")
        return Expression(_pow(self.root, k))

    def apply(self, fn: str) -> "Expression":
        if fn not in FUNCTIONS:
            raise ValueError(f"unsupported function {fn!r}")
        return Expression(_call(fn, self.root))

    # -- calculus ------------------------------------------------------------

    def diff(self, var: str) -> "Expression":
        """Exact partial derivative; zero if ``var`` does not occur."""
        return Expression(_diff(self.root, var))

    def subs(self, mapping: Mapping[str, Union["Expression", float, int]]) -> "Expression":
        """Substitute expressions or numbers for variables (with folding)."""
        nodes = {
            name: val.root if isinstance(val, Expression) else _const(val)
            for name, val in mapping.items()
        }
        return Expression(_subs(self.root, nodes))

    # -- evaluation ----------------------------------------------------------

    def _compiled(self):
        if self._fn is None:
            src = f"lambda _b, _np: {_codegen(self.root)}"
            self._fn = eval(src, {"__builtins__": {}})  # noqa: S307 - generated from our own AST
        return self._fn

    def __call__(self, binding: Binding):
        return self.evaluate(binding)

    def evaluate(self, binding: Binding):
        """Evaluate at a binding of all free variables.

        Raises :class:`MissingBindingError` if a free variable is unbound and
        :class:`EvaluationDomainError` if the result leaves the real domain.
        """
        missing = self.free_vars - set(binding)
        if missing:
            raise MissingBindingError(
                f"unbound variables: {', '.join(sorted(missing))}"
            )
        with np.errstate(all="ignore"):
            out = self._compiled()(binding, np)
        if isinstance(out, np.ndarray):
            if not np.all(np.isfinite(out)):
                raise EvaluationDomainError(f"non-finite value while evaluating {self}")
        elif not math.isfinite(out):
            raise EvaluationDomainError(f"non-finite value while evaluating {self}")
        return out

    def is_zero_constant(self) -> bool:
        return _is_const(self.root, 0.0)

    # -- misc ----------------------------------------------------------------

    def __str__(self) -> str:
        return _print(self.root)[0]

    def __repr__(self) -> str:
        return f"Expression({self})"


# --- tokenizer / parser -----------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
  | (?P<ws>\s+)
""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | ident | op | end
    text: str
    offset: int


def _tokenize(text: str) -> Iterator[_Token]:
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        pos = m.end()
        if m.lastgroup != "ws":
            yield _Token(m.lastgroup, m.group(), m.start())
    yield _Token("end", "", len(text))


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def bump(self) -> _Token:
        tok = self.cur
        self.i += 1
        return tok

    def expect_op(self, op: str):
        if self.cur.kind != "op" or self.cur.text != op:
            raise ParseError(f"expected {op!r}", self.cur.offset)
        return self.bump()

    def at_op(self, *ops: str) -> bool:
        return self.cur.kind == "op" and self.cur.text in ops

    def parse(self) -> Node:
        node = self.expr()
        if self.cur.kind != "end":
            raise ParseError(f"unexpected token {self.cur.text!r}", self.cur.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.bump().text
            rhs = self.term()
            node = _add(node, rhs) if op == "+" else _sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.at_op("*", "/"):
            op = self.bump().text
            rhs = self.factor()
            node = _mul(node, rhs) if op == "*" else _div(node, rhs)
        return node

    def factor(self) -> Node:
        node = self.base()
        if self.at_op("^"):
            self.bump()
            node = _pow(node, self.integer())
        return node

    def integer(self) -> int:
        sign = 1
        if self.at_op("-"):
            self.bump()
            sign = -1
        tok = self.cur
        if tok.kind != "num" or not re.fullmatch(r"\d+", tok.text):
            raise ParseError("exponent must be an integer literal", tok.offset)
        self.bump()
        return sign * int(tok.text)

    def base(self) -> Node:
        tok = self.cur
        if tok.kind == "op" and tok.text == "-":
            self.bump()
            return _neg(self.base())
        if tok.kind == "op" and tok.text == "(":
            self.bump()
            node = self.expr()
            self.expect_op(")")
            return node
        if tok.kind == "num":
            self.bump()
            return _const(float(tok.text))
        if tok.kind == "ident":
            self.bump()
            if self.at_op("("):
                if tok.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.offset)
                self.bump()
                args = [self.expr()]
                while self.at_op(","):
                    self.bump()
                    args.append(self.expr())
                self.expect_op(")")
                if len(args) != 1:
                    raise ParseError(
                        f"{tok.text} takes one argument, got {len(args)}", tok.offset
                    )
                return _call(tok.text, args[0])
            return Var(tok.text)
        raise ParseError(f"expected expression, got {tok.text!r}" if tok.text else "unexpected end of input", tok.offset)


def parse(text: str, constants: Mapping[str, float] | None = None) -> Expression:
    """Parse ``text`` into an :class:`Expression`.

    ``constants`` maps names to fixed values which are substituted and folded
    into the tree, so they do not appear among the free variables.
    """
    node = _Parser(text).parse()
    expr = Expression(node)
    if constants:
        bound = {k: v for k, v in constants.items() if k in expr.free_vars}
        if bound:
            expr = expr.subs(bound)
    return expr
