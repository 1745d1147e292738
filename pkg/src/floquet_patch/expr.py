"""Arithmetic expressions for kinetic right-hand sides.

A small recursive-descent parser produces an immutable AST that can be
evaluated, differentiated symbolically and compiled to a plain Python
function.  Grammar (standard precedence, binary operators left-associative,
``^`` right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom (('^' | '**') unary)?
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of ``exp``, ``ln``, ``sin``, ``cos``, ``sqrt``.  Exponents
must fold to a rational constant; non-integer powers require a positive base.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

__all__ = [
    "Expr", "Num", "Var", "Param", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "SymbolTable", "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "EvaluationError", "parse", "differentiate", "evaluate", "to_source",
    "compile_functions", "FUNCTIONS",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int | None = None):
        where = "" if offset is None else f" at offset {offset}"
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.offset = offset


class EvaluationError(ExprError, ArithmeticError):
    """Raised when a node evaluates to a non-finite or undefined value."""

    def __init__(self, node: "Expr", reason: str):
        super().__init__(f"{reason} in {to_source(node)}")
        self.node = node
        self.reason = reason


@dataclass(frozen=True)
class SymbolTable:
    """Ordered state variables plus named parameters with values."""

    variables: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "params", dict(self.params))
        names = list(self.variables) + list(self.params)
        if len(set(names)) != len(names):
            raise ValueError("symbol names must be unique")
        for name in names:
            if name in FUNCTIONS:
                raise ValueError(f"{name!r} is a reserved function name")

    def index(self, name: str) -> int:
        return self.variables.index(name)


# --- AST -------------------------------------------------------------------


class Expr:
    """Base node.  Nodes are frozen dataclasses and compare structurally."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str
    index: int


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Fraction


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


FUNCTIONS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "ln": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
}

ZERO = Num(0.0)
ONE = Num(1.0)


# --- smart constructors (constant folding, zero/one elimination) -----------


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Div(a, b)


def power(a: Expr, k: Fraction) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return a
    return Pow(a, k)


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", _byte_offset(source, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, symbols: SymbolTable):
        self.source = source
        self.symbols = symbols
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(message, _byte_offset(self.source, tok[2]))

    def expect(self, value: str):
        tok = self.peek()
        if tok[1] != value or tok[0] == "num":
            self.fail(f"expected {value!r}")
        return self.take()

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.fail("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            arg = self.unary()
            return Neg(arg) if tok[1] == "-" else arg
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("^", "**"):
            self.take()
            exp_tok = self.peek()
            exponent = self.unary()
            k = _fold_rational(exponent)
            if k is None:
                self.fail("exponent must be a rational constant", exp_tok)
            return Pow(base, k)
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, offset = tok
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    self.fail(f"function {text!r} requires an argument")
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in self.symbols.variables:
                return Var(text, self.symbols.index(text))
            if text in self.symbols.params:
                return Param(text)
            raise UnknownIdentifierError(text, _byte_offset(self.source, offset))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            self.fail("unexpected end of expression", tok)
        self.fail(f"unexpected token {text!r}", tok)


def _fold_rational(e: Expr) -> Fraction | None:
    if isinstance(e, Num):
        return Fraction(repr(e.value)) if math.isfinite(e.value) else None
    if isinstance(e, Neg):
        v = _fold_rational(e.arg)
        return None if v is None else -v
    if isinstance(e, (Add, Sub, Mul, Div)):
        a, b = _fold_rational(e.left), _fold_rational(e.right)
        if a is None or b is None:
            return None
        if isinstance(e, Add):
            return a + b
        if isinstance(e, Sub):
            return a - b
        if isinstance(e, Mul):
            return a * b
        return None if b == 0 else a / b
    return None


def parse(source: str, symbols: SymbolTable) -> Expr:
    """Parse ``source`` into an AST whose identifiers resolve in ``symbols``."""
    return _Parser(source, symbols).parse()


# --- differentiation ---------------------------------------------------------


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``.

    ``var`` is normally a state variable; parameter names are accepted too.
    """
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Param):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, Add):
        return add(differentiate(e.left, var), differentiate(e.right, var))
    if isinstance(e, Sub):
        return sub(differentiate(e.left, var), differentiate(e.right, var))
    if isinstance(e, Mul):
        da, db = differentiate(e.left, var), differentiate(e.right, var)
        return add(mul(da, e.right), mul(e.left, db))
    if isinstance(e, Div):
        da, db = differentiate(e.left, var), differentiate(e.right, var)
        if _is(db, 0.0):
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, Fraction(2)))
    if isinstance(e, Pow):
        db = differentiate(e.base, var)
        if _is(db, 0.0):
            return ZERO
        k = e.exponent
        return mul(mul(Num(float(k)), power(e.base, k - 1)), db)
    if isinstance(e, Call):
        da = differentiate(e.arg, var)
        if _is(da, 0.0):
            return ZERO
        a = e.arg
        if e.func == "exp":
            outer = e
        elif e.func == "ln":
            return div(da, a)
        elif e.func == "sin":
            outer = Call("cos", a)
        elif e.func == "cos":
            outer = neg(Call("sin", a))
        elif e.func == "sqrt":
            return div(da, mul(Num(2.0), e))
        else:  # pragma: no cover
            raise ExprError(f"unknown function {e.func}")
        return mul(outer, da)
    raise TypeError(f"not an expression node: {e!r}")


# --- evaluation --------------------------------------------------------------


def _int_power(x: float, n: int) -> float:
    # repeated multiplication; keeps tree and compiled paths bitwise equal
    r = x
    for _ in range(n - 1):
        r = r * x
    return r


def _pow(x: float, k: Fraction) -> float:
    if k.denominator == 1:
        n = k.numerator
        if n > 0:
            return _int_power(x, n)
        return 1.0 / _int_power(x, -n)
    if x <= 0.0:
        raise ValueError("non-integer power of non-positive base")
    return x ** float(k)


def evaluate(e: Expr, state: Sequence[float], params: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Raises :class:`EvaluationError` naming the first node whose value is
    undefined (division by zero, log of a non-positive number, ...) or
    non-finite.
    """
    state = [float(x) for x in state]
    return _eval(e, state, params)


def _eval(e: Expr, y: list, p: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return y[e.index]
    if isinstance(e, Param):
        try:
            return float(p[e.name])
        except KeyError:
            raise UnknownIdentifierError(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.arg, y, p)
    try:
        if isinstance(e, Call):
            a = _eval(e.arg, y, p)
            if e.func == "ln" and a <= 0.0:
                raise EvaluationError(e, "logarithm of non-positive value")
            if e.func == "sqrt" and a < 0.0:
                raise EvaluationError(e, "square root of negative value")
            v = FUNCTIONS[e.func](a)
        elif isinstance(e, Pow):
            v = _pow(_eval(e.base, y, p), e.exponent)
        else:
            a = _eval(e.left, y, p)
            b = _eval(e.right, y, p)
            if isinstance(e, Add):
                v = a + b
            elif isinstance(e, Sub):
                v = a - b
            elif isinstance(e, Mul):
                v = a * b
            else:
                if b == 0.0:
                    raise EvaluationError(e, "division by zero")
                v = a / b
    except EvaluationError:
        raise
    except (ArithmeticError, ValueError) as exc:
        raise EvaluationError(e, str(exc) or type(exc).__name__) from None
    if not math.isfinite(v):
        raise EvaluationError(e, "non-finite value")
    return v


# --- printing and compilation -----------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return _PREC.get(type(e), 5)


def _fmt_num(v: float) -> str:
    if v < 0 or math.copysign(1.0, v) < 0:
        return f"-{repr(-v)}"
    return repr(v)


def to_source(e: Expr) -> str:
    """Render ``e`` in the input grammar; ``parse(to_source(e))`` evaluates identically."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return f"-({inner})" if _prec(e.arg) <= 3 else f"-{inner}"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Pow):
        base = to_source(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        k = e.exponent
        ks = str(k.numerator) if k.denominator == 1 else f"{k.numerator}/{k.denominator}"
        return f"{base}^({ks})"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    p = _PREC[type(e)]
    left = to_source(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_source(e.right)
    # right operand needs parentheses at equal precedence (left associativity)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


def _py(e: Expr, params: Mapping[str, float]) -> str:
    if isinstance(e, Num):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return f"y{e.index}"
    if isinstance(e, Param):
        return f"({float(params[e.name])!r})"
    if isinstance(e, Neg):
        return f"(-{_py(e.arg, params)})"
    if isinstance(e, Add):
        return f"({_py(e.left, params)} + {_py(e.right, params)})"
    if isinstance(e, Sub):
        return f"({_py(e.left, params)} - {_py(e.right, params)})"
    if isinstance(e, Mul):
        return f"({_py(e.left, params)} * {_py(e.right, params)})"
    if isinstance(e, Div):
        return f"({_py(e.left, params)} / {_py(e.right, params)})"
    if isinstance(e, Pow):
        k = e.exponent
        b = _py(e.base, params)
        if k.denominator == 1 and k.numerator > 0:
            return "(" + " * ".join([b] * k.numerator) + ")"
        if k.denominator == 1:
            return "(1.0 / (" + " * ".join([b] * (-k.numerator)) + "))"
        return f"_rpow({b}, {float(k)!r})"
    if isinstance(e, Call):
        return f"_{e.func}({_py(e.arg, params)})"
    raise TypeError(f"not an expression node: {e!r}")


def _rpow(x: float, k: float) -> float:
    if x <= 0.0:
        raise ValueError("non-integer power of non-positive base")
    return x ** k


def _ln(x: float) -> float:
    return math.log(x)


_COMPILE_ENV = {
    "_rpow": _rpow, "_exp": math.exp, "_ln": _ln, "_sin": math.sin,
    "_cos": math.cos, "_sqrt": math.sqrt,
}


def compile_functions(exprs: Sequence[Expr], dim: int, params: Mapping[str, float]) -> Callable:
    """Compile expressions into ``fn(y0, ..., y{dim-1}) -> tuple`` with parameters baked in.

    The compiled function raises the native Python exception on an undefined
    operation; callers map that back to :class:`EvaluationError` by
    re-evaluating with :func:`evaluate`.
    """
    args = ", ".join(f"y{i}" for i in range(dim))
    body = ", ".join(_py(e, params) for e in exprs)
    src = f"def _fn({args}):\n    return ({body},)\n"
    namespace = dict(_COMPILE_ENV)
    exec(compile(src, "<floquet_patch.expr>", "exec"), namespace)
    return namespace["_fn"]
