"""Scalar expression language: parsing, printing, evaluation, differentiation.

Expressions are immutable ASTs over numeric literals, the named constants
``pi`` and ``sqrt2``, declared variables (``c_1 .. c_m, x, y``), the unary
functions ``sin cos exp sqrt`` and the binary operators ``+ - * /`` plus ``^``
with an integer exponent.

Grammar (``^`` binds tighter than unary minus)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | power
    power  := base ('^' ['-'] int)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

EPS_DIV = 1e-12

FUNCTIONS = ("sin", "cos", "exp", "sqrt")
CONSTANTS = {"pi": math.pi, "sqrt2": math.sqrt(2.0)}
DEFAULT_VARIABLES = ("x", "y")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, position: int, expected: str, found: str, source: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        self.source = source
        super().__init__(f"at offset {position}: expected {expected}, found {found}")


class UnknownIdentifierError(ParseError):
    def __init__(self, position: int, name: str, declared: Sequence[str], source: str = ""):
        self.name = name
        self.declared = tuple(declared)
        ExprError.__init__(
            self,
            f"at offset {position}: unknown identifier {name!r}; "
            f"declared variables are {', '.join(self.declared) or '(none)'}",
        )
        self.position = position
        self.expected = "declared variable"
        self.found = name
        self.source = source


class EvaluationError(ExprError, ArithmeticError):
    pass


class DomainError(EvaluationError):
    pass


class DivisionError(EvaluationError):
    pass


# --------------------------------------------------------------------------- AST


class Expr:
    """Base class of expression nodes.  Nodes are frozen dataclasses."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)

    # Python-level operators build expressions with light simplification.
    def __add__(self, other):
        return _binary(add, self, other)

    def __radd__(self, other):
        return _binary(add, other, self)

    def __sub__(self, other):
        return _binary(sub, self, other)

    def __rsub__(self, other):
        return _binary(sub, other, self)

    def __mul__(self, other):
        return _binary(mul, self, other)

    def __rmul__(self, other):
        return _binary(mul, other, self)

    def __truediv__(self, other):
        return _binary(div, self, other)

    def __rtruediv__(self, other):
        return _binary(div, other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return power(self, n)


@dataclass(frozen=True, eq=True, repr=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Const(Expr):
    name: str

    @property
    def value(self) -> float:
        return CONSTANTS[self.name]


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


ZERO = Num(0.0)
ONE = Num(1.0)


def _binary(op, a, b):
    try:
        return op(as_expr(a), as_expr(b))
    except TypeError:
        return NotImplemented


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Num(float(value))
    if isinstance(value, str):
        return parse(value, variables=None)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def variables_of(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Num, Const)):
        return set()
    if isinstance(e, (Neg, Func)):
        return variables_of(e.arg)
    if isinstance(e, Pow):
        return variables_of(e.base)
    return variables_of(e.left) | variables_of(e.right)


def fiber_variables(m: int) -> tuple[str, ...]:
    return tuple(f"c_{i}" for i in range(1, m + 1)) + DEFAULT_VARIABLES


# ----------------------------------------------------------------- smart builders
# Simplification is limited to constant folding and 0/1 identities.


def _num(e: Expr) -> float | None:
    return e.value if isinstance(e, Num) else None


def add(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return Num(va + vb)
    if va == 0.0:
        return b
    if vb == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return Num(va - vb)
    if vb == 0.0:
        return a
    if va == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return Num(va * vb)
    if va == 0.0 or vb == 0.0:
        return ZERO
    if va == 1.0:
        return b
    if vb == 1.0:
        return a
    if va == -1.0:
        return neg(b)
    if vb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None and abs(vb) >= EPS_DIV:
        return Num(va / vb)
    if va == 0.0:
        return ZERO
    if vb == 1.0:
        return a
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, n: int) -> Expr:
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    va = _num(a)
    if va is not None and (n > 0 or abs(va) >= EPS_DIV):
        return Num(va**n)
    return Pow(a, n)


def func(name: str, a: Expr) -> Expr:
    va = _num(a)
    if va is not None:
        if name == "sin":
            return Num(math.sin(va))
        if name == "cos":
            return Num(math.cos(va))
        if name == "exp":
            return Num(math.exp(va))
        if name == "sqrt" and va >= 0:
            return Num(math.sqrt(va))
    return Func(name, a)


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


# --------------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(pos, "a number, identifier, operator or parenthesis",
                             repr(source[pos]), source)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


class _Parser:
    def __init__(self, source: str, variables: Iterable[str] | None):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = None if variables is None else tuple(variables)

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str, what: str) -> _Token:
        if self.tok.text != text or self.tok.kind != "op":
            raise ParseError(self.tok.pos, what, _describe(self.tok), self.source)
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            raise ParseError(self.tok.pos, "operator or end of input",
                             _describe(self.tok), self.source)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            left = BinOp(op, left, self.factor())
        return left

    def factor(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            sign = 1
            if self.tok.kind == "op" and self.tok.text == "-":
                self.advance()
                sign = -1
            tok = self.tok
            if tok.kind != "number" or not tok.text.isdigit():
                raise ParseError(tok.pos, "integer exponent", _describe(tok), self.source)
            self.advance()
            return Pow(base, sign * int(tok.text))
        return base

    def base(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")", "')'")
            return e
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in FUNCTIONS:
                self.expect("(", f"'(' after function {name}")
                arg = self.expr()
                self.expect(")", "')'")
                return Func(name, arg)
            if name in CONSTANTS:
                return Const(name)
            if self.variables is not None and name not in self.variables:
                raise UnknownIdentifierError(tok.pos, name, self.variables, self.source)
            if self.variables is None and not _is_coordinate(name):
                raise UnknownIdentifierError(tok.pos, name, ("c_1", "...", "x", "y"), self.source)
            return Var(name)
        raise ParseError(tok.pos, "number, identifier or '('", _describe(tok), self.source)


_COORD_RE = re.compile(r"^(x|y|c_[1-9][0-9]*)$")


def _is_coordinate(name: str) -> bool:
    return bool(_COORD_RE.match(name))


def parse(source: str, variables: Iterable[str] | None = DEFAULT_VARIABLES) -> Expr:
    """Parse ``source`` into an AST.

    ``variables`` lists the declared coordinate names; ``None`` accepts any
    coordinate-shaped name (``x``, ``y``, ``c_<i>``).
    """
    if not isinstance(source, str):
        raise TypeError("source must be a string")
    return _Parser(source, variables).parse()


# ----------------------------------------------------------------------- printer

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC_ADD if e.op in "+-" else _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_string(e)
    return f"({s})" if _prec(e) < min_prec else s


def to_string(e: Expr) -> str:
    """Canonical printer; ``parse(to_string(parse(s))) == parse(s)``."""
    if isinstance(e, Num):
        if e.value < 0:
            return "-" + _fmt_num(-e.value)
        return _fmt_num(e.value)
    if isinstance(e, (Const, Var)):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _PREC_NEG)
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Pow):
        return f"{_wrap(e.base, _PREC_ATOM)}^{e.exponent}"
    if e.op in "+-":
        return f"{_wrap(e.left, _PREC_ADD)}{e.op}{_wrap(e.right, _PREC_MUL)}"
    return f"{_wrap(e.left, _PREC_MUL)}{e.op}{_wrap(e.right, _PREC_NEG)}"


# -------------------------------------------------------------------- evaluation


def _checked_div(a, b):
    if np.any(np.abs(b) < EPS_DIV):
        raise DivisionError(f"division by |d| < {EPS_DIV:g}")
    return a / b


def _checked_sqrt(a):
    if np.any(np.asarray(a) < 0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(a)


def _checked_pow(a, n):
    if n < 0:
        if np.any(np.abs(a) < EPS_DIV):
            raise DivisionError(f"negative power of |d| < {EPS_DIV:g}")
        return 1.0 / a ** (-n)
    return a**n


def _codegen(e: Expr) -> str:
    """Source of ``def _f(_v)`` with one assignment per interior node.

    Emitting straight-line code keeps the nesting depth constant, so long sums
    do not run into the compiler's parenthesis limit.
    """
    lines: list[str] = []
    result, _ = _gen(e, lines, {})
    body = "".join(f"    {line}\n" for line in lines)
    return f"def _f(_v):\n{body}    return {result}\n"


def _gen(e: Expr, lines: list[str], memo: dict) -> tuple[str, bool]:
    """Operand naming the value of ``e`` and whether it is free of variables.

    Variable-free subtrees are evaluated once here (with the same domain
    checks) and emitted as literals; shared subtrees are emitted once.
    """
    hit = memo.get(id(e))
    if hit is not None:
        return hit[1]
    out = _gen_node(e, lines, memo)
    memo[id(e)] = (e, out)
    return out


def _gen_node(e: Expr, lines: list[str], memo: dict) -> tuple[str, bool]:
    if isinstance(e, (Num, Const)):
        return f"({float(e.value)!r})", True
    if isinstance(e, Var):
        return f"_v[{e.name!r}]", False
    if isinstance(e, Neg):
        a, c = _gen(e.arg, lines, memo)
        code = f"-{a}"
    elif isinstance(e, Func):
        a, c = _gen(e.arg, lines, memo)
        code = f"_sqrt({a})" if e.name == "sqrt" else f"_np.{e.name}({a})"
    elif isinstance(e, Pow):
        a, c = _gen(e.base, lines, memo)
        code = f"_pow({a}, {e.exponent})"
    else:
        a, ca = _gen(e.left, lines, memo)
        b, cb = _gen(e.right, lines, memo)
        c = ca and cb
        code = f"_div({a}, {b})" if e.op == "/" else f"{a} {e.op} {b}"
    if c:
        with np.errstate(all="ignore"):
            value = float(eval(code, dict(_NAMESPACE)))  # noqa: S307 - generated source
        if np.isfinite(value):
            return f"({value!r})", True
    name = f"_t{len(lines)}"
    lines.append(f"{name} = {code}")
    return name, False


def _build(e: Expr, namespace: dict):
    scope = dict(namespace)
    exec(compile(_codegen(e), "<expr>", "exec"), scope)  # noqa: S102 - source is generated from the AST
    return scope["_f"]


_NAMESPACE = {"_np": np, "_sqrt": _checked_sqrt, "_div": _checked_div, "_pow": _checked_pow}


def compile_expr(e: Expr) -> Callable[[Mapping[str, object]], object]:
    """Compile to a function of a variable mapping; works on scalars and arrays."""
    fn = _build(e, _NAMESPACE)
    needed = variables_of(e)

    def run(point: Mapping[str, object]):
        missing = needed.difference(point)
        if missing:
            raise EvaluationError(f"no value supplied for {', '.join(sorted(missing))}")
        return fn(point)

    run.raw = fn  # unchecked entry point for hot loops with a complete mapping
    return run


def _scalar_div(a, b):
    if abs(b) < EPS_DIV:
        raise DivisionError(f"division by |d| < {EPS_DIV:g}")
    return a / b


def _scalar_sqrt(a):
    if a < 0:
        raise DomainError("sqrt of a negative number")
    return math.sqrt(a)


def _scalar_pow(a, n):
    if n < 0:
        if abs(a) < EPS_DIV:
            raise DivisionError(f"negative power of |d| < {EPS_DIV:g}")
        return 1.0 / a ** (-n)
    return a**n


class _MathShim:
    sin, cos, exp = staticmethod(math.sin), staticmethod(math.cos), staticmethod(math.exp)


_SCALAR_NAMESPACE = {"_np": _MathShim, "_sqrt": _scalar_sqrt, "_div": _scalar_div, "_pow": _scalar_pow}


def compile_scalar(e: Expr) -> Callable[[Mapping[str, float]], float]:
    """Float-only compiled form for tight loops; the mapping must be complete."""
    return _build(e, _SCALAR_NAMESPACE)


def evaluate(e: Expr, point: Mapping[str, object]):
    """IEEE double evaluation of ``e``; ``point`` maps variable names to values."""
    with np.errstate(all="ignore"):
        return compile_expr(e)(point)


# Alias matching the operation name.
eval_expr = evaluate


# --------------------------------------------------------------- differentiation


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to ``var``."""
    return _diff(e, var, {})


def _diff(e: Expr, var: str, memo: dict) -> Expr:
    # shared subtrees (common after repeated brackets) are differentiated once
    hit = memo.get(id(e))
    if hit is not None:
        return hit[1]
    d = _diff_node(e, var, memo)
    memo[id(e)] = (e, d)  # keep e alive so its id stays unique
    return d


def _diff_node(e: Expr, var: str, memo: dict) -> Expr:
    if isinstance(e, (Num, Const)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(_diff(e.arg, var, memo))
    if isinstance(e, Func):
        da = _diff(e.arg, var, memo)
        if da == ZERO:
            return ZERO
        if e.name == "sin":
            return mul(func("cos", e.arg), da)
        if e.name == "cos":
            return neg(mul(func("sin", e.arg), da))
        if e.name == "exp":
            return mul(e, da)
        return div(da, mul(Num(2.0), e))
    if isinstance(e, Pow):
        db = _diff(e.base, var, memo)
        if db == ZERO:
            return ZERO
        return mul(mul(Num(float(e.exponent)), power(e.base, e.exponent - 1)), db)
    dl = _diff(e.left, var, memo)
    dr = _diff(e.right, var, memo)
    if e.op == "+":
        return add(dl, dr)
    if e.op == "-":
        return sub(dl, dr)
    if e.op == "*":
        return add(mul(dl, e.right), mul(e.left, dr))
    # quotient rule
    return div(sub(mul(dl, e.right), mul(e.left, dr)), power(e.right, 2))


# ---------------------------------------------------------------------- sampling


def fiber_env(fiber_point: Sequence[float] = ()) -> dict[str, float]:
    return {f"c_{i}": float(v) for i, v in enumerate(fiber_point, start=1)}


def sample_values(e: Expr, fiber_point: Sequence[float], grid) -> np.ndarray:
    """Values of ``e`` on the grid nodes at the given fiber point."""
    env = fiber_env(fiber_point)
    env["x"], env["y"] = grid.X, grid.Y
    with np.errstate(all="ignore"):
        v = compile_expr(e)(env)
    return np.broadcast_to(np.asarray(v, dtype=float), grid.shape).copy()


def sample_to_grid(e: Expr, fiber_point: Sequence[float], grid):
    """Fourier coefficients of ``e`` sampled on ``grid``."""
    from .fourier import SpectralField

    return SpectralField.from_values(sample_values(e, fiber_point, grid))
