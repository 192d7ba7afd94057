"""Immutable symbolic expression trees with evaluation, differentiation,
parsing and printing.

Node kinds: constants, symbols, n-ary sums and products, integer powers,
negation, a fixed set of unary functions (sin, cos, tan, tanh, exp, ln,
sqrt) and quotients.  Construction goes through the helper functions
(add, mul, neg, pow_, div, call) which flatten nested sums/products,
fold constants and normalise signs, so a tree built through them is
already in simplified structural form.  simplify() re-runs the same
rules bottom-up, which matters after substitution.

Text format accepted by parse() and emitted by to_text():

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' ['-'] INT)*
    atom    := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

NUMBER is a decimal literal with optional fraction and exponent part.
Function application is recognised only for the seven function names
above; any other identifier is a symbol.  Exponents are integers.
"""

from __future__ import annotations

import keyword
import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence


class UnboundSymbol(KeyError):
    """A symbol had no value in the evaluation environment."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unbound symbol '{self.name}'"


class DomainError(ArithmeticError):
    """An operation was evaluated outside its domain (ln(-1), x/0, ...)."""

    def __init__(self, operation: str, value: float):
        super().__init__(operation, value)
        self.operation = operation
        self.value = value

    def __str__(self) -> str:
        return f"domain error in {self.operation} at {self.value}"


class SyntaxError(ValueError):  # noqa: A001  (contract name; shadows builtin on purpose)
    """Parse failure, carries the character position and a message."""

    def __init__(self, position: int, message: str):
        super().__init__(position, message)
        self.position = position
        self.message = message

    def __str__(self) -> str:
        return f"syntax error at {self.position}: {self.message}"


class DuplicateVariable(ValueError):
    """The same variable name was declared twice."""


FUNCTIONS = ("sin", "cos", "tan", "tanh", "exp", "ln", "sqrt")

_MATH_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "tanh": math.tanh,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
}


class Expr:
    """Base class for all nodes.  Instances are immutable and hashable."""

    __slots__ = ()

    def eval(self, env: Mapping[str, float]) -> float:
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def free_symbols(self) -> frozenset[str]:
        raise NotImplementedError

    # arithmetic sugar; plain numbers are accepted on either side
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __neg__(self):
        return neg(self)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite constant {self.value!r}")

    def eval(self, env):
        return self.value

    def diff(self, var):
        return Const(0.0)

    def free_symbols(self):
        return frozenset()


@dataclass(frozen=True, eq=True)
class Sym(Expr):
    name: str

    def eval(self, env):
        try:
            return float(env[self.name])
        except KeyError:
            raise UnboundSymbol(self.name) from None

    def diff(self, var):
        return Const(1.0) if self.name == var else Const(0.0)

    def free_symbols(self):
        return frozenset((self.name,))


@dataclass(frozen=True, eq=True)
class Sum(Expr):
    terms: tuple[Expr, ...]

    def eval(self, env):
        return math.fsum(t.eval(env) for t in self.terms)

    def diff(self, var):
        return add(*(t.diff(var) for t in self.terms))

    def free_symbols(self):
        out = frozenset()
        for t in self.terms:
            out |= t.free_symbols()
        return out


@dataclass(frozen=True, eq=True)
class Product(Expr):
    factors: tuple[Expr, ...]

    def eval(self, env):
        out = 1.0
        for f in self.factors:
            out *= f.eval(env)
        return out

    def diff(self, var):
        # product rule over n factors
        parts = []
        for i, fi in enumerate(self.factors):
            rest = self.factors[:i] + self.factors[i + 1 :]
            parts.append(mul(fi.diff(var), *rest))
        return add(*parts)

    def free_symbols(self):
        out = frozenset()
        for f in self.factors:
            out |= f.free_symbols()
        return out


@dataclass(frozen=True, eq=True)
class Power(Expr):
    base: Expr
    exponent: int

    def eval(self, env):
        b = self.base.eval(env)
        if b == 0.0 and self.exponent < 0:
            raise DomainError("power", b)
        try:
            return b ** self.exponent
        except OverflowError:
            return math.inf if (b > 0 or self.exponent % 2 == 0) else -math.inf

    def diff(self, var):
        k = self.exponent
        return mul(Const(float(k)), pow_(self.base, k - 1), self.base.diff(var))

    def free_symbols(self):
        return self.base.free_symbols()


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr

    def eval(self, env):
        return -self.operand.eval(env)

    def diff(self, var):
        return neg(self.operand.diff(var))

    def free_symbols(self):
        return self.operand.free_symbols()


@dataclass(frozen=True, eq=True)
class Call(Expr):
    fn: str
    operand: Expr

    def __post_init__(self):
        if self.fn not in _MATH_FN:
            raise ValueError(f"unknown function '{self.fn}'")

    def eval(self, env):
        v = self.operand.eval(env)
        if self.fn == "ln" and v <= 0.0:
            raise DomainError("ln", v)
        if self.fn == "sqrt" and v < 0.0:
            raise DomainError("sqrt", v)
        try:
            return _MATH_FN[self.fn](v)
        except OverflowError:
            return math.inf
        except ValueError:
            raise DomainError(self.fn, v) from None

    def diff(self, var):
        u = self.operand
        du = u.diff(var)
        fn = self.fn
        if fn == "sin":
            outer = call("cos", u)
        elif fn == "cos":
            outer = neg(call("sin", u))
        elif fn == "tan":
            outer = add(Const(1.0), pow_(call("tan", u), 2))
        elif fn == "tanh":
            outer = add(Const(1.0), neg(pow_(call("tanh", u), 2)))
        elif fn == "exp":
            outer = self
        elif fn == "ln":
            outer = div(Const(1.0), u)
        else:  # sqrt
            outer = div(Const(1.0), mul(Const(2.0), call("sqrt", u)))
        return mul(outer, du)

    def free_symbols(self):
        return self.operand.free_symbols()


@dataclass(frozen=True, eq=True)
class Quotient(Expr):
    num: Expr
    den: Expr

    def eval(self, env):
        d = self.den.eval(env)
        if d == 0.0:
            raise DomainError("quotient", d)
        return self.num.eval(env) / d

    def diff(self, var):
        n, d = self.num, self.den
        top = add(mul(n.diff(var), d), neg(mul(n, d.diff(var))))
        return div(top, pow_(d, 2))

    def free_symbols(self):
        return self.num.free_symbols() | self.den.free_symbols()


def _wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, bool):
        raise TypeError("bool is not a valid constant")
    if isinstance(x, (int, float)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


def sym(name: str) -> Sym:
    return Sym(name)


def const(value: float) -> Const:
    return Const(value)


def _coeff_core(t: Expr) -> tuple[float, Expr]:
    """Split a term into (numeric coefficient, remaining factor)."""
    if isinstance(t, Neg):
        c, core = _coeff_core(t.operand)
        return -c, core
    if isinstance(t, Product) and isinstance(t.factors[0], Const):
        rest = t.factors[1:]
        core = rest[0] if len(rest) == 1 else Product(rest)
        return t.factors[0].value, core
    return 1.0, t


def add(*terms) -> Expr:
    """Sum with flattening, constant folding and like-term collection."""
    flat: list[Expr] = []
    acc = 0.0
    for t in terms:
        t = _wrap(t)
        if isinstance(t, Sum):
            flat.extend(t.terms)
        else:
            flat.append(t)
    coeffs: dict[Expr, float] = {}
    for t in flat:
        if isinstance(t, Const):
            acc += t.value
            continue
        c, core = _coeff_core(t)
        coeffs[core] = coeffs.get(core, 0.0) + c
    rest: list[Expr] = []
    for core, c in coeffs.items():
        if c == 0.0:
            continue
        if c == 1.0:
            rest.append(core)
        elif c == -1.0:
            rest.append(Neg(core))
        else:
            rest.append(mul(Const(c), core))
    if acc != 0.0:
        rest.append(Const(acc))
    if not rest:
        return Const(0.0)
    if len(rest) == 1:
        return rest[0]
    return Sum(tuple(rest))


def mul(*factors) -> Expr:
    """Product with flattening, constant folding and sign normalisation."""
    flat: list[Expr] = []
    acc = 1.0
    negate = False
    stack = [_wrap(f) for f in factors]
    for f in stack:
        if isinstance(f, Product):
            flat.extend(f.factors)
        elif isinstance(f, Neg):
            negate = not negate
            if isinstance(f.operand, Product):
                flat.extend(f.operand.factors)
            else:
                flat.append(f.operand)
        else:
            flat.append(f)
    rest: list[Expr] = []
    for f in flat:
        if isinstance(f, Const):
            acc *= f.value
        else:
            rest.append(f)
    if negate:
        acc = -acc
    if acc == 0.0:
        return Const(0.0)
    if not rest:
        return Const(acc)
    if acc == -1.0:
        return neg(Product(tuple(rest)) if len(rest) > 1 else rest[0])
    if acc != 1.0:
        rest.insert(0, Const(acc))
    if len(rest) == 1:
        return rest[0]
    return Product(tuple(rest))


def neg(operand) -> Expr:
    operand = _wrap(operand)
    if isinstance(operand, Const):
        return Const(-operand.value)
    if isinstance(operand, Neg):
        return operand.operand
    if isinstance(operand, Product) and isinstance(operand.factors[0], Const):
        # keep the sign inside the leading constant, one canonical form
        return mul(Const(-operand.factors[0].value), *operand.factors[1:])
    return Neg(operand)


def pow_(base, exponent: int) -> Expr:
    base = _wrap(base)
    if isinstance(exponent, bool) or not isinstance(exponent, int):
        raise TypeError("exponent must be an integer")
    if exponent == 0:
        return Const(1.0)
    if exponent == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0.0 and exponent < 0:
            raise DomainError("power", 0.0)
        return Const(base.value ** exponent)
    return Power(base, exponent)


def div(num, den) -> Expr:
    num = _wrap(num)
    den = _wrap(den)
    if isinstance(den, Const):
        if den.value == 0.0:
            raise DomainError("quotient", 0.0)
        if isinstance(num, Const):
            return Const(num.value / den.value)
        if den.value == 1.0:
            return num
        if den.value == -1.0:
            return neg(num)
    flip = False
    if isinstance(num, Neg):
        num, flip = num.operand, not flip
    if isinstance(den, Neg):
        den, flip = den.operand, not flip
    q: Expr = Quotient(num, den)
    return neg(q) if flip else q


def call(fn: str, operand) -> Expr:
    operand = _wrap(operand)
    if fn not in _MATH_FN:
        raise ValueError(f"unknown function '{fn}'")
    if isinstance(operand, Const):
        node = Call(fn, operand)
        return Const(node.eval({}))
    return Call(fn, operand)


def sin(x):
    return call("sin", x)


def cos(x):
    return call("cos", x)


def tan(x):
    return call("tan", x)


def tanh(x):
    return call("tanh", x)


def exp(x):
    return call("exp", x)


def ln(x):
    return call("ln", x)


def sqrt(x):
    return call("sqrt", x)


def simplify(e: Expr) -> Expr:
    """Rebuild the tree bottom-up through the normalising constructors."""
    if isinstance(e, (Const, Sym)):
        return e
    if isinstance(e, Sum):
        return add(*(simplify(t) for t in e.terms))
    if isinstance(e, Product):
        return mul(*(simplify(f) for f in e.factors))
    if isinstance(e, Neg):
        return neg(simplify(e.operand))
    if isinstance(e, Power):
        return pow_(simplify(e.base), e.exponent)
    if isinstance(e, Call):
        return call(e.fn, simplify(e.operand))
    if isinstance(e, Quotient):
        return div(simplify(e.num), simplify(e.den))
    raise TypeError(f"not an expression: {e!r}")


def subst(e: Expr, table: Mapping[str, Expr]) -> Expr:
    """Replace symbols by expressions, renormalising on the way up."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Sym):
        repl = table.get(e.name)
        return e if repl is None else _wrap(repl)
    if isinstance(e, Sum):
        return add(*(subst(t, table) for t in e.terms))
    if isinstance(e, Product):
        return mul(*(subst(f, table) for f in e.factors))
    if isinstance(e, Neg):
        return neg(subst(e.operand, table))
    if isinstance(e, Power):
        return pow_(subst(e.base, table), e.exponent)
    if isinstance(e, Call):
        return call(e.fn, subst(e.operand, table))
    if isinstance(e, Quotient):
        return div(subst(e.num, table), subst(e.den, table))
    raise TypeError(f"not an expression: {e!r}")


def expand(e: Expr) -> Expr:
    """Distribute products over sums and unroll small powers of sums.

    Quotients and large or negative powers are left in place, so the result
    is a sum whose terms may still contain such atoms.  Used where a
    term-by-term variable scan is needed, not a general normal form.
    """
    if isinstance(e, (Const, Sym)):
        return e
    if isinstance(e, Sum):
        return add(*(expand(t) for t in e.terms))
    if isinstance(e, Neg):
        return neg(expand(e.operand))
    if isinstance(e, Call):
        return call(e.fn, expand(e.operand))
    if isinstance(e, Quotient):
        return div(expand(e.num), expand(e.den))
    if isinstance(e, Power):
        b = expand(e.base)
        if isinstance(b, Sum) and 2 <= e.exponent <= 6:
            out = b
            for _ in range(e.exponent - 1):
                out = expand(mul(out, b))
            return out
        if isinstance(b, Product) and e.exponent >= 2:
            return expand(mul(*(pow_(f, e.exponent) for f in b.factors)))
        return pow_(b, e.exponent)
    if isinstance(e, Product):
        combos: list[list[Expr]] = [[]]
        for f in e.factors:
            f = expand(f)
            choices = f.terms if isinstance(f, Sum) else (f,)
            combos = [acc + [c] for acc in combos for c in choices]
        return add(*(mul(*combo) for combo in combos))
    raise TypeError(f"not an expression: {e!r}")


def sum_terms(e: Expr) -> tuple[Expr, ...]:
    """Top-level summands of e (a single term when e is not a sum)."""
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Neg) and isinstance(e.operand, Sum):
        return tuple(neg(t) for t in e.operand.terms)
    return (e,)


def grad(e: Expr, variables: Sequence[str]) -> tuple[Expr, ...]:
    seen = set()
    for v in variables:
        if v in seen:
            raise DuplicateVariable(v)
        seen.add(v)
    return tuple(e.diff(v) for v in variables)


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SyntaxError(pos, f"unexpected character {text[pos]!r}")
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), pos))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), pos))
        else:
            tokens.append(("op", m.group("op"), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise SyntaxError(pos, f"expected '{op}'")
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise SyntaxError(pos, f"unexpected trailing input {text!r}")
        return e

    def expr(self) -> Expr:
        parts = [self.term()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                t = self.term()
                parts.append(t if text == "+" else neg(t))
            else:
                return add(*parts)

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if text == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == "^":
                self.take()
                e = pow_(e, self.exponent())
            else:
                return e

    def exponent(self) -> int:
        sign = 1
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.take()
            sign = -1
            kind, text, pos = self.peek()
        if kind != "num" or ("." in text or "e" in text or "E" in text):
            raise SyntaxError(pos, "exponent must be an integer")
        self.take()
        return sign * int(text)

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                if text not in _MATH_FN:
                    raise SyntaxError(pos, f"unknown function '{text}'")
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return call(text, arg)
            return Sym(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise SyntaxError(pos, "expected a number, symbol or '('")


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

# precedence levels: sum 1, product/quotient 2, power 3, atoms 4
def _prec(e: Expr) -> int:
    if isinstance(e, Sum):
        return 1
    if isinstance(e, (Product, Quotient, Neg)):
        return 2
    if isinstance(e, Power):
        return 3
    return 4


def _fmt_const(v: float) -> str:
    return repr(v)


def _paren(e: Expr, limit: int) -> str:
    s = _emit(e)
    return f"({s})" if _prec(e) < limit else s


def _emit(e: Expr) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Sum):
        out = [_paren(e.terms[0], 1)]
        for t in e.terms[1:]:
            if isinstance(t, Neg):
                out.append(" - " + _paren(t.operand, 2))
            elif isinstance(t, Const) and t.value < 0:
                out.append(" - " + _fmt_const(-t.value))
            elif (isinstance(t, Product) and isinstance(t.factors[0], Const)
                  and t.factors[0].value < 0):
                flipped = Product((Const(-t.factors[0].value),) + t.factors[1:])
                out.append(" - " + _paren(flipped, 2))
            else:
                out.append(" + " + _paren(t, 2))
        return "".join(out)
    if isinstance(e, Product):
        return "*".join(_paren(f, 3) if isinstance(f, Quotient) else _paren(f, 2)
                        for f in e.factors)
    if isinstance(e, Quotient):
        num = _emit(e.num) if isinstance(e.num, (Product, Quotient)) else _paren(e.num, 2)
        return f"{num}/{_paren(e.den, 3)}"
    if isinstance(e, Neg):
        return "-" + _paren(e.operand, 3)
    if isinstance(e, Power):
        return f"{_paren(e.base, 3)}^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.fn}({_emit(e.operand)})"
    raise TypeError(f"not an expression: {e!r}")


def to_text(e: Expr) -> str:
    return _emit(e)


# ---------------------------------------------------------------------------
# compiled evaluation

def compile_fn(e: Expr, order: Sequence[str]) -> Callable[..., float]:
    """Compile to a positional-argument python function for fast evaluation.

    Raises UnboundSymbol if the expression uses a symbol not in `order`.
    Runtime domain violations surface as ZeroDivisionError / ValueError /
    OverflowError from the generated code.
    """
    names = list(order)
    if len(set(names)) != len(names):
        raise DuplicateVariable("duplicate name in argument order")
    for name in names:
        if not name.isidentifier() or keyword.iskeyword(name) or name == "math":
            raise ValueError(f"cannot compile with argument name {name!r}")
    bound = set(names)

    def gen(node: Expr) -> str:
        if isinstance(node, Const):
            return repr(node.value)
        if isinstance(node, Sym):
            if node.name not in bound:
                raise UnboundSymbol(node.name)
            return node.name
        if isinstance(node, Sum):
            return "(" + " + ".join(gen(t) for t in node.terms) + ")"
        if isinstance(node, Product):
            return "(" + "*".join(gen(f) for f in node.factors) + ")"
        if isinstance(node, Neg):
            return f"(-{gen(node.operand)})"
        if isinstance(node, Power):
            return f"({gen(node.base)})**({node.exponent})"
        if isinstance(node, Quotient):
            return f"({gen(node.num)}/{gen(node.den)})"
        if isinstance(node, Call):
            fn = "math.log" if node.fn == "ln" else f"math.{node.fn}"
            return f"{fn}({gen(node.operand)})"
        raise TypeError(f"not an expression: {node!r}")

    body = gen(e)
    src = f"lambda {', '.join(names)}: {body}" if names else f"lambda: {body}"
    return eval(compile(src, "<expr>", "eval"), {"math": math})


def compile_field(exprs: Sequence[Expr], order: Sequence[str]) -> Callable[..., tuple]:
    """Compile a vector of expressions into one tuple-returning function."""
    fns = [compile_fn(e, order) for e in exprs]

    def field(*args):
        return tuple(f(*args) for f in fns)

    return field


# ---------------------------------------------------------------------------
# sampled equivalence

def max_deviation(
    a: Expr,
    b: Expr,
    symbols: Sequence[str],
    n: int = 300,
    seed: int = 0,
    box: tuple[float, float] = (-2.0, 2.0),
    avoid: Iterable[Expr] = (),
    avoid_tol: float = 1e-3,
    boxes: dict[str, tuple[float, float]] | None = None,
) -> float:
    """Largest |a - b| over n random points, skipping near-singular draws.

    Points are uniform over the box (per-symbol ranges in `boxes` win over
    the shared one); a draw is rejected and retried when it sits within
    avoid_tol of a zero of any expression in `avoid`, or when either operand
    raises a DomainError.
    """
    import random

    rng = random.Random(seed)
    avoid = tuple(avoid)
    boxes = boxes or {}
    worst = 0.0
    accepted = 0
    attempts = 0
    while accepted < n:
        attempts += 1
        if attempts > 50 * n:
            raise RuntimeError("could not sample enough admissible points")
        env = {s: rng.uniform(*boxes.get(s, box)) for s in symbols}
        try:
            if any(abs(g.eval(env)) < avoid_tol for g in avoid):
                continue
            va = a.eval(env)
            vb = b.eval(env)
        except DomainError:
            continue
        if not (math.isfinite(va) and math.isfinite(vb)):
            continue
        dev = abs(va - vb)
        rel = dev / (1.0 + max(abs(va), abs(vb)))
        worst = max(worst, rel)
        accepted += 1
    return worst


def equivalent(
    a: Expr,
    b: Expr,
    symbols: Sequence[str],
    tol: float = 1e-9,
    n: int = 300,
    seed: int = 0,
    avoid: Iterable[Expr] = (),
    boxes: dict[str, tuple[float, float]] | None = None,
) -> bool:
    dev = max_deviation(a, b, symbols, n=n, seed=seed, avoid=avoid, boxes=boxes)
    return dev <= tol
