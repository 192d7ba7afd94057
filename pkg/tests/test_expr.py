"""Expression engine checks: derivative correctness against finite
differences, simplify semantics, parse/print round trips, compiled
evaluation, and the error contract."""

import math
import random

import pytest

from pandi import expr as E

SYMS = ("x1", "x2", "x3")


def random_expr(rng, depth):
    """Draw an expression from the grammar, biased toward small trees."""
    if depth <= 0 or rng.random() < 0.3:
        if rng.random() < 0.5:
            return E.Sym(rng.choice(SYMS))
        return E.Const(round(rng.uniform(-3.0, 3.0), 3))
    kind = rng.choice(("add", "mul", "neg", "pow", "div", "call"))
    if kind == "add":
        return E.add(*(random_expr(rng, depth - 1) for _ in range(rng.randint(2, 3))))
    if kind == "mul":
        return E.mul(*(random_expr(rng, depth - 1) for _ in range(rng.randint(2, 3))))
    if kind == "neg":
        return E.neg(random_expr(rng, depth - 1))
    if kind == "pow":
        return E.pow_(random_expr(rng, depth - 1), rng.choice((2, 3, 4)))
    if kind == "div":
        num = random_expr(rng, depth - 1)
        den = random_expr(rng, depth - 1)
        try:
            return E.div(num, den)
        except E.DomainError:
            return num
    fn = rng.choice(("sin", "cos", "tan", "tanh", "exp", "ln", "sqrt"))
    arg = random_expr(rng, depth - 1)
    try:
        return E.call(fn, arg)  # folding a constant operand can leave the domain
    except E.DomainError:
        return arg


def admissible_point(e, rng):
    """A point where e evaluates finitely, staying clear of domain edges."""
    for _ in range(80):
        env = {s: rng.uniform(-2.0, 2.0) for s in SYMS}
        try:
            vals = [e.eval(env)]
            for s in SYMS:
                for h in (1e-3, -1e-3, 1e-6, -1e-6):
                    e2 = dict(env)
                    e2[s] += h
                    vals.append(e.eval(e2))
        except E.DomainError:
            continue
        if all(math.isfinite(v) and abs(v) < 1e6 for v in vals):
            return env
    return None


def count_nodes(e):
    if isinstance(e, (E.Const, E.Sym)):
        return 1
    if isinstance(e, E.Sum):
        return 1 + sum(count_nodes(t) for t in e.terms)
    if isinstance(e, E.Product):
        return 1 + sum(count_nodes(f) for f in e.factors)
    if isinstance(e, (E.Neg, E.Call)):
        return 1 + count_nodes(e.operand)
    if isinstance(e, E.Power):
        return 1 + count_nodes(e.base)
    if isinstance(e, E.Quotient):
        return 1 + count_nodes(e.num) + count_nodes(e.den)
    raise TypeError(e)


def test_derivative_matches_finite_differences():
    # 1000 (expr, point) pairs, central differences at h = 1e-6
    rng = random.Random(20240817)
    checked = 0
    while checked < 1000:
        e = random_expr(rng, 3)
        env = admissible_point(e, rng)
        if env is None:
            continue
        var = rng.choice(SYMS)
        h = 1e-6
        hi = dict(env)
        lo = dict(env)
        hi[var] += h
        lo[var] -= h
        try:
            fd = (e.eval(hi) - e.eval(lo)) / (2.0 * h)
            an = e.diff(var).eval(env)
        except E.DomainError:
            continue
        if not (math.isfinite(fd) and math.isfinite(an)):
            continue
        if abs(fd) > 1e4:
            continue  # steep spots make the difference quotient unreliable
        assert abs(an - fd) <= 1e-5 * (1.0 + abs(fd)), (E.to_text(e), var, env, an, fd)
        checked += 1


def test_simplify_preserves_value_and_size():
    rng = random.Random(7)
    for _ in range(400):
        e = random_expr(rng, 3)
        s = E.simplify(e)
        assert count_nodes(s) <= count_nodes(e)
        env = admissible_point(e, rng)
        if env is None:
            continue
        try:
            ve, vs = e.eval(env), s.eval(env)
        except E.DomainError:
            continue
        assert abs(ve - vs) <= 1e-12 * (1.0 + abs(ve))


def test_parse_print_round_trip_random():
    rng = random.Random(99)
    for _ in range(400):
        e = random_expr(rng, 3)
        text = E.to_text(e)
        p = E.parse(text)
        assert p == e, text
        env = admissible_point(e, rng)
        if env is None:
            continue
        try:
            assert abs(p.eval(env) - e.eval(env)) <= 1e-12 * (1.0 + abs(e.eval(env)))
        except E.DomainError:
            continue


@pytest.mark.parametrize(
    "text",
    [
        "x1 + x2*x3",
        "-(x1 + 2)*sin(x2)/3",
        "1/(1 + x2^2)",
        "tanh(x2) - 0.25*x3 - 0.75*x1^2",
        "x1^-2 + sqrt(x3)",
        "exp(-x1)*cos(2*x2)",
        "2.5e-3*x1 - 1e2",
    ],
    ids=lambda s: s.replace(" ", ""),
)
def test_parse_print_round_trip_fixed(text):
    p = E.parse(text)
    again = E.parse(E.to_text(p))
    assert again == p


def test_printer_is_deterministic():
    a = E.parse("x1*x2 + sin(x3) - x1^2/4")
    b = E.parse("x1*x2 + sin(x3) - x1^2/4")
    assert E.to_text(a) == E.to_text(b)
    assert E.to_text(E.parse(E.to_text(a))) == E.to_text(a)


def test_constructor_normal_forms():
    x1, x2 = E.sym("x1"), E.sym("x2")
    assert E.add(x1, 0) == x1
    assert E.mul(x1, 1) == x1
    assert E.mul(x1, 0) == E.Const(0.0)
    assert E.pow_(x1, 1) == x1
    assert E.pow_(x1, 0) == E.Const(1.0)
    assert E.neg(E.neg(x1)) == x1
    assert E.div(x1, 1) == x1
    # constants fold, at most one constant operand survives
    s = E.add(1, x1, 2, x2, -3)
    assert s == E.add(x1, x2)
    p = E.mul(2, x1, 3)
    assert p == E.mul(6, x1)
    # nested sums flatten and like terms collect
    t = E.add(E.add(x1, x2), E.add(x1, 1))
    assert t == E.add(E.mul(2, x1), x2, 1)
    assert E.add(x1, E.neg(x1)) == E.Const(0.0)
    # sign normalisation pulls negation out of products
    q = E.mul(E.neg(x1), x2)
    assert isinstance(q, E.Neg)
    assert E.neg(E.mul(-2, x1)) == E.mul(2, x1)


def test_compiled_matches_eval():
    rng = random.Random(4242)
    for _ in range(200):
        e = random_expr(rng, 3)
        env = admissible_point(e, rng)
        if env is None:
            continue
        f = E.compile_fn(e, SYMS)
        try:
            want = e.eval(env)
        except E.DomainError:
            continue
        got = f(*(env[s] for s in SYMS))
        assert abs(got - want) <= 1e-9 * (1.0 + abs(want))


def test_error_contract():
    x1 = E.sym("x1")
    with pytest.raises(E.UnboundSymbol):
        x1.eval({"x2": 1.0})
    with pytest.raises(E.DomainError):
        E.ln(x1).eval({"x1": -1.0})
    with pytest.raises(E.DomainError):
        E.sqrt(x1).eval({"x1": -4.0})
    with pytest.raises(E.DomainError):
        E.div(1, E.add(x1, -1)).eval({"x1": 1.0})
    with pytest.raises(E.DomainError):
        E.div(x1, 0)
    with pytest.raises(E.DuplicateVariable):
        E.grad(x1, ["x1", "x1"])
    with pytest.raises(E.SyntaxError) as err:
        E.parse("x1 + * x2")
    assert err.value.position == 5
    with pytest.raises(E.SyntaxError):
        E.parse("sin(x1")
    with pytest.raises(E.SyntaxError):
        E.parse("x1 2")
    with pytest.raises(E.SyntaxError):
        E.parse("x1^x2")
    with pytest.raises(E.SyntaxError):
        E.parse("x1^2.5")


def test_unbound_symbol_in_compile():
    with pytest.raises(E.UnboundSymbol):
        E.compile_fn(E.parse("x1 + q7"), ["x1"])


def test_sampled_equivalence_helper():
    a = E.parse("(x1 + x2)^2")
    b = E.parse("x1^2 + 2*x1*x2 + x2^2")
    assert E.equivalent(a, b, ["x1", "x2"], tol=1e-9, seed=3)
    c = E.parse("x1^2 + 2*x1*x2 + x2^2 + 0.001")
    assert not E.equivalent(a, c, ["x1", "x2"], tol=1e-9, seed=3)
