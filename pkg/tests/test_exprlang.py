import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from toruscert import exprlang as el
from toruscert.exprlang import BinOp, Const, Func, Neg, Num, Pow, Var
from toruscert.fourier import Grid2


def test_parse_example1_component():
    e = el.parse("sin(y)+sqrt(2)")
    assert e == BinOp("+", Func("sin", Var("y")), Func("sqrt", Num(2.0)))


def test_parse_atom():
    assert el.parse("x") == Var("x")


def test_parse_three_summands():
    e = el.parse("-cos(y)+2*y+cos(x)")
    terms = []

    def flatten(n):
        if isinstance(n, BinOp) and n.op == "+":
            flatten(n.left)
            flatten(n.right)
        else:
            terms.append(n)

    flatten(e)
    assert terms == [Neg(Func("cos", Var("y"))), BinOp("*", Num(2.0), Var("y")), Func("cos", Var("x"))]


def test_precedence_and_associativity():
    assert el.parse("-x^2") == Neg(Pow(Var("x"), 2))
    assert el.parse("x-y-x") == BinOp("-", BinOp("-", Var("x"), Var("y")), Var("x"))
    assert el.parse("x/y/2") == BinOp("/", BinOp("/", Var("x"), Var("y")), Num(2.0))
    assert el.parse("x+y*x") == BinOp("+", Var("x"), BinOp("*", Var("y"), Var("x")))
    assert el.parse("sqrt2*pi") == BinOp("*", Const("sqrt2"), Const("pi"))


def test_fiber_variables_must_be_declared():
    assert el.parse("c_1*x", el.fiber_variables(1)) == BinOp("*", Var("c_1"), Var("x"))
    with pytest.raises(el.UnknownIdentifierError) as info:
        el.parse("c_2*x", el.fiber_variables(1))
    assert "c_1, x, y" in str(info.value)
    assert info.value.position == 0


@pytest.mark.parametrize("src", ["sin(y", "x+", "2*)", "x^y", "sin y", "x $ y", ""])
def test_parse_errors_carry_position(src):
    with pytest.raises(el.ParseError) as info:
        el.parse(src)
    err = info.value
    assert 0 <= err.position <= len(src)
    assert err.expected and err.found


def test_unknown_function_name():
    with pytest.raises(el.ParseError):
        el.parse("tan(x)")


def test_eval_examples():
    assert el.evaluate(el.parse("-cos(y)+2*y+cos(x)"), {"x": 0.0, "y": 0.0}) == 0.0
    assert el.evaluate(el.parse("sin(y)+sqrt(2)"), {"y": 0.0}) == pytest.approx(1.4142135623730951, abs=0)


def test_eval_against_arbitrary_precision():
    e = el.parse("sin(-cos(y)+2*y+cos(x))")
    got = el.evaluate(e, {"x": math.pi, "y": math.pi / 2})
    mpmath.mp.dps = 40
    x, y = mpmath.mpf(math.pi), mpmath.mpf(math.pi) / 2
    want = mpmath.sin(-mpmath.cos(y) + 2 * y + mpmath.cos(x))
    assert abs(got - float(want)) <= 1e-14 * abs(float(want))


def _mp_eval(e, env):
    if isinstance(e, Num):
        return mpmath.mpf(e.value)
    if isinstance(e, Const):
        return mpmath.pi if e.name == "pi" else mpmath.sqrt(2)
    if isinstance(e, Var):
        return mpmath.mpf(env[e.name])
    if isinstance(e, Neg):
        return -_mp_eval(e.arg, env)
    if isinstance(e, Func):
        return getattr(mpmath, e.name)(_mp_eval(e.arg, env))
    if isinstance(e, Pow):
        return _mp_eval(e.base, env) ** e.exponent
    a, b = _mp_eval(e.left, env), _mp_eval(e.right, env)
    return {"+": a + b, "-": a - b, "*": a * b, "/": a / b}[e.op]


def test_eval_matches_mpmath_on_ast():
    rng = np.random.default_rng(3)
    mpmath.mp.dps = 40
    exprs = ["exp(sin(x))*cos(y)^2/(2+sin(x*y))", "sqrt(3+cos(x))-pi*y^3", "sqrt2*sin(x+y)-x/(1+y^2)"]
    for src in exprs:
        e = el.parse(src)
        for _ in range(10):
            env = {"x": float(rng.uniform(-3, 3)), "y": float(rng.uniform(-3, 3))}
            want = float(_mp_eval(e, env))
            assert el.evaluate(e, env) == pytest.approx(want, rel=1e-13, abs=1e-14)


def test_eval_errors():
    with pytest.raises(el.DomainError):
        el.evaluate(el.parse("sqrt(x)"), {"x": -1.0})
    with pytest.raises(el.DivisionError):
        el.evaluate(el.parse("1/x"), {"x": 1e-13})
    with pytest.raises(el.DivisionError):
        el.evaluate(el.parse("1/(x-x)"), {"x": 2.0})
    with pytest.raises(el.EvaluationError):
        el.evaluate(el.parse("x+y"), {"x": 1.0})


def test_eval_vectorised_and_scalar_agree():
    e = el.parse("sin(x)*exp(cos(y))/(3+cos(x+y))+sqrt(2+sin(y))")
    xs = np.linspace(0, 6, 7)
    vec = el.evaluate(e, {"x": xs, "y": xs[::-1]})
    f = el.compile_scalar(e)
    for a, b, v in zip(xs, xs[::-1], vec):
        assert f({"x": float(a), "y": float(b)}) == pytest.approx(v, rel=1e-15, abs=1e-15)


def test_differentiate_examples():
    assert el.differentiate(el.parse("sin(y)"), "x") == el.ZERO
    d = el.differentiate(el.parse("sin(y)+sqrt(2)"), "y")
    assert d == Func("cos", Var("y"))
    d = el.differentiate(el.parse("-cos(y)+2*y+cos(x)"), "y")
    ys = np.linspace(0, 2 * np.pi, 9)
    np.testing.assert_allclose(el.evaluate(d, {"x": 0.3, "y": ys}), np.sin(ys) + 2, atol=1e-15)


def test_differentiate_matches_central_differences():
    rng = np.random.default_rng(11)
    srcs = ["sin(x*y)+exp(cos(x))", "sqrt(2+sin(x))*y^3", "x/(2+cos(y))-pi*sin(x-y)^2",
            "sin(-cos(y)+2*y+cos(x))"]
    h = 1e-5
    for src in srcs:
        e = el.parse(src)
        for var in ("x", "y"):
            d = el.differentiate(e, var)
            for _ in range(25):
                p = {"x": float(rng.uniform(-2, 2)), "y": float(rng.uniform(-2, 2))}
                up, dn = dict(p), dict(p)
                up[var] += h
                dn[var] -= h
                fd = (el.evaluate(e, up) - el.evaluate(e, dn)) / (2 * h)
                assert abs(el.evaluate(d, p) - fd) <= 1e-7


def test_sample_sin_y():
    f = el.sample_to_grid(el.parse("sin(y)"), (), Grid2(32))
    full = f.full()
    nz = np.argwhere(np.abs(full) > 1e-14)
    modes = sorted((int(np.fft.fftfreq(32, 1 / 32)[i]), int(np.fft.fftfreq(32, 1 / 32)[j])) for i, j in nz)
    assert modes == [(0, -1), (0, 1)]
    assert abs(f.coeff(0, 1)) == pytest.approx(0.5, abs=1e-15)


def test_sample_constant():
    f = el.sample_to_grid(el.parse("1"), (), Grid2(16))
    assert f.coeff(0, 0) == pytest.approx(1.0)
    full = f.full().copy()
    full[0, 0] = 0
    assert np.max(np.abs(full)) < 1e-15


def test_sample_product_of_sines():
    f = el.sample_to_grid(el.parse("sin(x)*sin(y)"), (), Grid2(32))
    for j in (-1, 1):
        for k in (-1, 1):
            assert abs(f.coeff(j, k)) == pytest.approx(0.25, abs=1e-15)
    full = np.abs(f.full())
    assert np.sum(full > 1e-14) == 4


def test_sample_round_trip():
    rng = np.random.default_rng(5)
    from helpers import trig_poly

    g = Grid2(32)
    for _ in range(5):
        e = trig_poly(rng, degree=10)
        vals = el.sample_values(e, (), g)
        back = el.sample_to_grid(e, (), g).values()
        assert np.max(np.abs(back - vals)) <= 1e-12 * np.max(np.abs(vals))


_leaf = st.one_of(
    st.sampled_from([Var("x"), Var("y"), Const("pi"), Const("sqrt2")]),
    st.floats(0, 100, allow_nan=False).map(lambda v: Num(float(round(v, 3)))),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(Func, st.sampled_from(["sin", "cos", "exp", "sqrt"]), children),
        st.builds(Pow, children, st.integers(-3, 4)),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/"]), children, children),
    )


_exprs = st.recursive(_leaf, _extend, max_leaves=12)


@given(_exprs)
def test_print_parse_round_trip(e):
    s = el.to_string(e)
    p = el.parse(s)
    assert el.to_string(p) == s
    assert el.parse(el.to_string(p)) == p


@given(_exprs)
def test_printed_form_evaluates_like_the_tree(e):
    env = {"x": 0.7, "y": -1.3}
    try:
        with np.errstate(all="ignore"):
            a = el.evaluate(e, env)
    except (el.EvaluationError, OverflowError):
        return
    b = el.evaluate(el.parse(el.to_string(e)), env)
    if np.isfinite(a):
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


def test_variables_of():
    assert el.variables_of(el.parse("c_1*sin(x)+pi", el.fiber_variables(1))) == {"c_1", "x"}
