import numpy as np
import pytest
from helpers import F3, SQRT2, V, example1, example3, random_field, trig_poly
from hypothesis import given, settings, strategies as st

from toruscert import constructions as co
from toruscert import exprlang as el
from toruscert import geometry as ge
from toruscert.fourier import Grid2
from toruscert.geometry import FiberedSystem, OneForm2, VectorField2, VolumeForm2

G64 = Grid2(64)
G16 = Grid2(16)
seeds = st.integers(0, 2**32 - 1)


def vals(e, grid=G64):
    return np.broadcast_to(el.sample_values(el.as_expr(e), (), grid), grid.shape)


def system(dx, dy):
    return FiberedSystem(V(dx, dy))


# ---------------------------------------------------------- volume from frame


def test_volume_from_frame_example1():
    out = co.volume_from_frame(example1(), V("1", "0"))
    assert out.ok and out.tag == co.TAG_CONSTRUCTED
    # alpha_X ^ alpha_Y = dy ^ (dx - (sin y + sqrt2) dy) = -dx ^ dy
    assert out.notes["orientation"] == "reversed"
    assert np.max(np.abs(vals(out.produced.rho) - 1.0)) <= 1e-14
    assert out.conclusions["divergence"].value <= 1e-9


def test_volume_from_frame_identity_frame():
    out = co.volume_from_frame(system("1", "0"), V("0", "1"))
    assert out.ok and out.notes["orientation"] == "kept"
    assert np.all(vals(out.produced.rho) == 1.0)


def test_volume_from_frame_names_failed_bracket():
    out = co.volume_from_frame(system("0", "1"), V("1+0.5*sin(y)", "0"))
    assert out.tag == co.TAG_HYPOTHESIS
    assert out.failed == ["B2: [X,Y] = 0"]
    assert out.hypotheses["B2: [X,Y] = 0"].value == pytest.approx(0.5, rel=1e-12)
    assert out.produced is None


def test_volume_from_frame_rejects_dependent_pair():
    out = co.volume_from_frame(example1(), V("sin(y)+sqrt(2)", "1"))
    assert out.tag == co.TAG_HYPOTHESIS
    assert "independence" in out.failed


def test_volume_from_frame_on_a_fibered_system():
    v = el.fiber_variables(1)
    sys = FiberedSystem(VectorField2.parse("sin(y)+c_1", "1", v), m=1, U=[(1.2, 1.6)])
    out = co.volume_from_frame(sys, VectorField2.parse("1", "0", v))
    assert out.ok
    assert out.hypotheses["B4: Y(f) = 0"].value == 0.0


# ---------------------------------------------------- symmetry from a one-form


def test_symmetry_from_one_form_example1():
    out = co.symmetry_from_one_form(example1(), OneForm2.parse("0", "1"), VolumeForm2())
    assert out.ok
    Y = out.produced
    assert np.all(vals(Y.dx) == 1.0) and np.all(vals(Y.dy) == 0.0)
    assert out.conclusions["[X,Y] = 0"].value <= 1e-10
    assert out.notes["condition_i"]["verdict"] == "holds"


def test_symmetry_from_interior_volume_returns_x():
    sys = example1()
    alpha = ge.interior_volume(sys.X, VolumeForm2())
    out = co.symmetry_from_one_form(sys, alpha, VolumeForm2())
    assert out.ok
    assert np.max(np.abs(vals(out.produced.dx - sys.X.dx))) <= 1e-15
    assert np.max(np.abs(vals(out.produced.dy - sys.X.dy))) <= 1e-15
    assert out.notes["condition_i"]["verdict"] == "fails"
    assert out.notes["independence_margin"] <= 1e-15


def test_symmetry_from_one_form_example3():
    # i_Y mu with Y = d/dx - d/dy is X-invariant (Y commutes with X) and is not
    # proportional to i_X mu, so the construction yields an independent field.
    sys = example3()
    f = el.parse(F3)
    alpha = OneForm2(el.ONE / f, el.ONE / f)
    out = co.symmetry_from_one_form(sys, alpha)
    assert out.ok
    assert out.notes["condition_i"]["verdict"] == "holds"
    assert np.max(np.abs(vals(out.produced.dx) - 1)) <= 1e-14
    assert np.max(np.abs(vals(out.produced.dy) + 1)) <= 1e-14
    assert out.notes["independence_margin"] > 1.0


def test_example3_invariant_one_forms_beyond_interior_volume():
    from toruscert import search

    sys = example3()
    g = Grid2(32)
    r = search.find_invariant_one_forms(sys.X, grid=g, band=12)
    x1, x2 = sys.X.sample(g)
    rho = 1 / vals(el.parse(F3), g)
    bx, by = -rho * x2, rho * x1
    ratios = []
    for c in r.candidates:
        ax, ay = (fld.values() for fld in c.fields)
        det = np.abs(ax * by - ay * bx) / (np.hypot(ax, ay) * np.hypot(bx, by))
        ratios.append(det.max())
    assert r.kernel_report.dimension >= 2
    assert max(ratios) > 0.1


def test_symmetry_from_one_form_hypothesis_failures():
    sys = example1()
    out = co.symmetry_from_one_form(sys, OneForm2.parse("0", "sin(x)"), VolumeForm2())
    assert out.tag == co.TAG_HYPOTHESIS and out.failed == ["L_X alpha = 0"]
    out = co.symmetry_from_one_form(example3(), OneForm2.parse("1", "1"), VolumeForm2())
    assert "L_X mu = 0" in out.failed


def _commuting_instance(rng):
    """X = f (a, b) with f a positive function of p x + q y, Y = (q, -p) constant."""
    p, q = (int(v) for v in rng.integers(-2, 3, size=2))
    if p == 0 and q == 0:
        p = 1
    s = el.Num(float(p)) * el.Var("x") + el.Num(float(q)) * el.Var("y")
    f = el.Num(3.0)
    for k in (1, 2):
        a, b = rng.uniform(-0.6, 0.6, size=2)
        ks = el.Num(float(k)) * s
        f = f + el.Num(float(a)) * el.cos(ks) + el.Num(float(b)) * el.sin(ks)
    a, b = rng.normal(size=2)
    X = VectorField2(el.Num(float(a)) * f, el.Num(float(b)) * f)
    Y = VectorField2(el.Num(float(q)), el.Num(float(-p)))
    return FiberedSystem(X), Y, VolumeForm2(el.ONE / f)


@settings(max_examples=50)
@given(seeds)
def test_symmetry_from_one_form_conclusion_follows_hypotheses(seed):
    rng = np.random.default_rng(seed)
    sys, Y, mu = _commuting_instance(rng)
    alpha = ge.interior_volume(Y, mu)
    out = co.symmetry_from_one_form(sys, alpha, mu, grid=G16)
    assert all(r.value <= 1e-10 for k, r in out.hypotheses.items() if r.comparison == "<=")
    assert out.conclusions["[X,Y] = 0"].value <= 1e-8


# ----------------------------------------------------------- condition checks


def test_condition_i_examples():
    sys, mu = example1(), VolumeForm2()
    r = co.check_condition_i(sys, OneForm2.parse("0", "1"), mu)
    assert r["verdict"] == "holds"
    iX = ge.interior_volume(sys.X, mu)
    assert co.check_condition_i(sys, iX.scale(3), mu)["verdict"] == "fails"
    r = co.check_condition_i(sys, iX + OneForm2.parse("0", "1"), mu)
    assert r["verdict"] == "holds"


def test_condition_i_determinant_oracle():
    sys, mu = example1(), VolumeForm2()
    alpha = OneForm2.parse("0", "1")
    iX = ge.interior_volume(sys.X, mu)
    det = vals(alpha.ax * iX.ay - alpha.ay * iX.ax)
    assert np.max(np.abs(np.abs(det) - 1.0)) <= 1e-15


def test_condition_ii_examples():
    r = co.check_condition_ii(None, OneForm2.parse("sin(x)", "sin(y)"))
    assert r["verdict"] == "fails"
    assert r["message"] == "no witness found on sampled set"
    r = co.check_condition_ii(None, OneForm2.parse("0", "sin(x)"))
    assert r["verdict"] == "holds"
    w = r["witness"]
    assert w["alpha_norm"] <= 1e-8
    assert abs(w["dalpha"] - 1.0) <= 1e-8
    assert abs(np.sin(w["point"][0])) <= 1e-8
    r = co.check_condition_ii(None, OneForm2.parse("0", "1"))
    assert r["verdict"] == "fails"


def test_condition_ii_finds_zero_between_nodes():
    # the zero line x = 0.05 misses every node of the 16-grid
    r = co.check_condition_ii(None, OneForm2.parse("0", "sin(x-0.05)"), grid=G16)
    assert r["verdict"] == "holds"
    assert abs(np.sin(r["witness"]["point"][0] - 0.05)) <= 1e-8


# ---------------------------------------------------------- Lie-point symmetry


LP_I = dict(X=V("0", "1"), Y=V("1+0.5*sin(y)", "0"),
            g=el.parse("0.5*cos(y)/(1+0.5*sin(y))"), h=el.parse("1/(1+0.5*sin(y))"))
LP_II = dict(X=V("0", "1"), Y=V("1", "0.3*sin(y)"), g=el.parse("0.3*cos(y)"), h=el.parse("2-0.3*sin(y)"))


def test_lie_point_case_i():
    out = co.lie_point_combine_i(**LP_I)
    assert out.ok
    Z = out.produced
    assert np.max(np.abs(vals(Z.dx) - 1)) <= 1e-15
    assert np.all(vals(Z.dy) == 1)
    assert out.conclusions["[X,Z] = 0"].value <= 1e-10
    assert out.conclusions["independence of Z from X"].value >= 0.9


def test_lie_point_case_i_trivial_multipliers():
    out = co.lie_point_combine_i(example1().X, V("1", "0"), 0, 1)
    assert out.ok
    assert np.max(np.abs(vals(out.produced.dx) - (np.sin(G64.Y) + SQRT2 + 1))) <= 1e-14


def test_lie_point_case_i_wrong_h():
    out = co.lie_point_combine_i(**{**LP_I, "h": el.ONE})
    assert out.tag == co.TAG_HYPOTHESIS
    assert out.failed == ["X(h) = -gh"]
    # with h = 1 the residual is sup |g|
    assert out.hypotheses["X(h) = -gh"].value == pytest.approx(np.max(np.abs(vals(LP_I["g"]))), rel=1e-14)


def test_lie_point_case_ii():
    out = co.lie_point_combine_ii(**LP_II)
    assert out.ok
    Z = out.produced
    assert np.max(np.abs(vals(Z.dx) - 1)) <= 1e-10
    assert np.max(np.abs(vals(Z.dy) - 2)) <= 1e-10
    assert out.conclusions["independence of Z from X"].value >= 0.9


def test_lie_point_case_ii_trivial_multipliers():
    assert co.lie_point_combine_ii(example1().X, V("1", "0"), 0, 1).ok
    out = co.lie_point_combine_ii(V("0", "1"), V("sin(y)", "0"), 0, 1)
    assert out.failed == ["[X,Y] = gX"]


def test_lie_point_vanishing_h():
    with pytest.raises(co.VanishingError):
        co.lie_point_combine_i(**{**LP_I, "h": el.parse("sin(x)")})
    with pytest.raises(co.VanishingError):
        co.lie_point_combine_ii(**{**LP_II, "h": el.parse("cos(y)")})


@settings(max_examples=100)
@given(seeds)
def test_lie_point_bracket_identities(seed):
    rng = np.random.default_rng(seed)
    X, Y = random_field(rng), random_field(rng)
    h = trig_poly(rng, 3)
    br = ge.lie_bracket
    lhs = br(X, X + h * Y)
    rhs = ge.lie_derivative_scalar(X, h) * Y + h * br(X, Y)
    err = max(np.max(np.abs(vals(lhs.dx - rhs.dx, G16))), np.max(np.abs(vals(lhs.dy - rhs.dy, G16))))
    assert err <= 1e-11
    lhs = br(X, h * X + Y)
    rhs = ge.lie_derivative_scalar(X, h) * X + br(X, Y)
    err = max(np.max(np.abs(vals(lhs.dx - rhs.dx, G16))), np.max(np.abs(vals(lhs.dy - rhs.dy, G16))))
    assert err <= 1e-11


# ------------------------------------------------------- integral from a pair


def test_integral_from_pair_s1():
    sys = system("2+sin(y)", "0")
    lam = el.parse("-cos(y)/(2+sin(y))")
    out = co.first_integral_from_pair(sys, V("0", "1"), VolumeForm2(), lam)
    assert out.ok
    assert out.tag == co.TAG_B_S1
    assert np.max(np.abs(vals(out.produced) - (2 + np.sin(G64.Y)))) <= 1e-15
    assert out.conclusions["X(I) = 0"].value <= 1e-9
    assert out.notes["oscillation"] >= 1.9


def test_integral_from_pair_fitted_lambda():
    sys = system("2+sin(y)", "0")
    out = co.first_integral_from_pair(sys, V("0", "1"))
    assert out.ok and out.tag == co.TAG_B_S1
    assert out.notes["lambda_fitted"]
    want = -np.cos(G64.Y) / (2 + np.sin(G64.Y))
    assert np.max(np.abs(vals(el.parse(out.notes["lambda"])) - want)) <= 1e-14


def test_integral_from_pair_t2():
    sys = system("sqrt(2)", "1")
    out = co.first_integral_from_pair(sys, V("1", "0"), VolumeForm2(), 0)
    assert out.ok and out.tag == co.TAG_B_T2
    assert np.all(vals(out.produced) == -1.0)


def test_integral_from_pair_y_not_volume_preserving():
    sys = system("2+sin(y)", "0")
    out = co.first_integral_from_pair(sys, V("1", "0.5*sin(x+y)"), VolumeForm2())
    assert out.tag == co.TAG_HYPOTHESIS
    assert "Y preserves mu" in out.failed


def test_outcome_serialises():
    d = co.first_integral_from_pair(system("2+sin(y)", "0"), V("0", "1")).to_dict()
    assert np.max(np.abs(vals(el.parse(d["produced"])) - (2 + np.sin(G64.Y)))) <= 1e-15
    assert d["hypotheses"]["X preserves mu"]["ok"] is True
    d = co.volume_from_frame(example1(), V("1", "0")).to_dict()
    assert "rho" in d["produced"]


@settings(max_examples=50)
@given(seeds)
def test_classification_dichotomy(seed):
    rng = np.random.default_rng(seed)
    kind = rng.integers(0, 2)
    if kind == 0:
        # X = a(y) d/dx, Y = d/dy: [X,Y] = -(a'/a) X and I = a(y)
        a = el.Num(3.0)
        for k in (1, 2):
            c = rng.uniform(-0.8, 0.8)
            a = a + el.Num(float(c)) * el.sin(el.Num(float(k)) * el.Var("y") + el.Num(float(rng.uniform(0, 6))))
        sys, Y = FiberedSystem(VectorField2(a, el.ZERO)), V("0", "1")
    else:
        p, q = rng.normal(size=2)
        sys = FiberedSystem(VectorField2(el.Num(float(p)), el.Num(float(q) + 3.0)))
        Y = VectorField2(el.Num(float(rng.normal()) + 3.0), el.Num(float(rng.normal())))
    out = co.first_integral_from_pair(sys, Y, grid=G16)
    assert out.hypotheses_ok
    lam, osc = out.notes["lambda_sup"], out.notes["oscillation"]
    if lam <= co.HYPOTHESIS_TOL:
        assert out.tag == co.TAG_B_T2
    if lam > 10 * co.HYPOTHESIS_TOL and osc <= co.OSCILLATION_TOL:
        assert out.tag == co.TAG_INCONSISTENT
    assert out.tag in (co.TAG_B_T2, co.TAG_B_S1)
