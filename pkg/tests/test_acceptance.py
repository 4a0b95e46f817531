"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line listing its checks,
then asserts them.  Run ``python3 tests/test_acceptance.py`` for the summary
without pytest.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))
from helpers import SQRT2, V, random_field, trig_poly  # noqa: E402

from toruscert import certify, cli, flow, search  # noqa: E402
from toruscert import constructions as co  # noqa: E402
from toruscert import exprlang as el  # noqa: E402
from toruscert import fourier as fo  # noqa: E402
from toruscert import geometry as ge  # noqa: E402
from toruscert.fourier import Grid2, params_from_field  # noqa: E402
from toruscert.geometry import FiberedSystem, OneForm2, VectorField2, VolumeForm2  # noqa: E402

SYSTEMS = Path(__file__).resolve().parent.parent / "systems"
G64 = Grid2(64)
G16 = Grid2(16)
_cache = {}
LINES = {}  # criterion number -> summary line, printed by conftest at session end


def load(name):
    return cli.load_system(str(SYSTEMS / f"{name}.json"))


def sup(e, grid=G64):
    return float(np.max(np.abs(el.sample_values(el.as_expr(e), (), grid))))


def field_sup(X, grid=G64):
    return max(sup(X.dx, grid), sup(X.dy, grid))


def form_sup(a, grid=G64):
    return max(sup(a.ax, grid), sup(a.ay, grid))


def classified(name):
    """Default-option classification of a shipped system, computed once."""
    if name not in _cache:
        sf = load(name)
        _cache[name] = (sf, certify.classify(sf.system, certify.ClassifyOptions(), keep_results=True))
    return _cache[name]


def check(name, ok, detail=""):
    return (name, bool(ok), detail)


def report(n, checks, elapsed=None):
    ok = all(c[1] for c in checks)
    parts = [f"{name}={'ok' if good else 'FAIL'}" + (f" ({detail})" if detail else "")
             for name, good, detail in checks]
    t = f" [{elapsed:.1f}s]" if elapsed is not None else ""
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}{t} " + "; ".join(parts)
    print(line, file=sys.__stdout__, flush=True)
    return ok, line


def run_criterion(n, fn):
    t = time.time()
    checks = fn()
    ok, line = report(n, checks, time.time() - t)
    LINES[n] = line
    return ok, line


# ------------------------------------------------------------------ criteria


def criterion_1():
    out = []
    sf1, c1 = classified("example1")
    out.append(check("ex1 tag", c1.tag == certify.TAG_T2, c1.tag))
    Y0 = sf1.symmetries[0]
    res = field_sup(ge.lie_bracket(sf1.system.X, Y0))
    out.append(check("ex1 [X,Y0]", res <= 1e-10, f"{res:.1e}"))

    sf2, c2 = classified("example2")
    out.append(check("ex2 tag", c2.tag == certify.TAG_S1, c2.tag))
    target = el.sample_values(el.parse("sin(-cos(y)+2*y+cos(x))"), (), G64)
    corr, _ = search.span_alignment(c2.results[0]["first_integrals"], target)
    out.append(check("ex2 |corr|", abs(corr) >= 0.999, f"{corr:.6f}"))

    sf3, c3 = classified("example3")
    out.append(check("ex3 tag", c3.tag == certify.TAG_EJ, c3.tag))
    r3 = c3.results[0]
    dim = r3["symmetries"].kernel_report.dimension
    out.append(check("ex3 symmetry dim", dim == 1, str(dim)))
    fdim = r3["first_integrals"].kernel_report.dimension
    out.append(check("ex3 integral kernel empty", fdim == 0, str(fdim)))
    f = el.sample_values(el.parse("2+0.5*sin(x+y)"), (), G64)
    cos = search.cosine_similarity(search.normalized_density(r3["density"]), 1 / f)
    out.append(check("ex3 density cos", cos >= 0.999, f"{cos:.6f}"))
    return out


def criterion_2():
    sf = load("example1")
    o = co.volume_from_frame(sf.system, V("1", "0"))
    div = o.conclusions["divergence"].value
    ej = certify.check_ej(sf.system, o.produced)
    return [check("constructed", o.ok, o.tag),
            check("divergence", div <= 1e-9, f"{div:.1e}"),
            check("EJ pass", ej.passed)]


def criterion_3():
    sys_, mu = load("example1").system, VolumeForm2()
    o = co.symmetry_from_one_form(sys_, OneForm2.parse("0", "1"), mu)
    Y = o.produced
    dev = max(sup(Y.dx - el.ONE), sup(Y.dy))
    br = field_sup(ge.lie_bracket(sys_.X, Y))
    ci = co.check_condition_i(sys_, OneForm2.parse("0", "1"), mu)["verdict"]
    bad = co.check_condition_i(sys_, ge.interior_volume(sys_.X, mu).scale(3), mu)["verdict"]
    return [check("Y = d/dx", dev <= 1e-12, f"{dev:.1e}"),
            check("[X,Y]", br <= 1e-10, f"{br:.1e}"),
            check("condition i (dy)", ci == "holds", ci),
            check("condition i (3 i_X mu)", bad == "fails", bad)]


def criterion_4():
    a = load("construct_lie_point_i")
    o1 = co.lie_point_combine_i(a.system.X, a.claim_field("Y"), a.claim_expr("g"), a.claim_expr("h"))
    br = field_sup(ge.lie_bracket(a.system.X, o1.produced))
    margin = o1.conclusions["independence of Z from X"].value
    b = load("construct_lie_point_ii")
    o2 = co.lie_point_combine_ii(b.system.X, b.claim_field("Y"), b.claim_expr("g"), b.claim_expr("h"))
    err = max(sup(o2.produced.dx - el.ONE), sup(o2.produced.dy - el.Num(2.0)))
    return [check("case i [X,Z]", br <= 1e-10, f"{br:.1e}"),
            check("case i margin", margin >= 0.9, f"{margin:.3f}"),
            check("case ii Z = d/dx + 2 d/dy", err <= 1e-10, f"{err:.1e}")]


def criterion_5():
    s1 = FiberedSystem(V("2+sin(y)", "0"))
    o = co.first_integral_from_pair(s1, V("0", "1"))
    xi = o.conclusions["X(I) = 0"].value
    osc = o.notes["oscillation"]
    s2 = FiberedSystem(V("sqrt(2)", "1"))
    o2 = co.first_integral_from_pair(s2, V("1", "0"))
    I2 = el.sample_values(el.as_expr(o2.produced), (), G64)
    spread = float(np.ptp(I2))
    return [check("X(I)", xi <= 1e-9, f"{xi:.1e}"),
            check("osc(I)", osc >= 1.9, f"{osc:.3f}"),
            check("S1 tag", o.tag == co.TAG_B_S1, o.tag),
            check("constant I", spread <= 1e-12, f"{spread:.1e}"),
            check("T2 tag", o2.tag == co.TAG_B_T2, o2.tag)]


def criterion_6():
    X1, X3 = load("example1").system.X, load("example3").system.X
    r1 = flow.rotation_vector(X1).ratio
    r3 = [e.ratio for e in flow.rotation_vector(X3, initial=flow.seed_points(5))]
    e3 = max(abs(r - 1 / SQRT2) for r in r3)
    s1 = flow.poincare_section(X1).spread
    s3 = flow.poincare_section(X3).spread
    return [check("ex1 ratio", abs(r1 - SQRT2) <= 1e-6, f"{abs(r1 - SQRT2):.1e}"),
            check("ex3 ratio x5", len(r3) == 5 and e3 <= 1e-5, f"{e3:.1e}"),
            check("ex1 spread", s1 <= 1e-9, f"{s1:.1e}"),
            check("ex3 spread", s3 > 1e-2, f"{s3:.3f}")]


def criterion_7():
    rng = np.random.default_rng(7)
    br = ge.lie_bracket
    worst = {"antisymmetry": 0.0, "jacobi": 0.0, "leibniz": 0.0, "cartan": 0.0, "interior": 0.0}
    for _ in range(100):
        X, Y, Z = random_field(rng), random_field(rng), random_field(rng)
        worst["antisymmetry"] = max(worst["antisymmetry"], field_sup(br(X, Y) + br(Y, X), G16))
        jac = br(X, br(Y, Z)) + br(Y, br(Z, X)) + br(Z, br(X, Y))
        worst["jacobi"] = max(worst["jacobi"], field_sup(jac, G16))
        f, g = trig_poly(rng, 3), trig_poly(rng, 3)
        lhs = ge.lie_derivative_scalar(X, f * g)
        rhs = f * ge.lie_derivative_scalar(X, g) + g * ge.lie_derivative_scalar(X, f)
        worst["leibniz"] = max(worst["leibniz"], sup(lhs - rhs, G16))
        alpha = OneForm2(trig_poly(rng, 3), trig_poly(rng, 3))
        d = ge.lie_derivative_oneform(X, alpha)
        ref = ge.lie_derivative_oneform_coordinates(X, alpha)
        worst["cartan"] = max(worst["cartan"], max(sup(d.ax - ref.ax, G16), sup(d.ay - ref.ay, G16)))
        # X preserving mu = dx^dy: a constant plus a Hamiltonian field of a degree-3 H
        H = trig_poly(rng, 3)
        Xh = VectorField2(el.Num(float(rng.normal())) + el.differentiate(H, "y"),
                          el.Num(float(rng.normal())) - el.differentiate(H, "x"))
        mu = VolumeForm2()
        lhs = ge.interior_volume(br(Xh, Y), mu)
        rhs = ge.lie_derivative_oneform(Xh, ge.interior_volume(Y, mu))
        worst["interior"] = max(worst["interior"], max(sup(lhs.ax - rhs.ax, G16), sup(lhs.ay - rhs.ay, G16)))
    tol = {"antisymmetry": 1e-12, "jacobi": 1e-10, "leibniz": 1e-11, "cartan": 1e-11, "interior": 1e-10}
    return [check(k, worst[k] <= tol[k], f"{worst[k]:.1e}") for k in worst]


def criterion_8():
    rng = np.random.default_rng(8)
    planted_ok = 0
    for _ in range(20):
        n = int(rng.integers(8, 40))
        m = n + int(rng.integers(0, 10))
        nullity = int(rng.integers(0, n // 2 + 1))
        U, _ = np.linalg.qr(rng.normal(size=(m, m)))
        W, _ = np.linalg.qr(rng.normal(size=(n, n)))
        s = np.zeros(n)
        s[: n - nullity] = rng.uniform(1e-3, 1.0, size=n - nullity)
        kr = fo.kernel_basis(U[:, :n] @ np.diag(s) @ W.T, threshold=1e-10)
        same = kr.dimension == nullity
        if same and nullity:
            P = W[:, n - nullity:]
            same = np.allclose(P @ (P.T @ kr.basis), kr.basis, atol=1e-10)
        planted_ok += bool(same)

    diag_err = 0.0
    modes = fo.band_modes(16)
    for a, b in [(1.0, SQRT2), (-0.3, 2.5), (1.0, 0.0)]:
        A = fo.advection_matrix((fo.SpectralField.constant(64, a), fo.SpectralField.constant(64, b)))
        want = 1j * (a * modes[:, 0] + b * modes[:, 1])
        diag_err = max(diag_err, np.max(np.abs(np.diag(A) - want)),
                       np.max(np.abs(A - np.diag(np.diag(A)))))

    g32 = Grid2(32)
    a0, b0 = V("1", "0").spectral(g32)
    target = np.concatenate([params_from_field(a0, 8), params_from_field(b0, 8)])
    recovered, worst = 0, 0.0
    for _ in range(10):
        gy = el.Num(float(rng.normal()))
        for k in range(1, int(rng.integers(1, 5)) + 1):
            c, s_ = rng.normal(size=2) / k
            ky = el.Num(float(k)) * el.Var("y")
            gy = gy + el.Num(float(c)) * el.cos(ky) + el.Num(float(s_)) * el.sin(ky)
        r = search.find_symmetries(VectorField2(gy, el.ONE), grid=g32, band=8)
        Q, _ = np.linalg.qr(r.kernel_report.basis)
        dist = float(np.linalg.norm(target - Q @ (Q.T @ target)) / np.linalg.norm(target))
        worst = max(worst, dist)
        recovered += dist <= 1e-10
    return [check("planted nullities", planted_ok == 20, f"{planted_ok}/20"),
            check("advection diagonal", diag_err <= 1e-13, f"{diag_err:.1e}"),
            check("d/dx recovered", recovered == 10, f"{recovered}/10, worst {worst:.1e}")]


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8]


def _assert(n):
    ok, line = run_criterion(n, CRITERIA[n - 1])
    assert ok, line


def test_criterion_1():
    _assert(1)


def test_criterion_2():
    _assert(2)


def test_criterion_3():
    _assert(3)


def test_criterion_4():
    _assert(4)


def test_criterion_5():
    _assert(5)


def test_criterion_6():
    _assert(6)


def test_criterion_7():
    _assert(7)


def test_criterion_8():
    _assert(8)


if __name__ == "__main__":
    results = [run_criterion(i + 1, fn)[0] for i, fn in enumerate(CRITERIA)]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
