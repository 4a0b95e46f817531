"""Shared builders for tests: the worked examples and random trig polynomials."""
import numpy as np

from toruscert import exprlang as el
from toruscert.geometry import FiberedSystem, VectorField2, VolumeForm2

V = VectorField2.parse
SQRT2 = np.sqrt(2.0)


def example1():
    return FiberedSystem(V("sin(y)+sqrt(2)", "1"), name="example1")


def example2():
    return FiberedSystem(V("sin(y)+2", "sin(x)"), first_integrals=[el.parse("sin(-cos(y)+2*y+cos(x))")],
                         name="example2")


F3 = "2+0.5*sin(x+y)"


def example3(volume=True):
    vol = VolumeForm2(el.parse(f"1/({F3})")) if volume else None
    return FiberedSystem(V(F3, f"sqrt(2)*({F3})"), volume=vol, name="example3")


def trig_poly(rng, degree=3, scale=1.0, const=0.0):
    """Random real trig polynomial in x, y of total mode degree <= degree, as Expr."""
    e = el.Num(const)
    for j in range(-degree, degree + 1):
        for k in range(0, degree + 1):
            if k == 0 and j <= 0:
                continue
            if abs(j) + k > degree:
                continue
            arg = el.add(el.mul(el.Num(float(j)), el.Var("x")), el.mul(el.Num(float(k)), el.Var("y")))
            a, b = scale * rng.normal(size=2) / (1 + abs(j) + k)
            e = e + el.Num(float(a)) * el.cos(arg) + el.Num(float(b)) * el.sin(arg)
    return e


def random_field(rng, degree=3):
    return VectorField2(trig_poly(rng, degree, const=rng.normal()), trig_poly(rng, degree, const=rng.normal()))
