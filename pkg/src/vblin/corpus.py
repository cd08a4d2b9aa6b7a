"""Named test maps used by the acceptance suite and the example scenarios."""

from __future__ import annotations

from .bundle import Domain
from .hadamard import BundleMap

POINT = Domain((), 1.0, "box", 1)


def identity() -> BundleMap:
    return BundleMap.from_expressions(["x"], ["v"], 1, 1, Domain(((0.0, 1.0),), 1.0, "box", 1), name="identity")


def cubic() -> BundleMap:
    return BundleMap.from_expressions([], ["v+v^3"], 0, 1, POINT, name="v+v^3")


def sine() -> BundleMap:
    return BundleMap.from_expressions([], ["sin(v)"], 0, 1, POINT, name="sin(v)")


def exp_shear() -> BundleMap:
    # Jacobian determinant e^x (1 - 2 v^2) vanishes at |v| = 1/sqrt(2), so keep the tube at 0.5
    return BundleMap.from_expressions(
        ["x+v^2"], ["v*exp(x)"], 1, 1, Domain(((0.0, 1.0),), 0.5, "box", 1), name="(x+v^2, v e^x)"
    )


def two_fiber() -> BundleMap:
    return BundleMap.from_expressions(
        ["x"], ["v1+v2^2", "v2+v1*v2"], 1, 2, Domain(((0.0, 1.0),), 0.4, "ball", 2), name="2-fiber"
    )


def rotation_flow(s0: float = 0.3) -> BundleMap:
    """w -> R(s0 + |w|^2) w on the unit disk; preserves u^2 + v^2."""
    ang = f"({s0!r}+u^2+v^2)"
    return BundleMap.from_expressions(
        [],
        [f"cos{ang}*u-sin{ang}*v", f"sin{ang}*u+cos{ang}*v"],
        0, 2, Domain((), 1.0, "ball", 2), fiber_vars=["u", "v"], name="rotation flow",
    )


def hyperbolic_flow(s: float = 0.3) -> BundleMap:
    """(e^s u, e^-s v); preserves u v."""
    return BundleMap.from_expressions(
        [], [f"exp({s!r})*u", f"exp({-s!r})*v"], 0, 2, Domain((), 1.0, "ball", 2),
        fiber_vars=["u", "v"], name="hyperbolic flow",
    )


def zero_fiber() -> BundleMap:
    """Planted failure: S vanishes identically."""
    return BundleMap.from_expressions([], ["0*v"], 0, 1, POINT, name="0*v")


def shear_q() -> BundleMap:
    """(x + x v, v): Q(x, 0) = x, the homotopy endpoint drops it."""
    return BundleMap.from_expressions(
        ["x+x*v"], ["v"], 1, 1, Domain(((0.0, 1.0),), 0.5, "box", 1), name="(x+xv, v)"
    )


def endpoint_corpus():
    return [identity(), cubic(), sine(), exp_shear(), two_fiber(), rotation_flow()]


def embedding_corpus():
    return endpoint_corpus() + [hyperbolic_flow()]
