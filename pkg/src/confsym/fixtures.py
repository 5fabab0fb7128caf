"""Registry of centroaffine test surfaces.

Each fixture is a parametrized surface in R³ together with a chart
rectangle, a rectangle in the central-projection chart (where all metric
computations run), a basepoint there, and the expected behaviour of its
centroaffine Ricci tensor.

Quadrics ``⟨x, Qx⟩ = 1`` have parallel Ricci tensor; the type of Q decides
the case label:

====  ==============================  ===================
case  surface                         signature of Q
====  ==============================  ===================
a     plane                           rank 1
b     elliptic cylinder               (+, +, 0)
c     hyperbolic cylinder             (+, −, 0)
d     ellipsoid / hyperboloids        nondegenerate
====  ==============================  ===================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .centroaffine import Embedding3
from .surface import FLAT, GENERIC, PARALLEL_RICCI


@dataclass
class Fixture:
    name: str
    embedding: Embedding3
    flat_domain: J.Box
    expected: str
    case: str | None = None
    quadric: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    description: str = ""

    @property
    def basepoint(self):
        return self.flat_domain.center


def _surface(name, expr, lo, hi):
    return Embedding3(J.Field(2, (3,), expr=expr, domain=J.Box(lo, hi), name=name),
                      J.Box(lo, hi), name)


def _plane():
    emb = _surface("plane", lambda y1, y2: [y1, y2, 1.0 + 0.0 * y1], (-0.5, -0.5), (0.5, 0.5))
    return Fixture("plane", emb, J.Box((-0.5, -0.5), (0.5, 0.5)), FLAT, "a",
                   np.diag([0.0, 0.0, 1.0]), description="affine plane x³ = 1")


def _sphere():
    emb = _surface("sphere", lambda y1, y2: [J.sin(y1) * J.cos(y2), J.sin(y1) * J.sin(y2), J.cos(y1)],
                   (0.2, -1.3), (2.0, 1.3))
    return Fixture("sphere", emb, J.Box((0.3, -0.5), (1.5, 0.5)), PARALLEL_RICCI, "d",
                   np.eye(3), description="unit sphere, polar chart")


def _ellipsoid():
    s2, s3 = 1 / np.sqrt(2.0), 1 / np.sqrt(3.0)
    emb = _surface("ellipsoid",
                   lambda y1, y2: [J.sin(y1) * J.cos(y2), s2 * J.sin(y1) * J.sin(y2), s3 * J.cos(y1)],
                   (0.1, -1.4), (1.5, 1.4))
    return Fixture("ellipsoid", emb, J.Box((0.5, -0.6), (2.0, 0.6)), PARALLEL_RICCI, "d",
                   np.diag([1.0, 2.0, 3.0]), description="x² + 2y² + 3z² = 1")


def _hyperboloid2():
    emb = _surface("two-sheeted-hyperboloid",
                   lambda y1, y2: [J.sinh(y1) * J.cos(y2), J.sinh(y1) * J.sin(y2), J.cosh(y1)],
                   (0.1, -1.4), (1.5, 1.4))
    return Fixture("two-sheeted-hyperboloid", emb, J.Box((0.2, -0.3), (0.7, 0.3)), PARALLEL_RICCI, "d",
                   np.diag([-1.0, -1.0, 1.0]), description="z² − x² − y² = 1, upper sheet")


def _hyperboloid1():
    emb = _surface("one-sheeted-hyperboloid",
                   lambda y1, y2: [J.cosh(y1) * J.cos(y2), J.cosh(y1) * J.sin(y2), J.sinh(y1)],
                   (0.3, -1.0), (2.0, 1.0))
    return Fixture("one-sheeted-hyperboloid", emb, J.Box((1.2, -0.4), (2.0, 0.4)), PARALLEL_RICCI, "d",
                   np.diag([1.0, 1.0, -1.0]), description="x² + y² − z² = 1")


def _elliptic_cylinder():
    emb = _surface("elliptic-cylinder", lambda y1, y2: [y1, J.sin(y2), J.cos(y2)],
                   (-1.0, -1.2), (1.0, 1.2))
    return Fixture("elliptic-cylinder", emb, J.Box((-0.5, -0.8), (0.5, 0.8)), PARALLEL_RICCI, "b",
                   np.diag([0.0, 1.0, 1.0]), description="y² + z² = 1")


def _hyperbolic_cylinder():
    emb = _surface("hyperbolic-cylinder", lambda y1, y2: [y1, J.sinh(y2), J.cosh(y2)],
                   (-1.0, -1.2), (1.0, 1.2))
    return Fixture("hyperbolic-cylinder", emb, J.Box((-0.5, -0.6), (0.5, 0.6)), PARALLEL_RICCI, "c",
                   np.diag([0.0, -1.0, 1.0]), description="z² − y² = 1")


def _zpow(a=-2.0):
    a = float(a)

    def expr(y1, y2):
        e = J.exp(y1)
        return [e * J.cos(y2), e * J.sin(y2), J.exp(a * y1)]

    name = "zpow" if a == -2.0 else f"zpow(a={a:g})"
    emb = _surface(name, expr, (-1.2, -1.2), (1.2, 1.2))
    expected = GENERIC
    return Fixture(name, emb, J.Box((0.8, -0.4), (1.6, 0.4)), expected, None, None, {"a": a},
                   description=f"{{(z, |z|^a)}} with a = {a:g}, chart z = exp(y¹ + i y²)")


_REGISTRY = {
    "plane": _plane,
    "sphere": _sphere,
    "ellipsoid": _ellipsoid,
    "two-sheeted-hyperboloid": _hyperboloid2,
    "one-sheeted-hyperboloid": _hyperboloid1,
    "elliptic-cylinder": _elliptic_cylinder,
    "hyperbolic-cylinder": _hyperbolic_cylinder,
    "zpow": _zpow,
}

QUADRICS = ("plane", "sphere", "ellipsoid", "two-sheeted-hyperboloid", "one-sheeted-hyperboloid",
            "elliptic-cylinder", "hyperbolic-cylinder")


def fixture_names():
    return list(_REGISTRY)


def get_fixture(name, **params):
    """Look up a fixture by name; ``zpow`` accepts the exponent ``a``."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(_REGISTRY)}") from None
    return factory(**params)
