"""Symmetric Gauss rules on the reference triangle (0,0), (1,0), (0,1).

Weights are scaled to the reference area 1/2. Orbit data are Dunavant's
rules re-solved from the moment equations in 50-digit arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,)
    exactness_degree: int

    def __len__(self):
        return len(self.weights)

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.column_stack([1.0 - x - y, x, y])


def _orbit_s3(w):
    return [(w, 1.0 / 3.0, 1.0 / 3.0)]


def _orbit_s21(w, a):
    b = 1.0 - 2.0 * a
    return [(w, a, a), (w, b, a), (w, a, b)]


def _orbit_s111(w, a, b):
    c = 1.0 - a - b
    return [(w, y, z) for y, z in ((b, c), (c, b), (a, c), (c, a), (a, b), (b, a))]


def _rule(degree, *orbits):
    pts = [p for orbit in orbits for p in orbit]
    w, x, y = np.array(pts).T
    points = np.column_stack([x, y])
    for a in (points, w):
        a.flags.writeable = False
    return QuadratureRule(points, w, degree)


_RULES = (
    _rule(1, _orbit_s3(0.5)),
    _rule(2, _orbit_s21(1.0 / 6.0, 1.0 / 6.0)),
    _rule(
        4,
        _orbit_s21(0.11169079483900573285, 0.44594849091596488632),
        _orbit_s21(0.054975871827660933819, 0.09157621350977074346),
    ),
    _rule(
        6,
        _orbit_s21(0.058393137863189683013, 0.24928674517091042129),
        _orbit_s21(0.02542245318510340846, 0.06308901449150222834),
        _orbit_s111(0.041425537809186787597, 0.053145049844816947353, 0.31035245103378440542),
    ),
    _rule(
        8,
        _orbit_s3(0.072157803838893584126),
        _orbit_s21(0.047545817133642312397, 0.45929258829272315603),
        _orbit_s21(0.051608685267359125141, 0.17056930775176020662),
        _orbit_s21(0.016229248811599040155, 0.050547228317030975458),
        _orbit_s111(0.013615157087217497132, 0.0083947774099576053372, 0.26311282963463811342),
    ),
    _rule(
        10,
        _orbit_s3(0.045408995191376790048),
        _orbit_s21(0.018362978878233352359, 0.48557763338365737737),
        _orbit_s21(0.022660529717763967391, 0.1094815754850370548),
        _orbit_s111(0.036378958422710054302, 0.14170721941487995476, 0.30793983876412095017),
        _orbit_s111(0.014163621265528742418, 0.025003534762686386074, 0.24667256063990269392),
        _orbit_s111(0.00471083348186641173, 0.0095408154002994575802, 0.066803251012200265774),
    ),
)

MAX_DEGREE = 10


def stocked_rules() -> tuple[QuadratureRule, ...]:
    return _RULES


def rule_for_degree(d: int) -> QuadratureRule:
    """Smallest stocked rule integrating polynomials of degree ``d`` exactly."""
    if not 1 <= d <= MAX_DEGREE:
        raise ValueError(f"quadrature degree must lie in [1, {MAX_DEGREE}], got {d}")
    return next(rule for rule in _RULES if rule.exactness_degree >= d)


def integrate(rule: QuadratureRule, f) -> float:
    """Apply ``rule`` to ``f(x, y)`` on the reference triangle.

    ``f`` is called once with coordinate arrays.
    """
    x, y = rule.points.T
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("integrand is not finite at a quadrature point")
    return float(rule.weights @ vals)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def collapsed_gauss_rule(degree: int) -> QuadratureRule:
    """Conical product Gauss rule of any degree (not symmetric, positive weights).

    Maps the unit square onto the triangle by ``(a, b) -> (a, (1 - a) b)``.
    """
    if degree < 1:
        raise ValueError(f"degree must be positive, got {degree}")
    # the collapse Jacobian (1 - a) adds one degree in a
    m = (degree + 3) // 2
    t, w = np.polynomial.legendre.leggauss(m)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    a, b = np.meshgrid(t, t, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    points = np.column_stack([a.ravel(), ((1.0 - a) * b).ravel()])
    weights = (wa * wb * (1.0 - a)).ravel()
    return QuadratureRule(points, weights, degree)
