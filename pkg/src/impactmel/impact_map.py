"""Poincare impact maps on the switching line and the unperturbed
period functions.

The first-return map is the composition of the two half-plane flows
between consecutive crossings of x = 0, with the restitution applied at
each crossing.  For the unperturbed system the transit time through one
zone has the closed quadrature form

    2 * integral_0^{x_turn} dx / sqrt(2 (h - V(x))),   h = y^2 / 2,

whose integrand has an inverse-square-root singularity at the turning
point V(x_turn) = h.  Substituting V(x(theta)) = h sin^2(theta) removes
it: the transformed integrand sqrt(2 h) sin(theta) / |V'(x(theta))| is
smooth on [0, pi/2] and Gauss-Legendre quadrature converges fast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .flow import DEFAULT_OPTIONS, integrate_zone, impact_sequence
from .model import MINUS, PLUS, PhaseState

#: default absolute accuracy of the period quadrature
PERIOD_QUAD_TOL = 1e-11

#: practical domain restriction: quadrature degrades logarithmically as
#: |y| -> sqrt(2 c1); callers should stay below this fraction of it
SECTION_COMPACT_FRACTION = 0.995


@dataclass(frozen=True)
class SectionPoint:
    """A point (y, t) of the switching line with y != 0.  The side is the
    zone the trajectory enters next (+ for y > 0)."""

    y: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.y) and math.isfinite(self.t)):
            raise DomainError(f"non-finite section point {(self.y, self.t)}")
        if self.y == 0.0:
            raise DomainError("section points need y != 0")

    @property
    def side(self):
        return PLUS if self.y > 0.0 else MINUS

    @property
    def state(self):
        return PhaseState(0.0, self.y, self.t)


@lru_cache(maxsize=32)
def _gauss_nodes(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    # map [-1, 1] -> [0, pi/2]
    half = math.pi / 4.0
    return half * (nodes + 1.0), half * weights


def _invert_monotone(values_fn, targets, lo, hi, iterations=64):
    """Vectorized bisection for a scalar-monotone-increasing values_fn on
    [lo, hi]; targets must lie in [values_fn(lo), values_fn(hi)]."""
    lo = np.full_like(targets, lo, dtype=float)
    hi = np.full_like(targets, hi, dtype=float)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        high = values_fn(mid) > targets
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def zone_transit_time(sys, side, y, *, tol=PERIOD_QUAD_TOL):
    """Unperturbed time for the orbit entering zone `side` at (0, y) to
    return to the switching line.

    Requires 0 < |y| < sqrt(2 c1) with sign(y) = side; raises DomainError
    otherwise (on or beyond the separatrix the orbit never returns).
    """
    y = float(y)
    if y * side <= 0.0:
        raise DomainError(f"velocity {y} does not enter zone {side:+d}")
    if abs(y) >= sys.y_max:
        raise DomainError(
            f"|y| = {abs(y)} is at or beyond the separatrix velocity {sys.y_max}"
        )
    h = 0.5 * y * y
    pot = sys.potential(side)
    x_saddle = sys.saddle_x(side)

    def v_along_ray(s):
        return np.asarray(pot.value(side * s), dtype=float)

    prev = None
    for n in (24, 48, 96, 192, 384, 768, 1536):
        theta, weights = _gauss_nodes(n)
        targets = h * np.sin(theta) ** 2
        s_nodes = _invert_monotone(v_along_ray, targets, 0.0, abs(x_saddle))
        dv = np.abs(np.asarray(pot.derivative(side * s_nodes), dtype=float))
        integrand = math.sqrt(2.0 * h) * np.sin(theta) / dv
        value = 2.0 * float(np.dot(weights, integrand))
        if prev is not None and abs(value - prev) < 0.1 * tol:
            return value
        prev = value
    raise DomainError(
        "period quadrature did not converge; the orbit is too close to the separatrix"
    )


def orbit_period(sys, y, *, tol=PERIOD_QUAD_TOL):
    """Period of the unperturbed orbit through (0, y), y > 0: the two zone
    transit times added."""
    y = float(y)
    if y <= 0.0:
        raise DomainError("orbit_period expects a point on the upper section (y > 0)")
    return zone_transit_time(sys, PLUS, y, tol=tol) + zone_transit_time(sys, MINUS, -y, tol=tol)


def period_derivative(sys, y, *, step=1e-6):
    """Central-difference derivative of the period function (positive for
    systems satisfying the monotone-period hypothesis)."""
    h = step * max(1.0, abs(y))
    h = min(h, 0.49 * (sys.y_max - abs(y)))
    return (orbit_period(sys, y + h) - orbit_period(sys, y - h)) / (2.0 * h)


def velocity_for_period(sys, period, *, tol=1e-12):
    """Inverse of :func:`orbit_period`: the unique y > 0 whose unperturbed
    orbit has the given period.  Bisection/secant-safeguarded to `tol`."""
    if period <= 0.0:
        raise DomainError("period must be positive")
    y_lo = 1e-9 * sys.y_max
    y_hi = (1.0 - 1e-9) * sys.y_max
    p_lo = orbit_period(sys, y_lo)
    if period <= p_lo:
        raise DomainError(f"period {period} is below the small-orbit limit {p_lo}")
    try:
        p_hi = orbit_period(sys, y_hi)
    except DomainError:
        y_hi = SECTION_COMPACT_FRACTION * sys.y_max
        p_hi = orbit_period(sys, y_hi)
    if period >= p_hi:
        raise DomainError(
            f"period {period} exceeds {p_hi}, the longest period resolvable this close "
            "to the separatrix"
        )
    return brentq(lambda y: orbit_period(sys, y) - period, y_lo, y_hi, xtol=tol, rtol=9e-16)


# ---------------------------------------------------------------------------
# Impact maps
# ---------------------------------------------------------------------------


def half_map(sys, point, *, options=None):
    """One half of the impact map: flow from the section point through the
    zone it enters, to the next transversal crossing.  No restitution."""
    options = options or DEFAULT_OPTIONS
    transit = integrate_zone(sys, point.state, point.side, options=options)
    return SectionPoint(transit.end.y, transit.end.t)


def impact_map(sys, point, m=1, *, options=None):
    """m-th iterate of the impact map on the upper section, restitution
    included (for r = 1 this is the conservative first-return map).

    The domain is operational: a point is in it iff the trajectory
    completes the 2 m transversal crossings; flow errors propagate.
    """
    if point.y <= 0.0:
        raise DomainError("the impact map is defined on the upper section (y > 0)")
    if m < 1:
        raise DomainError("m must be a positive integer")
    seq = impact_sequence(sys, point.y, point.t, 2 * m, options=options)
    return SectionPoint(seq.final.y, seq.final.t)


def unperturbed_impact_map(sys, y0, t0, m=1):
    """Closed form of the impact map for eps = 0:
    one pair of crossings maps (y0, t0) to
    (r^2 y0, t0 + tau_+(y0) + tau_-(-r y0)), iterated m times."""
    r = sys.restitution
    y, t = float(y0), float(t0)
    for _ in range(m):
        t += zone_transit_time(sys, PLUS, y) + zone_transit_time(sys, MINUS, -r * y)
        y *= r * r
    return SectionPoint(y, t)
