"""Subharmonic and heteroclinic Melnikov functions.

The subharmonic function for an (n, m) resonance is the first-order
energy change over one orbit period,

    M(t0) = integral_0^{m * period} {H0, H1}(phi(t; 0, y_start), t + t0) dt,

evaluated along the unperturbed orbit whose period is n T / m, split at
the impact times.  Its simple zeros seed the Newton search for persistent
periodic orbits.  The heteroclinic function is the analogous improper
integral along the unperturbed heteroclinic orbit through
z0 = (0, sqrt(2 c1)) and measures the first-order splitting of the
stable/unstable manifolds on the switching line.

Both integrals are accumulated with the trajectory integrator itself
(augmented quadrature state) or, for the heteroclinic legs, by
Gauss-Legendre panels over stored dense output; see the leg construction
below for why the legs are integrated away from the saddles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateMelnikov, DomainError, TruncationError
from .flow import DEFAULT_OPTIONS, integrate_zone
from .impact_map import velocity_for_period
from .model import MINUS, PLUS, PhaseState

#: profiles whose max |M| stays below this are reported identically zero
DEGENERATE_TOL = 1e-8

#: a located zero must have |slope| above this to be flagged simple
SIMPLE_SLOPE_TOL = 1e-6

#: default number of uniform samples per period when scanning for zeros
ZERO_SCAN_SAMPLES = 256


@dataclass(frozen=True)
class MelnikovZero:
    """A zero t0 of a Melnikov profile with its slope dM/dt0; `simple`
    means the sign changes and the slope is bounded away from zero."""

    t0: float
    slope: float
    simple: bool


@dataclass
class MelnikovProfile:
    """Sampled t0 -> M over one forcing period with located zeros."""

    kind: str
    period: float
    t0: np.ndarray
    values: np.ndarray
    zeros: list
    degenerate: bool
    n: int = None
    m: int = None
    y_start: float = None

    def mean(self):
        """Period average of M (trapezoid on the uniform periodic grid);
        zero for every genuine profile, which is what makes simple zeros
        generic."""
        return float(np.mean(self.values))

    def simple_zeros(self):
        return [z for z in self.zeros if z.simple]

    def __call__(self, t0):
        """Periodic linear interpolation of the samples (diagnostics; use
        the generating function for refined values)."""
        tt = np.mod(t0, self.period)
        ts = np.concatenate([self.t0, [self.period]])
        vs = np.concatenate([self.values, [self.values[0]]])
        return np.interp(tt, ts, vs)


def profile_mean(profile):
    """Module-level alias of :meth:`MelnikovProfile.mean`."""
    return profile.mean()


# ---------------------------------------------------------------------------
# Subharmonic function
# ---------------------------------------------------------------------------


def energy_gain(sys, y_start, t0, m, *, options=None):
    """First-order energy change over m returns to the section:
    the Poisson-bracket integral along the unperturbed orbit through
    (0, y_start), with the perturbation sampled at times t + t0.

    The integral is split exactly at the impact times by integrating one
    zone arc at a time with an augmented quadrature state.
    """
    options = options or DEFAULT_OPTIONS
    if not 0.0 < y_start < sys.y_max:
        raise DomainError(f"y_start must lie in (0, {sys.y_max}) (inside the separatrix)")
    frozen = sys.with_params(epsilon=0.0, restitution=1.0)
    state = PhaseState(0.0, float(y_start), 0.0)
    side = PLUS
    total = 0.0
    for _ in range(2 * m):
        transit = integrate_zone(frozen, state, side, options=options, bracket_offset=float(t0))
        total += transit.bracket
        state = PhaseState(0.0, transit.end.y, transit.end.t)
        side = -side
    return total


def subharmonic_melnikov(sys, n, m, t0, *, y_start=None, options=None):
    """Point evaluation of the (n, m) subharmonic Melnikov function."""
    if y_start is None:
        y_start = resonant_velocity(sys, n, m)
    return energy_gain(sys, y_start, t0, m, options=options)


# -- fast profile evaluation -------------------------------------------------
#
# The unperturbed orbit does not depend on t0, so a whole profile needs
# the two zone arcs only once; per t0 the kernel is re-weighted on fixed
# Gauss-Legendre panels over the stored dense output.  Panels never span
# an impact time, so the integral is still split exactly there.  Agrees
# with the augmented-state reference `energy_gain` to ~1e-12 (asserted in
# the test suite).


@lru_cache(maxsize=16)
def _orbit_arcs(frozen, y_start, options):
    plus = integrate_zone(frozen, PhaseState(0.0, y_start, 0.0), PLUS, options=options, dense=True)
    minus = integrate_zone(
        frozen, PhaseState(0.0, plus.end.y, 0.0), MINUS, options=options, dense=True
    )
    return plus, minus


def _panel_quadrature_nodes(tau, width, nodes_per_panel=24):
    base, weights = np.polynomial.legendre.leggauss(nodes_per_panel)
    n_panels = max(1, math.ceil(tau / width))
    edges = np.linspace(0.0, tau, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    sigma = (mid[:, None] + half[:, None] * base[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return sigma, w


class SubharmonicEvaluator:
    """Reusable t0 -> M evaluator for a fixed (y_start, m)."""

    def __init__(self, sys, y_start, m, *, options=None):
        options = options or DEFAULT_OPTIONS
        self.sys = sys
        self.y_start = float(y_start)
        self.m = int(m)
        frozen = sys.with_params(epsilon=0.0, restitution=1.0)
        plus, minus = _orbit_arcs(frozen, self.y_start, options)
        width = min(1.0, sys.period / 4.0)
        period = plus.transit_time + minus.transit_time
        batches = []
        for transit, shift0, side in (
            (plus, 0.0, PLUS),
            (minus, plus.transit_time, MINUS),
        ):
            sigma, w = _panel_quadrature_nodes(transit.transit_time, width)
            states = transit.sol.sol(sigma)
            times = np.concatenate(
                [sigma + shift0 + j * period for j in range(self.m)]
            )
            batches.append(
                (
                    np.tile(states[0], self.m),
                    np.tile(states[1], self.m),
                    times,
                    np.tile(w, self.m),
                    side,
                )
            )
        self._batches = batches

    def __call__(self, t0):
        total = 0.0
        for xs, ys, ts, ws, side in self._batches:
            total += float(np.dot(ws, self.sys.poisson_bracket(xs, ys, ts + t0, side)))
        return total


def resonant_velocity(sys, n, m):
    """y on the upper section whose unperturbed orbit has period n T / m."""
    if n < 1 or m < 1 or math.gcd(int(n), int(m)) != 1:
        raise DomainError("n and m must be coprime positive integers")
    return velocity_for_period(sys, n * sys.period / m)


def subharmonic_profile(
    sys,
    n,
    m,
    *,
    num=64,
    options=None,
    locate_zeros=True,
    scan=ZERO_SCAN_SAMPLES,
):
    """Sample the (n, m) subharmonic Melnikov function over one period and
    locate its zeros.

    `num` controls the stored samples; the zero scan uses `scan` uniform
    points (the two grids share evaluations when scan == num).
    """
    options = options or DEFAULT_OPTIONS
    y_start = resonant_velocity(sys, n, m)
    T = sys.period
    f = SubharmonicEvaluator(sys, y_start, m, options=options)
    ts = np.linspace(0.0, T, num, endpoint=False)
    vs = np.array([f(t) for t in ts])
    zeros, degenerate = [], bool(np.max(np.abs(vs)) < DEGENERATE_TOL)
    if locate_zeros and not degenerate:
        if scan == num:
            scan_ts, scan_vs = ts, vs
        else:
            scan_ts = np.linspace(0.0, T, scan, endpoint=False)
            scan_vs = np.array([f(t) for t in scan_ts])
        zeros = locate_profile_zeros(f, scan_ts, scan_vs, T)
    return MelnikovProfile(
        kind="subharmonic",
        period=T,
        t0=ts,
        values=vs,
        zeros=zeros,
        degenerate=degenerate,
        n=int(n),
        m=int(m),
        y_start=y_start,
    )


# ---------------------------------------------------------------------------
# Heteroclinic function
# ---------------------------------------------------------------------------
#
# The orbit runs from z- (as t -> -infinity) through z0 = (0, sqrt(2 c1))
# to z+ (as t -> +infinity).  Integrating it *toward* a saddle is
# numerically unstable: tolerance-level errors pick up the unstable
# direction and grow like e^{lambda s}, so after ~25/lambda time units the
# trajectory is garbage exactly where the integral tail still matters.
# Each leg is therefore computed *away* from its saddle, starting a
# distance eta along the saddle eigenvector (backward in time from z+,
# forward from z-), which is the contracting direction for the transverse
# error.  The neglected tails are O(eta) because the bracket kernel
# vanishes linearly at the saddles; eta = 1e-11 puts them below the
# 1e-10 bound.

_LEG_ETA = 1e-11
_TAIL_BOUND = 1e-10


@dataclass(frozen=True)
class _Leg:
    sol: object
    tau: float
    #: fixed quadrature nodes along the leg: sigma, weights, x, y
    nodes: tuple = None


def _leg(sys, side, eta, options):
    """Unperturbed heteroclinic leg from saddle distance eta to the
    switching line, integrated in the stable-error direction.

    Returns chi(sigma) on [0, tau]: for side = MINUS the forward flow from
    z- + eta v_u; for side = PLUS the backward flow from z+ + eta v_s.
    The original orbit parametrization is psi(s) = chi(tau + s) (minus
    leg, s in [-tau, 0]) and psi(s) = chi(tau - s) (plus leg, s in
    [0, tau]).
    """
    from scipy.integrate import solve_ivp

    frozen = sys.with_params(epsilon=0.0, restitution=1.0)
    x_s = frozen.saddle_x(side)
    lam = frozen.saddle_eigenvalue(side)
    norm = math.hypot(1.0, lam)
    # eigenvector pointing from the saddle toward the switching line with
    # y > 0 (the upper heteroclinic branch)
    vec = np.array([1.0, lam]) / norm if side == MINUS else np.array([-1.0, lam]) / norm
    q0 = np.array([x_s, 0.0]) + eta * vec
    pot = frozen.potential(side)
    orient = 1.0 if side == MINUS else -1.0  # forward / backward flow

    def rhs(sigma, s):
        x, y = s
        return (orient * y, -orient * float(pot.derivative(x)))

    def crossing(sigma, s):
        return s[0]

    crossing.terminal = True
    crossing.direction = -side  # x approaches 0 from the saddle's side

    horizon = (math.log(max(abs(x_s), 1.0) / eta) + 10.0) / lam
    sol = solve_ivp(
        rhs,
        (0.0, horizon),
        q0,
        method=options.method,
        rtol=options.rtol,
        atol=options.atol,
        events=(crossing,),
        dense_output=True,
    )
    if sol.status != 1 or not len(sol.t_events[0]):
        raise TruncationError(
            f"heteroclinic leg on side {side:+d} did not reach the switching line "
            f"within {horizon} time units"
        )
    tau = float(sol.t_events[0][0])
    y_end = float(sol.y_events[0][0][1])
    if abs(frozen.h0(0.0, y_end) - frozen.c1) > 1e-8:
        raise TruncationError(
            f"heteroclinic leg on side {side:+d} lost energy conservation "
            f"({frozen.h0(0.0, y_end) - frozen.c1:.3e})"
        )
    sigma, weights = _panel_quadrature_nodes(tau, min(1.0, sys.period / 4.0))
    states = sol.sol(sigma)
    return _Leg(sol.sol, tau, (sigma, weights, states[0], states[1]))


def _kernel_gradient_scale(sys, side):
    """Crude sup of |grad {H0, H1}| near the saddle over one period, for
    the tail bound."""
    x_s = sys.saddle_x(side)
    ts = np.linspace(0.0, sys.period, 33)
    d = 1e-4
    vals = []
    for dx, dy in ((d, 0.0), (-d, 0.0), (0.0, d), (0.0, -d)):
        vals.append(np.abs(sys.poisson_bracket(x_s + dx, dy, ts, side)) / d)
    return float(np.max(vals))


@lru_cache(maxsize=8)
def _legs(sys, options, eta):
    leg_minus = _leg(sys, MINUS, eta, options)
    leg_plus = _leg(sys, PLUS, eta, options)
    scale = max(_kernel_gradient_scale(sys, PLUS), _kernel_gradient_scale(sys, MINUS))
    lam = min(sys.saddle_eigenvalue(PLUS), sys.saddle_eigenvalue(MINUS))
    tail = 2.0 * scale * eta / lam
    if tail > _TAIL_BOUND:
        raise TruncationError(
            f"heteroclinic tail bound {tail:.3e} exceeds {_TAIL_BOUND}; "
            "the kernel varies too fast near the saddles"
        )
    return leg_minus, leg_plus, tail


def _leg_quadrature(sys, leg, side, time_of_sigma):
    """Gauss-Legendre panels of the bracket kernel along a stored leg."""
    sigma, weights, xs, ys = leg.nodes
    kernel = sys.poisson_bracket(xs, ys, time_of_sigma(sigma), side)
    return float(np.dot(weights, kernel))


def heteroclinic_melnikov(sys, t0, *, options=None, eta=_LEG_ETA):
    """Point evaluation of the heteroclinic Melnikov function: the
    improper Poisson-bracket integral along the unperturbed heteroclinic
    orbit, the orbit passing through (0, sqrt(2 c1)) at time t0."""
    options = options or DEFAULT_OPTIONS
    leg_minus, leg_plus, _ = _legs(sys, options, eta)
    t0 = float(t0)
    m_minus = _leg_quadrature(sys, leg_minus, MINUS, lambda s: t0 + (s - leg_minus.tau))
    m_plus = _leg_quadrature(sys, leg_plus, PLUS, lambda s: t0 + (leg_plus.tau - s))
    return m_minus + m_plus


def heteroclinic_tail_bound(sys, *, options=None, eta=_LEG_ETA):
    """The analytic bound on the neglected saddle tails of
    :func:`heteroclinic_melnikov`."""
    options = options or DEFAULT_OPTIONS
    return _legs(sys, options, eta)[2]


def heteroclinic_profile(sys, *, num=64, options=None, locate_zeros=True, scan=ZERO_SCAN_SAMPLES):
    """Sample the heteroclinic Melnikov function over one period and
    locate its zeros."""
    options = options or DEFAULT_OPTIONS
    T = sys.period

    def f(t0):
        return heteroclinic_melnikov(sys, t0, options=options)

    ts = np.linspace(0.0, T, num, endpoint=False)
    vs = np.array([f(t) for t in ts])
    zeros, degenerate = [], bool(np.max(np.abs(vs)) < DEGENERATE_TOL)
    if locate_zeros and not degenerate:
        if scan == num:
            scan_ts, scan_vs = ts, vs
        else:
            scan_ts = np.linspace(0.0, T, scan, endpoint=False)
            scan_vs = np.array([f(t) for t in scan_ts])
        zeros = locate_profile_zeros(f, scan_ts, scan_vs, T)
    return MelnikovProfile(
        kind="heteroclinic",
        period=T,
        t0=ts,
        values=vs,
        zeros=zeros,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# Zero location on periodic profiles
# ---------------------------------------------------------------------------


def locate_profile_zeros(f, ts, vs, period, *, zero_tol=1e-12, slope_tol=SIMPLE_SLOPE_TOL):
    """Bracket sign changes of the uniform periodic samples (ts, vs) and
    refine each with a safeguarded root solve of the callable to
    `zero_tol`; slopes come from central differences of f."""
    zeros = []
    n = len(ts)
    slope_step = max(1e-7, 1e-6 * period)
    for i in range(n):
        a, fa = ts[i], vs[i]
        if i + 1 < n:
            b, fb = ts[i + 1], vs[i + 1]
        else:
            b, fb = period, vs[0]
        if fa == 0.0:
            root = a
        elif fa * fb < 0.0:
            root = brentq(f, a, b, xtol=zero_tol, rtol=9e-16)
        else:
            continue
        slope = (f(root + slope_step) - f(root - slope_step)) / (2.0 * slope_step)
        zeros.append(MelnikovZero(float(root % period), float(slope), bool(abs(slope) > slope_tol)))
    zeros.sort(key=lambda z: z.t0)
    return zeros
