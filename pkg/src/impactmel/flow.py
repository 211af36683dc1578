"""Event-driven integration of the two-zone system.

Trajectories are integrated one zone at a time with a terminal event on
the switching line x = 0; the integrator never continues a trajectory
across the line.  Crossings are localized by the solver's root finder on
the dense output (safeguarded bracketing), the crossing state is snapped
onto x = 0, restitution y -> r y is applied instantaneously, and the
flow restarts in the other zone.  Transversality is enforced: a crossing
with |y| below the grazing tolerance aborts with a typed error instead
of guessing a continuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, DomainError, FlowError, GrazingImpact, NoCrossing
from .model import (
    MINUS,
    PLUS,
    CosForcing,
    LinearBlockMinus,
    LinearBlockPlus,
    PhaseState,
    zone_of,
)


@dataclass(frozen=True)
class IntegratorOptions:
    """Numerical knobs shared by every flow-based operation.

    The embedded Runge-Kutta pair and tight tolerances keep zone transits
    accurate to ~1e-12 so that Newton residuals downstream are smooth.
    """

    method: str = "DOP853"
    rtol: float = 1e-12
    atol: float = 1e-12
    #: crossings are accepted when |x| is below this after localization
    x_tol: float = 1e-12
    #: |y| at a crossing below this raises GrazingImpact
    graze_tol: float = 1e-8
    #: a single zone transit may not take longer than this
    max_transit_time: float = 40.0
    #: |x| beyond escape_factor * |x_saddle| counts as escape (NoCrossing)
    escape_factor: float = 5.0
    max_step: float = math.inf


DEFAULT_OPTIONS = IntegratorOptions()

#: transits shorter than this are treated as degenerate (grazing) arcs
_MIN_TRANSIT = 1e-11


@dataclass
class ZoneTransit:
    """Outcome of one zone passage, ending on the switching line.

    `end` carries the pre-restitution velocity; `bracket` is the integral
    of {H0, H1}(phi(t), t + offset) accumulated along the arc when it was
    requested.
    """

    end: PhaseState
    transit_time: float
    side: int
    bracket: float = 0.0
    sol: object = None


def _zone_rhs(sys, side, bracket_offset):
    pot = sys.potential(side)
    pert = sys.perturbation
    eps = sys.epsilon

    if bracket_offset is None:

        def rhs(t, s):
            x, y = s
            dx = y
            dy = -float(pot.derivative(x))
            if eps != 0.0:
                dx += eps * float(pert.dy(x, y, t, side))
                dy -= eps * float(pert.dx(x, y, t, side))
            return (dx, dy)

    else:
        shift = float(bracket_offset)

        def rhs(t, s):
            x, y, _ = s
            dx = y
            dy = -float(pot.derivative(x))
            if eps != 0.0:
                dx += eps * float(pert.dy(x, y, t, side))
                dy -= eps * float(pert.dx(x, y, t, side))
            tk = t + shift
            dw = float(pot.derivative(x)) * float(pert.dy(x, y, tk, side)) - y * float(
                pert.dx(x, y, tk, side)
            )
            return (dx, dy, dw)

    return rhs


def _escape_radius(sys, options):
    return options.escape_factor * max(abs(sys.saddle_x(PLUS)), abs(sys.saddle_x(MINUS)))


def _run_zone(sys, start, side, horizon, options, bracket_offset=None, dense=False):
    """Integrate inside one zone until the switching line, escape, or the
    time horizon.  Returns (status, solution) with status in
    {"crossed", "time", "escape"}."""
    rhs = _zone_rhs(sys, side, bracket_offset)
    state0 = [start.x, start.y] if bracket_offset is None else [start.x, start.y, 0.0]

    def crossing(t, s):
        return s[0]

    crossing.terminal = True
    crossing.direction = -side

    escape_x = _escape_radius(sys, options)

    def escape(t, s):
        return abs(s[0]) - escape_x

    escape.terminal = True
    escape.direction = 1

    sol = solve_ivp(
        rhs,
        (start.t, start.t + horizon),
        state0,
        method=options.method,
        rtol=options.rtol,
        atol=options.atol,
        events=(crossing, escape),
        dense_output=dense,
        max_step=options.max_step,
    )
    if sol.status < 0:
        raise FlowError(f"integrator failed: {sol.message}")
    if sol.status == 1:
        status = "crossed" if len(sol.t_events[0]) else "escape"
    else:
        status = "time"
    return status, sol


def integrate_zone(
    sys,
    start,
    side=None,
    *,
    options=None,
    bracket_offset=None,
    max_time=None,
    dense=False,
):
    """Flow from `start` through one zone to the next transversal crossing
    of x = 0.

    `start` must lie in the zone's closure with inward motion.  The
    returned state has x snapped to 0 and the pre-restitution velocity.
    Raises GrazingImpact for |y| <= graze_tol at the crossing and
    NoCrossing when the time or escape guard trips (e.g. past a saddle).
    """
    options = options or DEFAULT_OPTIONS
    if side is None:
        side = zone_of(start.x, start.y)
    if start.x * side < -options.x_tol:
        raise DomainError(f"start {start} is not in the closure of zone {side:+d}")
    if abs(start.x) <= options.x_tol and start.y * side <= 0.0:
        raise DomainError(f"start {start} on the switching line does not enter zone {side:+d}")
    horizon = options.max_transit_time if max_time is None else min(max_time, options.max_transit_time)

    status, sol = _run_zone(sys, start, side, horizon, options, bracket_offset, dense)
    if status == "escape":
        raise NoCrossing(f"trajectory escaped zone {side:+d} (past the saddle)")
    if status == "time":
        raise NoCrossing(f"no return to the switching line within {horizon} time units")

    t_cross = float(sol.t_events[0][0])
    state_cross = sol.y_events[0][0]
    transit = t_cross - start.t
    y_cross = float(state_cross[1])
    if transit < _MIN_TRANSIT or abs(y_cross) <= options.graze_tol:
        raise GrazingImpact(
            f"grazing crossing (|y| = {abs(y_cross):.3e}) after {transit:.3e} time units",
            state=PhaseState(0.0, y_cross, t_cross),
        )
    end = PhaseState(0.0, y_cross, t_cross)
    bracket = float(state_cross[2]) if bracket_offset is not None else 0.0
    return ZoneTransit(end, transit, side, bracket, sol if dense else None)


def flow_in_zone(sys, start, side, duration, *, options=None, bracket_offset=None, dense=False):
    """Flow for a fixed time inside one zone; an interior crossing of the
    switching line is an error (used by stroboscopic maps near the
    saddles).  `duration` may be negative (backward flow).

    Returns (end_state, bracket_integral, sol_or_None).
    """
    options = options or DEFAULT_OPTIONS
    rhs = _zone_rhs(sys, side, bracket_offset)
    state0 = [start.x, start.y] if bracket_offset is None else [start.x, start.y, 0.0]

    def crossing(t, s):
        return s[0]

    crossing.terminal = True
    crossing.direction = 0

    sol = solve_ivp(
        rhs,
        (start.t, start.t + duration),
        state0,
        method=options.method,
        rtol=options.rtol,
        atol=options.atol,
        events=(crossing,),
        dense_output=dense,
        max_step=options.max_step,
    )
    if sol.status < 0:
        raise FlowError(f"integrator failed: {sol.message}")
    if sol.status == 1:
        raise FlowError(
            f"trajectory left zone {side:+d} after {float(sol.t_events[0][0]) - start.t:+.6g} "
            "time units during an in-zone flow"
        )
    end = PhaseState(float(sol.y[0, -1]), float(sol.y[1, -1]), float(sol.t[-1]))
    bracket = float(sol.y[2, -1]) if bracket_offset is not None else 0.0
    return end, bracket, (sol if dense else None)


def apply_restitution(restitution, state, *, x_tol=1e-12):
    """Instantaneous velocity reduction y -> r y on the switching line."""
    if abs(state.x) > x_tol:
        raise DomainError("restitution applies on the switching line only")
    return PhaseState(0.0, restitution * state.y, state.t)


# ---------------------------------------------------------------------------
# Impact sequences and concatenated trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImpactRecord:
    """One entry (y^i, t^i) of an impact sequence; y is post-restitution.
    Index 0 is the initial section point, not an impact."""

    index: int
    y: float
    t: float


@dataclass
class ImpactSequence:
    """Ordered impacts of a trajectory started on the upper section.

    For orbits inside the region bounded by the separatrices the sign of
    y alternates with the index.  `bracket` is the Poisson-bracket
    integral accumulated along the (perturbed) trajectory when requested.
    """

    records: list
    truncated: bool = False
    bracket: float = 0.0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def final(self):
        return self.records[-1]

    def times(self):
        return np.array([rec.t for rec in self.records])

    def velocities(self):
        return np.array([rec.y for rec in self.records])


def impact_sequence(
    sys,
    y0,
    t0,
    count,
    *,
    options=None,
    collect_bracket=False,
    max_total_time=None,
    allow_truncation=False,
):
    """Alternate zone flows and restitution `count` times from (0, y0, t0)
    on the upper section.

    Returns an :class:`ImpactSequence` whose records are
    (y^0, t^0) = (y0, t0) followed by the `count` post-restitution impact
    states.  With ``collect_bracket=True`` the integral of
    {H0, H1}(phi(t), t) along the perturbed trajectory is accumulated.
    Flow errors carry the index of the failing transit; with
    ``allow_truncation=True`` they produce a truncated sequence instead.
    """
    options = options or DEFAULT_OPTIONS
    if y0 <= 0.0:
        raise DomainError("impact sequences start on the upper section (y0 > 0)")
    records = [ImpactRecord(0, float(y0), float(t0))]
    state = PhaseState(0.0, float(y0), float(t0))
    side = PLUS
    bracket = 0.0
    deadline = None if max_total_time is None else float(t0) + max_total_time
    for i in range(1, count + 1):
        budget = None if deadline is None else deadline - state.t
        if budget is not None and budget <= 0.0:
            if allow_truncation:
                return ImpactSequence(records, truncated=True, bracket=bracket)
            raise NoCrossing(f"total time budget exhausted before impact {i}", index=i)
        try:
            transit = integrate_zone(
                sys,
                state,
                side,
                options=options,
                bracket_offset=0.0 if collect_bracket else None,
                max_time=budget,
            )
        except (GrazingImpact, NoCrossing) as exc:
            exc.index = i
            if allow_truncation:
                return ImpactSequence(records, truncated=True, bracket=bracket)
            raise
        bracket += transit.bracket
        state = apply_restitution(sys.restitution, transit.end, x_tol=options.x_tol)
        records.append(ImpactRecord(i, state.y, state.t))
        side = -side
    return ImpactSequence(records, truncated=False, bracket=bracket)


@dataclass
class Trajectory:
    """Sampled concatenated flow with its impact sequence."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    zone: np.ndarray
    impact_flag: np.ndarray
    impacts: ImpactSequence

    def to_csv(self, target, metadata=None):
        """Write `t,x,y,zone,impact_flag` rows; metadata becomes
        '#'-prefixed header lines (sorted keys, no timestamps)."""
        from .output import write_csv

        columns = [
            ("t", self.t),
            ("x", self.x),
            ("y", self.y),
            ("zone", self.zone.astype(int)),
            ("impact_flag", self.impact_flag.astype(int)),
        ]
        write_csv(target, columns, metadata)


def propagate(sys, start, t_end, *, options=None, record_dt=None, max_impacts=None):
    """Concatenated flow from an arbitrary initial state to time `t_end`,
    applying restitution at every transversal crossing.

    Sampling: arc endpoints always; interior points on a `record_dt` grid
    when given.  Stops early (truncated impact sequence) if `max_impacts`
    is reached.
    """
    options = options or DEFAULT_OPTIONS
    state = PhaseState(float(start.x), float(start.y), float(start.t))
    t_parts, x_parts, y_parts, z_parts, f_parts = [], [], [], [], []
    records = [ImpactRecord(0, state.y, state.t)]
    n_impacts = 0
    truncated = False

    def emit_arc(sol, side, t_stop, crossed):
        ts = [sol.t[0]]
        if record_dt is not None:
            grid = np.arange(sol.t[0] + record_dt, t_stop, record_dt)
            ts.extend(grid.tolist())
        ts.append(t_stop)
        ts = np.array(ts)
        vals = sol.sol(ts) if sol.sol is not None else None
        if vals is None:
            ts = np.array([sol.t[0], t_stop])
            vals = np.column_stack([sol.y[:, 0], sol.y[:, -1]])
        t_parts.append(ts)
        x_parts.append(vals[0])
        y_parts.append(vals[1])
        z_parts.append(np.full(ts.shape, side, dtype=int))
        flags = np.zeros(ts.shape, dtype=int)
        if crossed:
            flags[-1] = 1
        f_parts.append(flags)

    while state.t < t_end - 1e-13:
        side = zone_of(state.x, state.y)
        horizon = min(t_end - state.t, options.max_transit_time)
        status, sol = _run_zone(sys, state, side, horizon, options, dense=True)
        if status == "escape":
            raise NoCrossing("trajectory escaped past the saddle during propagation")
        if status == "crossed":
            t_cross = float(sol.t_events[0][0])
            y_cross = float(sol.y_events[0][0][1])
            if abs(y_cross) <= options.graze_tol:
                raise GrazingImpact(
                    f"grazing crossing (|y| = {abs(y_cross):.3e}) during propagation",
                    state=PhaseState(0.0, y_cross, t_cross),
                )
            emit_arc(sol, side, t_cross, crossed=True)
            # snap the sampled crossing point onto the line
            x_parts[-1][-1] = 0.0
            state = apply_restitution(sys.restitution, PhaseState(0.0, y_cross, t_cross), x_tol=options.x_tol)
            n_impacts += 1
            records.append(ImpactRecord(n_impacts, state.y, state.t))
            if max_impacts is not None and n_impacts >= max_impacts:
                truncated = True
                break
        else:
            t_stop = float(sol.t[-1])
            emit_arc(sol, side, t_stop, crossed=False)
            if t_stop < t_end - 1e-13:
                raise NoCrossing(
                    f"zone transit exceeded {options.max_transit_time} time units during propagation"
                )
            state = PhaseState(float(sol.y[0, -1]), float(sol.y[1, -1]), t_stop)
            break

    seq = ImpactSequence(records, truncated=truncated)
    return Trajectory(
        np.concatenate(t_parts),
        np.concatenate(x_parts),
        np.concatenate(y_parts),
        np.concatenate(z_parts),
        np.concatenate(f_parts),
        seq,
    )


# ---------------------------------------------------------------------------
# Closed-form flow of the linear block
# ---------------------------------------------------------------------------


def _require_linear_block(sys):
    if not (isinstance(sys.v_plus, LinearBlockPlus) and isinstance(sys.v_minus, LinearBlockMinus)):
        raise ConfigError("closed-form flow is available for the linear block only")
    if sys.epsilon != 0.0 and not isinstance(sys.perturbation, CosForcing):
        raise ConfigError("closed-form perturbed flow requires the cos forcing")


def linear_flow_constants(sys, start, side):
    """Constants (C1, C2) of the zone solution
    x(t) = C1 e^t + C2 e^{-t} +- 1 + eps cos(w t)/(1 + w^2)."""
    _require_linear_block(sys)
    amp = sys.epsilon / (1.0 + sys.omega**2) if sys.epsilon != 0.0 else 0.0
    u = start.x - side - amp * math.cos(sys.omega * start.t)
    v = start.y + amp * sys.omega * math.sin(sys.omega * start.t)
    c1 = 0.5 * (u + v) * math.exp(-start.t)
    c2 = 0.5 * (u - v) * math.exp(start.t)
    return c1, c2


def closed_form_linear_flow(sys, start, side, t):
    """Exact zone flow of the linear block (hyperbolic modes plus, for
    eps > 0 with cos forcing, the particular harmonic response)."""
    c1, c2 = linear_flow_constants(sys, start, side)
    amp = sys.epsilon / (1.0 + sys.omega**2) if sys.epsilon != 0.0 else 0.0
    t = float(t)
    x = c1 * math.exp(t) + c2 * math.exp(-t) + side + amp * math.cos(sys.omega * t)
    y = c1 * math.exp(t) - c2 * math.exp(-t) - amp * sys.omega * math.sin(sys.omega * t)
    return PhaseState(x, y, t)
