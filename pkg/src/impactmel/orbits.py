"""Periodic orbits, dissipative thresholds, continuation and the
splitting of the separatrices.

An (n, m)-periodic orbit crosses the switching line exactly 2m times per
period n T and is a fixed point (up to the time shift n T) of the m-th
iterate of the impact map.  The two residual components used by the
Newton solver measure the energy mismatch on the section and the time
mismatch,

    ( H0(0, y_final) - H0(0, y0),  t_final - t0 - n T ),

which vanish together exactly on such orbits and which, to first order,
reduce to the subharmonic Melnikov function and the resonance condition.
Seeds therefore come from the resonant velocity and the Melnikov zeros
(conservative case) or the zeros of the dissipative balance equation
(restitution case).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConfigError,
    DegenerateMelnikov,
    DomainError,
    FlowError,
    NoConvergence,
    NoSeed,
    NoZero,
    ResidualUnavailable,
    SingularJacobian,
)
from .flow import DEFAULT_OPTIONS, PhaseState, flow_in_zone, impact_sequence
from .impact_map import SectionPoint, velocity_for_period
from .melnikov import (
    SubharmonicEvaluator,
    heteroclinic_profile,
    subharmonic_profile,
)
from .model import MINUS, PLUS, system_from_config, system_to_config


@dataclass(frozen=True)
class NewtonOptions:
    """Damped-Newton knobs for the orbit solvers."""

    tol: float = 1e-10
    max_iter: int = 50
    #: forward finite-difference step, floored at fd_step and scaled by |x|
    fd_step: float = 1e-7
    max_backtracks: int = 8
    #: the converged orbit must re-close under forward integration this well
    verify_tol: float = 1e-8
    #: abort early when the residual has not halved over this many
    #: iterations (0 disables); used by continuation to fail fast at folds
    stall_window: int = 0


DEFAULT_NEWTON = NewtonOptions()


@dataclass(frozen=True)
class OrbitSpec:
    """Target resonance and Newton seed."""

    n: int
    m: int
    y0: float
    t0: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or math.gcd(int(self.n), int(self.m)) != 1:
            raise DomainError("n and m must be coprime positive integers")


@dataclass
class OrbitSolution:
    """A verified (n, m)-periodic orbit of the impact map."""

    y0: float
    t0: float
    n: int
    m: int
    epsilon: float
    restitution: float
    residual_norm: float
    impacts_per_period: int
    closure_gap: float
    iterations: int
    residual_history: list

    @property
    def spec(self):
        return OrbitSpec(self.n, self.m, self.y0, self.t0)

    def to_dict(self):
        return {
            "y0": self.y0,
            "t0": self.t0,
            "n": self.n,
            "m": self.m,
            "epsilon": self.epsilon,
            "r": self.restitution,
            "residual_norm": self.residual_norm,
            "impacts_per_period": self.impacts_per_period,
            "closure_gap": self.closure_gap,
            "iterations": self.iterations,
        }


def periodicity_residual(sys, y0, t0, n, m, *, options=None):
    """The two-component periodicity defect of (0, y0, t0) under m impact-map
    iterates; both components vanish iff the point generates an
    (n, m)-periodic orbit.  Flow failures surface as ResidualUnavailable."""
    options = options or DEFAULT_OPTIONS
    T = sys.period
    if y0 <= 0.0:
        raise ResidualUnavailable(f"section velocity {y0} left the upper section")
    try:
        seq = impact_sequence(sys, y0, t0, 2 * m, options=options, max_total_time=20.0 * n * T)
    except (FlowError, DomainError) as exc:
        raise ResidualUnavailable(str(exc), cause=exc) from exc
    yf, tf = seq.final.y, seq.final.t
    return np.array([0.5 * (yf * yf - y0 * y0), tf - t0 - n * T])


def _fd_jacobian(fun, x, f0, step):
    J = np.empty((2, 2))
    for i in range(2):
        h = max(step, step * abs(x[i]))
        xp = x.copy()
        xp[i] += h
        try:
            fp = fun(xp)
        except ResidualUnavailable:
            xp[i] = x[i] - h
            fp = fun(xp)
            h = -h
        J[:, i] = (fp - f0) / h
    return J


def _newton2(fun, x0, newton):
    """Damped 2-D Newton with forward-difference Jacobian; halves the step
    on residual increase or residual failure."""
    x = np.asarray(x0, dtype=float).copy()
    f = fun(x)
    history = [float(np.linalg.norm(f, np.inf))]
    for it in range(1, newton.max_iter + 1):
        if history[-1] < newton.tol:
            return x, f, history, it - 1
        if (
            newton.stall_window
            and len(history) > newton.stall_window
            and history[-1] > 0.5 * history[-1 - newton.stall_window]
        ):
            raise NoConvergence(
                f"Newton stalled (residual {history[-1]:.3e} after {it - 1} iterations)"
            )
        try:
            J = _fd_jacobian(fun, x, f, newton.fd_step)
        except ResidualUnavailable as exc:
            raise NoConvergence(f"residual not differentiable at {x}: {exc}") from exc
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"singular Jacobian at {x}") from exc
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian(f"non-finite Newton step at {x}")
        lam = 1.0
        accepted = False
        for _ in range(newton.max_backtracks):
            try:
                f_try = fun(x + lam * dx)
            except ResidualUnavailable:
                lam *= 0.5
                continue
            if np.linalg.norm(f_try, np.inf) < history[-1] or lam <= 2.0 ** -(newton.max_backtracks - 1):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise NoConvergence(
                f"Newton stalled at {x} (residual {history[-1]:.3e}, no damped step accepted)"
            )
        x = x + lam * dx
        f = f_try
        history.append(float(np.linalg.norm(f, np.inf)))
    if history[-1] < newton.tol:
        return x, f, history, newton.max_iter
    raise NoConvergence(
        f"Newton did not reach {newton.tol} in {newton.max_iter} iterations "
        f"(residual {history[-1]:.3e})"
    )


def _verify_orbit(sys, y0, t0, n, m, options, verify_tol):
    """Re-integrate the converged point forward and check closure; the
    sequence structure guarantees exactly 2m transversal crossings."""
    T = sys.period
    seq = impact_sequence(sys, y0, t0, 2 * m, options=options, max_total_time=20.0 * n * T)
    gap = math.hypot(seq.final.y - y0, seq.final.t - (t0 + n * T))
    if gap > verify_tol:
        raise NoConvergence(f"converged point fails the closure check (gap {gap:.3e})")
    times = seq.times()
    if np.any(np.diff(times) <= 0.0):
        raise NoConvergence("impact times are not strictly increasing")
    return gap, len(seq) - 1


def find_periodic(sys, spec, *, options=None, newton=None):
    """Damped-Newton solve of the periodicity residual from the seed in
    `spec`.

    For the unperturbed conservative system the time component is the
    only active equation (every t0 works); the solver pins t0 at the seed
    and returns the resonant member of the unperturbed family.
    """
    options = options or DEFAULT_OPTIONS
    newton = newton or DEFAULT_NEWTON
    n, m = spec.n, spec.m
    if sys.epsilon == 0.0 and sys.restitution == 1.0:
        ybar = velocity_for_period(sys, n * sys.period / m)
        res = periodicity_residual(sys, ybar, spec.t0, n, m, options=options)
        gap, impacts = _verify_orbit(sys, ybar, spec.t0, n, m, options, newton.verify_tol)
        return OrbitSolution(
            ybar, spec.t0, n, m, sys.epsilon, sys.restitution,
            float(np.linalg.norm(res, np.inf)), impacts, gap, 0,
            [float(np.linalg.norm(res, np.inf))],
        )

    def fun(z):
        return periodicity_residual(sys, z[0], z[1], n, m, options=options)

    x, f, history, iters = _newton2(fun, (spec.y0, spec.t0), newton)
    gap, impacts = _verify_orbit(sys, x[0], x[1], n, m, options, newton.verify_tol)
    return OrbitSolution(
        float(x[0]), float(x[1]), n, m, sys.epsilon, sys.restitution,
        float(np.linalg.norm(f, np.inf)), impacts, gap, iters, history,
    )


def seed_from_melnikov(sys, n, m, zero_index=1, *, profile=None, options=None):
    """Theorem-backed seed: the resonant velocity paired with the
    `zero_index`-th simple Melnikov zero (1-based, ordered in t0)."""
    profile = profile or subharmonic_profile(sys, n, m, options=options)
    zeros = profile.simple_zeros()
    if profile.degenerate or not zeros:
        raise DegenerateMelnikov(
            f"the (n, m) = ({n}, {m}) Melnikov function has no simple zero; "
            "first-order theory gives no seed"
        )
    if not 1 <= zero_index <= len(zeros):
        raise DomainError(f"zero index {zero_index} out of range (1..{len(zeros)})")
    return OrbitSpec(n, m, profile.y_start, zeros[zero_index - 1].t0)


# ---------------------------------------------------------------------------
# Dissipative threshold, seeds and scaled orbits
# ---------------------------------------------------------------------------


def _circular_offset(t, ref, period):
    d = (t - ref) % period
    if d > 0.5 * period:
        d -= period
    return d


def _critical_points(f, ts, vs, period, *, step):
    """Critical points of a sampled periodic function, classified by the
    sample slopes and refined on the finite-difference derivative."""

    def deriv(t):
        return (f(t + step) - f(t - step)) / (2.0 * step)

    ts2 = np.concatenate([ts, ts + period])
    vs2 = np.concatenate([vs, vs])
    mids = 0.5 * (ts2[:-1] + ts2[1:])
    slopes = np.diff(vs2)
    points = []
    for i in range(len(ts)):
        if slopes[i] == 0.0 or slopes[i] * slopes[i + 1] >= 0.0:
            continue
        root = brentq(deriv, mids[i], mids[i + 1], xtol=1e-12, rtol=9e-16) % period
        kind = "max" if slopes[i] > 0.0 else "min"
        points.append((root, kind))
    return points


def threshold_anchor(f, ts, vs, period, t_zero, *, step=None):
    """The reference time t_M for the dissipative threshold: the local
    maximum of the profile nearest to the zero t_zero, demoted to the
    nearest critical point if another critical point lies strictly
    between them."""
    step = step or max(1e-7, 1e-6 * period)
    crit = _critical_points(f, ts, vs, period, step=step)
    maxima = [t for t, kind in crit if kind == "max"]
    if not maxima:
        raise DegenerateMelnikov("profile has no local maximum to anchor the threshold")
    t_M = min(maxima, key=lambda t: abs(_circular_offset(t, t_zero, period)))
    d = _circular_offset(t_M, t_zero, period)
    blockers = [
        t
        for t, _ in crit
        if 0.0 < abs(_circular_offset(t, t_zero, period)) < abs(d) - 1e-12
        and _circular_offset(t, t_zero, period) * d > 0.0
    ]
    if blockers:
        t_M = min(blockers, key=lambda t: abs(_circular_offset(t, t_zero, period)))
    return t_M


def dissipation_threshold(sys, n, m, *, profile=None, options=None, full=False):
    """Largest dissipation/forcing ratio for which the scaled balance
    equation still has a zero:  M(t_M) / (2 m y_res^2), with t_M anchored
    at the Melnikov zero as above."""
    options = options or DEFAULT_OPTIONS
    profile = profile or subharmonic_profile(sys, n, m, options=options)
    if profile.n != n or profile.m != m:
        raise DomainError("supplied profile does not match the requested resonance")
    zeros = profile.simple_zeros()
    if profile.degenerate or not zeros:
        raise DegenerateMelnikov(
            f"the (n, m) = ({n}, {m}) Melnikov function is degenerate; no threshold"
        )
    ybar = profile.y_start
    f = SubharmonicEvaluator(sys, ybar, profile.m, options=options)
    t_M = threshold_anchor(f, profile.t0, profile.values, profile.period, zeros[0].t0)
    value = f(t_M) / (2.0 * m * ybar * ybar)
    if value <= 0.0:
        raise DegenerateMelnikov("threshold anchor has non-positive Melnikov value")
    return (value, t_M) if full else value


def dissipative_seed_times(sys, n, m, ratio, *, profile=None, options=None):
    """Zeros of the dissipative balance equation

        -2 m (ratio) y_res^2 + M(t0) = 0

    (forcing scale normalized to 1), one near each simple Melnikov zero,
    ordered like the zeros.  Requires 0 < ratio < threshold."""
    options = options or DEFAULT_OPTIONS
    if ratio <= 0.0:
        raise DomainError("the dissipation/forcing ratio must be positive")
    profile = profile or subharmonic_profile(sys, n, m, options=options)
    rho = dissipation_threshold(sys, n, m, profile=profile, options=options)
    if ratio >= rho:
        raise NoSeed(
            f"ratio {ratio} is not below the threshold {rho}; the balance equation "
            "has no simple zero"
        )
    ybar = profile.y_start
    level = 2.0 * m * ratio * ybar * ybar
    f = SubharmonicEvaluator(sys, ybar, profile.m, options=options)

    def g(t0):
        return f(t0) - level

    seeds = []
    for zero in profile.simple_zeros():
        t_M = threshold_anchor(f, profile.t0, profile.values, profile.period, zero.t0)
        d = _circular_offset(t_M, zero.t0, profile.period)
        lo, hi = sorted((zero.t0, zero.t0 + d))
        if g(lo) * g(hi) >= 0.0:
            continue
        root = brentq(g, lo, hi, xtol=1e-12, rtol=9e-16) % profile.period
        seeds.append(float(root))
    if not seeds:
        raise NoSeed(f"no balance-equation zero found for ratio {ratio}")
    return seeds


def scaled_system(sys, delta, ratio, *, eps_tilde=1.0):
    """The system at distance delta along the scaling ray
    eps = eps_tilde * delta, r = 1 - (ratio * eps_tilde) * delta."""
    r = 1.0 - ratio * eps_tilde * delta
    if r <= 0.0:
        raise ConfigError(f"scaling ray leaves r > 0 at delta = {delta}")
    return sys.with_params(epsilon=eps_tilde * delta, restitution=r)


def find_periodic_dissipative(sys, spec, eps_tilde, r_tilde, delta, *, options=None, newton=None):
    """Newton solve on the restitution impact map at the scaled parameters
    eps = eps_tilde * delta, r = 1 - r_tilde * delta."""
    if eps_tilde <= 0.0 or r_tilde < 0.0 or delta < 0.0:
        raise DomainError("scaling parameters must satisfy eps_tilde > 0, r_tilde >= 0, delta >= 0")
    scaled = scaled_system(sys, delta, r_tilde / eps_tilde, eps_tilde=eps_tilde)
    return find_periodic(scaled, spec, options=options, newton=newton)


# ---------------------------------------------------------------------------
# Continuation
# ---------------------------------------------------------------------------


@dataclass
class ContinuationResult:
    """Natural-parameter continuation path; `fold` is the last parameter
    that still carried an orbit when the target was not reached."""

    params: list
    orbits: list
    reached_target: bool
    fold: float

    @property
    def final(self):
        return self.orbits[-1]


_CONTINUATION_FAILURES = (
    NoConvergence,
    SingularJacobian,
    ResidualUnavailable,
    FlowError,
    ConfigError,
    DomainError,
)


def _phase_distance(a, b, period):
    d = abs(a - b) % period
    return min(d, period - d)


def continue_orbit(
    make_system,
    spec,
    start,
    *,
    target=None,
    step0=None,
    growth=1.3,
    min_step=1e-6,
    max_fold_failures=3,
    max_steps=5000,
    phase_jump_fraction=0.1,
    options=None,
    newton=None,
):
    """Track an orbit branch in one parameter.

    Steps grow by `growth` on success and halve on failure; the branch
    ends (a fold is declared) after `max_fold_failures` consecutive
    failures at the minimum step.  With a `target` the last step lands on
    it exactly.

    A converged point whose phase moves by more than
    `phase_jump_fraction` of the forcing period (or whose section
    velocity moves by more than 10%) is rejected like a failure: with
    several coexisting orbit families a too-large step can otherwise hop
    branches silently.  Seeds come from secant extrapolation of the last
    two points; continuation solves default to a 15-iteration Newton
    budget with a fail-fast stall window.
    """
    newton = newton or NewtonOptions(max_iter=15, stall_window=6)
    sol = find_periodic(make_system(start), spec, options=options, newton=newton)
    params, orbits = [start], [sol]
    if target is not None and target == start:
        return ContinuationResult(params, orbits, True, None)
    direction = 1.0 if target is None or target > start else -1.0
    if step0 is None:
        step0 = abs(target - start) / 20.0 if target is not None else 0.05
    step = step0
    p = start
    fails_at_min = 0
    period = make_system(start).period
    for _ in range(max_steps):
        if target is not None:
            remaining = (target - p) * direction
            if remaining <= 0.0:
                return ContinuationResult(params, orbits, True, None)
            p_next = p + direction * min(step, remaining)
        else:
            p_next = p + step
        last = orbits[-1]
        if len(orbits) >= 2 and params[-1] != params[-2]:
            # secant predictor along the branch
            frac = (p_next - params[-1]) / (params[-1] - params[-2])
            prev = orbits[-2]
            seed = OrbitSpec(
                last.n,
                last.m,
                last.y0 + frac * (last.y0 - prev.y0),
                last.t0 + frac * (last.t0 - prev.t0),
            )
        else:
            seed = last.spec
        try:
            sol = find_periodic(make_system(p_next), seed, options=options, newton=newton)
            if _phase_distance(sol.t0, last.t0, period) > phase_jump_fraction * period or abs(
                sol.y0 - last.y0
            ) > max(0.02, 0.1 * abs(last.y0)):
                raise NoConvergence("converged point left the tracked branch")
        except _CONTINUATION_FAILURES:
            if step <= min_step * (1.0 + 1e-9):
                fails_at_min += 1
                if fails_at_min >= max_fold_failures:
                    break
            step = max(0.5 * step, min_step)
            continue
        fails_at_min = 0
        p = p_next
        params.append(p)
        orbits.append(sol)
        if target is not None and direction * (target - p) <= 0.0:
            return ContinuationResult(params, orbits, True, None)
        step *= growth
    return ContinuationResult(params, orbits, False, p)


def continue_in_amplitude(
    sys, n, m, eps_target, *, eps_start=1e-3, zero_index=1, seed=None, options=None, newton=None
):
    """Continuation of a conservative orbit branch in the forcing
    amplitude, seeded from a Melnikov zero at `eps_start`."""
    spec = seed or seed_from_melnikov(sys, n, m, zero_index, options=options)
    return continue_orbit(
        lambda e: sys.with_params(epsilon=e),
        spec,
        eps_start,
        target=eps_target,
        options=options,
        newton=newton,
    )


def continue_in_delta(
    sys,
    n,
    m,
    ratio,
    *,
    delta_target=None,
    delta_start=1e-2,
    delta_cap=20.0,
    zero_index=1,
    eps_tilde=1.0,
    seed=None,
    step0=None,
    options=None,
    newton=None,
):
    """Continuation of a dissipative orbit branch along the scaling ray of
    slope `ratio`, from the balance-equation seed toward `delta_target`
    or until the branch folds."""
    if seed is None:
        profile = subharmonic_profile(sys, n, m, options=options)
        times = dissipative_seed_times(sys, n, m, ratio, profile=profile, options=options)
        if not 1 <= zero_index <= len(times):
            raise NoSeed(f"no dissipative seed with index {zero_index} (found {len(times)})")
        seed = OrbitSpec(n, m, profile.y_start, times[zero_index - 1])
    target = delta_target if delta_target is not None else delta_cap
    result = continue_orbit(
        lambda d: scaled_system(sys, d, ratio, eps_tilde=eps_tilde),
        seed,
        delta_start,
        target=target,
        step0=step0,
        options=options,
        newton=newton,
    )
    if delta_target is None and result.reached_target:
        # ran into the safety cap rather than a fold
        result = ContinuationResult(result.params, result.orbits, False, result.params[-1])
    return result


# ---------------------------------------------------------------------------
# Existence curves
# ---------------------------------------------------------------------------


def min_forcing(one_minus_r, n, omega):
    """Analytic lower boundary of the (n, 1) existence region for the
    linear block in terms of R = 1 - r (negative-valued as published;
    compare magnitudes).  Its slope at R = 0 is -1/threshold, which makes
    the boundary tangent to the scaling ray at the conservative corner."""
    R = np.asarray(one_minus_r, dtype=float)
    half = n * math.pi / omega
    c, s = math.cosh(half), math.sinh(half)
    return (
        (1.0 + omega**2)
        * R
        * (1.0 - c)
        / np.sqrt(omega**2 * s**2 * R**2 + (2.0 - R) ** 2 * (1.0 + c) ** 2)
    )


@dataclass
class ExistenceCurveEntry:
    ratio: float
    delta_fold: float
    restitution: float
    epsilon: float


@dataclass
class ExistenceCurve:
    """Fold endpoints of the scaling rays, one per dissipation/forcing
    ratio; together they trace the existence boundary in the (r, eps)
    plane, anchored at the conservative corner (1, 0)."""

    n: int
    m: int
    omega: float
    rho: float
    entries: list

    def points(self):
        pts = [(1.0, 0.0)]
        pts.extend(
            (e.restitution, e.epsilon) for e in self.entries if e.delta_fold is not None
        )
        return pts

    def reference_lower_boundary(self, one_minus_r):
        """|min_forcing| at the given R = 1 - r (linear-block reference)."""
        return np.abs(min_forcing(one_minus_r, self.n, self.omega))

    def tangent_ray(self, one_minus_r):
        """The ray 1 - r = rho * eps at the conservative corner."""
        return np.asarray(one_minus_r, dtype=float) / self.rho


def _existence_point(config, n, m, ratio, delta_start, zero_index):
    sys = system_from_config(config)
    try:
        result = continue_in_delta(
            sys, n, m, ratio, delta_start=delta_start, zero_index=zero_index
        )
    except (NoSeed, DegenerateMelnikov) + _CONTINUATION_FAILURES:
        return ratio, None
    return ratio, result.fold if not result.reached_target else result.params[-1]


def existence_curve(
    sys,
    n,
    m,
    ratios,
    *,
    delta_start=1e-2,
    zero_index=1,
    workers=1,
    options=None,
):
    """Track one scaling ray per ratio until its fold and collect the fold
    endpoints (empty segments allowed: a ray whose seed already fails is
    recorded without a fold)."""
    profile = subharmonic_profile(sys, n, m, options=options)
    rho = dissipation_threshold(sys, n, m, profile=profile, options=options)
    config = system_to_config(sys)
    jobs = [(config, n, m, float(b), delta_start, zero_index) for b in ratios]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_existence_point_star, jobs))
    else:
        results = [_existence_point(*job) for job in jobs]
    entries = []
    for ratio, fold in results:
        if fold is None:
            entries.append(ExistenceCurveEntry(ratio, None, None, None))
        else:
            entries.append(
                ExistenceCurveEntry(ratio, fold, 1.0 - ratio * fold, fold)
            )
    return ExistenceCurve(int(n), int(m), sys.omega, rho, entries)


def _existence_point_star(job):
    return _existence_point(*job)


# ---------------------------------------------------------------------------
# Saddle periodic orbits, manifolds and the splitting distance
# ---------------------------------------------------------------------------


def _strobe(sys, point, t0, side, options):
    state = PhaseState(float(point[0]), float(point[1]), float(t0))
    end, _, _ = flow_in_zone(sys, state, side, sys.period, options=options)
    return np.array([end.x, end.y])


def _strobe_jacobian(sys, point, t0, side, options, step=1e-6):
    J = np.empty((2, 2))
    for i in range(2):
        dz = np.zeros(2)
        dz[i] = step
        J[:, i] = (
            _strobe(sys, point + dz, t0, side, options)
            - _strobe(sys, point - dz, t0, side, options)
        ) / (2.0 * step)
    return J


def saddle_orbit_point(sys, side, t0, *, options=None, tol=1e-12, max_iter=25):
    """The hyperbolic T-periodic orbit continuing the zone saddle under
    the forcing: its point on the time slice t0, found as the fixed point
    of the zone-restricted stroboscopic map."""
    options = options or DEFAULT_OPTIONS
    z = sys.saddle_point(side).astype(float)
    if sys.epsilon == 0.0:
        return PhaseState(z[0], z[1], float(t0))
    for _ in range(max_iter):
        F = _strobe(sys, z, t0, side, options) - z
        if np.linalg.norm(F, np.inf) < tol:
            return PhaseState(z[0], z[1], float(t0))
        J = _strobe_jacobian(sys, z, t0, side, options) - np.eye(2)
        try:
            dz = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian("stroboscopic Jacobian is singular at the saddle") from exc
        z = z + dz
    raise NoConvergence(
        f"saddle periodic orbit Newton did not reach {tol} in {max_iter} iterations"
    )


def _manifold_eigvector(sys, fp, t0, side, options, stable):
    J = _strobe_jacobian(sys, fp.point, t0, side, options)
    evals, evecs = np.linalg.eig(J)
    if np.max(np.abs(evals.imag)) > 1e-6:
        raise SingularJacobian("stroboscopic map is not hyperbolic at the saddle orbit")
    evals = evals.real
    idx = int(np.argmin(np.abs(evals))) if stable else int(np.argmax(np.abs(evals)))
    mu = float(evals[idx])
    if stable and not 0.0 < abs(mu) < 1.0:
        raise SingularJacobian(f"no contracting multiplier (got {mu})")
    if not stable and not abs(mu) > 1.0:
        raise SingularJacobian(f"no expanding multiplier (got {mu})")
    v = evecs[:, idx].real
    v = v / np.linalg.norm(v)
    # orient toward the switching line (the heteroclinic side, y > 0)
    want = -side
    if v[0] * want < 0.0:
        v = -v
    lam = abs(math.log(abs(mu))) / sys.period
    return v, lam


def _manifold_shot(sys, fp, v, eta, side, backward, options):
    """Integrate from the eigenvector offset to the first switching-line
    crossing; returns (crossing time, crossing velocity)."""
    from scipy.integrate import solve_ivp

    pot = sys.potential(side)
    pert = sys.perturbation
    eps = sys.epsilon

    def rhs(t, s):
        x, y = s
        dx = y
        dy = -float(pot.derivative(x))
        if eps != 0.0:
            dx += eps * float(pert.dy(x, y, t, side))
            dy -= eps * float(pert.dx(x, y, t, side))
        return (dx, dy)

    def crossing(t, s):
        return s[0]

    crossing.terminal = True
    # x approaches 0 from the saddle's side of the line in both cases
    crossing.direction = 0

    escape_x = options.escape_factor * max(abs(sys.saddle_x(PLUS)), abs(sys.saddle_x(MINUS)))

    def escape(t, s):
        return abs(s[0]) - escape_x

    escape.terminal = True
    escape.direction = 1

    start = fp.point + eta * v
    horizon = 40.0 * max(1.0, sys.period)
    t_end = fp.t - horizon if backward else fp.t + horizon
    sol = solve_ivp(
        rhs,
        (fp.t, t_end),
        start,
        method=options.method,
        rtol=options.rtol,
        atol=options.atol,
        events=(crossing, escape),
    )
    if sol.status != 1 or not len(sol.t_events[0]):
        raise FlowError(
            "manifold shot did not reach the switching line (wrong eigenvector "
            "orientation or escape)"
        )
    t_cross = float(sol.t_events[0][0])
    y_cross = float(sol.y_events[0][0][1])
    return t_cross, y_cross


def manifold_section_point(sys, which, t0, *, eta=1e-7, options=None, check=True):
    """Intersection with the switching line of the saddle-orbit manifold
    on the time slice t0.

    `which` is "u-" (unstable manifold of the left saddle orbit, shot
    forward) or "s+" (stable manifold of the right one, shot backward).
    The eigenvector offset is adjusted so that the crossing happens at a
    time congruent to t0 mod T: the crossing then *is* the slice point.
    With `check` a halved-offset recomputation guards the linearization
    error (must agree to 1e-9).
    """
    options = options or DEFAULT_OPTIONS
    if which not in ("u-", "s+"):
        raise DomainError("which must be 'u-' or 's+'")
    stable = which == "s+"
    side = PLUS if stable else MINUS
    backward = stable
    T = sys.period
    fp = saddle_orbit_point(sys, side, t0, options=options)
    v, lam = _manifold_eigvector(sys, fp, t0, side, options, stable)

    def shot(e):
        t_cross, y_cross = _manifold_shot(sys, fp, v, e, side, backward, options)
        tau = (t0 - t_cross) if backward else (t_cross - t0)
        return tau, t_cross, y_cross

    def aligned(e0):
        tau0, _, _ = shot(e0)
        k = max(1, round(tau0 / T))

        def g(e):
            return shot(e)[0] - k * T

        est = e0 * math.exp(lam * (tau0 - k * T))
        lo, hi = est / 1.6, est * 1.6
        g_lo, g_hi = g(lo), g(hi)
        for _ in range(8):
            if g_lo * g_hi < 0.0:
                break
            lo, hi = lo / 1.6, hi * 1.6
            g_lo, g_hi = g(lo), g(hi)
        else:
            raise FlowError("could not bracket the phase-aligned manifold offset")
        e_star = brentq(g, lo, hi, rtol=1e-13)
        _, t_cross, y_cross = shot(e_star)
        return PhaseState(0.0, y_cross, t_cross)

    result = aligned(eta)
    if check:
        probe = aligned(eta / 2.0)
        if abs(probe.y - result.y) > 1e-9:
            raise FlowError(
                f"manifold linearization error {abs(probe.y - result.y):.3e} exceeds 1e-9; "
                "reduce the offset"
            )
        result = probe
    return result


def splitting_distance(sys, t0, *, options=None, eta=1e-7, check=True):
    """Energy gap between the two manifold slice points on the switching
    line, restitution applied to the unstable one:
    r^2 H0(z_u) - H0(z_s).  First-order in eps this is
    (r^2 - 1) c1 + eps * M(t0)."""
    zu = manifold_section_point(sys, "u-", t0, eta=eta, options=options, check=check)
    zs = manifold_section_point(sys, "s+", t0, eta=eta, options=options, check=check)
    r = sys.restitution
    return 0.5 * (r * r * zu.y * zu.y - zs.y * zs.y)


@dataclass
class HeteroclinicConnection:
    """A transversal intersection of the perturbed manifolds on the
    switching line: the trajectory through point_minus (pre-impact) maps
    to point_plus = r * point_minus and is heteroclinic between the two
    saddle periodic orbits."""

    t0: float
    slope: float
    point_plus: SectionPoint
    point_minus: SectionPoint
    epsilon: float
    restitution: float
    residual: float


def rho_heteroclinic(sys, *, profile=None, options=None):
    """Threshold ratio for the dissipative heteroclinic intersection:
    M(t_M) / (2 c1) with the same anchoring rule as the subharmonic
    threshold."""
    options = options or DEFAULT_OPTIONS
    profile = profile or heteroclinic_profile(sys, options=options)
    zeros = profile.simple_zeros()
    if profile.degenerate or not zeros:
        raise DegenerateMelnikov("heteroclinic Melnikov function is degenerate")
    from .melnikov import heteroclinic_melnikov

    def f(t0):
        return heteroclinic_melnikov(sys, t0, options=options)

    t_M = threshold_anchor(f, profile.t0, profile.values, profile.period, zeros[0].t0)
    value = f(t_M) / (2.0 * sys.c1)
    if value <= 0.0:
        raise DegenerateMelnikov("threshold anchor has non-positive Melnikov value")
    return value


def find_heteroclinic(
    sys,
    *,
    delta=None,
    ratio=None,
    eps_tilde=1.0,
    num=24,
    options=None,
    eta=1e-7,
    zero_tol=1e-10,
):
    """Simple zero of the splitting distance over one period.

    Without `delta` the system is used as is (conservative when r = 1);
    with `delta` and `ratio` the scaled parameters eps = eps_tilde*delta,
    r = 1 - ratio*eps_tilde*delta are applied first.  Returns the
    intersection data; NoZero if the distance has constant sign (or is
    identically zero, the degenerate case)."""
    options = options or DEFAULT_OPTIONS
    if delta is not None:
        if ratio is None:
            raise DomainError("scaled search needs both delta and ratio")
        sys = scaled_system(sys, delta, ratio, eps_tilde=eps_tilde)
    if sys.epsilon == 0.0:
        raise NoZero("unperturbed system: the splitting distance is degenerate")
    T = sys.period

    def dist(t0):
        return splitting_distance(sys, t0, options=options, eta=eta)

    ts = np.linspace(0.0, T, num, endpoint=False)
    vs = np.array([dist(t) for t in ts])
    scale = float(np.max(np.abs(vs)))
    if scale < 1e-12:
        raise NoZero("splitting distance is identically zero at working precision (degenerate)")
    roots = []
    for i in range(num):
        a, fa = ts[i], vs[i]
        b = ts[i + 1] if i + 1 < num else T
        fb = vs[i + 1] if i + 1 < num else vs[0]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(brentq(dist, a, b, xtol=zero_tol, rtol=9e-16))
    if not roots:
        raise NoZero("splitting distance has constant sign over one period")
    t_star = float(roots[0] % T)
    h = max(1e-6 * T, 1e-7)
    slope = (dist(t_star + h) - dist(t_star - h)) / (2.0 * h)
    zu = manifold_section_point(sys, "u-", t_star, eta=eta, options=options)
    zs = manifold_section_point(sys, "s+", t_star, eta=eta, options=options)
    residual = abs(sys.restitution * zu.y - zs.y)
    return HeteroclinicConnection(
        t0=t_star,
        slope=float(slope),
        point_plus=SectionPoint(zs.y, t_star),
        point_minus=SectionPoint(zu.y, t_star),
        epsilon=sys.epsilon,
        restitution=sys.restitution,
        residual=float(residual),
    )
