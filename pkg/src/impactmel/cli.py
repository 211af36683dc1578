"""Command-line front end.

Subcommands: simulate, period, melnikov, find-orbit, existence-curve,
heteroclinic, reproduce.  Systems come from a JSON config file (see
README) with individual flags overriding; outputs are deterministic CSV
and JSON files in --out.

Exit codes: 0 success, 1 typed numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys as _sys

import numpy as np

from .errors import ConfigError, ImpactmelError
from .flow import IntegratorOptions, propagate
from .impact_map import orbit_period, velocity_for_period
from .melnikov import heteroclinic_profile, subharmonic_profile
from .model import PhaseState, system_from_config
from .orbits import (
    OrbitSpec,
    continue_in_amplitude,
    continue_in_delta,
    dissipation_threshold,
    dissipative_seed_times,
    existence_curve,
    find_heteroclinic,
    find_periodic,
    min_forcing,
    scaled_system,
    seed_from_melnikov,
    splitting_distance,
)
from .output import write_csv, write_json

DEFAULT_CONFIG = {
    "potential_plus": {"kind": "linear_block"},
    "potential_minus": {"kind": "linear_block"},
    "perturbation": {"kind": "cos_forcing"},
    "epsilon": 0.0,
    "r": 1.0,
    "omega": 5.0,
}

_FIG6_EPS = 1.6565e-2
_FIG7_RATIO = 0.07
_FIG8_RATIO_FRACTIONS = (0.15, 0.3, 0.45, 0.6, 0.7, 0.8, 0.87, 0.92, 0.95, 0.97, 0.985)


def _common_flags(p):
    p.add_argument("--config", help="JSON system config file")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--omega", type=float, help="override forcing frequency")
    p.add_argument("--eps", type=float, help="override forcing amplitude")
    p.add_argument("--r", type=float, help="override restitution coefficient")
    p.add_argument("--seed", type=int, default=0, help="random seed (reserved; numerics are deterministic)")
    p.add_argument("--rtol", type=float, help="integrator relative tolerance")
    p.add_argument("--atol", type=float, help="integrator absolute tolerance")
    p.add_argument("--method", help="integrator method (DOP853 or RK45)")
    p.add_argument("--workers", type=int, default=1, help="worker pool size for sweeps")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="impactmel",
        description="Impact maps, Melnikov functions and periodic orbits of "
        "two-zone piecewise-smooth Hamiltonian systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="event-driven trajectory to CSV")
    _common_flags(p)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--y0", type=float, required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--time", type=float, required=True, help="integration span")
    p.add_argument("--dt", type=float, help="sampling step (default: span/2000)")
    p.add_argument("--tag", default="simulate", help="output file stem")

    p = sub.add_parser("period", help="unperturbed period function and its inverse")
    _common_flags(p)
    p.add_argument("--y", type=float, help="evaluate the period at this section velocity")
    p.add_argument("--invert", type=float, help="velocity whose orbit has this period")
    p.add_argument("--grid", help="y grid 'start:stop:count' to CSV")

    p = sub.add_parser("melnikov", help="subharmonic or heteroclinic Melnikov profile")
    _common_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--het", action="store_true", help="heteroclinic profile instead of subharmonic")
    p.add_argument("--num", type=int, default=256, help="samples per period")

    p = sub.add_parser("find-orbit", help="Newton search for an (n, m)-periodic orbit")
    _common_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--ratio", type=float, help="dissipation/forcing ratio (scaled search)")
    p.add_argument("--delta", type=float, help="scaling parameter (eps = delta, r = 1 - ratio*delta)")
    p.add_argument("--seed-zero", type=int, default=1, choices=(1, 2), help="which Melnikov zero seeds the search")
    p.add_argument("--seed-y0", type=float, help="manual seed velocity")
    p.add_argument("--seed-t0", type=float, help="manual seed phase")
    p.add_argument("--tag", default="orbit", help="output file stem")

    p = sub.add_parser("existence-curve", help="fold endpoints of the scaling rays")
    _common_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--ratios", required=True, help="comma-separated dissipation/forcing ratios")
    p.add_argument("--delta-start", type=float, default=1e-2)
    p.add_argument("--seed-zero", type=int, default=1, choices=(1, 2))

    p = sub.add_parser("heteroclinic", help="manifold intersection on the switching line")
    _common_flags(p)
    p.add_argument("--ratio", type=float, help="dissipation/forcing ratio (scaled search)")
    p.add_argument("--delta", type=float, help="scaling parameter")
    p.add_argument("--num", type=int, default=24, help="scan samples per period")
    p.add_argument("--profile", action="store_true", help="also write the splitting-distance profile CSV")
    p.add_argument("--tag", default="heteroclinic", help="output file stem")

    p = sub.add_parser("reproduce", help="regenerate a paper-scale figure dataset")
    _common_flags(p)
    p.add_argument("figure", choices=("fig6", "fig7", "fig8"))

    return parser


def _system_config(args):
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError("system config must be a JSON object")
    else:
        config = json.loads(json.dumps(DEFAULT_CONFIG))
    if args.omega is not None:
        config["omega"] = args.omega
    if args.eps is not None:
        config["epsilon"] = args.eps
    if args.r is not None:
        config["r"] = args.r
    return config


def _integrator_options(args):
    kwargs = {}
    if args.rtol is not None:
        if args.rtol <= 0.0:
            raise ConfigError("rtol must be positive")
        kwargs["rtol"] = args.rtol
    if args.atol is not None:
        if args.atol <= 0.0:
            raise ConfigError("atol must be positive")
        kwargs["atol"] = args.atol
    if args.method is not None:
        kwargs["method"] = args.method
    return IntegratorOptions(**kwargs) if kwargs else None


def _outdir(args):
    out = args.out
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out!r} is not writable")
    return out


def _echo(config, **command_params):
    meta = {"system": config}
    meta.update(command_params)
    return meta


# -- subcommand bodies -------------------------------------------------------


def _cmd_simulate(args, system, config, options, out):
    span = args.time
    if span <= 0.0:
        raise ConfigError("--time must be positive")
    dt = args.dt if args.dt is not None else span / 2000.0
    start = PhaseState(args.x0, args.y0, args.t0)
    traj = propagate(system, start, args.t0 + span, options=options, record_dt=dt)
    path = os.path.join(out, f"{args.tag}.csv")
    traj.to_csv(path, metadata=_echo(config, command="simulate", y0=args.y0, x0=args.x0, t0=args.t0, time=span, dt=dt))
    print(f"wrote {path} ({len(traj.t)} samples, {len(traj.impacts) - 1} impacts)")
    return 0


def _cmd_period(args, system, config, options, out):
    did_something = False
    if args.y is not None:
        print(f"period({format(args.y, 'g')}) = {orbit_period(system, args.y)!r}")
        did_something = True
    if args.invert is not None:
        print(f"velocity_for_period({format(args.invert, 'g')}) = {velocity_for_period(system, args.invert)!r}")
        did_something = True
    if args.grid:
        try:
            lo, hi, count = args.grid.split(":")
            ys = np.linspace(float(lo), float(hi), int(count))
        except ValueError:
            raise ConfigError("--grid expects 'start:stop:count'") from None
        periods = [orbit_period(system, y) for y in ys]
        path = os.path.join(out, "period.csv")
        write_csv(path, [("y", ys), ("period", periods)], _echo(config, command="period"))
        print(f"wrote {path}")
        did_something = True
    if not did_something:
        raise ConfigError("period needs --y, --invert or --grid")
    return 0


def _cmd_melnikov(args, system, config, options, out):
    if args.het:
        profile = heteroclinic_profile(system, num=args.num, options=options)
        stem = "melnikov_heteroclinic"
    else:
        if args.n is None:
            raise ConfigError("subharmonic profile needs --n")
        profile = subharmonic_profile(system, args.n, args.m, num=args.num, options=options, scan=args.num)
        stem = f"melnikov_n{args.n}_m{args.m}"
    meta = _echo(config, command="melnikov", n=args.n, m=args.m, heteroclinic=args.het, num=args.num)
    path = os.path.join(out, f"{stem}.csv")
    write_csv(path, [("t0", profile.t0), ("M", profile.values)], meta)
    zpath = os.path.join(out, f"{stem}_zeros.csv")
    write_csv(
        zpath,
        [
            ("t0", [z.t0 for z in profile.zeros]),
            ("slope", [z.slope for z in profile.zeros]),
            ("simple", [z.simple for z in profile.zeros]),
        ],
        meta,
    )
    kindinfo = "degenerate (identically zero at tolerance)" if profile.degenerate else (
        f"{len(profile.simple_zeros())} simple zero(s)"
    )
    print(f"wrote {path} and {zpath}: {kindinfo}")
    return 0


def _cmd_find_orbit(args, system, config, options, out):
    if (args.ratio is None) != (args.delta is None):
        raise ConfigError("scaled search needs both --ratio and --delta")
    n, m = args.n, args.m
    if args.ratio is not None:
        target = scaled_system(system, args.delta, args.ratio)
        if args.seed_y0 is not None and args.seed_t0 is not None:
            spec = OrbitSpec(n, m, args.seed_y0, args.seed_t0)
        else:
            profile = subharmonic_profile(system, n, m, options=options)
            times = dissipative_seed_times(system, n, m, args.ratio, profile=profile, options=options)
            spec = OrbitSpec(n, m, profile.y_start, times[args.seed_zero - 1])
        sol = find_periodic(target, spec, options=options)
    else:
        eps = system.epsilon if args.eps is None else args.eps
        target = system.with_params(epsilon=eps)
        if args.seed_y0 is not None and args.seed_t0 is not None:
            spec = OrbitSpec(n, m, args.seed_y0, args.seed_t0)
        else:
            spec = seed_from_melnikov(system, n, m, args.seed_zero, options=options)
        sol = find_periodic(target, spec, options=options)
    payload = {"command": "find-orbit", "system": config, "solution": sol.to_dict()}
    path = os.path.join(out, f"{args.tag}.json")
    write_json(path, payload)
    print(
        f"({n},{m})-orbit at eps={sol.epsilon!r}, r={sol.restitution!r}: "
        f"y0={sol.y0!r}, t0={sol.t0!r} (residual {sol.residual_norm:.2e}, "
        f"closure {sol.closure_gap:.2e}, {sol.impacts_per_period} impacts/period)"
    )
    print(f"wrote {path}")
    return 0


def _cmd_existence_curve(args, system, config, options, out):
    try:
        ratios = [float(tok) for tok in args.ratios.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("--ratios expects comma-separated numbers") from None
    if not ratios:
        raise ConfigError("--ratios is empty")
    curve = existence_curve(
        system,
        args.n,
        args.m,
        ratios,
        delta_start=args.delta_start,
        zero_index=args.seed_zero,
        workers=args.workers,
        options=options,
    )
    rows_ratio, rows_fold, rows_r, rows_eps, rows_ref, rows_ray = [], [], [], [], [], []
    for e in curve.entries:
        rows_ratio.append(e.ratio)
        rows_fold.append(e.delta_fold)
        rows_r.append(e.restitution)
        rows_eps.append(e.epsilon)
        if e.delta_fold is None:
            rows_ref.append(None)
            rows_ray.append(None)
        else:
            R = 1.0 - e.restitution
            rows_ref.append(float(curve.reference_lower_boundary(R)))
            rows_ray.append(float(curve.tangent_ray(R)))
    path = os.path.join(out, f"existence_curve_n{args.n}_m{args.m}.csv")
    write_csv(
        path,
        [
            ("ratio", rows_ratio),
            ("delta_fold", rows_fold),
            ("r", rows_r),
            ("eps", rows_eps),
            ("eps_lower_reference", rows_ref),
            ("eps_tangent_ray", rows_ray),
        ],
        _echo(config, command="existence-curve", n=args.n, m=args.m, rho=curve.rho),
    )
    print(f"threshold ratio rho = {curve.rho!r}")
    print(f"wrote {path}")
    return 0


def _cmd_heteroclinic(args, system, config, options, out):
    if (args.ratio is None) != (args.delta is None):
        raise ConfigError("scaled search needs both --ratio and --delta")
    conn = find_heteroclinic(
        system, delta=args.delta, ratio=args.ratio, num=args.num, options=options
    )
    payload = {
        "command": "heteroclinic",
        "system": config,
        "t0": conn.t0,
        "slope": conn.slope,
        "y_plus": conn.point_plus.y,
        "y_minus": conn.point_minus.y,
        "epsilon": conn.epsilon,
        "r": conn.restitution,
        "matching_residual": conn.residual,
    }
    path = os.path.join(out, f"{args.tag}.json")
    write_json(path, payload)
    print(
        f"manifolds intersect at t0={conn.t0!r} (slope {conn.slope:.3e}, "
        f"matching residual {conn.residual:.2e})"
    )
    if args.profile:
        scaled = (
            scaled_system(system, args.delta, args.ratio) if args.delta is not None else system
        )
        ts = np.linspace(0.0, scaled.period, args.num, endpoint=False)
        vs = [splitting_distance(scaled, t, options=options) for t in ts]
        ppath = os.path.join(out, f"{args.tag}_profile.csv")
        write_csv(ppath, [("t0", ts), ("distance", vs)], _echo(config, command="heteroclinic"))
        print(f"wrote {ppath}")
    print(f"wrote {path}")
    return 0


def _orbit_trajectory_csv(system, sol, path, config, extra):
    T = system.period
    start = PhaseState(0.0, sol.y0, sol.t0)
    traj = propagate(system, start, sol.t0 + sol.n * T, options=None, record_dt=sol.n * T / 4000.0)
    meta = _echo(config, **extra)
    meta.update(sol.to_dict())
    traj.to_csv(path, metadata=meta)


def _cmd_reproduce(args, system, config, options, out):
    figure = args.figure
    if figure == "fig6":
        summary = {}
        for branch in (1, 2):
            cont = continue_in_amplitude(
                system, 5, 1, _FIG6_EPS, eps_start=1e-3, zero_index=branch, options=options
            )
            if not cont.reached_target:
                raise ImpactmelError(
                    f"branch {branch} folded at eps = {cont.fold} before {_FIG6_EPS}"
                )
            sol = cont.final
            target = system.with_params(epsilon=_FIG6_EPS)
            path = os.path.join(out, f"fig6_branch{branch}.csv")
            _orbit_trajectory_csv(target, sol, path, config, {"command": "reproduce fig6"})
            summary[f"branch{branch}"] = sol.to_dict()
            print(f"wrote {path}")
        write_json(os.path.join(out, "fig6_solutions.json"), summary)
        return 0
    if figure == "fig7":
        summary = {"ratio": _FIG7_RATIO}
        for branch in (1, 2):
            cont = continue_in_delta(
                system, 5, 1, _FIG7_RATIO, zero_index=branch, options=options
            )
            fold = cont.params[-1]
            sol = cont.final
            summary[f"branch{branch}"] = {"delta_fold": fold, **sol.to_dict()}
            target = scaled_system(system, fold, _FIG7_RATIO)
            path = os.path.join(out, f"fig7_branch{branch}.csv")
            _orbit_trajectory_csv(target, sol, path, config, {"command": "reproduce fig7"})
            ppath = os.path.join(out, f"fig7_branch{branch}_path.csv")
            write_csv(
                ppath,
                [
                    ("delta", cont.params),
                    ("eps", [o.epsilon for o in cont.orbits]),
                    ("r", [o.restitution for o in cont.orbits]),
                    ("y0", [o.y0 for o in cont.orbits]),
                    ("t0", [o.t0 for o in cont.orbits]),
                ],
                _echo(config, command="reproduce fig7", branch=branch),
            )
            print(f"wrote {path} and {ppath} (fold at delta = {fold!r})")
        write_json(os.path.join(out, "fig7_solutions.json"), summary)
        return 0
    # fig8: existence curve for the (5, 1) orbits
    rho = dissipation_threshold(system, 5, 1, options=options)
    ratios = [f * rho for f in _FIG8_RATIO_FRACTIONS]
    ns = argparse.Namespace(**vars(args))
    ns.n, ns.m = 5, 1
    ns.ratios = ",".join(repr(b) for b in ratios)
    ns.delta_start = 1e-2
    ns.seed_zero = 1
    return _cmd_existence_curve(ns, system, config, options, out)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "period": _cmd_period,
    "melnikov": _cmd_melnikov,
    "find-orbit": _cmd_find_orbit,
    "existence-curve": _cmd_existence_curve,
    "heteroclinic": _cmd_heteroclinic,
    "reproduce": _cmd_reproduce,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        config = _system_config(args)
        system = system_from_config(config)
        options = _integrator_options(args)
        out = _outdir(args)
        return _COMMANDS[args.command](args, system, config, options, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except ImpactmelError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
