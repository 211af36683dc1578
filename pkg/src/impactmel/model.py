"""Two-zone piecewise-smooth Hamiltonian systems.

The plane is split by the switching line x = 0 into two zones.  On each
zone the dynamics are Hamiltonian with

    H(x, y, t) = y^2/2 + V(x) + eps * H1(x, y, t),

where V is the zone potential (V+ for x > 0, V- for x < 0, V+-(0) = 0)
and H1 is a T-periodic perturbation that is continuous across x = 0.
Velocity is reduced by a restitution factor r in (0, 1] at every
crossing of x = 0; r = 1 is the conservative case.

Built-ins implement the rocking block under horizontal periodic forcing:
the slender (linearized) block with V(x) = -x^2/2 + |x| and H1 = x cos(w t),
and the full nonlinear block parametrized by its slenderness angle.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from .errors import ConfigError, DomainError

PLUS = 1
MINUS = -1

#: tolerance on "V(0) = 0" and on the saddle energies matching
_MODEL_TOL = 1e-9


def zone_of(x, y):
    """Active zone for a phase point.

    Off the switching line the sign of x decides; on it the sign of y does
    (orbits turn clockwise, so y > 0 enters x > 0).  The fold point
    (0, 0) belongs to neither zone.
    """
    if x > 0.0:
        return PLUS
    if x < 0.0:
        return MINUS
    if y > 0.0:
        return PLUS
    if y < 0.0:
        return MINUS
    raise DomainError("zone undefined at the fold point (0, 0)")


@dataclass(frozen=True)
class PhaseState:
    """A point (x, y) of the plane at time t."""

    x: float
    y: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.t)):
            raise DomainError(f"non-finite phase state {(self.x, self.y, self.t)}")

    @property
    def point(self):
        return np.array([self.x, self.y])


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


class Potential:
    """Zone potential V.  Subclasses provide V, V' and V''.

    All built-ins satisfy V(0) = 0 so that H0(0, 0) = 0.
    """

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def second_derivative(self, x):
        raise NotImplementedError

    def saddle(self, side):
        """Location of the saddle of H0 on the given side: the critical
        point of V nearest the origin with V'' < 0 (a maximum of V)."""
        raise NotImplementedError


@dataclass(frozen=True)
class LinearBlockPlus(Potential):
    """V(x) = -x^2/2 + x, the slender-block potential for x > 0."""

    def value(self, x):
        return x - 0.5 * np.asarray(x) ** 2

    def derivative(self, x):
        return 1.0 - np.asarray(x)

    def second_derivative(self, x):
        return -np.ones_like(np.asarray(x, dtype=float))

    def saddle(self, side):
        if side != PLUS:
            raise DomainError("linear block '+' potential has its saddle at x = +1")
        return 1.0


@dataclass(frozen=True)
class LinearBlockMinus(Potential):
    """V(x) = -x^2/2 - x, the slender-block potential for x < 0."""

    def value(self, x):
        return -np.asarray(x) - 0.5 * np.asarray(x) ** 2

    def derivative(self, x):
        return -1.0 - np.asarray(x)

    def second_derivative(self, x):
        return -np.ones_like(np.asarray(x, dtype=float))

    def saddle(self, side):
        if side != MINUS:
            raise DomainError("linear block '-' potential has its saddle at x = -1")
        return -1.0


@dataclass(frozen=True)
class NonlinearBlockPlus(Potential):
    """Full rocking-block potential for x > 0, slenderness angle a:
    V(x) = (cos(a (1 - x)) - cos a) / a^2.  Tends to the linear block as
    a -> 0; saddle at x = 1 with energy (1 - cos a) / a^2."""

    slenderness: float

    def __post_init__(self):
        if not 0.0 < self.slenderness < math.pi / 2:
            raise ConfigError("slenderness angle must lie in (0, pi/2)")

    def value(self, x):
        a = self.slenderness
        return (np.cos(a * (1.0 - np.asarray(x))) - math.cos(a)) / a**2

    def derivative(self, x):
        a = self.slenderness
        return np.sin(a * (1.0 - np.asarray(x))) / a

    def second_derivative(self, x):
        a = self.slenderness
        return -np.cos(a * (1.0 - np.asarray(x)))

    def saddle(self, side):
        if side != PLUS:
            raise DomainError("nonlinear block '+' potential has its saddle at x = +1")
        return 1.0


@dataclass(frozen=True)
class NonlinearBlockMinus(Potential):
    """Mirror image of :class:`NonlinearBlockPlus` for x < 0."""

    slenderness: float

    def __post_init__(self):
        if not 0.0 < self.slenderness < math.pi / 2:
            raise ConfigError("slenderness angle must lie in (0, pi/2)")

    def value(self, x):
        a = self.slenderness
        return (np.cos(a * (1.0 + np.asarray(x))) - math.cos(a)) / a**2

    def derivative(self, x):
        a = self.slenderness
        return -np.sin(a * (1.0 + np.asarray(x))) / a

    def second_derivative(self, x):
        a = self.slenderness
        return -np.cos(a * (1.0 + np.asarray(x)))

    def saddle(self, side):
        if side != MINUS:
            raise DomainError("nonlinear block '-' potential has its saddle at x = -1")
        return -1.0


@dataclass(frozen=True)
class Polynomial(Potential):
    """Custom polynomial potential, coefficients in ascending order.

    The constant term must vanish (V(0) = 0).  The saddle is located
    numerically from the derivative's real roots.
    """

    coefficients: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) < 2:
            raise ConfigError("polynomial potential needs degree >= 1")
        if coeffs[0] != 0.0:
            raise ConfigError("polynomial potential must have V(0) = 0 (zero constant term)")

    def value(self, x):
        return npoly.polyval(np.asarray(x), self.coefficients)

    def derivative(self, x):
        return npoly.polyval(np.asarray(x), npoly.polyder(self.coefficients))

    def second_derivative(self, x):
        return npoly.polyval(np.asarray(x), npoly.polyder(self.coefficients, 2))

    def saddle(self, side):
        roots = npoly.polyroots(npoly.polyder(self.coefficients))
        real = [float(r.real) for r in roots if abs(r.imag) < 1e-10]
        candidates = sorted(
            (x for x in real if side * x > 1e-12 and self.second_derivative(x) < 0.0),
            key=abs,
        )
        if not candidates:
            raise ConfigError(f"polynomial potential has no saddle on side {side:+d}")
        x_s = candidates[0]
        # V must rise monotonically from the origin to the saddle (C.4)
        grid = np.linspace(0.0, x_s, 65)[1:-1]
        if np.any(side * self.derivative(grid) <= 0.0):
            raise ConfigError("polynomial potential is not monotone between 0 and its saddle")
        return x_s


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------


class Perturbation:
    """T-periodic Hamiltonian perturbation H1(x, y, t), possibly defined
    zone-wise, continuous across x = 0.  `side` selects the zone formula."""

    omega: float

    @property
    def period(self):
        return 2.0 * math.pi / self.omega

    def value(self, x, y, t, side):
        raise NotImplementedError

    def dx(self, x, y, t, side):
        raise NotImplementedError

    def dy(self, x, y, t, side):
        raise NotImplementedError


@dataclass(frozen=True)
class CosForcing(Perturbation):
    """H1 = x cos(w t): uniform horizontal forcing of the slender block."""

    omega: float

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ConfigError("forcing frequency must be positive")

    def value(self, x, y, t, side):
        return np.asarray(x) * np.cos(self.omega * np.asarray(t))

    def dx(self, x, y, t, side):
        return np.cos(self.omega * np.asarray(t)) + 0.0 * np.asarray(x)

    def dy(self, x, y, t, side):
        return np.zeros_like(np.asarray(x, dtype=float) + np.asarray(t, dtype=float))


@dataclass(frozen=True)
class MultiHarmonic(Perturbation):
    """H1 = x (cos(w t) + cos(k w t)); the k-th harmonic makes orbits with
    more than one impact pair per period reachable by first-order theory."""

    omega: float
    k: int

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ConfigError("forcing frequency must be positive")
        if int(self.k) != self.k or self.k < 2:
            raise ConfigError("harmonic index k must be an integer >= 2")
        object.__setattr__(self, "k", int(self.k))

    def value(self, x, y, t, side):
        wt = self.omega * np.asarray(t)
        return np.asarray(x) * (np.cos(wt) + np.cos(self.k * wt))

    def dx(self, x, y, t, side):
        wt = self.omega * np.asarray(t)
        return np.cos(wt) + np.cos(self.k * wt) + 0.0 * np.asarray(x)

    def dy(self, x, y, t, side):
        return np.zeros_like(np.asarray(x, dtype=float) + np.asarray(t, dtype=float))


@dataclass(frozen=True)
class RockingForcing(Perturbation):
    """Horizontal forcing of the full nonlinear block, slenderness a:

        H1 = cos(w t) * (sin a - sin(a (1 -+ x))) / a   (upper sign x > 0)

    so that dH1/dx = cos(a (1 -+ x)) cos(w t).  Continuous at x = 0 and
    tends to x cos(w t) as a -> 0.
    """

    omega: float
    slenderness: float

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ConfigError("forcing frequency must be positive")
        if not 0.0 < self.slenderness < math.pi / 2:
            raise ConfigError("slenderness angle must lie in (0, pi/2)")

    def value(self, x, y, t, side):
        a = self.slenderness
        arg = a * (1.0 - side * np.asarray(x))
        return side * (math.sin(a) - np.sin(arg)) / a * np.cos(self.omega * np.asarray(t))

    def dx(self, x, y, t, side):
        a = self.slenderness
        arg = a * (1.0 - side * np.asarray(x))
        return np.cos(arg) * np.cos(self.omega * np.asarray(t))

    def dy(self, x, y, t, side):
        return np.zeros_like(np.asarray(x, dtype=float) + np.asarray(t, dtype=float))


@dataclass(frozen=True)
class HarmonicPolynomial(Perturbation):
    """Parametric custom perturbation

        H1 = sum_k  c_k * x^i_k * y^j_k * trig(h_k w t)

    with terms given as (i, j, harmonic, "cos"|"sin", coefficient).  The
    same expression is used on both zones, so continuity at x = 0 is
    automatic.  An empty term list is the zero perturbation.
    """

    omega: float
    terms: tuple

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ConfigError("forcing frequency must be positive")
        normalized = []
        for term in self.terms:
            i, j, harmonic, kind, coeff = term
            if int(i) != i or i < 0 or int(j) != j or j < 0:
                raise ConfigError(f"bad monomial powers in perturbation term {term}")
            if int(harmonic) != harmonic or harmonic < 0:
                raise ConfigError(f"bad harmonic index in perturbation term {term}")
            if kind not in ("cos", "sin"):
                raise ConfigError(f"trig kind must be 'cos' or 'sin' in term {term}")
            normalized.append((int(i), int(j), int(harmonic), str(kind), float(coeff)))
        object.__setattr__(self, "terms", tuple(normalized))

    def _trig(self, harmonic, kind, t, deriv=False):
        phase = harmonic * self.omega * np.asarray(t)
        if kind == "cos":
            return np.cos(phase)
        return np.sin(phase)

    def value(self, x, y, t, side):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros_like(x + y + np.asarray(t, dtype=float))
        for i, j, harmonic, kind, coeff in self.terms:
            total = total + coeff * x**i * y**j * self._trig(harmonic, kind, t)
        return total

    def dx(self, x, y, t, side):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros_like(x + y + np.asarray(t, dtype=float))
        for i, j, harmonic, kind, coeff in self.terms:
            if i == 0:
                continue
            total = total + coeff * i * x ** (i - 1) * y**j * self._trig(harmonic, kind, t)
        return total

    def dy(self, x, y, t, side):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros_like(x + y + np.asarray(t, dtype=float))
        for i, j, harmonic, kind, coeff in self.terms:
            if j == 0:
                continue
            total = total + coeff * x**i * j * y ** (j - 1) * self._trig(harmonic, kind, t)
        return total


# ---------------------------------------------------------------------------
# The system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoZoneSystem:
    """Immutable two-zone system: potentials, perturbation, amplitude and
    restitution.  All evaluation methods are pure; instances are safe to
    share across workers."""

    v_plus: Potential
    v_minus: Potential
    perturbation: Perturbation
    epsilon: float = 0.0
    restitution: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ConfigError("perturbation amplitude must be >= 0")
        if not 0.0 < self.restitution <= 1.0:
            raise ConfigError("restitution coefficient must lie in (0, 1]")
        if abs(float(self.v_plus.value(0.0))) > _MODEL_TOL or abs(float(self.v_minus.value(0.0))) > _MODEL_TOL:
            raise ConfigError("zone potentials must vanish at the switching line")
        # rotation around the origin: ydot < 0 just right of 0, > 0 just left
        if float(self.v_plus.derivative(0.0)) <= 0.0 or float(self.v_minus.derivative(0.0)) >= 0.0:
            raise ConfigError("potentials must push trajectories back toward x = 0 near the origin")
        c_plus = float(self.v_plus.value(self.saddle_x(PLUS)))
        c_minus = float(self.v_minus.value(self.saddle_x(MINUS)))
        if c_plus <= 0.0 or abs(c_plus - c_minus) > _MODEL_TOL:
            raise ConfigError(
                f"saddle energies must be positive and equal (got {c_plus!r}, {c_minus!r})"
            )

    # -- structure ---------------------------------------------------------

    def potential(self, side):
        return self.v_plus if side == PLUS else self.v_minus

    def saddle_x(self, side):
        return float(self.potential(side).saddle(side))

    def saddle_point(self, side):
        """The saddle (x_s, 0) of the unperturbed zone field."""
        return np.array([self.saddle_x(side), 0.0])

    def saddle_eigenvalue(self, side):
        """Positive eigenvalue of the unperturbed linearization at the
        saddle: sqrt(-V''(x_s))."""
        x_s = self.saddle_x(side)
        vpp = float(self.potential(side).second_derivative(x_s))
        if vpp >= 0.0:
            raise ConfigError("critical point is not a saddle")
        return math.sqrt(-vpp)

    @cached_property
    def c1(self):
        """Energy of the saddle level."""
        return float(self.v_plus.value(self.saddle_x(PLUS)))

    @cached_property
    def y_max(self):
        """Velocity of the heteroclinic connection on the switching line:
        sqrt(2 c1)."""
        return math.sqrt(2.0 * self.c1)

    @property
    def omega(self):
        return self.perturbation.omega

    @property
    def period(self):
        """Forcing period T = 2 pi / w."""
        return self.perturbation.period

    def with_params(self, epsilon=None, restitution=None):
        """Copy with a different amplitude and/or restitution."""
        return dataclasses.replace(
            self,
            epsilon=self.epsilon if epsilon is None else epsilon,
            restitution=self.restitution if restitution is None else restitution,
        )

    # -- evaluation --------------------------------------------------------

    def h0(self, x, y, side=None):
        """Unperturbed energy y^2/2 + V(x); continuous across x = 0."""
        x = np.asarray(x, dtype=float)
        if side is None:
            v = np.where(x >= 0.0, self.v_plus.value(x), self.v_minus.value(x))
        else:
            v = self.potential(side).value(x)
        return 0.5 * np.asarray(y, dtype=float) ** 2 + v

    def h1(self, x, y, t, side=None):
        if side is None:
            side = zone_of(float(x), float(y))
        return self.perturbation.value(x, y, t, side)

    def vector_field(self, x, y, t, side=None):
        """(dx/dt, dy/dt) of the active zone, including the perturbation."""
        if side is None:
            side = zone_of(float(x), float(y))
        pot = self.potential(side)
        pert = self.perturbation
        dx = np.asarray(y, dtype=float)
        dy = -pot.derivative(x)
        if self.epsilon != 0.0:
            dx = dx + self.epsilon * pert.dy(x, y, t, side)
            dy = dy - self.epsilon * pert.dx(x, y, t, side)
        return np.array([dx, dy])

    def poisson_bracket(self, x, y, t, side=None):
        """{H0, H1} = V'(x) dH1/dy - y dH1/dx of the active zone."""
        if side is None:
            side = zone_of(float(x), float(y))
        pot = self.potential(side)
        pert = self.perturbation
        return pot.derivative(x) * pert.dy(x, y, t, side) - np.asarray(y, dtype=float) * pert.dx(
            x, y, t, side
        )


# ---------------------------------------------------------------------------
# Built-in systems
# ---------------------------------------------------------------------------


def linear_block(epsilon=0.0, restitution=1.0, omega=5.0, perturbation=None):
    """Slender rocking block, linearized about the vertical:

        xdot = y,   ydot = x -+ 1 - eps cos(w t)   (upper sign for x > 0)

    with saddles at (+-1, 0) and saddle energy 1/2.
    """
    pert = CosForcing(omega) if perturbation is None else perturbation
    return TwoZoneSystem(LinearBlockPlus(), LinearBlockMinus(), pert, epsilon, restitution)


def nonlinear_block(slenderness, epsilon=0.0, restitution=1.0, omega=5.0, perturbation=None):
    """Full rocking block with slenderness angle `slenderness`; reduces to
    :func:`linear_block` in the slender limit."""
    pert = RockingForcing(omega, slenderness) if perturbation is None else perturbation
    return TwoZoneSystem(
        NonlinearBlockPlus(slenderness),
        NonlinearBlockMinus(slenderness),
        pert,
        epsilon,
        restitution,
    )


# ---------------------------------------------------------------------------
# Config (de)serialization
# ---------------------------------------------------------------------------

_POTENTIAL_KINDS = {
    (PLUS, "linear_block"): lambda spec: LinearBlockPlus(),
    (MINUS, "linear_block"): lambda spec: LinearBlockMinus(),
    (PLUS, "nonlinear_block"): lambda spec: NonlinearBlockPlus(float(spec["slenderness"])),
    (MINUS, "nonlinear_block"): lambda spec: NonlinearBlockMinus(float(spec["slenderness"])),
    (PLUS, "polynomial"): lambda spec: Polynomial(tuple(spec["coefficients"])),
    (MINUS, "polynomial"): lambda spec: Polynomial(tuple(spec["coefficients"])),
}


def _potential_from_config(spec, side):
    try:
        kind = spec["kind"]
    except (TypeError, KeyError):
        raise ConfigError(f"potential spec must be an object with a 'kind': {spec!r}") from None
    try:
        builder = _POTENTIAL_KINDS[(side, kind)]
    except KeyError:
        raise ConfigError(f"unknown potential kind {kind!r}") from None
    try:
        return builder(spec)
    except KeyError as exc:
        raise ConfigError(f"potential spec {kind!r} is missing field {exc}") from None


def _perturbation_from_config(spec, omega):
    try:
        kind = spec["kind"]
    except (TypeError, KeyError):
        raise ConfigError(f"perturbation spec must be an object with a 'kind': {spec!r}") from None
    if kind == "cos_forcing":
        return CosForcing(omega)
    if kind == "multi_harmonic":
        try:
            return MultiHarmonic(omega, int(spec["k"]))
        except KeyError:
            raise ConfigError("multi_harmonic perturbation needs field 'k'") from None
    if kind == "rocking_forcing":
        try:
            return RockingForcing(omega, float(spec["slenderness"]))
        except KeyError:
            raise ConfigError("rocking_forcing perturbation needs field 'slenderness'") from None
    if kind == "harmonic_polynomial":
        terms = tuple(
            (t["powers"][0], t["powers"][1], t["harmonic"], t["kind"], t["coefficient"])
            for t in spec.get("terms", [])
        )
        return HarmonicPolynomial(omega, terms)
    raise ConfigError(f"unknown perturbation kind {kind!r}")


def system_from_config(config):
    """Build a :class:`TwoZoneSystem` from a plain dict (the JSON schema).

    Required keys: potential_plus, potential_minus, perturbation, epsilon,
    r, omega.
    """
    if not isinstance(config, dict):
        raise ConfigError("system config must be a JSON object")
    missing = {"potential_plus", "potential_minus", "perturbation", "epsilon", "r", "omega"} - set(
        config
    )
    if missing:
        raise ConfigError(f"system config is missing keys: {sorted(missing)}")
    try:
        omega = float(config["omega"])
        epsilon = float(config["epsilon"])
        restitution = float(config["r"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric field in system config: {exc}") from None
    return TwoZoneSystem(
        _potential_from_config(config["potential_plus"], PLUS),
        _potential_from_config(config["potential_minus"], MINUS),
        _perturbation_from_config(config["perturbation"], omega),
        epsilon,
        restitution,
    )


def _potential_to_config(pot):
    if isinstance(pot, (LinearBlockPlus, LinearBlockMinus)):
        return {"kind": "linear_block"}
    if isinstance(pot, (NonlinearBlockPlus, NonlinearBlockMinus)):
        return {"kind": "nonlinear_block", "slenderness": pot.slenderness}
    if isinstance(pot, Polynomial):
        return {"kind": "polynomial", "coefficients": list(pot.coefficients)}
    raise ConfigError(f"potential {pot!r} has no config form")


def _perturbation_to_config(pert):
    if isinstance(pert, CosForcing):
        return {"kind": "cos_forcing"}
    if isinstance(pert, MultiHarmonic):
        return {"kind": "multi_harmonic", "k": pert.k}
    if isinstance(pert, RockingForcing):
        return {"kind": "rocking_forcing", "slenderness": pert.slenderness}
    if isinstance(pert, HarmonicPolynomial):
        return {
            "kind": "harmonic_polynomial",
            "terms": [
                {"powers": [i, j], "harmonic": h, "kind": kind, "coefficient": c}
                for i, j, h, kind, c in pert.terms
            ],
        }
    raise ConfigError(f"perturbation {pert!r} has no config form")


def system_to_config(sys):
    """Inverse of :func:`system_from_config`."""
    return {
        "potential_plus": _potential_to_config(sys.v_plus),
        "potential_minus": _potential_to_config(sys.v_minus),
        "perturbation": _perturbation_to_config(sys.perturbation),
        "epsilon": sys.epsilon,
        "r": sys.restitution,
        "omega": sys.omega,
    }


def load_system(path):
    """Load a system from a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read system config {path!r}: {exc}") from None
    return system_from_config(config)
