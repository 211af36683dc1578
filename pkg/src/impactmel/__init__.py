"""Impact maps, Melnikov functions and periodic-orbit continuation for
two-zone piecewise-smooth Hamiltonian systems with restitution."""

from .errors import (
    ConfigError,
    DegenerateMelnikov,
    DomainError,
    FlowError,
    GrazingImpact,
    ImpactmelError,
    NoConvergence,
    NoCrossing,
    NoSeed,
    NoZero,
    ResidualUnavailable,
    SingularJacobian,
    TruncationError,
)
from .flow import (
    DEFAULT_OPTIONS,
    ImpactRecord,
    ImpactSequence,
    IntegratorOptions,
    Trajectory,
    ZoneTransit,
    apply_restitution,
    closed_form_linear_flow,
    flow_in_zone,
    impact_sequence,
    integrate_zone,
    linear_flow_constants,
    propagate,
)
from .impact_map import (
    SectionPoint,
    half_map,
    impact_map,
    orbit_period,
    period_derivative,
    unperturbed_impact_map,
    velocity_for_period,
    zone_transit_time,
)
from .melnikov import (
    MelnikovProfile,
    MelnikovZero,
    energy_gain,
    heteroclinic_melnikov,
    heteroclinic_profile,
    heteroclinic_tail_bound,
    profile_mean,
    resonant_velocity,
    subharmonic_melnikov,
    subharmonic_profile,
)
from .model import (
    MINUS,
    PLUS,
    CosForcing,
    HarmonicPolynomial,
    LinearBlockMinus,
    LinearBlockPlus,
    MultiHarmonic,
    NonlinearBlockMinus,
    NonlinearBlockPlus,
    Perturbation,
    PhaseState,
    Polynomial,
    Potential,
    RockingForcing,
    TwoZoneSystem,
    linear_block,
    load_system,
    nonlinear_block,
    system_from_config,
    system_to_config,
    zone_of,
)
from .orbits import (
    ContinuationResult,
    ExistenceCurve,
    HeteroclinicConnection,
    NewtonOptions,
    OrbitSolution,
    OrbitSpec,
    continue_in_amplitude,
    continue_in_delta,
    continue_orbit,
    dissipation_threshold,
    dissipative_seed_times,
    existence_curve,
    find_heteroclinic,
    find_periodic,
    find_periodic_dissipative,
    manifold_section_point,
    min_forcing,
    periodicity_residual,
    rho_heteroclinic,
    saddle_orbit_point,
    scaled_system,
    seed_from_melnikov,
    splitting_distance,
    threshold_anchor,
)

__version__ = "0.1.0"
