"""Simulation and analysis toolkit for a minimal ball-piston billiard."""

__version__ = "0.1.0"

from .errors import (
    BallPistonError,
    CornerAmbiguityError,
    EventRateCapError,
    InsufficientDataError,
    NoEventError,
    NumericalError,
    ParameterError,
    RejectionStallError,
    SurfaceMismatchError,
)
from .geometry import (
    GeometryParams,
    GeometrySummary,
    conditional_rate,
    contains,
    derive_geometry,
    flux_factor,
    small_delta_rate,
)
from .dynamics import (
    KIND_LABELS,
    CollisionEvent,
    CollisionLog,
    FlowState,
    apply_event,
    kind_class,
    next_event,
    oracle_advance,
    simulate,
)
from .sampling import (
    AngleCoord,
    angle_to_velocity,
    hn_density,
    sample_alpha,
    sample_alpha_batch,
    sample_bp_flux,
    sample_bp_flux_batch,
    sample_flow,
    sample_flow_batch,
    sample_shell_flux,
    sample_shell_flux_batch,
    seeded_rng,
)
from .estimators import (
    Estimate,
    Histogram,
    build_histogram,
    estimate_cond_mft,
    estimate_mft,
    kl_divergence,
    paper_delta_grid,
    paper_energy_grid,
    relaxation_experiment,
)
from .kernel import (
    EnergyGridDensity,
    EnergyPair,
    JumpLog,
    canonical_check,
    gillespie,
    gillespie_ensemble,
    kernel_density,
    master_evolve,
    moments,
    sample_jump,
)

__all__ = [
    "__version__",
    "BallPistonError",
    "CornerAmbiguityError",
    "EventRateCapError",
    "InsufficientDataError",
    "NoEventError",
    "NumericalError",
    "ParameterError",
    "RejectionStallError",
    "SurfaceMismatchError",
    "GeometryParams",
    "GeometrySummary",
    "conditional_rate",
    "contains",
    "derive_geometry",
    "flux_factor",
    "small_delta_rate",
    "KIND_LABELS",
    "CollisionEvent",
    "CollisionLog",
    "FlowState",
    "apply_event",
    "kind_class",
    "next_event",
    "oracle_advance",
    "simulate",
    "AngleCoord",
    "angle_to_velocity",
    "hn_density",
    "sample_alpha",
    "sample_alpha_batch",
    "sample_bp_flux",
    "sample_bp_flux_batch",
    "sample_flow",
    "sample_flow_batch",
    "sample_shell_flux",
    "sample_shell_flux_batch",
    "seeded_rng",
    "Estimate",
    "Histogram",
    "build_histogram",
    "estimate_cond_mft",
    "estimate_mft",
    "kl_divergence",
    "paper_delta_grid",
    "paper_energy_grid",
    "relaxation_experiment",
    "EnergyGridDensity",
    "EnergyPair",
    "JumpLog",
    "canonical_check",
    "gillespie",
    "gillespie_ensemble",
    "kernel_density",
    "master_evolve",
    "moments",
    "sample_jump",
]
