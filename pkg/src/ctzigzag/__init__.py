"""Continuously-tempered Zig-Zag sampling with a point mass at the target temperature."""

from .estimators import (
    beta_interval_occupancy,
    beta_occupancy,
    inclusion_probability,
    is_estimate,
    is_weight,
    mae_report,
    rmse_report,
    segment_moment,
    segment_moments,
    target_segment_durations,
)
from .event_times import (
    BoundViolation,
    RateBound,
    first_event_constant,
    first_event_poly,
    geometric_beta_bound,
    geometric_x_bound,
    lemma1_linear_bound,
    thinned_first_event,
)
from .models import (
    BoltzmannSpec,
    GaussianSpec,
    MixtureSpec,
    TargetModel,
    boltzmann_exact_moments,
    boltzmann_relaxation_model,
    build_Q,
    gaussian_model,
    mixture_model,
)
from .state import EventKind, ExtendedState, Mode, Skeleton, SkeletonEvent
from .sticky import SpikeSlabSpec, run_sticky_tempered
from .tempering import (
    GeometricPath,
    LogKappa,
    TemperingConfig,
    calibrate_kappa,
    estimate_ubar,
    exit_rate,
    run_fixed_beta,
    run_tempered_zigzag,
    tempered_rates,
)
from .zigzag import discretize, flow, run_zigzag

__all__ = [name for name in dir() if not name.startswith("_")]
