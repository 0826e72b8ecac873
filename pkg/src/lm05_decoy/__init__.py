"""Decoy-state key rates for the two-way LM05 protocol."""

__version__ = "0.1.0"

from .channel_model import (
    ChannelPoint,
    PulseSettings,
    SystemParams,
    channel_point,
    default_params,
    load_params,
)
from .decoy_bounds import BoundSet, MeasuredStats, Scheme, compute_bounds
from .key_rate import RateResult, rate_infinite, rate_r12lump, rate_r12sum
from .optimizer import OptimizeConfig, SweepPoint, max_secure_distance, optimize_at_distance, sweep

__all__ = [
    "BoundSet",
    "ChannelPoint",
    "MeasuredStats",
    "OptimizeConfig",
    "PulseSettings",
    "RateResult",
    "Scheme",
    "SweepPoint",
    "SystemParams",
    "channel_point",
    "compute_bounds",
    "default_params",
    "load_params",
    "max_secure_distance",
    "optimize_at_distance",
    "rate_infinite",
    "rate_r12lump",
    "rate_r12sum",
    "sweep",
]
