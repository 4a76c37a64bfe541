"""Fully lifted interpolating free energies of bilinearly indexed Gaussian processes."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

from .derivative import (
    PhiBreakdown,
    VerificationReport,
    dpsi_dt_r1_explicit,
    dpsi_dt_r2_explicit,
    fd_derivative,
    phi_terms,
    verify_derivative,
)
from .environment import Environment, SeedPath, resample_level, sample_environment
from .errors import LiftLabError
from .gibbs import ObservableKind, gibbs_average, phi_weight
from .ladder import Estimate, SampleTree, cascade_psi, cascade_slope, log_zeta, psi, psi_many, xi_endpoint
from .process import IndexedSets, LogPartition, d0_matrix, gamma0, load_sets, log_partition
from .schedule import EstimatorConfig, LiftingSchedule, validate_schedule

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "Environment",
    "Estimate",
    "EstimatorConfig",
    "IndexedSets",
    "LiftLabError",
    "LiftingSchedule",
    "LogPartition",
    "ObservableKind",
    "PhiBreakdown",
    "SampleTree",
    "SeedPath",
    "VerificationReport",
    "cascade_psi",
    "cascade_slope",
    "d0_matrix",
    "dpsi_dt_r1_explicit",
    "dpsi_dt_r2_explicit",
    "fd_derivative",
    "gamma0",
    "gibbs_average",
    "load_sets",
    "log_partition",
    "log_zeta",
    "phi_terms",
    "phi_weight",
    "psi",
    "psi_many",
    "resample_level",
    "sample_environment",
    "validate_schedule",
    "verify_derivative",
    "xi_endpoint",
]
