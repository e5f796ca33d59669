"""Kinetic tumour-growth models under clinical uncertainty.

Solvers and calibration tools for volume distributions evolving by elementary
growth/therapy transitions: a stochastic-Galerkin Fokker-Planck solver over
the uncertain growth parameters, a direct Monte Carlo particle simulator of
the kinetic dynamics, closed-form feedback therapy protocols, and calibration
of parameter distributions from longitudinal volume measurements.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .control import AtTime, ControlSpec, MeanThreshold, Selective
from .errors import AdmissibilityError, ConfigError, NumericalError, PositivityError
from .growth_models import (
    EquilibriumSpec,
    GrowthParams,
    ModelKind,
    bind_params,
    equilibrium_density,
    integrate_micro,
    micro_rhs,
    model_kind,
    phi_eps,
    phi_limit,
    vb_coefficients,
)
from .uq_basis import (
    BetaOn,
    RandomVector,
    TensorBasis,
    Uniform,
    build_basis,
    gauss_rule,
)
from .fp_sg_solver import (
    DriftMatrix,
    GridSpec,
    SGResult,
    StabilityReport,
    assemble_drift,
    gamma_ic,
    solve,
    solve_pointwise,
    stability_monitor,
)
from .dsmc_sim import CollocationPlan, EnsembleResult, ParticleEnsemble, run_dsmc
from .dsmc_sim import run as run_collocation
from .calibration import (
    CohortSpec,
    FitResult,
    PatientSeries,
    align_to_onset,
    fit_beta_mle,
    fit_cohort,
    fit_series,
    ks_test,
    read_patient_csv,
    synth_cohort,
    write_patient_csv,
)

__all__ = [
    "__version__",
    "AtTime",
    "ControlSpec",
    "MeanThreshold",
    "Selective",
    "AdmissibilityError",
    "ConfigError",
    "NumericalError",
    "PositivityError",
    "EquilibriumSpec",
    "GrowthParams",
    "ModelKind",
    "bind_params",
    "equilibrium_density",
    "integrate_micro",
    "micro_rhs",
    "model_kind",
    "phi_eps",
    "phi_limit",
    "vb_coefficients",
    "BetaOn",
    "RandomVector",
    "TensorBasis",
    "Uniform",
    "build_basis",
    "gauss_rule",
    "DriftMatrix",
    "GridSpec",
    "SGResult",
    "StabilityReport",
    "assemble_drift",
    "gamma_ic",
    "solve",
    "solve_pointwise",
    "stability_monitor",
    "CollocationPlan",
    "EnsembleResult",
    "ParticleEnsemble",
    "run_dsmc",
    "run_collocation",
    "CohortSpec",
    "FitResult",
    "PatientSeries",
    "align_to_onset",
    "fit_beta_mle",
    "fit_cohort",
    "fit_series",
    "ks_test",
    "read_patient_csv",
    "synth_cohort",
    "write_patient_csv",
]
