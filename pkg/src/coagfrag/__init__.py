"""Discrete coagulation-fragmentation kinetics on truncated weighted l1 spaces.

The package pairs two independent engines for the truncated cluster
equations: a window-chained fixed-point solver built on the exact breakup
semigroup (the production path, with positivity and contraction
guarantees) and an adaptive embedded Runge-Kutta reference integrator.
Quantitative audits (mass ledger, growth envelope, positivity floor,
contraction ratio) turn the model's structural identities into pass/fail
checks.
"""

from .errors import (AssumptionError, CoagFragError, ConfigError, SolverError,
                     StiffnessError, WeightError)
from .kinetics import (AssumptionReport, CoagulationKernel, FragmentationModel,
                       TimeProfile, becker_doring_model, classify_assumptions,
                       constant_kernel, frag_power_kernel, min_kernel,
                       no_fragmentation, powerlaw_model, product_capped_kernel,
                       sum_kernel, table_kernel, tabulated_model,
                       uniform_binary_model)
from .operators import (TruncationMode, apply_coag_bilinear, apply_coagulation,
                        apply_fragmentation, coag_moment, coag_rhs,
                        frag_generator_matrix, frag_mass_rate,
                        lipschitz_constant)
from .diagnostics import (AuditReport, audit_contraction, audit_cp_inequality,
                          audit_global_bound, audit_mass, audit_positivity,
                          convexity_gap_constant, truncation_sweep)
from .reference import OracleConfig, integrate
from .scenario import Scenario, build_scenario, load_scenario
from .semigroup import SemigroupEvaluator, duhamel_integral, phi_scalar
from .solver import SolverConfig, WindowEngine, picard_window, solve, step_delta
from .state import BlowupInfo, Trajectory, TruncatedState, WindowRecord
from .weights import (MomentFunctional, TildeWeight, WeightSequence,
                      analytic_kappa_sup, find_kappa_certificate, first_moment,
                      kappa_estimate, number_moment, weighted_norm)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "AssumptionReport", "AuditReport", "BlowupInfo",
    "CoagFragError", "CoagulationKernel", "ConfigError", "FragmentationModel",
    "MomentFunctional", "OracleConfig", "Scenario", "SemigroupEvaluator",
    "SolverConfig", "SolverError", "StiffnessError", "TildeWeight",
    "TimeProfile", "Trajectory", "TruncatedState", "TruncationMode",
    "WeightError", "WeightSequence", "WindowEngine", "WindowRecord",
    "analytic_kappa_sup", "apply_coag_bilinear", "apply_coagulation",
    "apply_fragmentation", "audit_contraction", "audit_cp_inequality",
    "audit_global_bound", "audit_mass", "audit_positivity",
    "becker_doring_model", "build_scenario", "classify_assumptions",
    "coag_moment", "coag_rhs", "constant_kernel", "convexity_gap_constant",
    "duhamel_integral", "find_kappa_certificate", "first_moment",
    "frag_generator_matrix", "frag_mass_rate", "frag_power_kernel",
    "integrate", "kappa_estimate", "lipschitz_constant", "load_scenario",
    "min_kernel", "no_fragmentation", "number_moment", "phi_scalar",
    "picard_window", "powerlaw_model", "product_capped_kernel", "solve",
    "step_delta", "sum_kernel", "table_kernel", "tabulated_model",
    "truncation_sweep", "uniform_binary_model", "weighted_norm",
]
