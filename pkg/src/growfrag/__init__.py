"""Growth-fragmentation dynamics for measure-valued data.

Perron eigentriple, hybrid density/atom time stepping and generalised
relative entropy diagnostics on a truncated size domain.
"""
from __future__ import annotations

import logging

from .coefficients import (
    CoefficientSet,
    KernelMatrix,
    KernelSpec,
    Profile,
    ValidationReport,
    discretize_kernel,
    eval_kernel,
    validate_assumptions,
)
from .dynamics import (
    SeparableTestFunction,
    SolverConfig,
    Trajectory,
    conservation_check,
    simulate,
    step,
    weak_form_residual,
)
from .eigen import EigenTriple, build_generator, eigen_identities, eigentriple, solve_dual, solve_primal
from .entropy import EntropySpec, dissipation, dissipation_budget, entropy_balance_check, relative_entropy
from .errors import *  # noqa: F401,F403
from .grid import DiagnosticSeries, Grid, HybridMeasure, PhiWeight, absorb_atom, tv_phi_distance, weighted_mass
from .pipeline import ExitReport, StudyReport, convergence_study, run_pipeline
from .scenario import Scenario, load_scenario, parse_scenario

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
