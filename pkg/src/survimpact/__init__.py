"""Concordance probability and covariate-impact estimation for survival
risk models.

The package estimates how well a fitted risk score orders survival times
up to a horizon tau (the concordance probability) and how much of that
ordering ability is contributed by a designated block of new covariates
(the impact xi, the gap between the enhanced and the projected
concordance).  Estimation runs through linear transformation models or
anchored partial-rank scoring, with bootstrap inference and a Monte
Carlo harness for operating-characteristic studies.
"""

from ._errors import (ConvergenceError, IdentifiabilityError, NumericalError,
                      ValidationError)
from ._version import __version__
from .concordance import (Bandwidths, ConcordanceEstimate, ProjectedTheta,
                          cpe, cpe_projected, default_bandwidths,
                          marginal_pi, project_theta, weighted_c_index)
from .dataset import (FAMILIES, METHODS, AnalysisConfig, ColumnSpec,
                      SurvivalDataset, load_config, load_csv,
                      truncate_to_horizon, write_csv)
from .inference import ImpactEstimate, impact, naive_nested_impact
from .partialrank import PartialRankFit, pr_fit, pr_objective
from .report import AnalysisReport, render
from .simgen import (PopulationParams, SimReport, SimScenario, generate,
                     load_scenario, population_params, run_study, scenario)
from .survfit import (CoxFit, PhTestResult, StepSurvival, cox_fit, km_fit,
                      ph_test)
from .transmodel import (TransformFit, fit_transform_model, get_family,
                         solve_m_tau, theta_ph, theta_po, theta_probit)

__all__ = [
    "AnalysisConfig", "AnalysisReport", "Bandwidths", "ColumnSpec",
    "ConcordanceEstimate", "ConvergenceError", "CoxFit", "FAMILIES",
    "IdentifiabilityError", "ImpactEstimate", "METHODS", "NumericalError",
    "PartialRankFit", "PhTestResult", "PopulationParams", "ProjectedTheta",
    "SimReport", "SimScenario", "StepSurvival", "SurvivalDataset",
    "TransformFit", "ValidationError", "cox_fit", "cpe", "cpe_projected",
    "default_bandwidths", "fit_transform_model", "generate", "get_family",
    "impact", "km_fit", "load_config", "load_csv", "load_scenario",
    "marginal_pi", "naive_nested_impact", "ph_test", "population_params",
    "pr_fit", "pr_objective", "project_theta", "render", "run_study",
    "scenario", "solve_m_tau", "theta_ph", "theta_po", "theta_probit",
    "truncate_to_horizon", "weighted_c_index", "write_csv", "__version__",
]
