"""Desk-scale laboratory for safe transfer under randomized dynamics.

Exact constrained-MDP machinery, ensemble-disagreement cost penalties,
randomized-domain training, and a reproducible experiment harness.  The
harness subpackage (configs, CLI, reports) imports lazily; the core stays
numpy/scipy only.
"""

from .cmdp import (CmdpSolution, OccupancyMeasure, TabularCMDP, TabularPolicy,
                   ValueFunctions, evaluate_policy, occupancy, solve_cmdp_lp,
                   telescoping_residual)
from .domains import (DomainDistribution, DomainFamily, DomainParamSpec,
                      DomainSamples, EnsembleSpec, derive_stream, dr_objective,
                      mixture_kernel, sample_box, sample_domains)
from .pessimism import (BoundReport, CalibrationResult, PenaltyConfig,
                        WassersteinMetric, calibrate_lambda, oracle_penalty,
                        penalize_cost, penalty_sufficiency, transfer_bound_report,
                        underestimation_gap, upsilon_exact_matrix,
                        upsilon_exact_tabular, upsilon_sampled, wasserstein_1d,
                        wasserstein_lp)
from .solvers import (SolverConfig, TrainResult, crpo_update, exact_gradient,
                      primal_dual_update, train_continuous, train_tabular)

__version__ = "0.1.0"
