"""Distributed adaptive signal fusion with inexact local solvers."""

from .core import (DasfState, IterationTrace, LiftingMap, LocalProblemData, NodePayload,
                   apply_update, assemble_local_problem, build_lifting_map, compress_node,
                   filtered_output, initial_filter, run_dasf, warm_start)
from .diagnostics import (EnsembleStatistics, LicqReport, RateCertificate, StationarityReport,
                          compressed_licq_check, optimal_solution, optimal_value,
                          rate_bound_check, relative_excess_cost, stationarity_measure,
                          trace_statistics)
from .errors import *  # noqa: F401,F403
from .problems import (PCA, MaxSNR, ProblemSpec, RegularizedMWF, evaluate_L, gradient_smooth,
                       make_problem, project_constraints, prox_gamma)
from .signals import (ORACLE, SAMPLED, CovarianceToken, MixtureSource, NetworkModel,
                      SampleBatch, Statistics, draw_batch, estimate_covariance,
                      partition_channels)
from .solvers import (ContractReport, SolverConfig, SolverRun, certify_contract,
                      certify_sequence, lipschitz_constant, solve)

__version__ = "0.1.0"
