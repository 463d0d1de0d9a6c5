"""Anytime-feasible, delay-tolerant distributed dispatch of generators and batteries."""

from .analysis import (OracleSolution, RunSummary, StepBoundInputs, bound_for, classify_run,
                       guaranteed_rate, solve_centralized, step_bound)
from .costs import CurvatureBounds, LinearCost, PenalizedCost, QuadraticCost, curvature_bounds
from .delaynet import DelaySchedule, run_delayed, sample_schedule, step_delayed
from .dynamics import (NodeRole, Problem, SimState, Termination, feasible_init,
                       momentum_baseline_step, protocol_rhs, run_to_convergence, step_euler)
from .graph import (AnalysisError, GraphError, Network, build_cycle, build_k_hop_cycle,
                    from_edges, laplacian, spectrum)
from .nonlin import NonlinearMap, SectorViolation, sector_bounds

__version__ = "0.1.0"
