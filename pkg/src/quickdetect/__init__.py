"""Optimal observation and stopping with a scarce budget of noisy looks."""
__version__ = "0.1.0"

from .errors import ConfigError, DomainError, NumericalError  # noqa: E402
from .model import (ModelParams, bayes_risk_from_value, drift_flow, jump_update,  # noqa: E402
                    odds_from_prior)
from .operators import (QuadratureRule, ValueTable, grid_sizes, horizon_T, j0_op, j_op,  # noqa: E402
                        k_op, running_cost, t_star_0)
from .continuous import ContinuousSolution, phibar, solve_continuous  # noqa: E402
from .lump import FixedSchedule, LumpSolution, fixed_schedule_value, solve_lump, v0_analytic  # noqa: E402
from .arrival import (ArrivalLattice, FeasibleTable, infinite_horizon_gap, j0_arrival,  # noqa: E402
                      j0_arrival_min, j_e, j_e_min, j_plus, j_plus_min, k_bold, solve_arrival)
from .simulate import (Policy, RiskEstimate, EpisodeResult, discretized_paths,  # noqa: E402
                       estimate_risk, observation_increment, run_episode, sample_disorder)
