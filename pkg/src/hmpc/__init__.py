"""Model predictive control for hybrid dynamical systems given by flow and jump data."""

from .costs import CostSpec, TargetSet, evaluate_cost, running_cost_up_to
from .horizon import ControlHorizon, PredictionHorizon, make_band, make_generic, parse_horizon, reached
from .hybrid_time import HybridTime, HybridTimeDomain, concatenate, contains, truncate
from .mpc import MpcConfig, MpcTrace, assert_descent, run
from .ocp import BruteGrid, OcpOptions, OcpSolution, brute_force_value, solve, value
from .plant import Feedback, HybridPlant, SolutionPair, close_loop, validate_solution
from .simulator import SimBudget, simulate
from .verify import SampleCloud, check_clf, check_pd_conditions, check_prop5, check_stage_bounds, check_terminal_bound

__version__ = "0.1.0"
