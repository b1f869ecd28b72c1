"""Control barrier functions that keep a leader-follower swarm strongly r-robust."""
from .config import ConfigError, ScenarioConfig, parse_scenario, shipped_scenarios, validate_scenario
from .qp import QpProblem, QpSolution, solve, verify_kkt
from .robustness import (bootstrap_percolate, is_strongly_r_robust_bruteforce, max_strong_robustness,
                         percolates)
from .sim import Trace, check_invariants, run_scenario
from .smooth import SmoothParams, composed_cbf, hocbf_chain, robustness_margin
from .state import SwarmState
from .traceio import emit_trace, read_trace

__version__ = "0.1.0"
