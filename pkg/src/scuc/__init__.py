"""Security-constrained unit commitment toolkit.

Compiles power-system instances into a compact MILP, solves them with an
in-tree LP/branch-and-bound kernel under a relative optimality gap, runs
Monte-Carlo cross-environment benchmarks, and exposes a remote solve service.
"""

from .instance import (
    Bus,
    Generator,
    Line,
    SolverOptions,
    UcInstance,
    parse_instance,
    serialize_instance,
    synth_instance,
    validate_instance,
)
from .compiler import CompactModel, ModelStats, VariableIndex, compile, evaluate, model_stats
from .lp import LpProblem, LpSolution, solve_lp, solve_lp_fixed
from .mip import MilpProblem, MipResult, NodeRecord, root_relaxation, solve_mip
from .formats import SolutionDocument, export_mps, import_mps, replay_solution, solution_from_result
from .benchmark import (
    ComparisonReport,
    EnvironmentProfile,
    TrialRecord,
    compare,
    percent_gain,
    run_trials,
)

__version__ = "0.1.0"
