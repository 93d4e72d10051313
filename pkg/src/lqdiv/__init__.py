"""Linear-quadratic dividend control for jump-diffusion surplus processes.

Solves the backward Riccati system of the quadratic value function, builds
the optimal affine dividend strategy, values it in closed form, and compares
it against barrier and mean-reverting payouts by Monte Carlo simulation.
"""

from ._kernels import backend
from .model import (
    JumpLaw,
    LQObjective,
    ModelParams,
    TimeFunction,
    jump_moments,
    validate,
)
from .riccati import (
    BlowupError,
    PVCoefficients,
    RiccatiSolution,
    SecondOrderConditionError,
    SolverError,
    TimeGrid,
    equivalence_deviation,
    equivalent_diffusion,
    eval_qpr,
    solve_pv_coefficients,
    solve_riccati,
    terminal_conditions,
)
from .sim import (
    PairedResult,
    PathRecord,
    SimConfig,
    SimResult,
    estimate_lq_objective,
    paired_compare,
    simulate,
    step_halving_pair,
)
from .strategy import (
    Barrier,
    LQAffine,
    MeanReverting,
    Strategy,
    hjb_residual,
    hjb_residual_grid,
    lump,
    mean_reversion_level,
    mr_benchmark_from_level,
    rate,
    strategy_tag,
)
from .valuation import (
    BarrierRoots,
    barrier_roots,
    barrier_value,
    cost_of_smoothing,
    optimal_barrier,
    pv_affine,
)

__version__ = "0.1.0"

__all__ = [
    "backend",
    "TimeFunction",
    "JumpLaw",
    "ModelParams",
    "LQObjective",
    "jump_moments",
    "validate",
    "TimeGrid",
    "RiccatiSolution",
    "PVCoefficients",
    "SolverError",
    "SecondOrderConditionError",
    "BlowupError",
    "terminal_conditions",
    "solve_riccati",
    "eval_qpr",
    "solve_pv_coefficients",
    "equivalence_deviation",
    "equivalent_diffusion",
    "LQAffine",
    "MeanReverting",
    "Barrier",
    "Strategy",
    "strategy_tag",
    "rate",
    "lump",
    "hjb_residual",
    "hjb_residual_grid",
    "mean_reversion_level",
    "mr_benchmark_from_level",
    "BarrierRoots",
    "barrier_roots",
    "barrier_value",
    "optimal_barrier",
    "pv_affine",
    "cost_of_smoothing",
    "SimConfig",
    "PathRecord",
    "SimResult",
    "PairedResult",
    "simulate",
    "estimate_lq_objective",
    "paired_compare",
    "step_halving_pair",
]
