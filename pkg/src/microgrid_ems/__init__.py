"""Stochastic energy management toolkit for a domestic microgrid.

Models a battery / hot-water-tank / heated-building system, trains an SDDP
policy against quantized demand noise, and compares it out of sample with an
MPC controller and a rule-based heuristic.
"""

from .model import (
    Control,
    ControlBox,
    ConstraintViolationError,
    InvalidStateError,
    ModelError,
    R6C2Params,
    Recourse,
    State,
    SystemParams,
    Uncertainty,
    admissible_controls,
    continuous_dynamics,
    linear_dynamics,
    recourse,
    split_flow,
    stage_cost,
    step,
    terminal_cost,
)
from .lp import LinearProgram, LpError, LpSolution, LpStatus, parametric_duals
from .lp import solve as solve_lp
from .scenarios import (
    ARModel,
    DiscreteDistribution,
    GeneratorConfig,
    ScenarioError,
    ScenarioSet,
    fit_ar,
    generate_scenarios,
    lloyd_max,
    load_distributions,
    load_scenarios,
    quantize_stagewise,
    save_distributions,
    save_scenarios,
    scenario_means,
    update_forecast,
)
from .policies import (
    Cut,
    HeuristicPolicy,
    MpcPolicy,
    PolicyDecision,
    SddpPolicy,
    StoppingRule,
    TrainingLog,
    ValueFunctions,
    evaluate_vf,
    heuristic_decide,
    mpc_decide,
    perfect_foresight_cost,
    sddp_decide,
    sddp_train,
)
from .assess import (
    AssessmentReport,
    SimulationResult,
    run_assessment,
    simulate_policy,
    split_scenarios,
)
from .config import ConfigError, RunConfig, day_config, load_config, manifest

__version__ = "0.1.0"
