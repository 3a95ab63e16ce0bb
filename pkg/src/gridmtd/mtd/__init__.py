"""Two-stage robust/hidden susceptance redesign."""

from .inputs import MtdError, MtdInputs, build_inputs
from .lmi import (
    IterateOutcome,
    LmiBlock,
    StageLmis,
    StageOneSolver,
    StageTwoSolver,
    build_stage_one_lmi,
    build_stage_two_lmis,
    frozen_ball_floor,
)
from .oracle import (
    effectiveness_lambda,
    flow_complement_projector,
    hiddenness_lambda,
    inner_oracle,
)
from .sdp import SOLVER_ORDER, ConicSolution, available_solvers, solve_sdp
from .stages import (
    MtdConfig,
    MtdSetpoint,
    StageOneRun,
    run_mtd,
    stage_one,
    stage_two,
)

__all__ = [
    "MtdError", "MtdInputs", "build_inputs",
    "IterateOutcome", "LmiBlock", "StageLmis", "StageOneSolver",
    "StageTwoSolver", "build_stage_one_lmi", "build_stage_two_lmis",
    "frozen_ball_floor",
    "effectiveness_lambda", "flow_complement_projector", "hiddenness_lambda",
    "inner_oracle",
    "SOLVER_ORDER", "ConicSolution", "available_solvers", "solve_sdp",
    "MtdConfig", "MtdSetpoint", "StageOneRun", "run_mtd", "stage_one",
    "stage_two",
]
