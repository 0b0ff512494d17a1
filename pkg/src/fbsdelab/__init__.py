"""Desk-scale laboratory for coupled forward-backward SDEs.

The pipeline: expression-defined coefficients -> viscous decoupling field
(backward quasilinear solve) -> forward-backward ensembles -> the
vanishing-noise limit (a coupled ODE boundary value problem) -> action
functionals and rare-event rates for the small-noise asymptotics.
"""

__version__ = "0.1.0"

from .errors import FbsdeLabError
from .expr import evaluate, parse, to_source
from .fbsde import EffectiveSDE, TrajectoryEnsemble, bsde_residual, picard_field, simulate
from .grids import Path, SpatialGrid, TimeGrid, l2_norm_sq, sup_norm_sq
from .ldp import ActionResult, ControlledODE, action_of_path, minimize_action, predict_tube_exponent, rate_for_Y
from .limit import LimitSolution, inviscid_field, shoot, verify_uniqueness_probe
from .montecarlo import (
    RareEventReport,
    SweepReport,
    convergence_sweep,
    exponent_fit,
    rare_event_report,
    tube_probability,
    wilson_interval,
)
from .pde import DecouplingField, field_at, solve_viscous
from .problem import ProblemSpec
from .rng import RandomSource
from .scenario import Scenario, load_scenario, parse_scenario
from .validation import ValidationReport, validate

__all__ = [
    "ActionResult",
    "ControlledODE",
    "DecouplingField",
    "EffectiveSDE",
    "FbsdeLabError",
    "LimitSolution",
    "Path",
    "ProblemSpec",
    "RandomSource",
    "RareEventReport",
    "Scenario",
    "SpatialGrid",
    "SweepReport",
    "TimeGrid",
    "TrajectoryEnsemble",
    "ValidationReport",
    "action_of_path",
    "bsde_residual",
    "convergence_sweep",
    "evaluate",
    "exponent_fit",
    "field_at",
    "inviscid_field",
    "l2_norm_sq",
    "load_scenario",
    "minimize_action",
    "parse",
    "parse_scenario",
    "picard_field",
    "predict_tube_exponent",
    "rare_event_report",
    "rate_for_Y",
    "shoot",
    "simulate",
    "solve_viscous",
    "sup_norm_sq",
    "to_source",
    "tube_probability",
    "validate",
    "verify_uniqueness_probe",
    "wilson_interval",
]
