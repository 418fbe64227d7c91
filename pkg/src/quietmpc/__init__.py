"""Noise-aware model predictive control of a heat pump.

Identify a linear thermal model of a building, encode the heat pump's
piecewise-affine noise curve as mixed-integer linear constraints, solve the
receding-horizon problem with the in-package MILP engine, and evaluate the
acoustic/energy trade-off in closed loop against an RC-network surrogate
plant.
"""

from .acoustics import (
    AcousticTrace,
    AmbientParams,
    AmbientProfile,
    NoiseCurve,
    default_curve,
    domination_time,
    eval_curve,
    invert_curve_max_u,
    l_den,
    l_quiet,
    leq,
    mix,
    real_noise_cost,
    synth_ambient,
)
from .arx import ArxModel, IoDataset, identify, lift_for_horizon, mae, predict_one_step, predict_open_loop
from .config import RunConfig, load_config
from .controller import Histories, MpcConfig, StepDecision, StepForecasts, baseline_step, build_problem, solve_step
from .harness import ClosedLoopTrace, MetricsRow, pareto_sweep, run_closed_loop, summarize
from .milp import LinearProgram, Solution, SolverSettings, Status, brute_force_milp, solve_lp, solve_milp
from .plant import ExcitationGenerator, OccupancySchedule, RcParams, RcPlant, WeatherSeries, synth_weather

__version__ = "0.1.0"
