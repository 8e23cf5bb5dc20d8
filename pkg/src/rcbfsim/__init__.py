"""Distributed safety filtering for multi-agent unicycle teams.

The library simulates controllable agents that keep coupled safety
constraints (obstacle keep-outs, pairwise separations, connectivity
tethers) satisfied using only locally estimated state: each agent runs a
consensus observer over its neighbors plus any directly sensed targets,
reconstructs its barrier value through a prescribed-performance error
funnel, and filters its task input through a small quadratic program.

Typical use: load a scenario file, `run` it, inspect the report or write
the trace CSV for plotting.
"""

from .barriers import (
    CIRCLE_AVOID,
    PAIR_CONNECTIVITY,
    PAIR_SEPARATION,
    BarrierSpec,
    PrimitiveConstraint,
    barrier_eval,
    softmin_compose,
    softmin_gradient,
)
from .dynamics import InputBounds, UnicycleState, nominal_goto, rk4_step
from .engine import (
    MODE_CENTRALIZED,
    MODE_DISTRIBUTED,
    EngineError,
    MonitorReport,
    NumericalAbort,
    run,
    safety_violated,
    step,
)
from .qp import Infeasible, QpProblem, QpSolution, solve_qp, solve_qp_with_slack
from .rcbf import FunnelParams, funnel, inverse_transform, transform
from .scenario import (
    Scenario,
    ScenarioError,
    load_bundled,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .trace import (
    EVENT_CBF_RELAXED,
    EVENT_FUNNEL_VIOLATION,
    EVENT_QP_INFEASIBLE,
    TraceRecord,
    read_trace,
    trace_columns,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BarrierSpec",
    "CIRCLE_AVOID",
    "EVENT_CBF_RELAXED",
    "EVENT_FUNNEL_VIOLATION",
    "EVENT_QP_INFEASIBLE",
    "EngineError",
    "InputBounds",
    "MODE_CENTRALIZED",
    "MODE_DISTRIBUTED",
    "MonitorReport",
    "NumericalAbort",
    "FunnelParams",
    "Infeasible",
    "PAIR_CONNECTIVITY",
    "PAIR_SEPARATION",
    "PrimitiveConstraint",
    "QpProblem",
    "QpSolution",
    "Scenario",
    "ScenarioError",
    "TraceRecord",
    "UnicycleState",
    "barrier_eval",
    "funnel",
    "inverse_transform",
    "load_bundled",
    "load_scenario",
    "nominal_goto",
    "read_trace",
    "rk4_step",
    "run",
    "safety_violated",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "softmin_compose",
    "softmin_gradient",
    "solve_qp",
    "solve_qp_with_slack",
    "step",
    "trace_columns",
    "transform",
    "write_trace",
]
