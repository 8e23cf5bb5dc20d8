"""Deterministic closed-loop simulation.

One step is: read the current state, let every controllable agent build and
solve its safety filter from its own estimates, script the uncontrollable
agents, then integrate the whole coupled system (plants, observers, funnel
offsets, robustness gains) with RK4 under zero-order-hold inputs. The
per-step diagnostics become one trace row; monitors accumulate into a final
report.

Two controller modes exist. "distributed" is the full scheme: per-agent QPs
fed by reconstructed barriers over observer estimates. "centralized" is the
comparison baseline: one joint QP over all inputs using ground-truth state,
available only when every agent is controllable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ._kernels import (
    ALPHA_LINEAR,
    ALPHA_ODD_POWER,
    KIND_CIRCLE,
    KIND_CONNECTIVITY,
    KIND_SEPARATION,
    KernelSpec,
    load_backend,
)
from .barriers import CIRCLE_AVOID, PAIR_SEPARATION, barrier_eval
from .dynamics import (
    InputBounds,
    NonFiniteValueError,
    UnicycleState,
    nominal_goto,
    rk4_step,
    unicycle_model,
)
from .qp import (
    Infeasible,
    QpProblem,
    assemble_centralized_constraint,
    solve_qp,
    solve_qp_with_slack,
)
from .scenario import Scenario
from .trace import (
    EVENT_CBF_RELAXED,
    EVENT_FUNNEL_VIOLATION,
    EVENT_QP_INFEASIBLE,
    TraceRecord,
)

MODE_DISTRIBUTED = "distributed"
MODE_CENTRALIZED = "centralized"

SLACK_EVENT_THRESHOLD = 1e-9
GOAL_HOLD_SECONDS = 1.0


class EngineError(ValueError):
    pass


class NumericalAbort(RuntimeError):
    """A state or rate stopped being finite. Carries the last complete
    trace record so the failure can be dumped for inspection."""

    def __init__(self, message: str, last_record: Optional[TraceRecord]):
        super().__init__(message)
        self.last_record = last_record


@dataclass(frozen=True)
class MonitorReport:
    """Safety monitors accumulated over one run."""

    min_h_true: NDArray[np.float64]  # per controllable agent
    min_h_hat: NDArray[np.float64]
    funnel_violations: int
    relaxations: int
    min_separation: float
    goal_times: tuple[Optional[float], ...]  # per agent; None = not reached


def safety_violated(report: MonitorReport) -> bool:
    """True when any monitored hard guarantee was breached: a true or
    reconstructed barrier dipping below -1e-6 or any funnel violation.
    Relaxations alone are warnings, not violations."""
    tol = -1e-6
    return bool(
        (report.min_h_true.size and report.min_h_true.min() < tol)
        or (report.min_h_hat.size and report.min_h_hat.min() < tol)
        or report.funnel_violations > 0
    )


def build_kernel_spec(scenario: Scenario, plant_only: bool = False) -> KernelSpec:
    """Flatten a scenario into the contiguous-array digest the integration
    kernels consume. plant_only drops the controllable layer entirely (used
    by the centralized baseline, which integrates plants alone)."""
    m = scenario.n_total
    n = 0 if plant_only else scenario.n_controllable

    prim_start = [0]
    kind, pa, pb, cx, cy, thr2 = [], [], [], [], [], []
    for i in range(n):
        if scenario.has_barrier(i):
            for p in scenario.barrier_spec_for(i).primitives:
                if p.kind == CIRCLE_AVOID:
                    kind.append(KIND_CIRCLE)
                    pa.append(p.subjects[0])
                    pb.append(-1)
                    cx.append(float(p.center[0]))
                    cy.append(float(p.center[1]))
                elif p.kind == PAIR_SEPARATION:
                    kind.append(KIND_SEPARATION)
                    pa.append(p.subjects[0])
                    pb.append(p.subjects[1])
                    cx.append(0.0)
                    cy.append(0.0)
                else:
                    kind.append(KIND_CONNECTIVITY)
                    pa.append(p.subjects[0])
                    pb.append(p.subjects[1])
                    cx.append(0.0)
                    cy.append(0.0)
                thr2.append(p.threshold_sq)
        prim_start.append(len(kind))

    theta0, rho0 = scenario.initial_rcbf()
    alpha_kind = np.array(
        [ALPHA_LINEAR if a.kind == "linear" else ALPHA_ODD_POWER for a in scenario.alphas],
        dtype=np.int32,
    )[:n]
    return KernelSpec(
        n_total=m,
        n_controllable=n,
        adjacency=scenario.topology.adjacency[:n, :n].astype(float),
        access=np.array([scenario.topology.access_row(i) for i in range(n)]).reshape(n, m),
        obs_weight=np.tile(scenario.observer.weight_diag, (m, 1)),
        obs_leak=np.full(m, scenario.observer.leak),
        offsets=np.array([a.offset for a in scenario.agents]),
        prim_start=np.array(prim_start, dtype=np.int32),
        prim_kind=np.array(kind, dtype=np.int32),
        prim_a=np.array(pa, dtype=np.int32),
        prim_b=np.array(pb, dtype=np.int32),
        prim_cx=np.array(cx, dtype=float),
        prim_cy=np.array(cy, dtype=float),
        prim_thr2=np.array(thr2, dtype=float),
        sharpness=np.full(n, scenario.sharpness),
        rho0=rho0[:n],
        rho_inf=np.full(n, scenario.rcbf.rho_inf),
        decay=np.full(n, scenario.rcbf.decay),
        error_gain=np.full(n, scenario.rcbf.error_gain),
        rcbf_leak=np.full(n, scenario.rcbf.leak),
        adapt_gain=np.full(n, scenario.rcbf.adapt_gain),
        smoothing=np.full(n, scenario.rcbf.smoothing),
        alpha_kind=alpha_kind,
        alpha_gain=np.array([a.gain for a in scenario.alphas])[:n],
        alpha_power=np.array([a.power for a in scenario.alphas], dtype=np.int32)[:n],
    )


def initial_flat_state(scenario: Scenario, spec: KernelSpec) -> NDArray[np.float64]:
    z = np.empty(spec.state_size)
    starts = np.array([a.start for a in scenario.agents])
    z[: spec.est_offset] = starts.reshape(-1)
    n = spec.n_controllable
    if n:
        z[spec.est_offset : spec.gain_offset] = scenario.initial_estimates().reshape(-1)
        z[spec.gain_offset : spec.theta_offset] = scenario.observer.initial_gain
        theta0, _ = scenario.initial_rcbf()
        z[spec.theta_offset : spec.rhat_offset] = theta0
        z[spec.rhat_offset :] = scenario.rcbf.r_hat0
    return z


def _qp_weight(scenario: Scenario, agent: int) -> NDArray[np.float64]:
    if scenario.qp_weight is not None:
        return np.diag(scenario.qp_weight)
    l = scenario.agents[agent].offset
    return np.diag([1.0, l * l])


# Guidance-only constants: extra ring width beyond a keep-out boundary (wider
# for fellow robots, whose paired separation terms squeeze the composed
# barrier hardest), and extra rotation past the tangent direction. Safety does
# not depend on them (the filter certifies whatever the task layer emits).
_GUIDANCE_MARGIN = 0.08
_GUIDANCE_AGENT_MARGIN = 0.22
_GUIDANCE_PAD = 0.05


def _guidance_aim(
    position: NDArray[np.float64],
    aim: NDArray[np.float64],
    scenario: Scenario,
    sides: Optional[dict] = None,
    agent: int = -1,
    agent_discs: tuple = (),
) -> NDArray[np.float64]:
    """Steer the aim point off the first keep-out disc blocking the ray to it.

    A straight goto aimed through a keep-out disc parks the vehicle at the
    boundary: the filter's constraint row there is radial, so it brakes the
    forward channel and carries no turn signal, and the vehicle cannot slide
    sideways without turning first. Swinging the aim to the disc's tangent
    restores a heading command; the filter still enforces the boundary itself.

    `agent_discs` lists fellow robots as (key, center, ring) at the believed
    positions the caller supplies. They only count as blockers when the ray
    passes clean through: a ray that ends at or inside such a disc is an
    intentional approach (a follower closing on its target, robots sharing a
    goal region) and is left to the separation constraints.

    `sides` is optional per-run memory keyed by (agent, disc key). A
    near-diametral ray makes the cheaper tangent side flip with every small
    heading change; committing to the first choice until the disc stops
    blocking keeps the detour a single smooth arc.
    """
    offset = aim - position
    reach = float(np.hypot(offset[0], offset[1]))
    if reach < 1e-9:
        return aim
    direction = offset / reach
    discs = [
        (("o", i), obs.center, obs.radius + scenario.robot_radius + _GUIDANCE_MARGIN, False)
        for i, obs in enumerate(scenario.obstacles)
    ]
    discs += [(key, center, ring, True) for key, center, ring in agent_discs]
    blocking = None
    for key, center, ring, through_only in discs:
        rel = center - position
        standoff = float(np.hypot(rel[0], rel[1]))
        if through_only:
            exit_gap = aim - center
            if float(np.hypot(exit_gap[0], exit_gap[1])) <= ring:
                if sides is not None:
                    sides.pop((agent, key), None)
                continue
        if standoff <= ring:
            entry = 0.0
        else:
            along = float(rel @ direction)
            lateral = abs(direction[0] * rel[1] - direction[1] * rel[0])
            if along <= 0.0 or lateral >= ring:
                if sides is not None:
                    sides.pop((agent, key), None)
                continue
            entry = along - math.sqrt(ring * ring - lateral * lateral)
            if entry >= reach:
                if sides is not None:
                    sides.pop((agent, key), None)
                continue
        if blocking is None or entry < blocking[0]:
            blocking = (entry, key, rel, standoff, ring)
    if blocking is None:
        return aim
    _, key, rel, standoff, ring = blocking
    if standoff <= ring:
        # Already inside the inflated ring: head a quarter turn outward from
        # the tangent that makes progress toward the aim.
        if standoff < 1e-9:
            outward = np.array([1.0, 0.0])
        else:
            outward = -rel / standoff
        tangent = np.array([-outward[1], outward[0]])
        if sides is not None and (agent, key) in sides:
            # side +1 swings the aim counterclockwise past the center line,
            # which orbits the disc clockwise: pick the matching tangent.
            if sides[(agent, key)] * (outward[0] * tangent[1] - outward[1] * tangent[0]) > 0.0:
                tangent = -tangent
        elif float(tangent @ direction) < 0.0:
            tangent = -tangent
        shaped = tangent + outward
        shaped /= float(np.hypot(shaped[0], shaped[1]))
        return position + shaped * reach
    to_center = rel / standoff
    half = math.asin(min(1.0, ring / standoff))
    if sides is not None and (agent, key) in sides:
        side = sides[(agent, key)]
    else:
        side = 1.0 if direction[0] * to_center[1] - direction[1] * to_center[0] <= 0.0 else -1.0
        if sides is not None:
            sides[(agent, key)] = side
    angle = side * (half + _GUIDANCE_PAD)
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    shaped = np.array(
        [
            cos_a * to_center[0] - sin_a * to_center[1],
            sin_a * to_center[0] + cos_a * to_center[1],
        ]
    )
    return position + shaped * reach


def _nominal_input(
    scenario: Scenario,
    agent: int,
    state_row: NDArray[np.float64],
    follow_position: Optional[NDArray[np.float64]] = None,
    guidance_sides: Optional[dict] = None,
    believed_positions: Optional[NDArray[np.float64]] = None,
):
    """Task input before safety filtering: drive to the declared goal, track
    the followed agent (callers supply the position the follower believes,
    so the information structure stays with the caller), or hold still. The
    aim point is routed around keep-out discs the straight ray would cross,
    including fellow robots at the believed positions the caller supplies."""
    cfg = scenario.agents[agent]
    if cfg.follow is not None:
        if follow_position is None:
            raise EngineError(
                f"agent {agent + 1} has a follow task but no target position "
                "was supplied"
            )
        target = follow_position
    elif cfg.goal is not None:
        target = cfg.goal.center
    else:
        return np.zeros(2)
    # Only goal-driven agents route around fellow robots: crossing traffic
    # yields early instead of fighting the separation rows at close range. A
    # follower's task is to stay near traffic, so shaping it away from other
    # robots contradicts the task and is left to the filter.
    discs = ()
    if believed_positions is not None and cfg.follow is None:
        ring = 2.0 * scenario.robot_radius + _GUIDANCE_AGENT_MARGIN
        discs = tuple(
            (("a", j), believed_positions[j], ring)
            for j in range(len(believed_positions))
            if j != agent
        )
    state = UnicycleState(position=state_row[:2], heading=float(state_row[2]))
    target = _guidance_aim(
        state.position,
        np.asarray(target, dtype=float),
        scenario,
        guidance_sides,
        agent,
        discs,
    )
    return nominal_goto(state, target, cfg.nominal_gain, cfg.bounds, cfg.offset)


def uncontrollable_policy(
    state: UnicycleState,
    goal: Optional[NDArray[np.float64]],
    gain: float,
    bounds: InputBounds,
    offset: float,
) -> NDArray[np.float64]:
    """Scripted input of an agent outside anyone's control: drive to its
    goal, or sit still without one. Its input never reaches the controllable
    agents' filters; they see only its measured state."""
    if goal is None:
        return np.zeros(2)
    return nominal_goto(state, goal, gain, bounds, offset)


def _solve_filter(weight, nominal, rows, lower, upper):
    """Strict QP first; on infeasibility retry with one shared slack.
    Returns (input, slack, event_bits)."""
    problem = QpProblem(
        weight=weight,
        nominal=nominal,
        general_constraints=tuple(rows),
        lower=lower,
        upper=upper,
    )
    try:
        solution = solve_qp(problem)
        return solution.argmin, 0.0, 0
    except Infeasible:
        pass
    try:
        solution = solve_qp_with_slack(problem)
    except ValueError:
        # even the relaxed problem failed; fall back to the clamped nominal
        fallback = np.clip(nominal, lower, upper)
        return fallback, 0.0, EVENT_QP_INFEASIBLE
    events = EVENT_QP_INFEASIBLE
    if solution.slack_used > SLACK_EVENT_THRESHOLD:
        events |= EVENT_CBF_RELAXED
    return solution.argmin, solution.slack_used, events


class _Monitors:
    def __init__(self, scenario: Scenario, n: int):
        self.scenario = scenario
        self.min_h_true = np.full(n, np.inf)
        self.min_h_hat = np.full(n, np.inf)
        self.funnel_violations = 0
        self.relaxations = 0
        self.min_separation = np.inf
        self.goal_times: list[Optional[float]] = [None] * scenario.n_total
        self.hold_time = 0.0
        self.has_goals = any(a.goal is not None for a in scenario.agents)

    def observe(self, record: TraceRecord, dt: float) -> None:
        if record.h_true.size:
            np.minimum(self.min_h_true, record.h_true, out=self.min_h_true)
            np.minimum(self.min_h_hat, record.h_hat, out=self.min_h_hat)
        self.funnel_violations += int(
            np.count_nonzero(record.events & EVENT_FUNNEL_VIOLATION)
        )
        self.relaxations += int(np.count_nonzero(record.events & EVENT_CBF_RELAXED))
        positions = record.states[:, :2]
        m = positions.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                d = float(np.linalg.norm(positions[i] - positions[j]))
                if d < self.min_separation:
                    self.min_separation = d
        all_reached = self.has_goals
        for k, cfg in enumerate(self.scenario.agents):
            if cfg.goal is None:
                continue
            if cfg.goal.reached(positions[k]):
                if self.goal_times[k] is None:
                    self.goal_times[k] = record.t
            else:
                all_reached = False
        self.hold_time = self.hold_time + dt if all_reached else 0.0

    def early_stop(self) -> bool:
        return self.has_goals and self.hold_time >= GOAL_HOLD_SECONDS

    def report(self) -> MonitorReport:
        return MonitorReport(
            min_h_true=self.min_h_true.copy(),
            min_h_hat=self.min_h_hat.copy(),
            funnel_violations=self.funnel_violations,
            relaxations=self.relaxations,
            min_separation=float(self.min_separation),
            goal_times=tuple(self.goal_times),
        )


def _distributed_controls(t, z, spec, scenario, backend, guidance_sides=None):
    """Stage 2 and 3 of a step: one safety filter per controllable agent
    from the shared snapshot, then scripted uncontrollable inputs."""
    snapshot = backend.control_snapshot(t, z, spec)
    m, n = spec.n_total, spec.n_controllable
    states = z[: spec.est_offset].reshape(m, 3)
    estimates = z[spec.est_offset : spec.gain_offset].reshape(n, m, 2)
    inputs = np.zeros((m, 2))
    slack = np.zeros(n)
    events = np.zeros(n, dtype=np.int64)
    for i in range(n):
        cfg = scenario.agents[i]
        bounds = cfg.bounds
        lower = np.array([-bounds.v_max, -bounds.w_max])
        upper = -lower
        rows = []
        if snapshot.has_row[i]:
            rows.append((snapshot.a_rows[i], float(snapshot.b_vals[i])))
        # a follower aims at its own estimate of the target (never the true
        # state), led ahead along the velocity its observer believes the
        # target has, so the aim point compensates the estimate's lag
        follow_position = None
        if cfg.follow is not None:
            follow_position = (
                estimates[i, cfg.follow]
                + cfg.follow_lead * snapshot.est_rate[i, cfg.follow]
            )
        u, s, ev = _solve_filter(
            _qp_weight(scenario, i),
            _nominal_input(
                scenario, i, states[i], follow_position, guidance_sides, estimates[i]
            ),
            rows,
            lower,
            upper,
        )
        inputs[i] = u
        slack[i] = s
        events[i] = ev
        if snapshot.has_row[i]:
            e, rho = float(snapshot.err[i]), float(snapshot.rho[i])
            if not 0.0 < e < rho:
                events[i] |= EVENT_FUNNEL_VIOLATION
    for k in range(n, m):
        cfg = scenario.agents[k]
        state = UnicycleState(position=states[k, :2], heading=float(states[k, 2]))
        inputs[k] = uncontrollable_policy(
            state,
            None if cfg.goal is None else cfg.goal.center,
            cfg.nominal_gain,
            cfg.bounds,
            cfg.offset,
        )
    record = TraceRecord(
        t=t,
        states=states.copy(),
        inputs=inputs,
        h_true=np.asarray(snapshot.h_true, dtype=float).copy(),
        h_hat=np.asarray(snapshot.h_hat, dtype=float).copy(),
        err=np.asarray(snapshot.err, dtype=float).copy(),
        rho=np.asarray(snapshot.rho, dtype=float).copy(),
        theta=z[spec.theta_offset : spec.rhat_offset].copy(),
        r_hat=z[spec.rhat_offset :].copy(),
        slack=slack,
        events=events,
        est_err=np.asarray(snapshot.est_err, dtype=float).copy(),
    )
    return inputs, record


def _centralized_controls(t, z, spec, scenario, guidance_sides=None):
    """One joint filter over every input, built from ground truth: each
    agent's composed barrier contributes one row over the stacked input."""
    m = spec.n_total
    states = z.reshape(m, 3)
    positions = states[:, :2].reshape(-1)
    n_agents = scenario.n_controllable

    h_vals = np.empty(n_agents)
    rows = []
    models = [unicycle_model(a.offset) for a in scenario.agents]
    actuations = [
        models[k].actuation(states[k])[:2, :] for k in range(m)
    ]  # position block only; the barrier ignores headings
    for i in range(n_agents):
        if not scenario.has_barrier(i):
            h_vals[i] = 0.0
            continue
        h, grad = barrier_eval(scenario.barrier_spec_for(i), positions)
        h_vals[i] = h
        grads = [grad[2 * k : 2 * k + 2] for k in range(m)]
        drifts = [np.zeros(2) for _ in range(m)]
        rows.append(
            assemble_centralized_constraint(
                grads, drifts, actuations, scenario.alphas[i], h
            )
        )

    weight = np.zeros((2 * m, 2 * m))
    nominal = np.zeros(2 * m)
    lower = np.empty(2 * m)
    for k in range(m):
        cfg = scenario.agents[k]
        follow_position = None if cfg.follow is None else states[cfg.follow, :2]
        weight[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = _qp_weight(scenario, k)
        nominal[2 * k : 2 * k + 2] = _nominal_input(
            scenario, k, states[k], follow_position, guidance_sides, states[:, :2]
        )
        lower[2 * k : 2 * k + 2] = [
            -cfg.bounds.v_max,
            -cfg.bounds.w_max,
        ]
    upper = -lower
    u_joint, slack_value, event_bits = _solve_filter(weight, nominal, rows, lower, upper)
    inputs = u_joint.reshape(m, 2)

    zeros = np.zeros(n_agents)
    record = TraceRecord(
        t=t,
        states=states.copy(),
        inputs=inputs,
        h_true=h_vals.copy(),
        h_hat=h_vals.copy(),
        err=zeros.copy(),
        rho=zeros.copy(),
        theta=zeros.copy(),
        r_hat=zeros.copy(),
        slack=np.full(n_agents, slack_value),
        events=np.full(n_agents, event_bits, dtype=np.int64),
        est_err=np.zeros((n_agents, m)),
    )
    return inputs, record


def step(
    t: float,
    z: NDArray[np.float64],
    spec: KernelSpec,
    scenario: Scenario,
    dt: float,
    backend,
    mode: str = MODE_DISTRIBUTED,
    guidance_sides: Optional[dict] = None,
) -> tuple[NDArray[np.float64], TraceRecord]:
    """Advance the coupled system by dt. Returns the next packed state and
    the trace record describing the step that was taken. `guidance_sides`
    carries the detour side commitments between consecutive steps; omitting
    it re-picks the cheaper side each call."""
    if mode == MODE_DISTRIBUTED:
        inputs, record = _distributed_controls(
            t, z, spec, scenario, backend, guidance_sides
        )
    else:
        inputs, record = _centralized_controls(t, z, spec, scenario, guidance_sides)
    u_flat = inputs.reshape(-1)

    def field(tt: float, zz: NDArray[np.float64]) -> NDArray[np.float64]:
        return backend.field(tt, zz, u_flat, spec)

    try:
        z_next = rk4_step(field, z, t, dt)
    except NonFiniteValueError as exc:
        raise NumericalAbort(str(exc), record) from exc
    # adaptation states are nonnegative by construction; RK4 can put them
    # a hair below zero, so pin them back
    if spec.n_controllable:
        np.maximum(
            z_next[spec.gain_offset : spec.theta_offset],
            0.0,
            out=z_next[spec.gain_offset : spec.theta_offset],
        )
        np.maximum(z_next[spec.rhat_offset :], 0.0, out=z_next[spec.rhat_offset :])
    return z_next, record


def run(
    scenario: Scenario,
    mode: str = MODE_DISTRIBUTED,
    dt: Optional[float] = None,
    horizon: Optional[float] = None,
    backend_name: Optional[str] = None,
) -> tuple[list[TraceRecord], MonitorReport]:
    """Simulate until the horizon or until every declared goal has been held
    for one second. One record per step; monitors summarize the run."""
    if mode not in (MODE_DISTRIBUTED, MODE_CENTRALIZED):
        raise EngineError(f"unknown mode {mode!r}")
    if mode == MODE_CENTRALIZED and scenario.topology.n_uncontrollable:
        raise EngineError(
            "the centralized baseline needs every agent's input, so scenarios "
            "with uncontrollable agents are refused; run the distributed mode "
            "instead"
        )
    dt = scenario.engine.dt if dt is None else float(dt)
    if dt <= 0.0:
        raise EngineError("dt must be positive")
    horizon = scenario.engine.horizon if horizon is None else float(horizon)
    if horizon < 0.0:
        raise EngineError("horizon must be nonnegative")

    backend = load_backend(backend_name)
    spec = build_kernel_spec(scenario, plant_only=mode == MODE_CENTRALIZED)
    z = initial_flat_state(scenario, spec)
    monitors = _Monitors(scenario, scenario.n_controllable)
    records: list[TraceRecord] = []

    n_steps = int(round(horizon / dt))
    guidance_sides: dict = {}
    t = 0.0
    for k in range(n_steps):
        t = k * dt
        try:
            z, record = step(t, z, spec, scenario, dt, backend, mode, guidance_sides)
        except NumericalAbort as abort:
            if abort.last_record is not None:
                records.append(abort.last_record)
                monitors.observe(abort.last_record, dt)
            raise
        records.append(record)
        monitors.observe(record, dt)
        if monitors.early_stop():
            break
    return records, monitors.report()
