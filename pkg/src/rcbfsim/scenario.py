"""Scenario definition, YAML loading, validation, and serialization.

A scenario file fully determines one closed-loop run: who the agents are,
what they must avoid and stay tethered to, and every controller and
estimator parameter. Validation happens at load so that a scenario that
cannot satisfy the controller's startup requirements (positive initial
barrier, reconstruction gap inside the corridor, nonnegative reconstructed
barrier) is rejected with a message naming the offending field and the
requirement in plain words, before any simulation starts.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
import yaml
from numpy.typing import NDArray

from .barriers import (
    CIRCLE_AVOID,
    PAIR_CONNECTIVITY,
    PAIR_SEPARATION,
    BarrierSpec,
    PrimitiveConstraint,
    barrier_eval,
)
from .dynamics import InputBounds
from .qp import ClassKappa
from .topology import Topology, TopologyError

INIT_FIXED_OFFSET = "fixed-offset"
INIT_HALF_GAP = "half-gap"

DEFAULT_POINT_GOAL_RADIUS = 0.05
DEFAULT_SHARPNESS = 20.0
DEFAULT_NOMINAL_GAIN = 1.0


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class GoalSpec:
    center: NDArray[np.float64]
    radius: float

    def reached(self, position: NDArray[np.float64]) -> bool:
        return float(np.linalg.norm(position - self.center)) <= self.radius


@dataclass(frozen=True)
class AgentConfig:
    start: NDArray[np.float64]  # x, y, heading
    offset: float
    bounds: InputBounds
    goal: Optional[GoalSpec]
    follow: Optional[int]  # agent index whose position the nominal tracks
    follow_lead: float  # seconds of believed target motion to aim ahead by
    nominal_gain: float


@dataclass(frozen=True)
class ObstacleSpec:
    center: NDArray[np.float64]
    radius: float


@dataclass(frozen=True)
class ObserverConfig:
    weight_diag: NDArray[np.float64]  # (2,) diagonal of the common weighting
    leak: float
    initial_gain: float
    estimate_offset: NDArray[np.float64]  # added to true positions at t=0


@dataclass(frozen=True)
class RcbfConfig:
    theta0: float
    r_hat0: float
    rho0: float
    rho_inf: float
    decay: float
    error_gain: float
    leak: float
    adapt_gain: float
    smoothing: float
    init_mode: str


@dataclass(frozen=True)
class EngineConfig:
    dt: float
    horizon: float
    seed: int


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology
    agents: tuple[AgentConfig, ...]
    obstacles: tuple[ObstacleSpec, ...]
    robot_radius: float
    connectivity: tuple[tuple[int, int, float], ...]  # (agent, partner, distance)
    sharpness: float
    observer: ObserverConfig
    rcbf: RcbfConfig
    alphas: tuple[ClassKappa, ...]
    qp_weight: Optional[NDArray[np.float64]]  # (2,) diagonal or None for auto
    engine: EngineConfig

    @property
    def n_total(self) -> int:
        return self.topology.n_total

    @property
    def n_controllable(self) -> int:
        return self.topology.n_controllable

    def barrier_spec_for(self, agent: int) -> BarrierSpec:
        """The safety bundle agent `agent` is responsible for: one circle per
        obstacle, separation from every other robot, plus its tethers."""
        prims: list[PrimitiveConstraint] = []
        for obs in self.obstacles:
            prims.append(
                PrimitiveConstraint(
                    kind=CIRCLE_AVOID,
                    subjects=(agent,),
                    center=obs.center,
                    radius=obs.radius,
                    safe_radius=self.robot_radius,
                )
            )
        for other in range(self.n_total):
            if other != agent:
                prims.append(
                    PrimitiveConstraint(
                        kind=PAIR_SEPARATION,
                        subjects=(agent, other),
                        safe_radius=self.robot_radius,
                    )
                )
        for a, b, dist in self.connectivity:
            if a == agent:
                prims.append(
                    PrimitiveConstraint(
                        kind=PAIR_CONNECTIVITY, subjects=(a, b), distance=dist
                    )
                )
        if not prims:
            raise ScenarioError(f"agent {agent} has no safety primitives")
        return BarrierSpec(primitives=tuple(prims), sharpness=self.sharpness)

    def has_barrier(self, agent: int) -> bool:
        return bool(self.obstacles) or self.n_total > 1 or any(
            a == agent for a, _, _ in self.connectivity
        )

    def initial_positions(self) -> NDArray[np.float64]:
        return np.array([a.start[:2] for a in self.agents])

    def initial_estimates(self) -> NDArray[np.float64]:
        """(N, M, 2) initial estimate table: true positions plus the
        configured offset on every maintained slot."""
        n = self.n_controllable
        positions = self.initial_positions()
        est = np.tile(positions, (n, 1, 1))
        est += self.observer.estimate_offset[None, None, :]
        return est

    def estimate_stack(self, agent: int) -> NDArray[np.float64]:
        """Flat (2M,) position stack agent `agent` evaluates its barrier on:
        its estimates of everyone else, its own true position in its slot."""
        stack = self.initial_estimates()[agent].copy()
        stack[agent] = self.initial_positions()[agent]
        return stack.reshape(-1)

    def initial_rcbf(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Per-agent (theta0, rho0) resolved according to the init mode."""
        n = self.n_controllable
        theta0 = np.full(n, self.rcbf.theta0)
        rho0 = np.full(n, self.rcbf.rho0)
        if self.rcbf.init_mode == INIT_HALF_GAP:
            positions = self.initial_positions()
            for i in range(n):
                if not self.has_barrier(i):
                    continue
                bspec = self.barrier_spec_for(i)
                h_true, _ = barrier_eval(bspec, positions.reshape(-1))
                h_est, _ = barrier_eval(bspec, self.estimate_stack(i))
                theta0[i] = h_est - h_true / 2.0
                rho0[i] = h_true
        return theta0, rho0


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"{context}.{key} is required")
    return mapping[key]


def _as_float(value, context: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{context} must be a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ScenarioError(f"{context} must be finite")
    return out


def _as_positive(value, context: str) -> float:
    out = _as_float(value, context)
    if out <= 0.0:
        raise ScenarioError(f"{context} must be positive")
    return out


def _as_vector(value, length: int, context: str) -> NDArray[np.float64]:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (length,):
        raise ScenarioError(f"{context} must be a list of {length} numbers")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{context} must be finite")
    return arr


def _parse_alpha(raw: dict, context: str) -> ClassKappa:
    kind = _require(raw, "kind", context)
    try:
        if kind == "linear":
            return ClassKappa("linear", gain=_as_positive(raw.get("gain", 1.0), f"{context}.gain"))
        if kind == "odd_power":
            return ClassKappa(
                "odd_power",
                gain=_as_positive(raw.get("gain", 1.0), f"{context}.gain"),
                power=int(raw.get("power", 1)),
            )
    except ValueError as exc:
        raise ScenarioError(f"{context}: {exc}") from None
    raise ScenarioError(f"{context}.kind must be 'linear' or 'odd_power'")


def scenario_from_dict(raw: dict, name: str = "unnamed") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must contain a mapping at top level")
    name = str(raw.get("name", name))

    topo_raw = _require(raw, "topology", "scenario")
    n_c = int(_require(topo_raw, "n_controllable", "topology"))
    n_u = int(topo_raw.get("n_uncontrollable", 0))
    adjacency = np.zeros((n_c, n_c))
    for edge in topo_raw.get("edges", []):
        pair = _as_vector(edge, 2, "topology.edges entry").astype(int)
        i, j = int(pair[0]) - 1, int(pair[1]) - 1
        if not (0 <= i < n_c and 0 <= j < n_c):
            raise ScenarioError(
                f"topology.edges entry {edge} names an agent outside the "
                f"controllable range 1..{n_c}"
            )
        adjacency[i, j] = adjacency[j, i] = 1.0
    links = np.zeros((n_c, n_u))
    for link in topo_raw.get("observation_links", []):
        pair = _as_vector(link, 2, "topology.observation_links entry").astype(int)
        i, l = int(pair[0]) - 1, int(pair[1]) - 1 - n_c
        if not (0 <= i < n_c):
            raise ScenarioError(
                f"topology.observation_links entry {link} must start with a "
                f"controllable agent in 1..{n_c}"
            )
        if not (0 <= l < n_u):
            raise ScenarioError(
                f"topology.observation_links entry {link} must name an "
                f"uncontrollable agent in {n_c + 1}..{n_c + n_u}"
            )
        links[i, l] = 1.0
    try:
        topology = Topology(
            n_controllable=n_c,
            n_uncontrollable=n_u,
            adjacency=adjacency,
            observation_links=links,
        )
    except TopologyError as exc:
        raise ScenarioError(f"topology: {exc}") from None

    agents_raw = _require(raw, "agents", "scenario")
    if len(agents_raw) != topology.n_total:
        raise ScenarioError(
            f"agents lists {len(agents_raw)} entries but the topology "
            f"declares {topology.n_total} agents"
        )
    agents = []
    for k, a_raw in enumerate(agents_raw):
        ctx = f"agents[{k}]"
        start = _as_vector(_require(a_raw, "start", ctx), 3, f"{ctx}.start")
        offset = _as_positive(a_raw.get("offset", 0.036), f"{ctx}.offset")
        bounds_raw = a_raw.get("bounds", {})
        try:
            bounds = InputBounds(
                v_max=_as_positive(bounds_raw.get("v_max", 0.22), f"{ctx}.bounds.v_max"),
                w_max=_as_positive(bounds_raw.get("w_max", 2.84), f"{ctx}.bounds.w_max"),
            )
        except ValueError as exc:
            raise ScenarioError(f"{ctx}.bounds: {exc}") from None
        goal = None
        goal_raw = a_raw.get("goal")
        if goal_raw is not None:
            center = _as_vector(_require(goal_raw, "point", f"{ctx}.goal"), 2, f"{ctx}.goal.point")
            radius = _as_positive(
                goal_raw.get("radius", DEFAULT_POINT_GOAL_RADIUS), f"{ctx}.goal.radius"
            )
            goal = GoalSpec(center=center, radius=radius)
        follow = None
        follow_lead = 0.0
        follow_raw = a_raw.get("follow")
        if follow_raw is not None:
            if isinstance(follow_raw, dict):
                follow = int(_require(follow_raw, "agent", f"{ctx}.follow")) - 1
                follow_lead = _as_float(
                    follow_raw.get("lead", 0.0), f"{ctx}.follow.lead"
                )
                if follow_lead < 0.0:
                    raise ScenarioError(f"{ctx}.follow.lead must be nonnegative")
            else:
                follow = int(follow_raw) - 1
            if k >= n_c:
                raise ScenarioError(
                    f"{ctx}.follow: only controllable agents can be given a "
                    "follow task; uncontrollable agents are scripted by goal"
                )
            if not 0 <= follow < topology.n_total or follow == k:
                raise ScenarioError(
                    f"{ctx}.follow must name another agent in "
                    f"1..{topology.n_total}"
                )
            if goal is not None:
                raise ScenarioError(
                    f"{ctx}: goal and follow are mutually exclusive; an "
                    "agent's primary task is one or the other"
                )
        gain = _as_positive(a_raw.get("nominal_gain", DEFAULT_NOMINAL_GAIN), f"{ctx}.nominal_gain")
        agents.append(
            AgentConfig(
                start=start,
                offset=offset,
                bounds=bounds,
                goal=goal,
                follow=follow,
                follow_lead=follow_lead,
                nominal_gain=gain,
            )
        )

    obstacles = []
    for k, o_raw in enumerate(raw.get("obstacles", [])):
        ctx = f"obstacles[{k}]"
        obstacles.append(
            ObstacleSpec(
                center=_as_vector(_require(o_raw, "center", ctx), 2, f"{ctx}.center"),
                radius=_as_positive(_require(o_raw, "radius", ctx), f"{ctx}.radius"),
            )
        )

    safety_raw = raw.get("safety", {})
    robot_radius = _as_positive(safety_raw.get("robot_radius", 0.1), "safety.robot_radius")
    sharpness = _as_positive(safety_raw.get("sharpness", DEFAULT_SHARPNESS), "safety.sharpness")
    connectivity = []
    for k, c_raw in enumerate(safety_raw.get("connectivity", [])):
        ctx = f"safety.connectivity[{k}]"
        pair = _as_vector(_require(c_raw, "pair", ctx), 2, f"{ctx}.pair").astype(int)
        a, b = int(pair[0]) - 1, int(pair[1]) - 1
        if not (0 <= a < topology.n_total and 0 <= b < topology.n_total) or a == b:
            raise ScenarioError(f"{ctx}.pair must name two distinct agents")
        if a >= n_c:
            raise ScenarioError(
                f"{ctx}.pair: the first agent carries the tether constraint "
                f"and must be controllable (1..{n_c})"
            )
        dist = _as_positive(_require(c_raw, "distance", ctx), f"{ctx}.distance")
        connectivity.append((a, b, dist))

    obs_raw = raw.get("observer", {})
    weight_raw = obs_raw.get("weight", [2.0, 2.0])
    if isinstance(weight_raw, (int, float)):
        weight_diag = np.full(2, float(weight_raw))
    else:
        weight_diag = _as_vector(weight_raw, 2, "observer.weight")
    if np.any(weight_diag <= 0.0):
        raise ScenarioError("observer.weight entries must be positive")
    observer = ObserverConfig(
        weight_diag=weight_diag,
        leak=_as_positive(obs_raw.get("leak", 0.01), "observer.leak"),
        initial_gain=_as_float(obs_raw.get("initial_gain", 2.0), "observer.initial_gain"),
        estimate_offset=_as_vector(
            obs_raw.get("estimate_offset", [0.0, 0.0]), 2, "observer.estimate_offset"
        ),
    )
    if observer.initial_gain < 0.0:
        raise ScenarioError("observer.initial_gain must be nonnegative")

    rcbf_raw = raw.get("rcbf", {})
    init_mode = str(rcbf_raw.get("init_mode", INIT_FIXED_OFFSET))
    if init_mode not in (INIT_FIXED_OFFSET, INIT_HALF_GAP):
        raise ScenarioError(
            f"rcbf.init_mode must be '{INIT_FIXED_OFFSET}' or '{INIT_HALF_GAP}'"
        )
    rcbf = RcbfConfig(
        theta0=_as_float(rcbf_raw.get("theta0", 0.1), "rcbf.theta0"),
        r_hat0=_as_float(rcbf_raw.get("r_hat0", 0.0), "rcbf.r_hat0"),
        rho0=_as_positive(rcbf_raw.get("rho0", 1.0), "rcbf.rho0"),
        rho_inf=_as_positive(rcbf_raw.get("rho_inf", 0.15), "rcbf.rho_inf"),
        decay=_as_positive(rcbf_raw.get("varrho", 1.0), "rcbf.varrho"),
        error_gain=_as_positive(rcbf_raw.get("c", 0.01), "rcbf.c"),
        leak=_as_positive(rcbf_raw.get("varsigma", 0.8), "rcbf.varsigma"),
        adapt_gain=_as_positive(rcbf_raw.get("gamma", 0.01), "rcbf.gamma"),
        smoothing=_as_positive(rcbf_raw.get("epsilon", 0.01), "rcbf.epsilon"),
        init_mode=init_mode,
    )
    if rcbf.r_hat0 < 0.0:
        raise ScenarioError("rcbf.r_hat0 must be nonnegative")
    if rcbf.rho_inf >= rcbf.rho0:
        raise ScenarioError(
            "rcbf.rho_inf must be smaller than rcbf.rho0: the error corridor "
            "must shrink from its initial width to a narrower terminal width"
        )

    ctrl_raw = raw.get("controller", {})
    alphas_raw = ctrl_raw.get("alphas")
    if alphas_raw is None:
        alphas = tuple(ClassKappa("linear", gain=1.0) for _ in range(n_c))
    else:
        if len(alphas_raw) != n_c:
            raise ScenarioError(
                f"controller.alphas lists {len(alphas_raw)} entries but there "
                f"are {n_c} controllable agents"
            )
        alphas = tuple(
            _parse_alpha(a, f"controller.alphas[{k}]") for k, a in enumerate(alphas_raw)
        )
    weight_raw = ctrl_raw.get("weight", "auto")
    if isinstance(weight_raw, str):
        if weight_raw != "auto":
            raise ScenarioError("controller.weight must be 'auto' or a 2-entry diagonal")
        qp_weight = None
    else:
        qp_weight = _as_vector(weight_raw, 2, "controller.weight")
        if np.any(qp_weight <= 0.0):
            raise ScenarioError("controller.weight entries must be positive")

    engine_raw = raw.get("engine", {})
    engine = EngineConfig(
        dt=_as_positive(engine_raw.get("dt", 0.01), "engine.dt"),
        horizon=_as_float(engine_raw.get("horizon", 100.0), "engine.horizon"),
        seed=int(engine_raw.get("seed", 0)),
    )
    if engine.horizon < 0.0:
        raise ScenarioError("engine.horizon must be nonnegative")

    scenario = Scenario(
        name=name,
        topology=topology,
        agents=tuple(agents),
        obstacles=tuple(obstacles),
        robot_radius=robot_radius,
        connectivity=tuple(connectivity),
        sharpness=sharpness,
        observer=observer,
        rcbf=rcbf,
        alphas=alphas,
        qp_weight=qp_weight,
        engine=engine,
    )
    _validate_startup(scenario)
    return scenario


def _validate_startup(scenario: Scenario) -> None:
    """Startup requirements the controller depends on, checked per agent:
    a strictly positive initial barrier, a reconstruction gap strictly
    inside the corridor, and a nonnegative reconstructed barrier."""
    positions = scenario.initial_positions()
    theta0, rho0 = scenario.initial_rcbf()
    for i in range(scenario.n_controllable):
        if not scenario.has_barrier(i):
            continue
        bspec = scenario.barrier_spec_for(i)
        h_true, _ = barrier_eval(bspec, positions.reshape(-1))
        if h_true <= 0.0:
            raise ScenarioError(
                f"agent {i + 1} starts outside its safe set: the composed "
                f"barrier value at the initial states is {h_true:.6g}, but a "
                "strictly positive start is required"
            )
        h_est, _ = barrier_eval(bspec, scenario.estimate_stack(i))
        h_hat = h_est - theta0[i]
        gap = h_true - h_hat
        if not 0.0 < gap < rho0[i]:
            raise ScenarioError(
                f"agent {i + 1} initial reconstruction gap {gap:.6g} must lie "
                f"strictly inside the corridor (0, {rho0[i]:.6g}); adjust "
                "rcbf.theta0, rcbf.rho0, or observer.estimate_offset"
            )
        if h_hat < 0.0:
            raise ScenarioError(
                f"agent {i + 1} initial reconstructed barrier {h_hat:.6g} is "
                "negative; the safety filter needs a nonnegative start"
            )


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario file {path} does not parse: {exc}") from None
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return scenario_from_dict(raw, name=stem)


def load_bundled(name: str) -> Scenario:
    """Load a scenario shipped inside the package by stem name."""
    ref = resources.files("rcbfsim.scenarios").joinpath(f"{name}.yaml")
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    raw = yaml.safe_load(ref.read_text(encoding="utf-8"))
    return scenario_from_dict(raw, name=name)


def scenario_to_dict(s: Scenario) -> dict:
    """Plain mapping that scenario_from_dict accepts and reproduces."""
    topo = {
        "n_controllable": s.topology.n_controllable,
        "n_uncontrollable": s.topology.n_uncontrollable,
        "edges": [
            [i + 1, j + 1]
            for i in range(s.topology.n_controllable)
            for j in range(i + 1, s.topology.n_controllable)
            if s.topology.adjacency[i, j] == 1.0
        ],
        "observation_links": [
            [i + 1, s.topology.n_controllable + l + 1]
            for i in range(s.topology.n_controllable)
            for l in range(s.topology.n_uncontrollable)
            if s.topology.observation_links[i, l] == 1.0
        ],
    }
    agents = []
    for a in s.agents:
        entry = {
            "start": [float(v) for v in a.start],
            "offset": a.offset,
            "bounds": {"v_max": a.bounds.v_max, "w_max": a.bounds.w_max},
            "nominal_gain": a.nominal_gain,
        }
        if a.goal is not None:
            entry["goal"] = {
                "point": [float(v) for v in a.goal.center],
                "radius": a.goal.radius,
            }
        if a.follow is not None:
            if a.follow_lead > 0.0:
                entry["follow"] = {"agent": a.follow + 1, "lead": a.follow_lead}
            else:
                entry["follow"] = a.follow + 1
        agents.append(entry)
    alphas = []
    for alpha in s.alphas:
        entry = {"kind": alpha.kind, "gain": alpha.gain}
        if alpha.kind == "odd_power":
            entry["power"] = alpha.power
        alphas.append(entry)
    return {
        "name": s.name,
        "topology": topo,
        "agents": agents,
        "obstacles": [
            {"center": [float(v) for v in o.center], "radius": o.radius}
            for o in s.obstacles
        ],
        "safety": {
            "robot_radius": s.robot_radius,
            "sharpness": s.sharpness,
            "connectivity": [
                {"pair": [a + 1, b + 1], "distance": d} for a, b, d in s.connectivity
            ],
        },
        "observer": {
            "weight": [float(v) for v in s.observer.weight_diag],
            "leak": s.observer.leak,
            "initial_gain": s.observer.initial_gain,
            "estimate_offset": [float(v) for v in s.observer.estimate_offset],
        },
        "rcbf": {
            "theta0": s.rcbf.theta0,
            "r_hat0": s.rcbf.r_hat0,
            "rho0": s.rcbf.rho0,
            "rho_inf": s.rcbf.rho_inf,
            "varrho": s.rcbf.decay,
            "c": s.rcbf.error_gain,
            "varsigma": s.rcbf.leak,
            "gamma": s.rcbf.adapt_gain,
            "epsilon": s.rcbf.smoothing,
            "init_mode": s.rcbf.init_mode,
        },
        "controller": {
            "alphas": alphas,
            "weight": "auto" if s.qp_weight is None else [float(v) for v in s.qp_weight],
        },
        "engine": {"dt": s.engine.dt, "horizon": s.engine.horizon, "seed": s.engine.seed},
    }


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(s), fh, sort_keys=False)
