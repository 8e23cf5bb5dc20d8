"""Scenario schema, validation, and the bundled scenario files."""

import copy
import math

import numpy as np
import pytest

from rcbfsim.barriers import (
    CIRCLE_AVOID,
    PAIR_CONNECTIVITY,
    PAIR_SEPARATION,
    barrier_eval,
)
from rcbfsim.scenario import (
    ScenarioError,
    load_bundled,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


def _base() -> dict:
    """Minimal two-robot scenario used as a mutation target."""
    return {
        "name": "pair",
        "topology": {"n_controllable": 2, "edges": [[1, 2]]},
        "agents": [
            {"start": [0.0, 0.0, 0.0], "goal": {"point": [2.0, 0.0]}},
            {"start": [2.0, 0.0, math.pi]},
        ],
        "safety": {"robot_radius": 0.1},
    }


class TestLoadAndDefaults:
    def test_minimal_scenario_loads_with_defaults(self):
        s = scenario_from_dict(_base())
        assert s.n_controllable == 2 and s.n_total == 2
        assert s.robot_radius == 0.1
        assert s.sharpness == 20.0
        assert s.rcbf.theta0 == 0.1 and s.rcbf.rho0 == 1.0
        assert s.rcbf.rho_inf == 0.15 and s.rcbf.decay == 1.0
        assert s.observer.leak == 0.01 and s.observer.initial_gain == 2.0
        assert s.engine.dt == 0.01 and s.engine.horizon == 100.0
        assert s.qp_weight is None
        assert all(a.kind == "linear" and a.gain == 1.0 for a in s.alphas)
        assert s.agents[0].bounds.v_max == 0.22
        assert s.agents[0].bounds.w_max == 2.84
        assert s.agents[0].offset == 0.036

    def test_point_goal_gets_default_tolerance(self):
        s = scenario_from_dict(_base())
        assert s.agents[0].goal.radius == 0.05
        assert s.agents[1].goal is None

    def test_goal_reached_predicate(self):
        s = scenario_from_dict(_base())
        goal = s.agents[0].goal
        assert goal.reached(np.array([2.0, 0.04]))
        assert not goal.reached(np.array([2.0, 0.06]))


@pytest.fixture(scope="module")
def s():
    return load_bundled("four_robot_team")


class TestBundledFourRobotTeam:
    """The shipped default scenario pins every published constant."""

    def test_team_shape(self, s):
        assert s.n_controllable == 3
        assert s.topology.n_uncontrollable == 1
        assert s.topology.adjacency[0, 1] == 1.0
        assert s.topology.adjacency[1, 2] == 1.0
        assert s.topology.adjacency[0, 2] == 0.0
        # every controllable robot senses the self-driven one directly
        assert s.topology.observation_links[:, 0].tolist() == [1.0, 1.0, 1.0]

    def test_follow_task(self, s):
        assert s.agents[2].follow == 3
        assert s.agents[2].follow_lead == 0.0
        assert all(a.follow is None for i, a in enumerate(s.agents) if i != 2)

    def test_starts(self, s):
        starts = np.array([a.start for a in s.agents])
        expected = np.array(
            [
                [4.0, 4.0, 0.0],
                [4.0, 3.0, 0.0],
                [4.0, 0.5, -math.pi],
                [3.5, 0.6, -math.pi],
            ]
        )
        np.testing.assert_allclose(starts, expected)

    def test_obstacles(self, s):
        table = [(list(o.center), o.radius) for o in s.obstacles]
        assert table == [
            ([0.8, 2.5], 0.5),
            ([3.0, 3.5], 0.3),
            ([3.0, 1.5], 0.5),
        ]

    def test_goals(self, s):
        assert list(s.agents[0].goal.center) == [1.0, 0.5]
        assert s.agents[0].goal.radius == 0.4
        assert list(s.agents[1].goal.center) == [1.0, 0.5]
        assert s.agents[2].goal is None
        assert list(s.agents[3].goal.center) == [0.0, 4.0]
        assert s.agents[3].goal.radius == 0.05

    def test_safety_constants(self, s):
        assert s.robot_radius == 0.1
        assert s.sharpness == 20.0
        assert s.connectivity == ((0, 1, 1.25), (1, 0, 1.25), (2, 3, 1.25))

    def test_observer_constants(self, s):
        assert s.observer.weight_diag.tolist() == [2.0, 2.0]
        assert s.observer.leak == 0.01
        assert s.observer.initial_gain == 2.0
        assert s.observer.estimate_offset.tolist() == [0.0, 0.0]

    def test_rcbf_constants(self, s):
        r = s.rcbf
        assert (r.theta0, r.r_hat0) == (0.1, 0.0)
        assert (r.rho0, r.rho_inf, r.decay) == (1.0, 0.15, 1.0)
        assert (r.error_gain, r.leak) == (0.01, 0.8)
        assert (r.adapt_gain, r.smoothing) == (0.01, 0.01)
        assert r.init_mode == "fixed-offset"

    def test_controller_constants(self, s):
        assert s.alphas[0].kind == "linear" and s.alphas[0].gain == 1.0
        assert s.alphas[1].kind == "linear" and s.alphas[1].gain == 1.0
        assert s.alphas[2].kind == "odd_power"
        assert s.alphas[2].gain == 0.1 and s.alphas[2].power == 5
        assert s.qp_weight is None

    def test_input_bounds(self, s):
        for a in s.agents:
            assert a.bounds.v_max == 0.22
            assert a.bounds.w_max == 2.84
            assert a.offset == 0.036

    def test_barrier_bundle_layout(self, s):
        # every controllable robot: 3 obstacle circles, 3 separations, 1 tether
        for i in range(3):
            prims = s.barrier_spec_for(i).primitives
            kinds = [p.kind for p in prims]
            assert kinds.count(CIRCLE_AVOID) == 3
            assert kinds.count(PAIR_SEPARATION) == 3
            assert kinds.count(PAIR_CONNECTIVITY) == 1
        tether = [p for p in s.barrier_spec_for(2).primitives if p.kind == PAIR_CONNECTIVITY]
        assert tether[0].subjects == (2, 3)
        assert tether[0].distance == 1.25
        sep = [p for p in s.barrier_spec_for(0).primitives if p.kind == PAIR_SEPARATION]
        assert {p.subjects[1] for p in sep} == {1, 2, 3}
        assert all(p.threshold_sq == pytest.approx(0.04) for p in sep)

    def test_start_is_feasible(self, s):
        positions = s.initial_positions().reshape(-1)
        theta0, rho0 = s.initial_rcbf()
        for i in range(3):
            h, _ = barrier_eval(s.barrier_spec_for(i), positions)
            assert h > 0.0
            assert h - theta0[i] >= 0.0  # reconstructed barrier starts clean
            assert 0.0 < theta0[i] < rho0[i]  # exact estimates: gap == theta0


class TestBundledPairBaseline:
    def test_loads_all_controllable(self):
        s = load_bundled("pair_baseline")
        assert s.n_total == 2 and s.n_controllable == 2
        assert not s.obstacles and not s.connectivity

    def test_unknown_bundled_name(self):
        with pytest.raises(ScenarioError, match="no bundled scenario"):
            load_bundled("does_not_exist")


class TestValidation:
    def test_corridor_must_shrink(self):
        raw = _base()
        raw["rcbf"] = {"rho0": 0.1, "rho_inf": 0.15}
        with pytest.raises(ScenarioError, match="rho_inf must be smaller"):
            scenario_from_dict(raw)

    def test_gap_above_corridor_rejected(self):
        raw = _base()
        raw["rcbf"] = {"theta0": 1.5}  # gap == theta0 with exact estimates
        with pytest.raises(ScenarioError, match="reconstruction gap"):
            scenario_from_dict(raw)

    def test_gap_below_corridor_rejected(self):
        raw = _base()
        raw["rcbf"] = {"theta0": -0.05}
        with pytest.raises(ScenarioError, match="reconstruction gap"):
            scenario_from_dict(raw)

    def test_negative_reconstructed_barrier_rejected(self):
        raw = _base()
        # h(x0) = 2^2 - 0.04 = 3.96; push theta0 past it but keep the gap
        # inside the corridor by widening it
        raw["rcbf"] = {"theta0": 4.0, "rho0": 5.0}
        with pytest.raises(ScenarioError, match="reconstructed barrier"):
            scenario_from_dict(raw)

    def test_unsafe_start_rejected(self):
        raw = _base()
        raw["agents"][1]["start"] = [0.05, 0.0, 0.0]  # overlapping robots
        with pytest.raises(ScenarioError, match="outside its safe set"):
            scenario_from_dict(raw)

    def test_disconnected_graph_rejected(self):
        raw = _base()
        raw["topology"] = {"n_controllable": 3, "edges": [[1, 2]]}
        raw["agents"].append({"start": [4.0, 4.0, 0.0]})
        with pytest.raises(ScenarioError, match="connected"):
            scenario_from_dict(raw)

    def test_unobserved_uncontrollable_rejected(self):
        raw = _base()
        raw["topology"]["n_uncontrollable"] = 1
        raw["agents"].append({"start": [4.0, 4.0, 0.0]})
        with pytest.raises(ScenarioError, match="observer"):
            scenario_from_dict(raw)

    def test_follow_out_of_range_rejected(self):
        raw = _base()
        del raw["agents"][0]["goal"]
        raw["agents"][0]["follow"] = 5
        with pytest.raises(ScenarioError, match="must name another agent"):
            scenario_from_dict(raw)

    def test_follow_self_rejected(self):
        raw = _base()
        del raw["agents"][0]["goal"]
        raw["agents"][0]["follow"] = 1
        with pytest.raises(ScenarioError, match="must name another agent"):
            scenario_from_dict(raw)

    def test_follow_on_uncontrollable_rejected(self):
        raw = _base()
        raw["topology"]["n_uncontrollable"] = 1
        raw["topology"]["observation_links"] = [[1, 3]]
        raw["agents"].append({"start": [4.0, 4.0, 0.0], "follow": 1})
        with pytest.raises(ScenarioError, match="only controllable agents"):
            scenario_from_dict(raw)

    def test_follow_and_goal_conflict_rejected(self):
        raw = _base()
        raw["agents"][0]["follow"] = 2
        with pytest.raises(ScenarioError, match="mutually exclusive"):
            scenario_from_dict(raw)

    def test_negative_follow_lead_rejected(self):
        raw = _base()
        del raw["agents"][0]["goal"]
        raw["agents"][0]["follow"] = {"agent": 2, "lead": -0.1}
        with pytest.raises(ScenarioError, match="lead must be nonnegative"):
            scenario_from_dict(raw)

    def test_agent_count_mismatch(self):
        raw = _base()
        raw["agents"].pop()
        with pytest.raises(ScenarioError, match="lists 1 entries"):
            scenario_from_dict(raw)

    def test_edge_out_of_range(self):
        raw = _base()
        raw["topology"]["edges"] = [[1, 5]]
        with pytest.raises(ScenarioError, match="outside the controllable range"):
            scenario_from_dict(raw)

    def test_observation_link_must_start_controllable(self):
        raw = _base()
        raw["topology"]["n_uncontrollable"] = 1
        raw["topology"]["observation_links"] = [[3, 3]]
        raw["agents"].append({"start": [4.0, 4.0, 0.0]})
        with pytest.raises(ScenarioError, match="controllable agent"):
            scenario_from_dict(raw)

    def test_tether_owner_must_be_controllable(self):
        raw = _base()
        raw["topology"]["n_uncontrollable"] = 1
        raw["topology"]["observation_links"] = [[2, 3]]
        raw["agents"].append({"start": [4.0, 4.0, 0.0]})
        raw["safety"]["connectivity"] = [{"pair": [3, 1], "distance": 1.25}]
        with pytest.raises(ScenarioError, match="must be controllable"):
            scenario_from_dict(raw)

    def test_bad_init_mode(self):
        raw = _base()
        raw["rcbf"] = {"init_mode": "guess"}
        with pytest.raises(ScenarioError, match="init_mode"):
            scenario_from_dict(raw)

    def test_bad_alpha_kind(self):
        raw = _base()
        raw["controller"] = {"alphas": [{"kind": "tanh"}, {"kind": "linear"}]}
        with pytest.raises(ScenarioError, match="linear.*odd_power"):
            scenario_from_dict(raw)

    def test_alpha_count_mismatch(self):
        raw = _base()
        raw["controller"] = {"alphas": [{"kind": "linear"}]}
        with pytest.raises(ScenarioError, match="alphas lists 1"):
            scenario_from_dict(raw)

    def test_weight_string_other_than_auto(self):
        raw = _base()
        raw["controller"] = {"weight": "identity"}
        with pytest.raises(ScenarioError, match="'auto'"):
            scenario_from_dict(raw)

    def test_negative_obstacle_radius(self):
        raw = _base()
        raw["obstacles"] = [{"center": [1.0, 1.0], "radius": -0.5}]
        with pytest.raises(ScenarioError, match="radius must be positive"):
            scenario_from_dict(raw)

    def test_missing_start(self):
        raw = _base()
        del raw["agents"][0]["start"]
        with pytest.raises(ScenarioError, match=r"agents\[0\].start is required"):
            scenario_from_dict(raw)

    def test_start_wrong_length(self):
        raw = _base()
        raw["agents"][0]["start"] = [1.0, 2.0]
        with pytest.raises(ScenarioError, match="list of 3 numbers"):
            scenario_from_dict(raw)

    def test_nonfinite_value(self):
        raw = _base()
        raw["engine"] = {"dt": float("nan")}
        with pytest.raises(ScenarioError, match="finite"):
            scenario_from_dict(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "absent.yaml")

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("topology: [unclosed")
        with pytest.raises(ScenarioError, match="does not parse"):
            load_scenario(path)


class TestInitialState:
    def test_estimates_carry_offset_everywhere(self):
        raw = _base()
        # offset perpendicular to the pair axis: barely perturbs the barrier
        raw["observer"] = {"estimate_offset": [0.0, 0.1]}
        s = scenario_from_dict(raw)
        est = s.initial_estimates()
        truth = s.initial_positions()
        np.testing.assert_allclose(est - truth[None, :, :], 0.1 * np.tile([0.0, 1.0], (2, 2, 1)))

    def test_estimate_stack_overrides_own_slot(self):
        raw = _base()
        raw["observer"] = {"estimate_offset": [0.0, 0.1]}
        s = scenario_from_dict(raw)
        stack = s.estimate_stack(0).reshape(-1, 2)
        np.testing.assert_allclose(stack[0], s.initial_positions()[0])
        np.testing.assert_allclose(stack[1], s.initial_positions()[1] + [0.0, 0.1])

    def test_offset_that_inflates_the_estimated_barrier_is_rejected(self):
        raw = _base()
        # shifting the partner estimate away from the pair axis origin makes
        # the estimated separation larger than the truth by more than theta0,
        # pushing the initial gap below zero
        raw["observer"] = {"estimate_offset": [0.1, 0.0]}
        with pytest.raises(ScenarioError, match="reconstruction gap"):
            scenario_from_dict(raw)

    def test_half_gap_mode_centers_the_corridor(self):
        raw = _base()
        raw["rcbf"] = {"init_mode": "half-gap"}
        s = scenario_from_dict(raw)
        theta0, rho0 = s.initial_rcbf()
        h_true, _ = barrier_eval(s.barrier_spec_for(0), s.initial_positions().reshape(-1))
        # exact estimates: theta0 = h - h/2, corridor width = h
        assert theta0[0] == pytest.approx(h_true / 2.0)
        assert rho0[0] == pytest.approx(h_true)
        # reconstruction gap sits exactly at half the corridor
        h_hat = h_true - theta0[0]
        assert h_true - h_hat == pytest.approx(rho0[0] / 2.0)

    def test_fixed_offset_mode_uses_configured_values(self):
        s = scenario_from_dict(_base())
        theta0, rho0 = s.initial_rcbf()
        np.testing.assert_allclose(theta0, 0.1)
        np.testing.assert_allclose(rho0, 1.0)


class TestRoundTrip:
    def test_dict_round_trip_is_idempotent(self):
        s = load_bundled("four_robot_team")
        d1 = scenario_to_dict(s)
        d2 = scenario_to_dict(scenario_from_dict(copy.deepcopy(d1)))
        assert d1 == d2

    def test_file_round_trip(self, tmp_path):
        s = load_bundled("four_robot_team")
        path = tmp_path / "copy.yaml"
        save_scenario(s, path)
        s2 = load_scenario(path)
        assert scenario_to_dict(s) == scenario_to_dict(s2)
        # the embedded name wins over the file stem
        assert s2.name == "four_robot_team"
