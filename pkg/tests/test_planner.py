import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import brute_force_min_horizon, joseph_update
from voronoi_aia.estimation import LandmarkBelief, SensorModel
from voronoi_aia.planner import (
    GOAL_ALL,
    GOAL_ONE,
    PlannerParams,
    PlanningProblem,
    assign_targets,
    extend,
    init_tree,
    plan,
    pose_key,
    sample_bucket,
    sample_control,
)
from voronoi_aia.workspace import ControlInput, Pose, Workspace, make_controls

WS = Workspace(10, 10)
U = make_controls((0, 0.1), range(0, 360, 5))
SENSOR = SensorModel(2.0, 0.25, 0.01, sensing_range=0.4)
DELTA = 1.8e-6


def problem(beliefs, controls=U, ws=WS, sensor=SENSOR):
    return PlanningProblem(ws, sensor, controls, beliefs, DELTA)


def belief(x, y, var=0.04, k=0):
    return LandmarkBelief((x, y), var * np.eye(2), k)


@pytest.mark.parametrize(
    "kw", [dict(p_v=0.5), dict(p_v=1.0), dict(p_u=0.4), dict(n_max=0), dict(delta=0), dict(goal_mode="some")]
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        PlannerParams(**kw)


def test_goal_mode_aliases():
    assert PlannerParams(goal_mode="all").goal_mode == GOAL_ALL
    assert PlannerParams(goal_mode="one").goal_mode == GOAL_ONE


def test_pose_key_wraps_heading():
    assert pose_key(1.0, 2.0, 0.0) == pose_key(1.0 + 1e-9, 2.0, 2 * math.pi - 1e-9)
    assert pose_key(1.0, 2.0, 0.0) != pose_key(1.0, 2.0, 0.1)


def _tree_with_buckets(n_extra):
    """Root plus ``n_extra`` single-node buckets reached by pure rotations."""
    prob = problem([belief(5, 5)])
    tree = init_tree(Pose(1, 1, 0), prob)
    for c in range(1, n_extra + 1):
        extend(tree, 0, c, prob)
    return tree, prob


def test_sample_bucket_single():
    tree, _ = _tree_with_buckets(0)
    rng = np.random.default_rng(0)
    assert {sample_bucket(tree, PlannerParams(), rng) for _ in range(100)} == {0}


def test_sample_bucket_two_buckets_frequency():
    tree, _ = _tree_with_buckets(1)
    assert tree.n_buckets == 2 and len(tree.k_max) == 1
    kmax = tree.k_max[0]
    rng = np.random.default_rng(1)
    n = 100_000
    hits = sum(sample_bucket(tree, PlannerParams(p_v=0.9), rng) == kmax for _ in range(n))
    assert abs(hits / n - 0.9) <= 0.005


def test_sample_bucket_near_one():
    tree, _ = _tree_with_buckets(1)
    kmax = tree.k_max[0]
    rng = np.random.default_rng(2)
    hits = sum(sample_bucket(tree, PlannerParams(p_v=0.999), rng) == kmax for _ in range(20_000))
    assert hits / 20_000 >= 0.995


def test_sampling_support():
    tree, prob = _tree_with_buckets(2)
    assert tree.n_buckets == 3
    rng = np.random.default_rng(3)
    params = PlannerParams()
    seen = np.zeros(3, dtype=int)
    for _ in range(1_000_000):
        seen[sample_bucket(tree, params, rng)] += 1
    assert (seen > 0).all()
    # control support is exercised with the target out of range (biased branch)
    far = init_tree(Pose(1, 1, 0), prob)
    counts = np.zeros(len(U), dtype=int)
    for _ in range(1_000_000):
        counts[sample_control(far, 0, prob, params, rng)] += 1
    assert (counts > 0).all()


def test_best_control_straight_ahead():
    prob = problem([belief(5, 0)])
    u = prob.best_control((0.0, 0.0, 0.0), (5.0, 0.0))
    assert U[u] == ControlInput(0.1, 0.0)


def test_best_control_with_obstacles_agrees_on_free_line():
    ws = Workspace(10, 10, ((8, 8, 9, 9),))
    prob = problem([belief(5, 1)], ws=ws)
    u = prob.best_control((1.0, 1.0, 0.0), (5.0, 1.0))
    assert U[u] == ControlInput(0.1, 0.0)


def test_sample_control_uniform_in_range():
    prob = problem([belief(1.2, 1.0)])
    tree = init_tree(Pose(1, 1, 0), prob)
    rng = np.random.default_rng(4)
    counts = np.bincount([sample_control(tree, 0, prob, PlannerParams(), rng) for _ in range(100_000)], minlength=len(U))
    assert stats.chisquare(counts).pvalue > 0.01


def test_sample_control_mixture_weight():
    prob = problem([belief(5, 1)])
    tree = init_tree(Pose(1, 1, 0), prob)
    ustar = prob.best_control((1.0, 1.0, 0.0), (5.0, 1.0))
    rng = np.random.default_rng(5)
    n = 100_000
    hits = sum(sample_control(tree, 0, prob, PlannerParams(p_u=0.9), rng) == ustar for _ in range(n))
    assert abs(hits / n - (0.9 + 0.1 / len(U))) <= 0.005


def test_extend_collision_leaves_tree_unchanged():
    ws = Workspace(10, 10, ((1.05, 0, 2, 10),))
    prob = problem([belief(5, 5)], ws=ws)
    tree = init_tree(Pose(1, 1, 0), prob)
    assert extend(tree, 0, 72, prob) == []
    assert len(tree) == 1 and tree.n_buckets == 1


def test_extend_single_node_cost_increment():
    b = belief(1.3, 1.0)
    prob = problem([b])
    tree = init_tree(Pose(1, 1, 0), prob)
    (nid,) = extend(tree, 0, 72, prob)
    S = joseph_update(b.cov, (1.1, 1.0), b.mean, SENSOR.range, SENSOR.noise_slope, SENSOR.noise_floor)
    assert tree.costs[nid] - tree.costs[0] == pytest.approx(np.linalg.det(S), abs=1e-15)
    assert tree.times[nid] == 1 and tree.parents[nid] == 0


def test_extend_every_node_of_bucket():
    prob = problem([belief(1.3, 1.0)])
    tree = init_tree(Pose(1, 1, 0), prob)
    root = tree.node(0)
    covs = tree.covs[0]
    for _ in range(2):
        tree.add_node(root.pose.x, root.pose.y, root.pose.theta, covs, tree.detsum[0], 0, 0, tree.costs[0], -1, -1, 0)
    assert len(tree.bucket_nodes[0]) == 3
    new = extend(tree, 0, 72, prob)
    assert len(new) == 3
    assert len({tree.bucket_of[n] for n in new}) == 1


def test_assign_targets_examples():
    pos = {0: (0.0, 0.0)}
    tpos = {0: (1.0, 0.0), 1: (3.0, 0.0)}
    assert assign_targets({0: 1}, {0: 1.0, 1: 1.0}, pos, tpos, DELTA) == {0: 1}
    assert assign_targets({0: 0}, {0: 1e-9, 1: 1.0}, pos, tpos, DELTA) == {0: 1}
    assert assign_targets({0: 0}, {0: 1e-9, 1: 1e-9}, pos, tpos, DELTA) == {0: 0}
    with pytest.raises(ValueError, match="no targets in scope"):
        assign_targets({0: None}, {}, pos, tpos, DELTA)


def test_assign_targets_shared_target_greedy_trace():
    # both robots share target 0, so both are reassigned: robot 0 takes the only
    # free target (1), the pool refills with {0, 1}, robot 1 takes its closest (1)
    pos = {0: (0.0, 0.0), 1: (4.0, 0.0)}
    tpos = {0: (1.0, 0.0), 1: (3.0, 0.0)}
    out = assign_targets({0: 0, 1: 0}, {0: 1.0, 1: 1.0}, pos, tpos, DELTA)
    assert out == {0: 1, 1: 1}


def test_plan_root_already_goal():
    res = plan(Pose(1, 1, 0), [belief(5, 5, var=1e-4)], PlannerParams(), WS, SENSOR, U, np.random.default_rng(0))
    assert res.feasible and res.horizon == 0 and res.controls == []


def test_plan_root_in_collision():
    ws = Workspace(10, 10, ((0, 0, 2, 2),))
    with pytest.raises(ValueError):
        plan(Pose(1, 1, 0), [belief(5, 5)], PlannerParams(), ws, SENSOR, U, np.random.default_rng(0))


def test_plan_unreachable_landmark_infeasible():
    ws = Workspace(10, 10, ((4, 0, 4.5, 10),))
    res = plan(Pose(1, 5, 0), [belief(9, 5)], PlannerParams(n_max=300), ws, SENSOR, U, np.random.default_rng(0))
    assert not res.feasible
    assert len(res.controls) == res.horizon


def test_plan_landmark_under_robot_near_brute_force():
    sensor = SensorModel(2.0, 0.0, 0.01)  # constant, floor-level noise
    b = belief(3.0, 3.0)
    small_u = make_controls((0, 0.1), (0, 90, 180, 270))
    ref = brute_force_min_horizon((3.0, 3.0, 0.0), [(u.v, u.omega) for u in small_u], b.mean, b.cov, 0.0, 0.01, 2.0, DELTA)
    res = plan(Pose(3, 3, 0), [b], PlannerParams(n_max=2000), WS, sensor, small_u, np.random.default_rng(0))
    assert ref is not None and res.feasible
    assert res.horizon <= ref + 5


def test_plan_result_invariants_and_replay():
    b = belief(5.6, 5.2)
    res = plan(Pose(5, 5, 0.3), [b], PlannerParams(n_max=1500), WS, SENSOR, U, np.random.default_rng(7))
    assert res.feasible and len(res.controls) == res.horizon
    # replaying the controls through the oracle filter reproduces the goal
    x, y, th, S = 5.0, 5.0, 0.3, b.cov
    for u in res.controls:
        x, y, th = x + u.v * math.cos(th), y + u.v * math.sin(th), th + u.omega
        S = joseph_update(S, (x, y), b.mean, SENSOR.range, SENSOR.noise_slope, SENSOR.noise_floor)
    assert np.linalg.det(S) == pytest.approx(res.achieved_dets[0], rel=1e-8)
    assert np.linalg.det(S) <= DELTA * (1 + 1e-9)


def test_tree_invariants():
    beliefs = [belief(5.5, 5.0, k=0), belief(4.6, 5.3, k=1)]
    res = plan(Pose(5, 5, 0), beliefs, PlannerParams(n_max=400), WS, SENSOR, U, np.random.default_rng(11), keep_tree=True)
    tree = res.tree
    assert tree.n_buckets <= len(tree)
    members = sorted(n for nodes in tree.bucket_nodes for n in nodes)
    assert members == list(range(len(tree)))
    for k, nodes in enumerate(tree.bucket_nodes):
        assert {pose_key(tree.x[n], tree.y[n], tree.th[n]) for n in nodes} == {tree.bucket_keys[k]}
    assert tree.max_depth == max(tree.times)
    rng = np.random.default_rng(0)
    for nid in rng.choice(len(tree), size=min(60, len(tree)), replace=False):
        path = tree.path(int(nid))
        assert tree.depth(int(nid)) == tree.times[nid] == len(path) - 1
        cost = 0.0
        covs = [b.cov for b in beliefs]
        for k, n in enumerate(path):
            if k:
                covs = [
                    joseph_update(S, (tree.x[n], tree.y[n]), b.mean, SENSOR.range, SENSOR.noise_slope, SENSOR.noise_floor)
                    for S, b in zip(covs, beliefs)
                ]
            cost += sum(np.linalg.det(S) for S in covs)
        assert cost == pytest.approx(tree.costs[nid], abs=1e-9)


def test_goal_set_monotone_for_static_landmarks():
    res = plan(Pose(5, 5, 0), [belief(5.3, 5.0)], PlannerParams(n_max=800, prune=False), WS, SENSOR, U,
               np.random.default_rng(2), keep_tree=True)
    tree = res.tree
    goal = [n for n in range(len(tree)) if tree.nsat[n] >= 1]
    assert goal
    goal_set = set(goal)
    for n in range(len(tree)):
        p = tree.parents[n]
        if p in goal_set:
            assert n in goal_set


def test_all_of_scope_goal_needs_every_landmark():
    beliefs = [belief(5.3, 5.0, k=0), belief(4.7, 5.0, k=1)]
    res = plan(Pose(5, 5, 0), beliefs, PlannerParams(n_max=3000, goal_mode="all"), WS, SENSOR, U, np.random.default_rng(4))
    assert res.feasible
    assert all(d <= DELTA for d in res.achieved_dets.values())


def test_plan_is_deterministic():
    args = (Pose(5, 5, 0), [belief(6.5, 5.5)], PlannerParams(n_max=500), WS, SENSOR, U)
    a = plan(*args, np.random.default_rng(9))
    b = plan(*args, np.random.default_rng(9))
    assert a.control_indices == b.control_indices and a.achieved_dets == b.achieved_dets


@settings(max_examples=15, deadline=None)
@given(st.floats(1.5, 8.5), st.floats(1.5, 8.5), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(0.5, 1.0))
def test_plan_feasible_short_range(x, y, th, ang, dist):
    b = belief(x + dist * math.cos(ang), y + dist * math.sin(ang))
    res = plan(Pose(x, y, th), [b], PlannerParams(n_max=3000), WS, SENSOR, U, np.random.default_rng(0))
    assert res.feasible
    assert res.achieved_dets[0] <= DELTA
