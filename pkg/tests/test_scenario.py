import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voronoi_aia.estimation import SensorModel
from voronoi_aia.planner import GOAL_ALL, PlannerParams
from voronoi_aia.scenario import (
    DynamicsConfig,
    LandmarkConfig,
    RobotConfig,
    Scenario,
    ScenarioError,
    corner_cluster,
    emit_scenario,
    load_scenario,
    parse_scenario,
    random_landmarks,
    uniform_grid,
)
from voronoi_aia.workspace import Workspace, is_free

MINIMAL = {
    "workspace": {"width": 10, "height": 10},
    "robots": [{"x": 1, "y": 1}],
    "landmarks": [{"position": [5, 5], "prior_cov": [[0.04, 0], [0, 0.04]]}],
}


def test_minimal_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(MINIMAL))
    s = load_scenario(path)
    assert len(s.robots) == 1 and len(s.landmarks) == 1


def test_defaults():
    s = parse_scenario(json.dumps(MINIMAL))
    assert len(s.controls) == 144
    assert s.dt == 1.0 and s.step_cap == 5000 and s.comm_period == 1 and s.mode == "online"
    assert s.delta == 1.8e-6 and s.sensor.noise_floor == 0.01 and s.workspace.grid_resolution == 0.1
    assert s.planner.p_v == 0.9 and s.planner.p_u == 0.9


def test_prior_not_psd_names_field():
    doc = json.loads(json.dumps(MINIMAL))
    doc["landmarks"][0]["prior_cov"] = [[1, 2], [2, 1]]
    with pytest.raises(ScenarioError, match=r"landmarks\[0\]\.prior_cov: prior not PSD"):
        parse_scenario(json.dumps(doc))


@pytest.mark.parametrize(
    "patch, where",
    [
        ({"robots": [{"x": 5, "y": 5}], "workspace": {"width": 10, "height": 10, "obstacles": [[4, 4, 6, 6]]}}, "robots[0]"),
        ({"robots": []}, "robots"),
        ({"comm_period": 0}, "comm_period"),
        ({"mode": "batch"}, "mode"),
        ({"delta": -1}, "delta"),
        ({"sensor": {"range": 0}}, "sensor"),
        ({"planner": {"p_v": 0.2}}, "planner"),
        ({"workspace": {"width": 10}}, "workspace.height"),
        ({"landmarks": [{"prior_cov": [[1, 0], [0, 1]]}]}, "landmarks[0].position"),
    ],
)
def test_invalid_fields_are_named(patch, where):
    doc = {**MINIMAL, **patch}
    with pytest.raises(ScenarioError) as e:
        parse_scenario(json.dumps(doc))
    assert str(e.value).startswith(where)


def test_malformed_json_reports_line():
    text = '{\n  "workspace": {"width": 10,\n  "height": 10}}\n  ]'
    with pytest.raises(ScenarioError, match=r"line 4 column 3"):
        parse_scenario(text)


def test_top_level_must_be_object():
    with pytest.raises(ScenarioError, match="top level"):
        parse_scenario("[]")


finite = st.floats(0.5, 9.5, allow_nan=False)


@st.composite
def scenarios(draw):
    ws = Workspace(10, 10, draw(st.sampled_from([(), ((4.0, 4.0, 4.5, 6.0),)])))
    robots = tuple(
        RobotConfig(draw(st.floats(0.5, 3.5)), draw(st.floats(0.5, 3.5)), draw(st.floats(0, 359)))
        for _ in range(draw(st.integers(1, 3)))
    )
    lms = []
    for _ in range(draw(st.integers(0, 3))):
        a = draw(st.floats(0.001, 1))
        c = draw(st.floats(-0.5, 0.5)) * a
        dyn = None
        if draw(st.booleans()):
            dyn = DynamicsConfig(((1.0, 0.0), (0.0, 1.0)), ((1.0,), (0.0,)), ((0.01, 0.0), (0.0, 0.01)), ((0.1,), (0.0,)), True)
        mean = draw(st.one_of(st.none(), st.tuples(finite, finite)))
        lms.append(LandmarkConfig((draw(finite), draw(finite)), ((a, c), (c, a)), mean, dyn))
    delta = draw(st.floats(1e-8, 1e-3))
    sr = draw(st.one_of(st.none(), st.floats(0.1, 2)))
    planner = PlannerParams(
        p_v=draw(st.floats(0.51, 0.99)),
        p_u=draw(st.floats(0.51, 0.99)),
        n_max=draw(st.integers(1, 5000)),
        goal_mode=draw(st.sampled_from(["one", "all"])),
        delta=delta,
        prune=draw(st.booleans()),
        uniform_after_goal=draw(st.booleans()),
    )
    return Scenario(
        ws,
        robots,
        tuple(lms),
        sensor=SensorModel(draw(st.floats(0.5, 5)), draw(st.floats(0, 1)), draw(st.floats(1e-3, 0.1)), sr),
        v_set=tuple(draw(st.lists(st.floats(0, 0.5), min_size=1, max_size=3))),
        omega_deg_set=tuple(draw(st.lists(st.floats(0, 355), min_size=1, max_size=4))),
        delta=delta,
        comm_period=draw(st.integers(1, 20)),
        mode=draw(st.sampled_from(["online", "offline"])),
        planner=planner,
        seed=draw(st.integers(0, 2**31)),
        step_cap=draw(st.integers(0, 10_000)),
    )


@settings(max_examples=80)
@given(scenarios())
def test_round_trip(s):
    assert parse_scenario(emit_scenario(s)) == s


def test_goal_mode_emitted_short():
    s = Scenario(Workspace(10, 10), (RobotConfig(1, 1),), (), planner=PlannerParams(goal_mode=GOAL_ALL))
    assert json.loads(emit_scenario(s))["planner"]["goal_mode"] == "all"


@pytest.mark.parametrize("n", [1, 3, 5, 10])
def test_deployments_free_and_distinct(n):
    ws = Workspace(10, 10)
    for dep in (corner_cluster, uniform_grid):
        robots = dep(n, ws)
        assert len(robots) == n
        assert len({(r.x, r.y) for r in robots}) == n
        assert all(is_free(ws, (r.x, r.y)) for r in robots)
    assert max(r.x for r in corner_cluster(n, ws)) < 2


def test_random_landmarks_seeded_and_free():
    ws = Workspace(10, 10, ((3, 3, 7, 7),))
    prior = ((0.04, 0.0), (0.0, 0.04))
    a = random_landmarks(30, ws, prior, np.random.default_rng(5))
    b = random_landmarks(30, ws, prior, np.random.default_rng(5))
    assert a == b
    assert all(is_free(ws, lm.position) for lm in a)
    err = np.array([np.subtract(lm.mean, lm.position) for lm in random_landmarks(2000, Workspace(10, 10), prior, np.random.default_rng(0))])
    # prior means are drawn from the prior around the truth
    assert err.std(axis=0) == pytest.approx([0.2, 0.2], rel=0.1)
