"""Voronoi-partitioned distributed active information acquisition."""

from .coordinator import RunResult, compute_assigned_sets, exploration_control, run, state_from_scenario, step
from .estimation import GlobalBelief, LandmarkBelief, LandmarkDynamics, SensorModel, ekf_update, riccati_update
from .planner import PlannerParams, PlanResult, plan
from .scenario import Scenario, emit_scenario, load_scenario, parse_scenario
from .workspace import ControlInput, Pose, Workspace, apply_motion, geodesic_distance, make_controls

__version__ = "0.1.0"
