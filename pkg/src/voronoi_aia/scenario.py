"""Scenario files: JSON schema, validation, emission, and seeded deployment generators.

Lengths are metres.  Angles are degrees in the file and stay in degrees on
the :class:`Scenario` value (so ``parse(emit(s)) == s`` holds exactly); they
are converted to radians when the simulation is built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from .estimation import LandmarkDynamics, SensorModel, check_covariance
from .planner import GOAL_ALL, GOAL_ONE, PlannerParams
from .workspace import ControlInput, Pose, Workspace, is_free, make_controls

DEFAULT_V = (0.0, 0.1)
DEFAULT_OMEGA_DEG = tuple(float(w) for w in range(0, 360, 5))
MODES = ("online", "offline")


class ScenarioError(ValueError):
    """Malformed or invalid scenario description."""


@dataclass(frozen=True)
class RobotConfig:
    x: float
    y: float
    theta_deg: float = 0.0

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, math.radians(self.theta_deg))


@dataclass(frozen=True)
class DynamicsConfig:
    A: tuple = ((1.0, 0.0), (0.0, 1.0))
    B: tuple = ((0.0,), (0.0,))
    Q: tuple = ((0.0, 0.0), (0.0, 0.0))
    inputs: tuple = ()
    cyclic: bool = False

    def build(self) -> LandmarkDynamics:
        return LandmarkDynamics(
            np.array(self.A), np.array(self.B), np.array(self.Q), self.inputs, self.cyclic
        )


@dataclass(frozen=True)
class LandmarkConfig:
    position: tuple[float, float]
    prior_cov: tuple[tuple[float, float], tuple[float, float]]
    prior_mean: Optional[tuple[float, float]] = None
    dynamics: Optional[DynamicsConfig] = None

    @property
    def mean(self) -> tuple[float, float]:
        return self.prior_mean if self.prior_mean is not None else self.position


@dataclass(frozen=True)
class Scenario:
    workspace: Workspace
    robots: tuple[RobotConfig, ...]
    landmarks: tuple[LandmarkConfig, ...]
    sensor: SensorModel = field(default_factory=SensorModel)
    v_set: tuple[float, ...] = DEFAULT_V
    omega_deg_set: tuple[float, ...] = DEFAULT_OMEGA_DEG
    delta: float = 1.8e-6
    comm_period: int = 1
    mode: str = "online"
    planner: PlannerParams = field(default_factory=PlannerParams)
    seed: int = 0
    step_cap: int = 5000
    dt: float = 1.0

    def __post_init__(self):
        validate(self)

    @property
    def controls(self) -> list[ControlInput]:
        return make_controls(self.v_set, self.omega_deg_set)

    def planner_params(self, goal_mode: Optional[str] = None) -> PlannerParams:
        return replace(self.planner, delta=self.delta, goal_mode=goal_mode or self.planner.goal_mode)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def validate(s: Scenario) -> None:
    def fail(where: str, msg: str):
        raise ScenarioError(f"{where}: {msg}")

    if not s.robots:
        fail("robots", "at least one robot required")
    for k, r in enumerate(s.robots):
        if not all(math.isfinite(v) for v in (r.x, r.y, r.theta_deg)):
            fail(f"robots[{k}]", "non-finite value")
        if not is_free(s.workspace, (r.x, r.y)):
            fail(f"robots[{k}]", "initial pose not free")
    for k, lm in enumerate(s.landmarks):
        vals = list(lm.position) + list(lm.mean)
        if not all(math.isfinite(v) for v in vals):
            fail(f"landmarks[{k}]", "non-finite value")
        try:
            check_covariance(lm.prior_cov, "prior")
        except ValueError as e:
            fail(f"landmarks[{k}].prior_cov", str(e))
        if lm.dynamics is not None:
            try:
                lm.dynamics.build()
            except ValueError as e:
                fail(f"landmarks[{k}].dynamics", str(e))
    if not s.v_set:
        fail("motion.v", "empty speed set")
    if not s.omega_deg_set:
        fail("motion.omega_deg", "empty turn-rate set")
    if not all(math.isfinite(v) for v in s.v_set + s.omega_deg_set):
        fail("motion", "non-finite value")
    if not (math.isfinite(s.delta) and s.delta > 0):
        fail("delta", "must be positive")
    if int(s.comm_period) != s.comm_period or s.comm_period < 1:
        fail("comm_period", "must be an integer >= 1")
    if s.mode not in MODES:
        fail("mode", f"must be one of {MODES}")
    if int(s.step_cap) != s.step_cap or s.step_cap < 0:
        fail("step_cap", "must be a non-negative integer")
    if not s.dt > 0:
        fail("dt", "must be positive")


# --- JSON ------------------------------------------------------------------

def _pair(v, where) -> tuple[float, float]:
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ScenarioError(f"{where}: expected [x, y]")
    return (float(v[0]), float(v[1]))


def _matrix(v, where, rows=2) -> tuple:
    if not (isinstance(v, (list, tuple)) and len(v) == rows):
        raise ScenarioError(f"{where}: expected a {rows}-row matrix")
    return tuple(tuple(float(x) for x in row) for row in v)


def _get(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}.{key}: missing required field")
    return d[key]


def from_dict(doc: dict[str, Any]) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: top level must be an object")
    try:
        w = _get(doc, "workspace", "scenario")
        ws = Workspace(
            float(_get(w, "width", "workspace")),
            float(_get(w, "height", "workspace")),
            tuple(tuple(float(c) for c in r) for r in w.get("obstacles", [])),
            float(w.get("grid_resolution", 0.1)),
        )
    except ScenarioError:
        raise
    except (ValueError, TypeError) as e:
        raise ScenarioError(f"workspace: {e}") from None

    robots = []
    for k, r in enumerate(_get(doc, "robots", "scenario")):
        where = f"robots[{k}]"
        robots.append(RobotConfig(float(_get(r, "x", where)), float(_get(r, "y", where)), float(r.get("theta_deg", 0.0))))

    landmarks = []
    for k, lm in enumerate(doc.get("landmarks", [])):
        where = f"landmarks[{k}]"
        dyn = None
        if lm.get("dynamics") is not None:
            d = lm["dynamics"]
            B = _matrix(d.get("B", [[0.0], [0.0]]), f"{where}.dynamics.B")
            dyn = DynamicsConfig(
                A=_matrix(d.get("A", [[1.0, 0.0], [0.0, 1.0]]), f"{where}.dynamics.A"),
                B=B,
                Q=_matrix(d.get("Q", [[0.0, 0.0], [0.0, 0.0]]), f"{where}.dynamics.Q"),
                inputs=tuple(tuple(float(x) for x in a) for a in d.get("inputs", [])),
                cyclic=bool(d.get("cyclic", False)),
            )
        landmarks.append(
            LandmarkConfig(
                position=_pair(_get(lm, "position", where), f"{where}.position"),
                prior_cov=_matrix(_get(lm, "prior_cov", where), f"{where}.prior_cov"),
                prior_mean=_pair(lm["prior_mean"], f"{where}.prior_mean") if lm.get("prior_mean") is not None else None,
                dynamics=dyn,
            )
        )

    s = doc.get("sensor", {})
    try:
        sr = s.get("sensing_range")
        sensor = SensorModel(
            float(s.get("range", 2.0)),
            float(s.get("noise_slope", 0.25)),
            float(s.get("noise_floor", 0.01)),
            None if sr is None else float(sr),
        )
    except ValueError as e:
        raise ScenarioError(f"sensor: {e}") from None
    m = doc.get("motion", {})
    p = doc.get("planner", {})
    delta = float(doc.get("delta", 1.8e-6))
    if not (math.isfinite(delta) and delta > 0):
        raise ScenarioError("delta: must be positive")
    try:
        planner = PlannerParams(
            p_v=float(p.get("p_v", 0.9)),
            p_u=float(p.get("p_u", 0.9)),
            n_max=int(p.get("n_max", 1000)),
            goal_mode=str(p.get("goal_mode", "one")),
            delta=delta,
            prune=bool(p.get("prune", True)),
            max_nodes=int(p.get("max_nodes", 400_000)),
            uniform_after_goal=bool(p.get("uniform_after_goal", True)),
        )
    except ValueError as e:
        raise ScenarioError(f"planner: {e}") from None
    return Scenario(
        workspace=ws,
        robots=tuple(robots),
        landmarks=tuple(landmarks),
        sensor=sensor,
        v_set=tuple(float(v) for v in m.get("v", DEFAULT_V)),
        omega_deg_set=tuple(float(v) for v in m.get("omega_deg", DEFAULT_OMEGA_DEG)),
        delta=delta,
        comm_period=int(doc.get("comm_period", 1)),
        mode=str(doc.get("mode", "online")),
        planner=planner,
        seed=int(doc.get("seed", 0)),
        step_cap=int(doc.get("step_cap", 5000)),
        dt=float(doc.get("dt", 1.0)),
    )


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    try:
        return from_dict(doc)
    except ScenarioError:
        raise
    except (AttributeError, TypeError, ValueError) as e:
        raise ScenarioError(f"scenario: {e}") from None


def to_dict(s: Scenario) -> dict[str, Any]:
    lms = []
    for lm in s.landmarks:
        d: dict[str, Any] = {"position": list(lm.position), "prior_cov": [list(r) for r in lm.prior_cov]}
        if lm.prior_mean is not None:
            d["prior_mean"] = list(lm.prior_mean)
        if lm.dynamics is not None:
            dy = lm.dynamics
            d["dynamics"] = {
                "A": [list(r) for r in dy.A],
                "B": [list(r) for r in dy.B],
                "Q": [list(r) for r in dy.Q],
                "inputs": [list(a) for a in dy.inputs],
                "cyclic": dy.cyclic,
            }
        lms.append(d)
    return {
        "workspace": {
            "width": s.workspace.width,
            "height": s.workspace.height,
            "obstacles": [list(r) for r in s.workspace.obstacles],
            "grid_resolution": s.workspace.grid_resolution,
        },
        "robots": [{"x": r.x, "y": r.y, "theta_deg": r.theta_deg} for r in s.robots],
        "landmarks": lms,
        "sensor": {
            "range": s.sensor.range,
            "noise_slope": s.sensor.noise_slope,
            "noise_floor": s.sensor.noise_floor,
            "sensing_range": s.sensor.sensing_range,
        },
        "motion": {"v": list(s.v_set), "omega_deg": list(s.omega_deg_set)},
        "delta": s.delta,
        "comm_period": s.comm_period,
        "mode": s.mode,
        "planner": {
            "p_v": s.planner.p_v,
            "p_u": s.planner.p_u,
            "n_max": s.planner.n_max,
            "goal_mode": "all" if s.planner.goal_mode == GOAL_ALL else "one",
            "prune": s.planner.prune,
            "max_nodes": s.planner.max_nodes,
            "uniform_after_goal": s.planner.uniform_after_goal,
        },
        "seed": s.seed,
        "step_cap": s.step_cap,
        "dt": s.dt,
    }


def emit_scenario(s: Scenario) -> str:
    return json.dumps(to_dict(s), indent=2)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


# --- deployments -----------------------------------------------------------

def corner_cluster(n: int, ws: Workspace, spacing: float = 0.3, margin: float = 0.3) -> tuple[RobotConfig, ...]:
    """Robots packed on a small square lattice in the bottom-left corner."""
    side = math.ceil(math.sqrt(n))
    out = []
    for k in range(n):
        i, j = k % side, k // side
        out.append(RobotConfig(margin + i * spacing, margin + j * spacing, 0.0))
    return tuple(out)


def uniform_grid(n: int, ws: Workspace) -> tuple[RobotConfig, ...]:
    """Robots at the centres of a near-square lattice covering the workspace."""
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    out = []
    for k in range(n):
        i, j = k % cols, k // cols
        out.append(RobotConfig((i + 0.5) * ws.width / cols, (j + 0.5) * ws.height / rows, 0.0))
    return tuple(out)


DEPLOYMENTS = {"corner": corner_cluster, "grid": uniform_grid}


def random_landmarks(
    m: int,
    ws: Workspace,
    prior_cov,
    rng: np.random.Generator,
    margin: float = 0.5,
) -> tuple[LandmarkConfig, ...]:
    """Uniform landmark placement in free space; prior means drawn from the prior around truth."""
    cov = check_covariance(prior_cov, "prior")
    chol = np.linalg.cholesky(cov + 1e-15 * np.eye(2))
    out = []
    while len(out) < m:
        p = rng.uniform([margin, margin], [ws.width - margin, ws.height - margin])
        if not is_free(ws, p):
            continue
        mean = p + chol @ rng.standard_normal(2)
        out.append(
            LandmarkConfig(
                position=(float(p[0]), float(p[1])),
                prior_cov=tuple(tuple(float(v) for v in row) for row in cov),
                prior_mean=(float(mean[0]), float(mean[1])),
            )
        )
    return tuple(out)
