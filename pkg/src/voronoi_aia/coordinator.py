"""Distributed online loop: role switching, assignment refresh, replanning,
exploration, measurement collection and periodic all-to-all fusion.

Each step visits robots in index order.  A robot with a non-empty assigned
set follows (or recomputes) a plan from :func:`voronoi_aia.planner.plan`;
otherwise it heads for the centroid of its Voronoi cell.  Measurements are
applied to the robot's own belief at once and buffered; every ``T`` steps
the buffer is replayed, in (timestep, robot) order, on top of the last
fused belief, and the result overwrites every local copy.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .estimation import (
    GlobalBelief,
    LandmarkBelief,
    LandmarkDynamics,
    SensorModel,
    ekf_update,
    predict,
    simulate_measurement,
)
from .planner import GOAL_ALL, PlannerParams, PlanResult, plan
from .workspace import (
    ControlInput,
    Pose,
    Workspace,
    apply_motion,
    halton_points,
    is_free,
    segment_free,
    voronoi_owner,
    voronoi_owners,
)

AIA = "aia"
EXPLORE = "explore"
STATIONARY = ControlInput(0.0, 0.0)
CENTROID_SAMPLES = 512


@dataclass
class CommModel:
    period: int = 1

    def __post_init__(self):
        if int(self.period) != self.period or self.period < 1:
            raise ValueError("communication period must be an integer >= 1")

    def fuses_at(self, t: int) -> bool:
        return t % self.period == 0


@dataclass
class RobotAgent:
    id: int
    pose: Pose
    local_belief: GlobalBelief
    role: str = EXPLORE
    assigned_set: frozenset = frozenset()
    queue: deque = field(default_factory=deque)
    prev_assigned: Optional[frozenset] = None
    plan_age: int = 0
    last_plan: Optional[PlanResult] = None
    measurement_buffer: list = field(default_factory=list)


@dataclass(frozen=True)
class SimConfig:
    workspace: Workspace
    sensor: SensorModel
    controls: tuple[ControlInput, ...]
    planner: PlannerParams
    delta: float = 1.8e-6
    comm_period: int = 1
    mode: str = "online"
    step_cap: int = 5000
    dt: float = 1.0


@dataclass
class SimulationState:
    t: int
    agents: list[RobotAgent]
    true_landmarks: list[np.ndarray]
    dynamics: list[LandmarkDynamics]
    fused_belief: GlobalBelief
    config: SimConfig
    rng: np.random.Generator
    comm: CommModel
    assigned: list[frozenset]
    owner0: Optional[list[int]] = None  # offline: frozen landmark -> robot map
    pending: list = field(default_factory=list)  # (t, robot, landmark, y, pose)
    fused_t: int = -1
    known_positions: list = field(default_factory=list)  # robot positions as of the last fusion
    partition_violations: int = 0
    plan_times: list = field(default_factory=list)
    voronoi_times: list = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.config.mode

    def positions(self) -> list[tuple[float, float]]:
        return [a.pose.position for a in self.agents]

    def view_of(self, j: int) -> list[tuple[float, float]]:
        """Robot positions as robot ``j`` knows them: its own now, the others at the last fusion."""
        pos = list(self.known_positions)
        pos[j] = self.agents[j].pose.position
        return pos

    def done(self) -> bool:
        d = self.config.delta
        return all(b.det <= d for b in self.fused_belief.landmarks)


def compute_assigned_sets(
    robot_positions: Sequence[Sequence[float]], belief: GlobalBelief, delta: float
) -> list[frozenset]:
    """Unlocalized landmarks grouped by the Voronoi cell holding their estimated mean."""
    sets: list[set] = [set() for _ in robot_positions]
    for b in belief.landmarks:
        if b.det > delta:
            sets[voronoi_owner(b.mean, robot_positions)].add(b.landmark_id)
    return [frozenset(s) for s in sets]


def _frozen_assigned(owner0: Sequence[int], n: int, belief: GlobalBelief, delta: float) -> list[frozenset]:
    sets: list[set] = [set() for _ in range(n)]
    for b in belief.landmarks:
        if b.det > delta:
            sets[owner0[b.landmark_id]].add(b.landmark_id)
    return [frozenset(s) for s in sets]


def partition_ok(assigned: Sequence[frozenset], belief: GlobalBelief, delta: float) -> bool:
    union: set = set()
    for a in assigned:
        if union & a:
            return False
        union |= a
    return union == {b.landmark_id for b in belief.landmarks if b.det > delta}


@lru_cache(maxsize=8)
def _free_samples(ws: Workspace) -> np.ndarray:
    pts = halton_points(CENTROID_SAMPLES, ws.width, ws.height)
    keep = np.array([is_free(ws, p) for p in pts], dtype=bool)
    return pts[keep]


def cell_centroid(j: int, robot_positions, ws: Workspace) -> Optional[np.ndarray]:
    pts = _free_samples(ws)
    own = pts[voronoi_owners(pts, robot_positions) == j]
    if own.shape[0] == 0:
        return None
    return own.mean(axis=0)


def exploration_control(
    j: int,
    robot_positions: Sequence[Sequence[float]],
    pose: Pose,
    workspace: Workspace,
    controls: Sequence[ControlInput],
    dt: float = 1.0,
) -> ControlInput:
    """Primitive whose successor lands closest to the Voronoi-cell centroid.

    Ties between primitives that share a successor position go to the one
    whose next straight step would get closer; then to the lowest index.
    """
    c = cell_centroid(j, robot_positions, workspace)
    if c is None:
        return STATIONARY
    v_max = max(u.v for u in controls) * dt
    best, best_key = STATIONARY, None
    for k, u in enumerate(controls):
        nxt = apply_motion(pose, u, dt)
        if not segment_free(workspace, pose.position, nxt.position):
            continue
        d1 = math.hypot(nxt.x - c[0], nxt.y - c[1])
        d2 = math.hypot(nxt.x + v_max * math.cos(nxt.theta) - c[0], nxt.y + v_max * math.sin(nxt.theta) - c[1])
        key = (d1, d2, k)
        if best_key is None or key < best_key:
            best, best_key = u, key
    return best


def init_state(
    poses: Sequence[Pose],
    true_positions: Sequence[Sequence[float]],
    prior: GlobalBelief,
    dynamics: Sequence[Optional[LandmarkDynamics]],
    config: SimConfig,
    rng: np.random.Generator,
) -> SimulationState:
    if config.mode not in ("online", "offline"):
        raise ValueError("mode must be 'online' or 'offline'")
    agents = [RobotAgent(j, p, prior) for j, p in enumerate(poses)]
    dyn = [d if d is not None else LandmarkDynamics.static() for d in dynamics]
    state = SimulationState(
        t=0,
        agents=agents,
        true_landmarks=[np.asarray(x, dtype=float).copy() for x in true_positions],
        dynamics=dyn,
        fused_belief=prior,
        config=config,
        rng=rng,
        comm=CommModel(config.comm_period),
        assigned=[],
    )
    positions = state.positions()
    state.known_positions = list(positions)
    if config.mode == "offline":
        state.owner0 = [voronoi_owner(b.mean, positions) for b in prior.landmarks]
        state.assigned = _frozen_assigned(state.owner0, len(agents), prior, config.delta)
    else:
        state.assigned = compute_assigned_sets(positions, prior, config.delta)
    return state


def _choose_control(state: SimulationState, agent: RobotAgent, A: frozenset) -> ControlInput:
    cfg = state.config
    t = state.t
    online = cfg.mode == "online"
    agent.assigned_set = A
    agent.role = AIA if A else EXPLORE
    changed = agent.prev_assigned is None or A != agent.prev_assigned
    agent.prev_assigned = A
    if not A:
        agent.queue.clear()
        return exploration_control(agent.id, state.view_of(agent.id), agent.pose, cfg.workspace, cfg.controls, cfg.dt)
    scope = [i for i in sorted(A) if agent.local_belief[i].det > cfg.delta]
    need = t == 0 or not agent.queue or (online and changed)
    if need:
        agent.queue.clear()
        if scope:
            params = cfg.planner if online else PlannerParams(**{**cfg.planner.__dict__, "goal_mode": GOAL_ALL})
            t0 = time.perf_counter()
            res = plan(
                agent.pose,
                [agent.local_belief[i] for i in scope],
                params,
                cfg.workspace,
                cfg.sensor,
                cfg.controls,
                state.rng,
                dynamics=[state.dynamics[i] for i in scope],
                t0=t,
                dt=cfg.dt,
            )
            state.plan_times.append((agent.id, time.perf_counter() - t0))
            agent.last_plan = res
            agent.queue.extend(res.controls)
            agent.plan_age = 0
    if agent.queue:
        agent.plan_age += 1
        return agent.queue.popleft()
    return exploration_control(agent.id, state.view_of(agent.id), agent.pose, cfg.workspace, cfg.controls, cfg.dt)


def _advance_truth(state: SimulationState) -> None:
    t = state.t
    for i, d in enumerate(state.dynamics):
        if d.is_static:
            continue
        x = d.A @ state.true_landmarks[i] + d.B @ d.input_at(t)
        if np.any(d.Q):
            x = x + state.rng.multivariate_normal(np.zeros(2), d.Q, method="eigh")
        state.true_landmarks[i] = x


def _predict_all(belief: GlobalBelief, dynamics: Sequence[LandmarkDynamics], t: int) -> GlobalBelief:
    if all(d.is_static for d in dynamics):
        return belief
    return GlobalBelief(tuple(predict(b, d, t) for b, d in zip(belief.landmarks, dynamics)))


def _apply_measurement(belief: GlobalBelief, i: int, pose: Pose, y: float, sensor: SensorModel) -> GlobalBelief:
    return belief.replace(i, ekf_update(belief[i], pose, y, sensor))


def fuse(
    fused: GlobalBelief,
    fused_t: int,
    t: int,
    pending: Sequence[tuple],
    dynamics: Sequence[LandmarkDynamics],
    sensor: SensorModel,
) -> GlobalBelief:
    """Replay buffered measurements from the last fused belief up to step ``t``."""
    by_step: dict[int, list] = {}
    for rec in pending:
        by_step.setdefault(rec[0], []).append(rec)
    b = fused
    for s in range(fused_t + 1, t + 1):
        b = _predict_all(b, dynamics, s)
        for _, _, i, y, pose in sorted(by_step.get(s, []), key=lambda r: (r[1], r[2])):
            b = _apply_measurement(b, i, pose, y, sensor)
    return b


def step(state: SimulationState) -> dict:
    """Advance the simulation by one timestep and return its trace record."""
    cfg = state.config
    t = state.t
    robots = []
    for agent in state.agents:
        A = state.assigned[agent.id]
        u = _choose_control(state, agent, A)
        nxt = apply_motion(agent.pose, u, cfg.dt)
        if not segment_free(cfg.workspace, agent.pose.position, nxt.position):
            u, nxt = STATIONARY, agent.pose
            agent.queue.clear()
        agent.pose = nxt
        robots.append(
            {
                "id": agent.id,
                "pose": [nxt.x, nxt.y, nxt.theta],
                "role": agent.role,
                "assigned": sorted(A),
                "control": [u.v, u.omega],
                "plan_age": agent.plan_age,
            }
        )

    _advance_truth(state)
    for agent in state.agents:
        agent.local_belief = _predict_all(agent.local_belief, state.dynamics, t)
    measurements = []
    for agent in state.agents:
        for i, x in enumerate(state.true_landmarks):
            y = simulate_measurement(agent.pose, x, cfg.sensor, state.rng)
            if y is None:
                continue
            agent.local_belief = _apply_measurement(agent.local_belief, i, agent.pose, y, cfg.sensor)
            rec = (t, agent.id, i, y, agent.pose)
            agent.measurement_buffer.append(rec)
            state.pending.append(rec)
            measurements.append([agent.id, i, y])

    fusion = state.comm.fuses_at(t)
    if fusion:
        state.fused_belief = fuse(state.fused_belief, state.fused_t, t, state.pending, state.dynamics, cfg.sensor)
        state.fused_t = t
        state.pending = []
        for agent in state.agents:
            agent.local_belief = state.fused_belief
            agent.measurement_buffer = []
        state.known_positions = state.positions()
        # assignments only change when fresh information is shared
        t0 = time.perf_counter()
        if cfg.mode == "offline":
            state.assigned = _frozen_assigned(state.owner0, len(state.agents), state.fused_belief, cfg.delta)
        else:
            state.assigned = compute_assigned_sets(state.known_positions, state.fused_belief, cfg.delta)
        state.voronoi_times.append(time.perf_counter() - t0)
    if not partition_ok(state.assigned, state.fused_belief, cfg.delta):
        state.partition_violations += 1

    state.t = t + 1
    return {
        "t": t,
        "robots": robots,
        "landmarks": [
            {"id": b.landmark_id, "det": b.det, "mean": [float(b.mean[0]), float(b.mean[1])]}
            for b in state.fused_belief.landmarks
        ],
        "fusion": fusion,
        "measurements": measurements,
    }


@dataclass
class RunResult:
    trace: list[dict]
    F: int
    timeout: bool
    state: SimulationState

    @property
    def partition_violations(self) -> int:
        return self.state.partition_violations


def run(state: SimulationState, on_step=None) -> RunResult:
    """Step until every fused landmark determinant is at most delta, or the step cap."""
    trace: list[dict] = []
    cap = state.config.step_cap
    while not state.done():
        if state.t >= cap:
            return RunResult(trace, state.t, True, state)
        rec = step(state)
        trace.append(rec)
        if on_step is not None:
            on_step(rec, state)
    return RunResult(trace, state.t, False, state)


def state_from_scenario(scenario, rng: Optional[np.random.Generator] = None) -> SimulationState:
    """Build the initial simulation state described by a :class:`~voronoi_aia.scenario.Scenario`."""
    s = scenario
    prior = GlobalBelief(
        tuple(LandmarkBelief(np.array(lm.mean), np.array(lm.prior_cov), k) for k, lm in enumerate(s.landmarks))
    )
    dynamics = [lm.dynamics.build() if lm.dynamics is not None else None for lm in s.landmarks]
    config = SimConfig(
        workspace=s.workspace,
        sensor=s.sensor,
        controls=tuple(s.controls),
        planner=s.planner_params(),
        delta=s.delta,
        comm_period=s.comm_period,
        mode=s.mode,
        step_cap=s.step_cap,
        dt=s.dt,
    )
    if rng is None:
        rng = np.random.default_rng(s.seed)
    return init_state(
        [r.pose for r in s.robots],
        [lm.position for lm in s.landmarks],
        prior,
        dynamics,
        config,
        rng,
    )
