"""Single-robot sampling-based planner over (pose, covariance, time) states.

The tree is grown by repeatedly (1) drawing a configuration bucket, biased
toward buckets that hold the deepest nodes, (2) drawing a motion primitive,
biased toward the one that closes the obstacle-aware distance to the node's
assigned landmark, and (3) extending *every* node of the bucket with that
primitive.  Covariances are propagated with the information-form update from
:mod:`voronoi_aia.estimation`.

Covariance blocks are stored packed as ``(S00, S01, S11)`` float tuples; the
public :class:`TreeNode` view converts them back to arrays.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple
from typing import Mapping, Optional, Sequence

import numpy as np

from .estimation import (
    LandmarkBelief,
    LandmarkDynamics,
    SensorModel,
    info_update_sym,
    predict_cov_sym,
)
from .workspace import (
    TWO_PI,
    ControlInput,
    GeodesicField,
    Pose,
    Workspace,
    is_free,
    segment_free,
    wrap_angle,
)

GOAL_ONE = "one-of-scope"
GOAL_ALL = "all-of-scope"
_GOAL_ALIASES = {"one": GOAL_ONE, "all": GOAL_ALL, GOAL_ONE: GOAL_ONE, GOAL_ALL: GOAL_ALL}

_QUANT = 1e6
_THETA_WRAP = int(round(TWO_PI * _QUANT))


@dataclass(frozen=True)
class PlannerParams:
    p_v: float = 0.9
    p_u: float = 0.9
    n_max: int = 1000
    goal_mode: str = GOAL_ONE
    delta: float = 1.8e-6
    # children whose cost already reaches the best goal cost are not added
    prune: bool = True
    max_nodes: int = 400_000
    # after the first goal, sample with p_v = p_u = 0 (pure exploration)
    uniform_after_goal: bool = True

    def __post_init__(self):
        if not 0.5 < self.p_v < 1:
            raise ValueError("p_v must be in (0.5, 1)")
        if not 0.5 < self.p_u < 1:
            raise ValueError("p_u must be in (0.5, 1)")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.goal_mode not in _GOAL_ALIASES:
            raise ValueError(f"unknown goal_mode {self.goal_mode!r}")
        object.__setattr__(self, "goal_mode", _GOAL_ALIASES[self.goal_mode])


def pose_key(x: float, y: float, theta: float) -> tuple[int, int, int]:
    """Bucket key: pose quantised to 1e-6 m / 1e-6 rad."""
    k = int(round(theta * _QUANT))
    if k >= _THETA_WRAP:
        k -= _THETA_WRAP
    return int(round(x * _QUANT)), int(round(y * _QUANT)), k


def _step(x, y, th, v, w):
    return x + v * math.cos(th), y + v * math.sin(th), wrap_angle(th + w)


class PlanningProblem:
    """Everything a single tree needs that stays fixed while it grows."""

    def __init__(
        self,
        workspace: Workspace,
        sensor: SensorModel,
        controls: Sequence[ControlInput],
        beliefs: Sequence[LandmarkBelief],
        delta: float,
        dynamics: Optional[Sequence[Optional[LandmarkDynamics]]] = None,
        t0: int = 0,
        dt: float = 1.0,
    ):
        if not beliefs:
            raise ValueError("no targets in scope")
        self.workspace = workspace
        self.sensor = sensor
        self.controls = list(controls)
        self.dt = dt
        self.v = [u.v * dt for u in self.controls]
        self.w = [u.omega * dt for u in self.controls]
        self.v_max = max(self.v)
        self.delta = delta
        self.t0 = t0
        self.ids = [b.landmark_id for b in beliefs]
        self.root_covs = tuple(
            (float(b.cov[0, 0]), float(0.5 * (b.cov[0, 1] + b.cov[1, 0])), float(b.cov[1, 1]))
            for b in beliefs
        )
        dyn = list(dynamics) if dynamics is not None else [None] * len(beliefs)
        self.dynamics = [d if (d is not None and not d.is_static) else None for d in dyn]
        self.static_idx = [i for i, d in enumerate(self.dynamics) if d is None]
        self.mobile_idx = [i for i, d in enumerate(self.dynamics) if d is not None]
        self._means = [[(float(b.mean[0]), float(b.mean[1])) for b in beliefs]]
        self._fields: dict = {}
        self._best: dict = {}
        self._v_arr = np.array(self.v)
        self._w_arr = np.array(self.w)

    def means_at(self, k: int) -> list[tuple[float, float]]:
        """Predicted landmark means ``k`` steps after the tree root."""
        while len(self._means) <= k:
            j = len(self._means) - 1
            prev = self._means[j]
            nxt = list(prev)
            for i in self.mobile_idx:
                d = self.dynamics[i]
                m = d.A @ np.asarray(prev[i]) + d.B @ d.input_at(self.t0 + j)
                nxt[i] = (float(m[0]), float(m[1]))
            self._means.append(nxt)
        return self._means[k]

    def field(self, goal: tuple[float, float]) -> GeodesicField:
        f = self._fields.get(goal)
        if f is None:
            f = self._fields[goal] = GeodesicField(self.workspace, goal)
        return f

    def best_control(self, pose: tuple[float, float, float], goal: tuple[float, float]) -> Optional[int]:
        """Index of the primitive whose successor is geodesically closest to ``goal``.

        Exact ties (all primitives sharing a speed land on the same point)
        are broken by a one-step straight look-ahead along the new heading,
        then by the lowest index.  ``None`` if every successor collides.
        """
        key = (pose, goal)
        if key in self._best:
            return self._best[key]
        u = self._best[key] = self._best_control(pose, goal)
        return u

    def _best_control(self, pose, goal) -> Optional[int]:
        x, y, th = pose
        ws = self.workspace
        if not ws.obstacles:
            v, w = self._v_arr, self._w_arr
            x1 = x + v * math.cos(th)
            y1 = y + v * math.sin(th)
            th1 = th + w
            x2 = x1 + self.v_max * np.cos(th1)
            y2 = y1 + self.v_max * np.sin(th1)
            ok = (x1 >= 0) & (x1 <= ws.width) & (y1 >= 0) & (y1 <= ws.height)
            if not ok.any():
                return None
            d1 = np.where(ok, np.hypot(x1 - goal[0], y1 - goal[1]), np.inf)
            d2 = np.hypot(x2 - goal[0], y2 - goal[1])
            order = np.lexsort((np.arange(len(v)), d2, d1))
            return int(order[0])
        f = self.field(goal)
        best, best_key = None, None
        for c, (v, w) in enumerate(zip(self.v, self.w)):
            x1, y1, th1 = _step(x, y, th, v, w)
            if not segment_free(ws, (x, y), (x1, y1)):
                continue
            key = (f((x1, y1)), f((x1 + self.v_max * math.cos(th1), y1 + self.v_max * math.sin(th1))))
            if best_key is None or key < best_key:
                best, best_key = c, key
        return best


@dataclass
class TreeNode:
    id: int
    pose: Pose
    cov_blocks: dict
    time: int
    cost: float
    parent: Optional[int]
    assignment: dict


class PlanTree:
    """Append-only tree with configuration buckets and a depth index."""

    def __init__(self):
        self.x: list[float] = []
        self.y: list[float] = []
        self.th: list[float] = []
        self.covs: list[tuple] = []
        self.detsum: list[float] = []
        self.nsat: list[int] = []
        self.times: list[int] = []
        self.costs: list[float] = []
        self.parents: list[int] = []
        self.controls: list[int] = []
        self.assigned: list[int] = []
        self.bucket_of: list[int] = []
        self.bucket_keys: list[tuple] = []
        self.bucket_index: dict = {}
        self.bucket_nodes: list[list[int]] = []
        self.bucket_deepest: list[int] = []
        self.depth_index: dict[int, list[int]] = defaultdict(list)
        self.max_depth = 0
        self._kmax: list[int] = []
        self._kmax_set: set[int] = set()
        self.problem: Optional[PlanningProblem] = None
        self.cost_bound = math.inf
        self.max_nodes = math.inf

    def __len__(self):
        return len(self.times)

    @property
    def n_buckets(self) -> int:
        return len(self.bucket_keys)

    @property
    def k_max(self) -> list[int]:
        """Buckets holding at least one node of maximal depth."""
        return self._kmax

    def add_node(self, x, y, th, covs, detsum, nsat, time, cost, parent, control, assigned) -> int:
        nid = len(self.times)
        self.x.append(x)
        self.y.append(y)
        self.th.append(th)
        self.covs.append(covs)
        self.detsum.append(detsum)
        self.nsat.append(nsat)
        self.times.append(time)
        self.costs.append(cost)
        self.parents.append(parent)
        self.controls.append(control)
        self.assigned.append(assigned)
        key = pose_key(x, y, th)
        b = self.bucket_index.get(key)
        if b is None:
            b = len(self.bucket_keys)
            self.bucket_index[key] = b
            self.bucket_keys.append(key)
            self.bucket_nodes.append([nid])
            self.bucket_deepest.append(nid)
        else:
            self.bucket_nodes[b].append(nid)
            if time > self.times[self.bucket_deepest[b]]:
                self.bucket_deepest[b] = nid
        self.bucket_of.append(b)
        self.depth_index[time].append(nid)
        if time > self.max_depth or nid == 0:
            self.max_depth = time
            self._kmax = [b]
            self._kmax_set = {b}
        elif time == self.max_depth and b not in self._kmax_set:
            self._kmax.append(b)
            self._kmax_set.add(b)
        return nid

    def node(self, nid: int) -> TreeNode:
        ids = self.problem.ids if self.problem else list(range(len(self.covs[nid])))
        blocks = {lid: np.array([[a, b], [b, c]]) for lid, (a, b, c) in zip(ids, self.covs[nid])}
        parent = self.parents[nid]
        return TreeNode(
            id=nid,
            pose=Pose(self.x[nid], self.y[nid], self.th[nid]),
            cov_blocks=blocks,
            time=self.times[nid],
            cost=self.costs[nid],
            parent=None if parent < 0 else parent,
            assignment={0: ids[self.assigned[nid]]},
        )

    def path(self, nid: int) -> list[int]:
        out = []
        while nid >= 0:
            out.append(nid)
            nid = self.parents[nid]
        return out[::-1]

    def depth(self, nid: int) -> int:
        return len(self.path(nid)) - 1

    def stats(self) -> dict:
        return {
            "nodes": len(self),
            "buckets": self.n_buckets,
            "max_depth": self.max_depth,
            "k_max": len(self._kmax),
        }


class _Densities(NamedTuple):
    p_v: float
    p_u: float


def _rand_index(rng: np.random.Generator, n: int) -> int:
    return min(int(rng.random() * n), n - 1)


def sample_bucket(tree: PlanTree, params: PlannerParams, rng: np.random.Generator) -> int:
    kmax = tree.k_max
    n = tree.n_buckets
    if rng.random() < params.p_v or len(kmax) == n:
        return kmax[_rand_index(rng, len(kmax))]
    kset = tree._kmax_set
    # uniform over the complement by rejection; K_max is small
    while True:
        k = _rand_index(rng, n)
        if k not in kset:
            return k


def sample_control(
    tree: PlanTree, node: int, problem: PlanningProblem, params: PlannerParams, rng: np.random.Generator
) -> int:
    """Mixture p_u * point-mass(u*) + (1 - p_u) * uniform, or plain uniform once in range."""
    n = len(problem.controls)
    t = tree.times[node]
    goal = problem.means_at(t + 1)[tree.assigned[node]]
    x, y = tree.x[node], tree.y[node]
    if math.hypot(goal[0] - x, goal[1] - y) > problem.sensor.bias_range and rng.random() < params.p_u:
        u = problem.best_control((x, y, tree.th[node]), goal)
        if u is not None:
            return u
        return _rand_index(rng, n)
    return _rand_index(rng, n)


def assign_targets(
    s_parent: Mapping[int, Optional[int]],
    dets: Mapping[int, float],
    robot_positions: Mapping[int, Sequence[float]],
    target_positions: Mapping[int, Sequence[float]],
    delta: float,
) -> dict[int, Optional[int]]:
    """Greedy on-the-fly target assignment.

    Robots whose target is already localized, that share a target with
    another robot, or that have none, each take the closest target that is
    neither assigned nor localized; the pool refills with all unlocalized
    targets when it runs dry.  If every target is localized nothing changes.
    """
    if not dets:
        raise ValueError("no targets in scope")
    targets = sorted(dets)
    s_new = dict(s_parent)
    holders: dict[int, list[int]] = defaultdict(list)
    for j, i in s_new.items():
        if i is not None:
            holders[i].append(j)
    D = [
        j for j in sorted(robot_positions)
        if s_new.get(j) is None or dets[s_new[j]] <= delta or len(holders[s_new[j]]) > 1
    ]
    if not D:
        return s_new
    unsat = [i for i in targets if dets[i] > delta]
    assigned = {i for i in s_new.values() if i is not None}
    pool = [i for i in targets if i not in assigned and dets[i] > delta] or list(unsat)
    for j in D:
        if not pool:
            break
        px, py = robot_positions[j][0], robot_positions[j][1]
        best = min(pool, key=lambda i: (math.hypot(target_positions[i][0] - px, target_positions[i][1] - py), i))
        s_new[j] = best
        pool.remove(best)
        if not pool:
            pool = list(unsat)
    return s_new


def _det(c) -> float:
    return c[0] * c[2] - c[1] * c[1]


def init_tree(root: Pose, problem: PlanningProblem) -> PlanTree:
    tree = PlanTree()
    tree.problem = problem
    covs = problem.root_covs
    dets = [_det(c) for c in covs]
    delta = problem.delta
    means = problem.means_at(0)
    s = assign_targets(
        {0: None},
        dict(enumerate(dets)),
        {0: root.position},
        dict(enumerate(means)),
        delta,
    )
    a = s[0] if s[0] is not None else 0
    nsat = sum(1 for d in dets if d <= delta)
    tree.add_node(root.x, root.y, root.theta, covs, math.fsum(dets), nsat, 0, math.fsum(dets), -1, -1, a)
    return tree


def extend(tree: PlanTree, bucket: int, control: int, problem: PlanningProblem) -> list[int]:
    """Extend every node of ``bucket`` with primitive ``control``; returns the new node ids."""
    members = list(tree.bucket_nodes[bucket])
    n0 = members[0]
    x0, y0, th0 = tree.x[n0], tree.y[n0], tree.th[n0]
    x, y, th = _step(x0, y0, th0, problem.v[control], problem.w[control])
    ws = problem.workspace
    if not (is_free(ws, (x, y)) and (not ws.obstacles or segment_free(ws, (x0, y0), (x, y)))):
        return []
    sensor = problem.sensor
    rng_ = sensor.range
    delta = problem.delta
    static_idx = problem.static_idx
    mobile_idx = problem.mobile_idx
    per_time: dict[int, tuple] = {}
    new_ids = []
    bound = tree.cost_bound
    for q in members:
        if len(tree.times) >= tree.max_nodes:
            break
        t1 = tree.times[q] + 1
        meas = per_time.get(t1)
        if meas is None:
            means = problem.means_at(t1)
            ms = []
            for i in range(len(means)):
                mx, my = means[i]
                dx, dy = mx - x, my - y
                d = math.hypot(dx, dy)
                if d <= rng_:
                    if d < 1e-9:
                        hx, hy = 1.0, 0.0
                    else:
                        hx, hy = dx / d, dy / d
                    s = sensor.std(d)
                    ms.append((i, hx, hy, s * s))
            meas = per_time[t1] = (means, ms)
        means, ms = meas
        covs = tree.covs[q]
        new = list(covs)
        detsum = tree.detsum[q]
        nsat = tree.nsat[q]
        for i in mobile_idx:
            d = problem.dynamics[i]
            new[i] = predict_cov_sym(*new[i], d.A, d.Q)
        for i, hx, hy, r in ms:
            new[i] = info_update_sym(*new[i], hx, hy, r)
        if mobile_idx or ms:
            changed = set(mobile_idx)
            changed.update(m[0] for m in ms)
            for i in changed:
                od, nd = _det(covs[i]), _det(new[i])
                detsum += nd - od
                nsat += int(nd <= delta) - int(od <= delta)
        cost = tree.costs[q] + detsum
        if cost >= bound:
            continue
        new_t = tuple(new)
        a = tree.assigned[q]
        if _det(new_t[a]) <= delta:
            dets = {i: _det(c) for i, c in enumerate(new_t)}
            a = assign_targets({0: a}, dets, {0: (x, y)}, dict(enumerate(means)), delta)[0]
        nid = tree.add_node(x, y, th, new_t, detsum, nsat, t1, cost, q, control, a)
        new_ids.append(nid)
    return new_ids


@dataclass
class PlanResult:
    horizon: int
    controls: list[ControlInput]
    achieved_dets: dict[int, float]
    feasible: bool
    control_indices: list[int] = field(default_factory=list)
    goal_count: int = 0
    tree: Optional[PlanTree] = field(default=None, repr=False)

    def stats(self) -> dict:
        out = dict(self.tree.stats()) if self.tree is not None else {}
        out.update(horizon=self.horizon, feasible=self.feasible, goal_set=self.goal_count)
        return out


def _is_goal(tree: PlanTree, nid: int, n_scope: int, mode: str) -> bool:
    if mode == GOAL_ALL:
        return tree.nsat[nid] == n_scope
    return tree.nsat[nid] >= 1


def plan(
    root_pose: Pose,
    beliefs: Sequence[LandmarkBelief],
    params: PlannerParams,
    workspace: Workspace,
    sensor: SensorModel,
    controls: Sequence[ControlInput],
    rng: np.random.Generator,
    dynamics: Optional[Sequence[Optional[LandmarkDynamics]]] = None,
    t0: int = 0,
    dt: float = 1.0,
    keep_tree: bool = False,
) -> PlanResult:
    """Grow a tree for ``params.n_max`` iterations and extract the cheapest goal path.

    Without any goal node the lowest terminal-uncertainty path is returned
    with ``feasible=False``.
    """
    if not is_free(workspace, root_pose.position):
        raise ValueError("root pose in collision")
    problem = PlanningProblem(workspace, sensor, controls, beliefs, params.delta, dynamics, t0, dt)
    tree = init_tree(root_pose, problem)
    tree.max_nodes = params.max_nodes
    n_scope = len(problem.ids)
    mode = params.goal_mode
    best_goal, best_goal_cost = -1, math.inf
    goal_count = 0
    if _is_goal(tree, 0, n_scope, mode):
        best_goal, best_goal_cost, goal_count = 0, tree.costs[0], 1
        if params.prune:
            tree.cost_bound = best_goal_cost
    best_effort, best_effort_val = 0, tree.detsum[0]
    explore = _Densities(0.0, 0.0)
    for _ in range(params.n_max):
        dens = explore if (params.uniform_after_goal and best_goal >= 0) else params
        k = sample_bucket(tree, dens, rng)
        q = tree.bucket_deepest[k]
        u = sample_control(tree, q, problem, dens, rng)
        for nid in extend(tree, k, u, problem):
            if _is_goal(tree, nid, n_scope, mode):
                goal_count += 1
                if tree.costs[nid] < best_goal_cost:
                    best_goal, best_goal_cost = nid, tree.costs[nid]
                    if params.prune:
                        tree.cost_bound = best_goal_cost
            if tree.detsum[nid] < best_effort_val:
                best_effort, best_effort_val = nid, tree.detsum[nid]
    feasible = best_goal >= 0
    end = best_goal if feasible else best_effort
    path = tree.path(end)
    idx = [tree.controls[n] for n in path[1:]]
    return PlanResult(
        horizon=len(idx),
        controls=[problem.controls[i] for i in idx],
        achieved_dets={lid: _det(c) for lid, c in zip(problem.ids, tree.covs[end])},
        feasible=feasible,
        control_indices=idx,
        goal_count=goal_count,
        tree=tree if keep_tree else None,
    )
