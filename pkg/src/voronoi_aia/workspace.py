"""Workspace geometry: bounds, rectangular obstacles, unicycle motion,
Voronoi membership and obstacle-aware (geodesic) distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

TWO_PI = 2.0 * math.pi

Point = tuple[float, float]
Rect = tuple[float, float, float, float]


def wrap_angle(theta: float) -> float:
    """Map an angle onto [0, 2*pi)."""
    w = math.fmod(theta, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    if w >= TWO_PI:
        w = 0.0
    return w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class ControlInput:
    v: float  # m/s
    omega: float  # rad/s


def apply_motion(p: Pose, u: ControlInput, dt: float = 1.0) -> Pose:
    """Unicycle step. Translation uses the heading held *before* the turn.

    Collision checking is left to the caller.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose(
        p.x + u.v * dt * math.cos(p.theta),
        p.y + u.v * dt * math.sin(p.theta),
        p.theta + u.omega * dt,
    )


def make_controls(v_set: Sequence[float], omega_deg_set: Sequence[float]) -> list[ControlInput]:
    """Admissible primitives in v-major order (index order is the tie-break order)."""
    return [ControlInput(float(v), math.radians(w)) for v in v_set for w in omega_deg_set]


@dataclass(frozen=True)
class Workspace:
    width: float
    height: float
    obstacles: tuple[Rect, ...] = ()
    grid_resolution: float = 0.1

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("workspace width and height must be positive")
        if not (0 < self.grid_resolution <= min(self.width, self.height) / 4):
            raise ValueError("grid_resolution must be in (0, min(width, height)/4]")
        rects = tuple(tuple(float(c) for c in r) for r in self.obstacles)
        for x0, y0, x1, y1 in rects:
            if not (x1 > x0 and y1 > y0):
                raise ValueError("obstacle must have positive area")
            if x0 < 0 or y0 < 0 or x1 > self.width or y1 > self.height:
                raise ValueError("obstacle outside workspace bounds")
        object.__setattr__(self, "obstacles", rects)


def is_free(ws: Workspace, point: Sequence[float]) -> bool:
    """Inside the (closed) bounds and outside every closed obstacle."""
    x, y = point[0], point[1]
    if not (0.0 <= x <= ws.width and 0.0 <= y <= ws.height):
        return False
    for x0, y0, x1, y1 in ws.obstacles:
        if x0 <= x <= x1 and y0 <= y <= y1:
            return False
    return True


def _segment_hits_rect(a: Point, b: Point, rect: Rect) -> bool:
    # Liang-Barsky clip of the segment against a closed rectangle.
    x0, y0, x1, y1 = rect
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a[0] - x0), (dx, x1 - a[0]), (-dy, a[1] - y0), (dy, y1 - a[1])):
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                t0 = max(t0, r)
            else:
                t1 = min(t1, r)
            if t0 > t1:
                return False
    return True


def segment_free(ws: Workspace, a: Sequence[float], b: Sequence[float]) -> bool:
    if not (is_free(ws, a) and is_free(ws, b)):
        return False
    pa, pb = (a[0], a[1]), (b[0], b[1])
    return not any(_segment_hits_rect(pa, pb, r) for r in ws.obstacles)


def voronoi_owner(point: Sequence[float], robot_positions: Sequence[Sequence[float]]) -> int:
    """Index of the closest robot; exact ties go to the lowest index."""
    if len(robot_positions) == 0:
        raise ValueError("no robots")
    best, best_d = 0, math.inf
    x, y = point[0], point[1]
    for j, r in enumerate(robot_positions):
        d = (r[0] - x) ** 2 + (r[1] - y) ** 2
        if d < best_d:
            best, best_d = j, d
    return best


def voronoi_owners(points: np.ndarray, robot_positions: np.ndarray) -> np.ndarray:
    """Vectorised :func:`voronoi_owner` over an (n, 2) array of points."""
    robots = np.asarray(robot_positions, dtype=float).reshape(-1, 2)
    if robots.shape[0] == 0:
        raise ValueError("no robots")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d2 = ((pts[:, None, :] - robots[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)  # argmin returns the first minimum


# ---------------------------------------------------------------------------
# geodesic distance on an 8-connected grid

class _Grid:
    def __init__(self, ws: Workspace):
        res = ws.grid_resolution
        self.res = res
        self.nx = max(1, int(math.ceil(ws.width / res - 1e-9)))
        self.ny = max(1, int(math.ceil(ws.height / res - 1e-9)))
        xs = (np.arange(self.nx) + 0.5) * res
        ys = (np.arange(self.ny) + 0.5) * res
        self.xs, self.ys = xs, ys
        free = np.zeros((self.nx, self.ny), dtype=bool)
        for i, cx in enumerate(xs):
            for j, cy in enumerate(ys):
                free[i, j] = is_free(ws, (cx, cy))
        self.free = free
        self.graph = self._build_graph()

    def _build_graph(self):
        nx, ny, free = self.nx, self.ny, self.free
        idx = np.arange(nx * ny).reshape(nx, ny)
        rows, cols, w = [], [], []
        diag = math.sqrt(2.0) * self.res
        for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
            i0, i1 = max(0, -di), nx - max(0, di)
            j0, j1 = max(0, -dj), ny - max(0, dj)
            a = free[i0:i1, j0:j1]
            b = free[i0 + di:i1 + di, j0 + dj:j1 + dj]
            ok = a & b
            if di and dj:
                # no corner cutting
                ok &= free[i0 + di:i1 + di, j0:j1] & free[i0:i1, j0 + dj:j1 + dj]
            src = idx[i0:i1, j0:j1][ok]
            dst = idx[i0 + di:i1 + di, j0 + dj:j1 + dj][ok]
            cost = diag if (di and dj) else self.res
            rows += [src, dst]
            cols += [dst, src]
            w += [np.full(src.size, cost), np.full(src.size, cost)]
        n = nx * ny
        return coo_matrix(
            (np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()

    def snap(self, point: Sequence[float]) -> tuple[int, int]:
        """Nearest free cell centre."""
        i = min(self.nx - 1, max(0, int(point[0] / self.res)))
        j = min(self.ny - 1, max(0, int(point[1] / self.res)))
        if self.free[i, j]:
            return i, j
        fi, fj = np.nonzero(self.free)
        if fi.size == 0:
            raise ValueError("workspace grid has no free cells")
        d2 = (self.xs[fi] - point[0]) ** 2 + (self.ys[fj] - point[1]) ** 2
        k = int(np.argmin(d2))
        return int(fi[k]), int(fj[k])

    def center(self, cell: tuple[int, int]) -> Point:
        return float(self.xs[cell[0]]), float(self.ys[cell[1]])


@lru_cache(maxsize=8)
def _grid(ws: Workspace) -> _Grid:
    return _Grid(ws)


@lru_cache(maxsize=512)
def _field(ws: Workspace, goal: tuple[int, int]) -> np.ndarray:
    g = _grid(ws)
    d = dijkstra(g.graph, directed=False, indices=goal[0] * g.ny + goal[1])
    return d.reshape(g.nx, g.ny)


class GeodesicField:
    """Geodesic distances from many query points to one fixed goal.

    A straight, obstacle-free segment is already the shortest path; otherwise
    the length is offset(query) + grid path + offset(goal), which can never
    undercut the Euclidean distance.
    """

    def __init__(self, ws: Workspace, goal: Sequence[float]):
        self.ws = ws
        self.goal = (float(goal[0]), float(goal[1]))
        self._grid = None
        self._field = None
        self._goal_cell = None

    def _ensure_grid(self):
        if self._grid is None:
            self._grid = _grid(self.ws)
            self._goal_cell = self._grid.snap(self.goal)
            self._field = _field(self.ws, self._goal_cell)

    def __call__(self, point: Sequence[float]) -> float:
        gx, gy = self.goal
        if not self.ws.obstacles:
            return math.hypot(point[0] - gx, point[1] - gy)
        if segment_free(self.ws, point, self.goal):
            return math.hypot(point[0] - gx, point[1] - gy)
        self._ensure_grid()
        g = self._grid
        cell = g.snap(point)
        d = float(self._field[cell])
        if not math.isfinite(d):
            return math.inf
        cx, cy = g.center(cell)
        ox, oy = g.center(self._goal_cell)
        return math.hypot(point[0] - cx, point[1] - cy) + d + math.hypot(gx - ox, gy - oy)


def geodesic_distance(ws: Workspace, a: Sequence[float], b: Sequence[float]) -> float:
    """Obstacle-avoiding distance between two free points; ``math.inf`` if unreachable."""
    if not (is_free(ws, a) and is_free(ws, b)):
        raise ValueError("query point in obstacle")
    if a[0] == b[0] and a[1] == b[1]:
        return 0.0
    return GeodesicField(ws, b)(a)


def halton_points(n: int, width: float, height: float) -> np.ndarray:
    """Deterministic (unscrambled) base-2/3 Halton points scaled to the workspace."""
    from scipy.stats import qmc

    pts = qmc.Halton(d=2, scramble=False).random(n + 1)[1:]  # skip the origin
    return pts * np.array([width, height])
