"""Gaussian landmark beliefs, the range-only sensor, and the filters built on it.

Covariances are 2x2 per landmark; the global covariance is their
block-diagonal stack.  The planner-side recursion (:func:`riccati_update`)
touches covariances only, while :func:`ekf_update` also moves the mean using
an actual range reading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .workspace import Pose

SYM_TOL = 1e-12
PSD_TOL = 1e-12
COINCIDENT = 1e-9
DEGENERATE_DET = 1e-300


def check_covariance(cov, name: str = "covariance") -> np.ndarray:
    c = np.asarray(cov, dtype=float)
    if c.shape != (2, 2) or not np.all(np.isfinite(c)):
        raise ValueError(f"{name} must be a finite 2x2 matrix")
    if np.max(np.abs(c - c.T)) > SYM_TOL:
        raise ValueError(f"{name} not symmetric")
    if np.min(np.linalg.eigvalsh(c)) < -PSD_TOL:
        raise ValueError(f"{name} not PSD")
    return c


@dataclass(frozen=True)
class SensorModel:
    range: float = 2.0
    noise_slope: float = 0.25  # std-dev per metre of distance
    noise_floor: float = 0.01  # metres
    # radius inside which the planner stops steering toward its target;
    # defaults to the measurement range
    sensing_range: Optional[float] = None

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("sensor range must be positive")
        if self.sensing_range is not None and not self.sensing_range > 0:
            raise ValueError("sensing_range must be positive")
        if self.noise_slope < 0:
            raise ValueError("noise_slope must be non-negative")
        if not self.noise_floor > 0:
            raise ValueError("noise_floor must be positive")

    @property
    def bias_range(self) -> float:
        return self.range if self.sensing_range is None else self.sensing_range

    def std(self, distance: float) -> float:
        return max(self.noise_floor, self.noise_slope * distance)


@dataclass(frozen=True, eq=False)
class LandmarkDynamics:
    """x(t+1) = A x(t) + B a(t) + w(t),  w ~ N(0, Q)."""

    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    B: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    Q: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    inputs: tuple = ()
    cyclic: bool = False

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(2, 2)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(2, -1)
        Q = check_covariance(self.Q, "process noise Q")
        inputs = tuple(tuple(float(v) for v in np.atleast_1d(a)) for a in self.inputs)
        for a in inputs:
            if len(a) != B.shape[1]:
                raise ValueError("landmark control has wrong dimension")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "inputs", inputs)

    @classmethod
    def static(cls) -> "LandmarkDynamics":
        return cls()

    @property
    def is_static(self) -> bool:
        return (
            np.array_equal(self.A, np.eye(2))
            and not np.any(self.B)
            and not np.any(self.Q)
        )

    def input_at(self, t: int) -> np.ndarray:
        if not np.any(self.B):
            return np.zeros(self.B.shape[1])
        if self.inputs and self.cyclic:
            return np.asarray(self.inputs[t % len(self.inputs)])
        if t < 0 or t >= len(self.inputs):
            raise ValueError("missing landmark control")
        return np.asarray(self.inputs[t])


@dataclass(frozen=True, eq=False)
class LandmarkBelief:
    mean: np.ndarray
    cov: np.ndarray
    landmark_id: int = 0

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(2)
        if not np.all(np.isfinite(m)):
            raise ValueError("mean must be finite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", check_covariance(self.cov))

    @property
    def det(self) -> float:
        c = self.cov
        return float(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])


@dataclass(frozen=True, eq=False)
class GlobalBelief:
    landmarks: tuple[LandmarkBelief, ...]

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        for k, b in enumerate(self.landmarks):
            if b.landmark_id != k:
                raise ValueError("landmark beliefs must be ordered by landmark_id")

    def __len__(self):
        return len(self.landmarks)

    def __getitem__(self, i: int) -> LandmarkBelief:
        return self.landmarks[i]

    def replace(self, i: int, block: LandmarkBelief) -> "GlobalBelief":
        lms = list(self.landmarks)
        lms[i] = block
        return GlobalBelief(tuple(lms))

    def dets(self) -> list[float]:
        return det_per_landmark(self)

    def global_det(self) -> float:
        return float(np.prod(self.dets())) if self.landmarks else 1.0

    def covariance(self) -> np.ndarray:
        """Dense block-diagonal covariance (for inspection and tests)."""
        n = len(self.landmarks)
        out = np.zeros((2 * n, 2 * n))
        for k, b in enumerate(self.landmarks):
            out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = b.cov
        return out


def det_per_landmark(belief: GlobalBelief) -> list[float]:
    return [b.det for b in belief.landmarks]


def measurement_jacobian(p: Pose, x_hat: Sequence[float], model: SensorModel) -> Optional[np.ndarray]:
    """Gradient of the range ||x - p|| w.r.t. the landmark, as a 1x2 row, or None out of range."""
    dx, dy = x_hat[0] - p.x, x_hat[1] - p.y
    d = math.hypot(dx, dy)
    if d > model.range:
        return None
    if d < COINCIDENT:
        return np.array([[1.0, 0.0]])
    return np.array([[dx / d, dy / d]])


def measurement_noise_variance(model: SensorModel, distance: float) -> float:
    if distance > model.range:
        return math.inf
    return model.std(distance) ** 2


# --- scalar kernels shared by the public API and the planner's hot loop ------

def predict_cov_sym(a: float, b: float, c: float, A: np.ndarray, Q: np.ndarray):
    """(a, b, c) = (S00, S01, S11); returns A S A^T + Q in the same packing."""
    a00, a01, a10, a11 = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    # M = A S
    m00 = a00 * a + a01 * b
    m01 = a00 * b + a01 * c
    m10 = a10 * a + a11 * b
    m11 = a10 * b + a11 * c
    na = m00 * a00 + m01 * a01 + Q[0, 0]
    nb = m00 * a10 + m01 * a11 + Q[0, 1]
    nc = m10 * a10 + m11 * a11 + Q[1, 1]
    return float(na), float(nb), float(nc)


def info_update_sym(a: float, b: float, c: float, hx: float, hy: float, r: float):
    """Information-form update (S^-1 + h h^T / r)^-1 on a packed symmetric 2x2."""
    det = a * c - b * b
    if not det > DEGENERATE_DET:
        raise ValueError("degenerate prior")
    ia = c / det + hx * hx / r
    ib = -b / det + hx * hy / r
    ic = a / det + hy * hy / r
    idet = ia * ic - ib * ib
    return ic / idet, -ib / idet, ia / idet


def riccati_update(
    belief: LandmarkBelief,
    p: Pose,
    model: SensorModel,
    dynamics: Optional[LandmarkDynamics] = None,
    t: int = 0,
) -> np.ndarray:
    """One step of the covariance recursion: predict, then (if in range) measure.

    The range test and the linearisation use the predicted mean at step ``t``;
    the mean itself is left alone.
    """
    c = belief.cov
    if c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0] < DEGENERATE_DET:
        raise ValueError("degenerate prior")
    a, b, cc = c[0, 0], 0.5 * (c[0, 1] + c[1, 0]), c[1, 1]
    mean = belief.mean
    if dynamics is not None and not dynamics.is_static:
        a, b, cc = predict_cov_sym(a, b, cc, dynamics.A, dynamics.Q)
        mean = predict_mean(belief, dynamics, t)
    H = measurement_jacobian(p, mean, model)
    if H is not None:
        r = measurement_noise_variance(model, math.hypot(mean[0] - p.x, mean[1] - p.y))
        a, b, cc = info_update_sym(a, b, cc, H[0, 0], H[0, 1], r)
    return np.array([[a, b], [b, cc]])


def predict_mean(belief: LandmarkBelief, dynamics: LandmarkDynamics, t: int) -> np.ndarray:
    if dynamics.is_static:
        return belief.mean.copy()
    return dynamics.A @ belief.mean + dynamics.B @ dynamics.input_at(t)


def predict(belief: LandmarkBelief, dynamics: LandmarkDynamics, t: int) -> LandmarkBelief:
    """Kalman prediction of both mean and covariance."""
    if dynamics.is_static:
        return belief
    c = belief.cov
    a, b, cc = predict_cov_sym(c[0, 0], c[0, 1], c[1, 1], dynamics.A, dynamics.Q)
    return LandmarkBelief(predict_mean(belief, dynamics, t), np.array([[a, b], [b, cc]]), belief.landmark_id)


def simulate_measurement(
    p: Pose, x_true: Sequence[float], model: SensorModel, rng: np.random.Generator
) -> Optional[float]:
    d = math.hypot(x_true[0] - p.x, x_true[1] - p.y)
    if d > model.range:
        return None
    return d + float(rng.normal(0.0, model.std(d)))


def ekf_update(belief: LandmarkBelief, p: Pose, measurement: float, model: SensorModel) -> LandmarkBelief:
    """Range-only EKF correction linearised at the current estimate."""
    mean, S = belief.mean, belief.cov
    dx, dy = mean[0] - p.x, mean[1] - p.y
    d = math.hypot(dx, dy)
    if d < COINCIDENT:
        H = np.array([1.0, 0.0])
    else:
        H = np.array([dx / d, dy / d])
    R = model.std(d) ** 2
    s = float(H @ S @ H) + R
    if not s > 0:
        raise ValueError("numerical failure")
    K = S @ H / s
    nu = measurement - d
    new_mean = mean + K * nu
    new_cov = (np.eye(2) - np.outer(K, H)) @ S
    new_cov = 0.5 * (new_cov + new_cov.T)
    return LandmarkBelief(new_mean, new_cov, belief.landmark_id)
