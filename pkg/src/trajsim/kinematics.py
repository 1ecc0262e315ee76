"""Sparse plans, dense rollouts, and the PID tracker that links them.

A plan is M waypoints at 0.5 s spacing (waypoint i at t + 0.5*(i+1), ego at
the origin of its own frame at time t).  Metrics never consume plans
directly; they consume the 41-state, 10 Hz rollout produced by tracking the
plan with a PID-controlled kinematic bicycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geom import Pose, wrap_angle

__all__ = [
    "Trajectory",
    "EgoState",
    "DenseTrajectory",
    "KinematicsConfig",
    "MotionProfiles",
    "bicycle_step",
    "pid_track",
    "derive_profiles",
    "finite_difference",
    "trajectory_to_world",
    "trajectory_to_ego",
    "dense_to_world",
    "DENSE_TICKS",
    "PLAN_DT",
    "TICK_DT",
]

DENSE_TICKS = 41
TICK_DT = 0.1
PLAN_DT = 0.5
TICKS_PER_WAYPOINT = 5


class Trajectory:
    """Sparse planned motion: (M, 3) array of (x, y, psi) at 0.5 s spacing."""

    __slots__ = ("poses",)

    def __init__(self, poses):
        p = np.asarray(poses, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
            raise ValueError("trajectory needs an (M, 3) array of waypoints")
        if not np.all(np.isfinite(p)):
            raise ValueError("trajectory waypoints must be finite")
        self.poses = p
        self.poses.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.poses)

    @property
    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    def waypoint(self, i: int) -> Pose:
        x, y, psi = self.poses[i]
        return Pose(x, y, psi)

    def __len__(self):
        return len(self.poses)

    def __eq__(self, other):
        return isinstance(other, Trajectory) and np.array_equal(self.poses, other.poses)

    def __repr__(self):
        return f"Trajectory(M={self.m})"


@dataclass(frozen=True)
class EgoState:
    """Pose plus longitudinal speed/acceleration and front-wheel angle."""

    pose: Pose
    v: float = 0.0
    a: float = 0.0
    steer: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed must be non-negative")


class DenseTrajectory:
    """Exactly 41 kinematic states at 0.1 s, stored as per-field arrays."""

    __slots__ = ("x", "y", "psi", "v", "a", "steer")

    def __init__(self, x, y, psi, v, a, steer):
        arrays = [np.asarray(f, dtype=float) for f in (x, y, psi, v, a, steer)]
        for arr in arrays:
            if arr.shape != (DENSE_TICKS,):
                raise ValueError(f"dense trajectory fields must have shape ({DENSE_TICKS},)")
            arr.setflags(write=False)
        self.x, self.y, self.psi, self.v, self.a, self.steer = arrays
        dpsi = np.abs(np.diff(self.psi))
        if np.any(np.minimum(dpsi, 2 * math.pi - dpsi) >= math.pi):
            raise ValueError("heading jumps by >= pi between consecutive ticks")

    def __len__(self):
        return DENSE_TICKS

    def state(self, i: int) -> EgoState:
        return EgoState(Pose(self.x[i], self.y[i], self.psi[i]), self.v[i], self.a[i], self.steer[i])

    @property
    def states(self) -> list[EgoState]:
        return [self.state(i) for i in range(DENSE_TICKS)]

    @property
    def xy(self) -> np.ndarray:
        return np.stack([self.x, self.y], axis=1)

    def __eq__(self, other):
        return isinstance(other, DenseTrajectory) and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("x", "y", "psi", "v", "a", "steer")
        )


@dataclass(frozen=True)
class KinematicsConfig:
    """Bicycle geometry, command bounds, and PID gains (dt is 0.1 s)."""

    wheelbase: float = 2.7
    steer_max: float = 0.8
    accel_min: float = -6.0
    accel_max: float = 4.0
    kp_lon: float = 2.0
    ki_lon: float = 0.1
    kd_lon: float = 0.2
    kp_lat: float = 1.5
    kd_lat: float = 0.3
    dt: float = TICK_DT

    def __post_init__(self):
        if self.wheelbase <= 0 or self.dt <= 0:
            raise ValueError("wheelbase and dt must be positive")


def bicycle_step(s: EgoState, accel_cmd: float, steer_cmd: float, cfg: KinematicsConfig) -> EgoState:
    """One forward-Euler step; commands are clamped, never rejected."""
    a = min(max(accel_cmd, cfg.accel_min), cfg.accel_max)
    steer = min(max(steer_cmd, -cfg.steer_max), cfg.steer_max)
    x = s.pose.x + s.v * math.cos(s.pose.psi) * cfg.dt
    y = s.pose.y + s.v * math.sin(s.pose.psi) * cfg.dt
    psi = s.pose.psi + (s.v / cfg.wheelbase) * math.tan(steer) * cfg.dt
    v = max(0.0, s.v + a * cfg.dt)
    return EgoState(Pose(x, y, psi), v, a, steer)


def _interp_targets(plan: Trajectory, init: EgoState, dt: float, ticks: int):
    """Target (x, y, psi) and target arc length per tick time 0 .. (ticks-1)*dt.

    Targets interpolate linearly in time between the waypoint nodes (implicit
    start node = init at t=0); heading interpolates along the shortest arc.
    Returned as plain Python lists for the scalar control loop.
    """
    nodes_t = [0.0] + [PLAN_DT * (i + 1) for i in range(plan.m)]
    nodes_x = [init.pose.x] + [float(v) for v in plan.poses[:, 0]]
    nodes_y = [init.pose.y] + [float(v) for v in plan.poses[:, 1]]
    nodes_psi = [init.pose.psi] + [float(v) for v in plan.poses[:, 2]]
    nodes_s = [0.0]
    for i in range(1, len(nodes_x)):
        nodes_s.append(nodes_s[-1] + math.hypot(nodes_x[i] - nodes_x[i - 1], nodes_y[i] - nodes_y[i - 1]))

    tx, ty, tpsi, ts = [], [], [], []
    j = 0
    for k in range(ticks):
        t = k * dt
        while j + 1 < len(nodes_t) - 1 and nodes_t[j + 1] < t:
            j += 1
        if t >= nodes_t[-1]:
            tx.append(nodes_x[-1])
            ty.append(nodes_y[-1])
            tpsi.append(nodes_psi[-1])
            ts.append(nodes_s[-1])
            continue
        w = (t - nodes_t[j]) / (nodes_t[j + 1] - nodes_t[j])
        tx.append(nodes_x[j] + w * (nodes_x[j + 1] - nodes_x[j]))
        ty.append(nodes_y[j] + w * (nodes_y[j + 1] - nodes_y[j]))
        dpsi = wrap_angle(nodes_psi[j + 1] - nodes_psi[j])
        tpsi.append(nodes_psi[j] + w * dpsi)
        ts.append(nodes_s[j] + w * (nodes_s[j + 1] - nodes_s[j]))
    return tx, ty, tpsi, ts


def pid_track(plan: Trajectory, init: EgoState, cfg: KinematicsConfig | None = None) -> DenseTrajectory:
    """Track a sparse plan for 40 ticks of 0.1 s, returning 41 states.

    Longitudinal: PID on the gap between the time-interpolated target arc
    length and the distance actually traveled.  Lateral: PD steering from the
    cross-track error to the time-interpolated target pose, damped by the
    heading mismatch scaled by speed.  Plan and init must share one frame.
    Deterministic; infeasible plans saturate the commands and roll out as-is.
    """
    if plan.m < 2:
        raise ValueError("plan needs at least 2 waypoints")
    if cfg is None:
        cfg = KinematicsConfig()
    dt = cfg.dt
    tx, ty, tpsi, ts = _interp_targets(plan, init, dt, DENSE_TICKS)

    xs = [0.0] * DENSE_TICKS
    ys = [0.0] * DENSE_TICKS
    psis = [0.0] * DENSE_TICKS
    vs = [0.0] * DENSE_TICKS
    accs = [0.0] * DENSE_TICKS
    steers = [0.0] * DENSE_TICKS
    x, y, psi, v = init.pose.x, init.pose.y, init.pose.psi, init.v
    xs[0], ys[0], psis[0], vs[0] = x, y, psi, v
    accs[0], steers[0] = init.a, init.steer

    traveled = 0.0
    e_s_prev = 0.0
    e_s_int = 0.0
    pi = math.pi
    tau = math.tau
    for k in range(1, DENSE_TICKS):
        cos_psi = math.cos(psi)
        sin_psi = math.sin(psi)
        # longitudinal PID on arc-length progress at the current tick time
        e_s = ts[k - 1] - traveled
        e_s_int += e_s * dt
        accel_cmd = cfg.kp_lon * e_s + cfg.ki_lon * e_s_int + cfg.kd_lon * (e_s - e_s_prev) / dt
        e_s_prev = e_s
        # lateral PD: cross-track error plus speed-scaled heading mismatch
        ex = tx[k - 1] - x
        ey_w = ty[k - 1] - y
        e_y = -sin_psi * ex + cos_psi * ey_w
        e_psi = tpsi[k - 1] - psi
        e_psi = math.remainder(e_psi, tau)
        steer_cmd = cfg.kp_lat * e_y + cfg.kd_lat * v * math.sin(e_psi)

        a = min(max(accel_cmd, cfg.accel_min), cfg.accel_max)
        steer = min(max(steer_cmd, -cfg.steer_max), cfg.steer_max)
        step = v * dt
        x += step * cos_psi
        y += step * sin_psi
        psi += (v / cfg.wheelbase) * math.tan(steer) * dt
        if psi > pi or psi <= -pi:
            psi = math.remainder(psi, tau)
            if psi <= -pi:
                psi += tau
        v = max(0.0, v + a * dt)
        traveled += step
        xs[k], ys[k], psis[k], vs[k], accs[k], steers[k] = x, y, psi, v, a, steer

    return DenseTrajectory(xs, ys, psis, vs, accs, steers)


class MotionProfiles(NamedTuple):
    lon_accel: np.ndarray
    lat_accel: np.ndarray
    jerk: np.ndarray
    yaw_rate: np.ndarray
    yaw_accel: np.ndarray


def finite_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Central differences on interior points, one-sided at the ends."""
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
    out[0] = (v[1] - v[0]) / dt
    out[-1] = (v[-1] - v[-2]) / dt
    return out


def profiles_from_arrays(v: np.ndarray, psi: np.ndarray, dt: float) -> MotionProfiles:
    lon_accel = finite_difference(v, dt)
    yaw_rate = finite_difference(np.unwrap(psi), dt)
    yaw_accel = finite_difference(yaw_rate, dt)
    lat_accel = v * yaw_rate
    jerk = np.hypot(finite_difference(lon_accel, dt), finite_difference(lat_accel, dt))
    return MotionProfiles(lon_accel, lat_accel, jerk, yaw_rate, yaw_accel)


def derive_profiles(d: DenseTrajectory, dt: float = TICK_DT) -> MotionProfiles:
    """Acceleration, jerk-magnitude, and yaw profiles of a rollout."""
    return profiles_from_arrays(d.v, d.psi, dt)


# ---------------------------------------------------------------------------
# frame changes between the ego frame and the world frame


def trajectory_to_world(t: Trajectory, frame: Pose) -> Trajectory:
    """Express an ego-frame trajectory in the world frame of `frame`."""
    c, s = math.cos(frame.psi), math.sin(frame.psi)
    p = t.poses
    out = np.empty_like(p)
    out[:, 0] = frame.x + c * p[:, 0] - s * p[:, 1]
    out[:, 1] = frame.y + s * p[:, 0] + c * p[:, 1]
    out[:, 2] = np.vectorize(wrap_angle)(p[:, 2] + frame.psi)
    return Trajectory(out)


def dense_to_world(d: DenseTrajectory, frame: Pose) -> DenseTrajectory:
    """Express an ego-frame dense rollout in the world frame of `frame`."""
    c, s = math.cos(frame.psi), math.sin(frame.psi)
    x = frame.x + c * d.x - s * d.y
    y = frame.y + s * d.x + c * d.y
    psi = np.array([wrap_angle(p + frame.psi) for p in d.psi])
    return DenseTrajectory(x, y, psi, d.v.copy(), d.a.copy(), d.steer.copy())


def trajectory_to_ego(t: Trajectory, frame: Pose) -> Trajectory:
    """Express a world-frame trajectory in the ego frame at `frame`."""
    c, s = math.cos(frame.psi), math.sin(frame.psi)
    p = t.poses
    dx = p[:, 0] - frame.x
    dy = p[:, 1] - frame.y
    out = np.empty_like(p)
    out[:, 0] = c * dx + s * dy
    out[:, 1] = -s * dx + c * dy
    out[:, 2] = np.vectorize(wrap_angle)(p[:, 2] - frame.psi)
    return Trajectory(out)
