"""Log-replay scoring of dense rollouts against a scene.

Produces the nine rule-based subscores (NC, DAC, DDC, TLC, EP, TTC, LK, HC,
EC), their multiplicative/weighted aggregates, per-waypoint auxiliary labels,
and the proposal-set diversity measure.  The scene is immutable during
scoring and every function here is pure, so (trajectory, scene) pairs can be
scored concurrently.

Scoring many rollouts against one scene should go through ``ScoreContext``,
which precomputes the replay arrays and the human reference rollout once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import (
    Polygon,
    Polyline,
    arc_length,
    buffer_rasterize,
    grid_union,
    obb_overlap_batch,
    points_in_polygon,
    segments_intersect_batch,
)
from .kinematics import (
    DENSE_TICKS,
    TICK_DT,
    TICKS_PER_WAYPOINT,
    DenseTrajectory,
    EgoState,
    KinematicsConfig,
    Trajectory,
    finite_difference,
    pid_track,
    profiles_from_arrays,
    trajectory_to_world,
)

__all__ = [
    "PHASE_GREEN",
    "PHASE_YELLOW",
    "PHASE_RED",
    "PHASE_NAMES",
    "Agent",
    "TrafficLight",
    "Lane",
    "Intersection",
    "Scene",
    "SubScores",
    "AuxLabels",
    "MetricConfig",
    "ScoreContext",
    "score_nc",
    "score_dac",
    "score_ddc",
    "score_tlc",
    "score_ep",
    "score_ttc",
    "score_lk",
    "score_hc",
    "score_ec",
    "aggregate_pdms",
    "aggregate_epdms",
    "evaluate_rollout",
    "aux_labels",
    "diversity",
    "COMMANDS",
]

PHASE_GREEN, PHASE_YELLOW, PHASE_RED = 0, 1, 2
PHASE_NAMES = ("green", "yellow", "red")
COMMANDS = ("left", "forward", "right")


class Agent:
    """Replayed road agent: oriented box footprint with 41 world-frame poses."""

    __slots__ = ("id", "half_length", "half_width", "x", "y", "psi", "is_static")

    def __init__(self, id, half_length, half_width, states, is_static=False):
        if half_length <= 0 or half_width <= 0:
            raise ValueError(f"agent {id!r}: extents must be positive")
        s = np.asarray(states, dtype=float)
        if s.shape != (DENSE_TICKS, 3):
            raise ValueError(f"agent {id!r}: states must be ({DENSE_TICKS}, 3), got {s.shape}")
        self.id = id
        self.half_length = float(half_length)
        self.half_width = float(half_width)
        self.x = s[:, 0].copy()
        self.y = s[:, 1].copy()
        self.psi = s[:, 2].copy()
        for arr in (self.x, self.y, self.psi):
            arr.setflags(write=False)
        self.is_static = bool(is_static)

    @property
    def poses(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.psi], axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, Agent)
            and self.id == other.id
            and self.half_length == other.half_length
            and self.half_width == other.half_width
            and self.is_static == other.is_static
            and np.array_equal(self.poses, other.poses)
        )


class TrafficLight:
    """Signal phase per tick for one intersection (codes from PHASE_*)."""

    __slots__ = ("intersection_id", "phases")

    def __init__(self, intersection_id, phases):
        p = np.asarray(phases, dtype=np.int8)
        if p.shape != (DENSE_TICKS,):
            raise ValueError(f"traffic light {intersection_id!r}: needs {DENSE_TICKS} phases")
        if not np.all((p >= PHASE_GREEN) & (p <= PHASE_RED)):
            raise ValueError(f"traffic light {intersection_id!r}: invalid phase code")
        self.intersection_id = intersection_id
        self.phases = p
        self.phases.setflags(write=False)

    def __eq__(self, other):
        return (
            isinstance(other, TrafficLight)
            and self.intersection_id == other.intersection_id
            and np.array_equal(self.phases, other.phases)
        )


@dataclass(frozen=True, eq=False)
class Lane:
    centerline: Polyline
    direction_sign: int  # +1: legal travel follows the centerline order, -1: against

    def __post_init__(self):
        if self.direction_sign not in (1, -1):
            raise ValueError("direction_sign must be +1 or -1")
        if len(self.centerline) < 2:
            raise ValueError("lane centerline needs at least 2 points")

    def __eq__(self, other):
        return (
            isinstance(other, Lane)
            and self.direction_sign == other.direction_sign
            and np.array_equal(self.centerline.points, other.centerline.points)
        )


@dataclass(frozen=True, eq=False)
class Intersection:
    polygon: Polygon
    light: TrafficLight

    def __eq__(self, other):
        return (
            isinstance(other, Intersection)
            and self.polygon == other.polygon
            and self.light == other.light
        )


@dataclass(eq=False)
class Scene:
    """Log-replayed world state for one 4 s scoring window."""

    scene_id: str
    ego_init: EgoState            # world frame
    ego_history: list             # >= 16 past EgoStates at 0.1 s, oldest first
    agents: list
    drivable: list                # list of Polygon, nonempty
    route: Polyline
    route_polygon: Polygon
    lanes: list
    intersections: list
    human_trajectory: Trajectory  # ego frame
    command: str = "forward"
    ego_half_length: float = 2.3
    ego_half_width: float = 0.95

    def __post_init__(self):
        if not self.drivable:
            raise ValueError("scene needs at least one drivable polygon")
        if arc_length(self.route) <= 0:
            raise ValueError("route must have positive arc length")
        if len(self.ego_history) < 16:
            raise ValueError("ego history needs at least 16 states (1.5 s plus margin)")
        if self.command not in COMMANDS:
            raise ValueError(f"command must be one of {COMMANDS}")
        if self.ego_half_length <= 0 or self.ego_half_width <= 0:
            raise ValueError("ego box extents must be positive")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.ego_init == other.ego_init
            and self.ego_history == other.ego_history
            and self.agents == other.agents
            and self.drivable == other.drivable
            and np.array_equal(self.route.points, other.route.points)
            and self.route_polygon == other.route_polygon
            and self.lanes == other.lanes
            and self.intersections == other.intersections
            and self.human_trajectory == other.human_trajectory
            and self.command == other.command
            and self.ego_half_length == other.ego_half_length
            and self.ego_half_width == other.ego_half_width
        )


@dataclass(frozen=True)
class SubScores:
    """The nine rule subscores plus the v1 comfort term, all in [0, 1]."""

    nc: float
    dac: float
    ddc: float
    tlc: float
    ep: float
    ttc: float
    lk: float
    hc: float
    ec: float
    c: float

    def __post_init__(self):
        for name in ("nc", "dac", "ddc", "tlc", "ep", "ttc", "lk", "hc", "ec", "c"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"subscore {name} out of [0, 1]: {val}")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("nc", "dac", "ddc", "tlc", "ep", "ttc", "lk", "hc", "ec", "c")}


@dataclass(frozen=True)
class AuxLabels:
    """Per-waypoint supervision targets derived by log-replay."""

    on_road: np.ndarray        # bool (M,)
    on_route: np.ndarray       # bool (M,)
    collision_prob: np.ndarray  # float (M,)


@dataclass(frozen=True)
class MetricConfig:
    """Every metric threshold, centralized so recalibration is config-only.

    The comfort bounds follow the nuPlan defaults.  lk_window_ticks is the
    number of 0.1 s ticks equated with the 1 s lane-keeping tolerance window;
    a violation run must exceed it to fail.
    """

    ddc_minor_m: float = 2.0
    ddc_major_m: float = 6.0
    lk_offset_m: float = 0.5
    lk_window_ticks: int = 10
    ec_pos_m: float = 1.0
    ec_heading_rad: float = 0.2
    ec_speed_mps: float = 2.0
    ttc_horizon_s: float = 1.0
    ttc_substeps: int = 10
    lon_accel_min: float = -4.05
    lon_accel_max: float = 2.40
    lat_accel_max: float = 4.89
    lon_jerk_max: float = 4.13
    jerk_max: float = 8.37
    yaw_rate_max: float = 0.95
    yaw_accel_max: float = 1.93
    ep_min_ref_progress_m: float = 0.1
    history_pad_ticks: int = 15
    corridor_width_m: float = 2.0
    grid_cell_m: float = 0.25


_DEFAULT_METRIC_CFG = MetricConfig()
_DEFAULT_KIN_CFG = KinematicsConfig()


class ScoreContext:
    """Per-scene precomputation shared across many rollout evaluations.

    The human reference rollout (needed by EP) is computed on first use.
    """

    __slots__ = (
        "scene", "metric_cfg", "kin_cfg",
        "agent_x", "agent_y", "agent_psi", "agent_hl", "agent_hw",
        "agent_vx", "agent_vy", "n_agents",
        "lane_dirs", "_reference", "_ref_progress",
        "hist_x", "hist_y", "hist_psi", "hist_v",
    )

    def __init__(self, scene: Scene, kin_cfg=None, metric_cfg=None, reference=None):
        self.scene = scene
        self.kin_cfg = kin_cfg or _DEFAULT_KIN_CFG
        self.metric_cfg = metric_cfg or _DEFAULT_METRIC_CFG

        agents = scene.agents
        self.n_agents = len(agents)
        if agents:
            self.agent_x = np.stack([a.x for a in agents])
            self.agent_y = np.stack([a.y for a in agents])
            self.agent_psi = np.stack([a.psi for a in agents])
            self.agent_hl = np.array([a.half_length for a in agents])[:, None]
            self.agent_hw = np.array([a.half_width for a in agents])[:, None]
            # replay velocity by forward difference, last tick repeats
            self.agent_vx = np.empty_like(self.agent_x)
            self.agent_vy = np.empty_like(self.agent_y)
            self.agent_vx[:, :-1] = np.diff(self.agent_x, axis=1) / TICK_DT
            self.agent_vy[:, :-1] = np.diff(self.agent_y, axis=1) / TICK_DT
            self.agent_vx[:, -1] = self.agent_vx[:, -2]
            self.agent_vy[:, -1] = self.agent_vy[:, -2]
        else:
            self.agent_x = self.agent_y = self.agent_psi = None
            self.agent_hl = self.agent_hw = self.agent_vx = self.agent_vy = None

        # per-lane unit tangents, signed by legal direction
        self.lane_dirs = []
        for lane in scene.lanes:
            d = np.diff(lane.centerline.points, axis=0)
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            self.lane_dirs.append(lane.direction_sign * d)

        hist = scene.ego_history[-self.metric_cfg.history_pad_ticks:]
        self.hist_x = np.array([s.pose.x for s in hist])
        self.hist_y = np.array([s.pose.y for s in hist])
        self.hist_psi = np.array([s.pose.psi for s in hist])
        self.hist_v = np.array([s.v for s in hist])

        self._reference = reference
        self._ref_progress = None

    @property
    def reference(self) -> DenseTrajectory:
        if self._reference is None:
            world_plan = trajectory_to_world(self.scene.human_trajectory, self.scene.ego_init.pose)
            self._reference = pid_track(world_plan, self.scene.ego_init, self.kin_cfg)
        return self._reference

    @property
    def ref_progress(self) -> float:
        if self._ref_progress is None:
            self._ref_progress = route_progress(self.reference, self.scene.route)
        return self._ref_progress


def _ctx(s) -> ScoreContext:
    return s if isinstance(s, ScoreContext) else ScoreContext(s)


def route_progress(d: DenseTrajectory, route: Polyline) -> float:
    """Arc length gained along the route between first and last rollout pose."""
    from .geom import project_many

    pts = np.array([[d.x[0], d.y[0]], [d.x[-1], d.y[-1]]])
    s, _, _, _ = project_many(route, pts)
    return float(s[1] - s[0])


def _ego_corners(d: DenseTrajectory, hl: float, hw: float) -> np.ndarray:
    """(41, 4, 2) world corners of the ego box along a rollout."""
    c, s = np.cos(d.psi), np.sin(d.psi)
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    cx = d.x[:, None] + local[:, 0] * c[:, None] - local[:, 1] * s[:, None]
    cy = d.y[:, None] + local[:, 0] * s[:, None] + local[:, 1] * c[:, None]
    return np.stack([cx, cy], axis=2)


def _ego_at_fault(ex, ey, epsi, ev, ax, ay, avx, avy):
    """The at-fault rule, elementwise: a received rear-end while not
    reversing (agent centered in the rear half-plane and closing at least as
    fast as the ego moves) is not the ego's fault; everything else is."""
    hx, hy = np.cos(epsi), np.sin(epsi)
    behind = (ax - ex) * hx + (ay - ey) * hy < 0
    closing = avx * hx + avy * hy
    return ~(behind & (ev <= closing))


def _onsets(overlap: np.ndarray) -> np.ndarray:
    """First tick of each contiguous overlap run along the last axis.

    Fault is judged where contact begins; replayed agents pass through the
    ego, so later ticks of the same contact are not fresh collisions.
    """
    onset = np.zeros_like(overlap)
    onset[..., 0] = overlap[..., 0]
    onset[..., 1:] = overlap[..., 1:] & ~overlap[..., :-1]
    return onset


def score_nc(d: DenseTrajectory, s) -> float:
    """No at-fault collision: 0 iff some contact onset is the ego's fault."""
    ctx = _ctx(s)
    if ctx.n_agents == 0:
        return 1.0
    overlap = obb_overlap_batch(
        d.x, d.y, d.psi, ctx.scene.ego_half_length, ctx.scene.ego_half_width,
        ctx.agent_x, ctx.agent_y, ctx.agent_psi, ctx.agent_hl, ctx.agent_hw,
    )
    if not overlap.any():
        return 1.0
    at_fault = _ego_at_fault(
        d.x, d.y, d.psi, d.v, ctx.agent_x, ctx.agent_y, ctx.agent_vx, ctx.agent_vy
    )
    return 0.0 if (at_fault & _onsets(overlap)).any() else 1.0


def score_dac(d: DenseTrajectory, s) -> float:
    """Drivable-area compliance: all ego corners inside the drivable union."""
    ctx = _ctx(s)
    corners = _ego_corners(d, ctx.scene.ego_half_length, ctx.scene.ego_half_width).reshape(-1, 2)
    covered = np.zeros(len(corners), dtype=bool)
    for poly in ctx.scene.drivable:
        covered |= points_in_polygon(corners, poly)
        if covered.all():
            return 1.0
    return 1.0 if covered.all() else 0.0


def _outside_intersections(ctx, pts: np.ndarray) -> np.ndarray:
    outside = np.ones(len(pts), dtype=bool)
    for inter in ctx.scene.intersections:
        outside &= ~points_in_polygon(pts, inter.polygon)
    return outside


def _lane_projections(ctx, pts: np.ndarray, heading: np.ndarray):
    """Per lane: distance to centerline and legal-direction alignment."""
    from .geom import project_many

    hx, hy = np.cos(heading), np.sin(heading)
    dists, aligned = [], []
    for lane, dirs in zip(ctx.scene.lanes, ctx.lane_dirs):
        _, _, dist, seg = project_many(lane.centerline, pts)
        tangent = dirs[seg]
        dists.append(dist)
        aligned.append(hx * tangent[:, 0] + hy * tangent[:, 1] > 0)
    return dists, aligned


def score_ddc(d: DenseTrajectory, s) -> float:
    """Driving-direction compliance, banded by wrong-way meters traveled."""
    ctx = _ctx(s)
    cfg = ctx.metric_cfg
    if not ctx.scene.lanes:
        return 1.0
    pts = d.xy
    dists, aligned = _lane_projections(ctx, pts, d.psi)
    nearest = np.argmin(np.stack(dists), axis=0)
    opposing = ~np.stack(aligned)[nearest, np.arange(DENSE_TICKS)]
    cond = opposing & _outside_intersections(ctx, pts)
    steps = np.hypot(np.diff(d.x), np.diff(d.y))
    wrong_way = float(np.sum(steps[cond[:-1]]))
    if wrong_way < cfg.ddc_minor_m:
        return 1.0
    if wrong_way < cfg.ddc_major_m:
        return 0.5
    return 0.0


def _box_in_polygon_per_tick(d: DenseTrajectory, hl, hw, poly: Polygon) -> np.ndarray:
    """Whether the ego box intersects the polygon, per tick (bool (41,))."""
    corners = _ego_corners(d, hl, hw)  # (41, 4, 2)
    corner_in = points_in_polygon(corners.reshape(-1, 2), poly).reshape(DENSE_TICKS, 4).any(axis=1)

    # polygon vertex inside the box, tested in the box frame
    v = poly.vertices
    c, s = np.cos(d.psi), np.sin(d.psi)
    dx = v[None, :, 0] - d.x[:, None]
    dy = v[None, :, 1] - d.y[:, None]
    lon = dx * c[:, None] + dy * s[:, None]
    lat = -dx * s[:, None] + dy * c[:, None]
    vert_in = ((np.abs(lon) <= hl) & (np.abs(lat) <= hw)).any(axis=1)

    # edge crossings between the 4 box edges and the polygon boundary
    p1 = corners[:, :, None, :]                       # (41, 4, 1, 2)
    p2 = np.roll(corners, -1, axis=1)[:, :, None, :]
    q1 = v[None, None, :, :]                          # (1, 1, E, 2)
    q2 = np.roll(v, -1, axis=0)[None, None, :, :]
    edge_cross = segments_intersect_batch(p1, p2, q1, q2).any(axis=(1, 2))
    return corner_in | vert_in | edge_cross


def score_tlc(d: DenseTrajectory, s) -> float:
    """Traffic-light compliance: only the tick of first entry is checked."""
    ctx = _ctx(s)
    hl, hw = ctx.scene.ego_half_length, ctx.scene.ego_half_width
    for inter in ctx.scene.intersections:
        inside = _box_in_polygon_per_tick(d, hl, hw, inter.polygon)
        entries = np.flatnonzero(inside[1:] & ~inside[:-1]) + 1
        if np.any(inter.light.phases[entries] != PHASE_GREEN):
            return 0.0
    return 1.0


def score_ep(d: DenseTrajectory, s, reference: DenseTrajectory | None = None) -> float:
    """Ego progress along the route relative to the reference rollout."""
    ctx = _ctx(s)
    ref_progress = ctx.ref_progress if reference is None else route_progress(reference, ctx.scene.route)
    if ref_progress < ctx.metric_cfg.ep_min_ref_progress_m:
        return 1.0
    ratio = route_progress(d, ctx.scene.route) / ref_progress
    return float(min(max(ratio, 0.0), 1.0))


def score_ttc(d: DenseTrajectory, s) -> float:
    """Time-to-collision: constant-velocity projection over a 1 s horizon."""
    ctx = _ctx(s)
    if ctx.n_agents == 0:
        return 1.0
    cfg = ctx.metric_cfg
    sub_dt = cfg.ttc_horizon_s / cfg.ttc_substeps
    horizon = (np.arange(1, cfg.ttc_substeps + 1) * sub_dt)[None, None, :]  # (1, 1, J)

    hx, hy = np.cos(d.psi), np.sin(d.psi)
    ex = d.x[None, :, None] + (d.v * hx)[None, :, None] * horizon   # (1, 41, J)
    ey = d.y[None, :, None] + (d.v * hy)[None, :, None] * horizon
    ax = ctx.agent_x[:, :, None] + ctx.agent_vx[:, :, None] * horizon  # (A, 41, J)
    ay = ctx.agent_y[:, :, None] + ctx.agent_vy[:, :, None] * horizon

    overlap = obb_overlap_batch(
        ex, ey, d.psi[None, :, None], ctx.scene.ego_half_length, ctx.scene.ego_half_width,
        ax, ay, ctx.agent_psi[:, :, None], ctx.agent_hl[:, :, None], ctx.agent_hw[:, :, None],
    )
    if not overlap.any():
        return 1.0
    # judge fault at the first overlapping substep of each tick's projection
    at_fault = _ego_at_fault(
        ex, ey, d.psi[None, :, None], d.v[None, :, None],
        ax, ay, ctx.agent_vx[:, :, None], ctx.agent_vy[:, :, None],
    )
    has_overlap = overlap.any(axis=2)
    first = np.argmax(overlap, axis=2)
    fault_at_first = np.take_along_axis(at_fault & overlap, first[:, :, None], axis=2)[:, :, 0]
    return 0.0 if (fault_at_first & has_overlap).any() else 1.0


def score_lk(d: DenseTrajectory, s) -> float:
    """Lane keeping: offset to the nearest same-direction centerline."""
    ctx = _ctx(s)
    cfg = ctx.metric_cfg
    if not ctx.scene.lanes:
        return 1.0
    pts = d.xy
    dists, aligned = _lane_projections(ctx, pts, d.psi)
    offset = np.full(DENSE_TICKS, np.inf)
    for dist, ok in zip(dists, aligned):
        offset = np.where(ok, np.minimum(offset, dist), offset)
    viol = (offset > cfg.lk_offset_m) & _outside_intersections(ctx, pts)

    run = longest = 0
    for flag in viol:
        run = run + 1 if flag else 0
        longest = max(longest, run)
    return 0.0 if longest > cfg.lk_window_ticks else 1.0


def score_hc(d: DenseTrajectory, s) -> float:
    """History comfort: nuPlan bounds over the 1.5 s-padded rollout."""
    ctx = _ctx(s)
    cfg = ctx.metric_cfg
    v = np.concatenate([ctx.hist_v, d.v])
    psi = np.concatenate([ctx.hist_psi, d.psi])
    prof = profiles_from_arrays(v, psi, TICK_DT)
    lon_jerk = finite_difference(prof.lon_accel, TICK_DT)
    ok = (
        prof.lon_accel.min() >= cfg.lon_accel_min
        and prof.lon_accel.max() <= cfg.lon_accel_max
        and np.abs(prof.lat_accel).max() <= cfg.lat_accel_max
        and np.abs(lon_jerk).max() <= cfg.lon_jerk_max
        and prof.jerk.max() <= cfg.jerk_max
        and np.abs(prof.yaw_rate).max() <= cfg.yaw_rate_max
        and np.abs(prof.yaw_accel).max() <= cfg.yaw_accel_max
    )
    return 1.0 if ok else 0.0


def score_ec(
    d_now: DenseTrajectory,
    d_prev: DenseTrajectory | None,
    frame_gap: int = 5,
    cfg: MetricConfig = _DEFAULT_METRIC_CFG,
) -> float:
    """Extended comfort: agreement with the previous frame's plan."""
    if d_prev is None:
        return 1.0
    if not 0 <= frame_gap < DENSE_TICKS:
        raise ValueError("frame_gap must be in [0, 41)")
    n = DENSE_TICKS - frame_gap
    dx = d_now.x[:n] - d_prev.x[frame_gap:]
    dy = d_now.y[:n] - d_prev.y[frame_gap:]
    dpsi = np.abs(np.remainder(d_now.psi[:n] - d_prev.psi[frame_gap:] + np.pi, 2 * np.pi) - np.pi)
    dv = np.abs(d_now.v[:n] - d_prev.v[frame_gap:])
    ok = (
        np.hypot(dx, dy).max() <= cfg.ec_pos_m
        and dpsi.max() <= cfg.ec_heading_rad
        and dv.max() <= cfg.ec_speed_mps
    )
    return 1.0 if ok else 0.0


def aggregate_pdms(sub: SubScores) -> float:
    """v1 aggregate: NC * DAC * (5*(EP + TTC) + 2*C) / 12."""
    return sub.nc * sub.dac * (5.0 * (sub.ep + sub.ttc) + 2.0 * sub.c) / 12.0


def aggregate_epdms(sub: SubScores) -> float:
    """v2 aggregate: NC * DAC * DDC * TLC * (5*(EP+TTC) + 2*(LK+HC+EC)) / 16."""
    return (
        sub.nc
        * sub.dac
        * sub.ddc
        * sub.tlc
        * (5.0 * (sub.ep + sub.ttc) + 2.0 * (sub.lk + sub.hc + sub.ec))
        / 16.0
    )


def evaluate_rollout(
    d: DenseTrajectory,
    s,
    d_prev: DenseTrajectory | None = None,
    frame_gap: int = 5,
) -> SubScores:
    """All nine subscores for one rollout; EC is vacuous without d_prev."""
    ctx = _ctx(s)
    hc = score_hc(d, ctx)
    return SubScores(
        nc=score_nc(d, ctx),
        dac=score_dac(d, ctx),
        ddc=score_ddc(d, ctx),
        tlc=score_tlc(d, ctx),
        ep=score_ep(d, ctx),
        ttc=score_ttc(d, ctx),
        lk=score_lk(d, ctx),
        hc=hc,
        ec=score_ec(d, d_prev, frame_gap, ctx.metric_cfg),
        c=hc,
    )


def aux_labels(plan: Trajectory, s) -> AuxLabels:
    """On-road/on-route flags and replay collision probability per waypoint."""
    ctx = _ctx(s)
    scene = ctx.scene
    world = trajectory_to_world(plan, scene.ego_init.pose)
    pts = world.xy
    m = len(pts)
    ticks = TICKS_PER_WAYPOINT * (np.arange(m) + 1)
    if ticks[-1] >= DENSE_TICKS:
        raise ValueError("plan horizon exceeds the 41-tick replay window")

    on_road = np.zeros(m, dtype=bool)
    for poly in scene.drivable:
        on_road |= points_in_polygon(pts, poly)
    on_route = points_in_polygon(pts, scene.route_polygon)

    collision = np.zeros(m)
    if ctx.n_agents:
        overlap = obb_overlap_batch(
            pts[:, 0], pts[:, 1], world.poses[:, 2],
            scene.ego_half_length, scene.ego_half_width,
            ctx.agent_x[:, ticks], ctx.agent_y[:, ticks], ctx.agent_psi[:, ticks],
            ctx.agent_hl, ctx.agent_hw,
        )
        collision = overlap.any(axis=0).astype(float)
    return AuxLabels(on_road=on_road, on_route=on_route, collision_prob=collision)


def _corridor_polyline(xy: np.ndarray) -> Polyline:
    """Waypoints as a polyline, dropping consecutive duplicates."""
    keep = [0]
    for i in range(1, len(xy)):
        if np.hypot(*(xy[i] - xy[keep[-1]])) > 1e-9:
            keep.append(i)
    return Polyline(xy[keep])


def diversity(proposals, cell_size: float = 0.25, width: float = 2.0) -> float:
    """One minus the mean corridor IoU of each proposal against the union."""
    proposals = list(proposals)
    if not proposals:
        raise ValueError("need at least one proposal")
    grids = [buffer_rasterize(_corridor_polyline(p.xy), width, cell_size) for p in proposals]
    union_count = grid_union(grids).count()
    ratios = np.array([g.count() / union_count for g in grids])
    return float(1.0 - ratios.mean())
