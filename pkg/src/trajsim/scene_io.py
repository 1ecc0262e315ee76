"""Scene persistence, synthetic scene generation, and shared file formats.

Scene files are JSON with units spelled out in the field names (``_m``,
``_rad``, ``_mps``).  The full schema is documented in the README.  Binary
formats (vocabulary, score matrix) live with their owning modules.

Synthetic templates replace recorded driving data at desk scale.  Each
template guarantees a documented ground-truth property for every seed:

  clean_straight   human rollout scores EPDMS >= 0.95
  parked_agent     human avoids the parked agent (NC=1); a straight
                   full-speed plan collides with it (NC=0)
  crossing_agent   the human plan is timed to clear the crossing gap (NC=1)
  red_light        human stops before the stop line (TLC=1); a non-stopping
                   full-speed plan enters on red (TLC=0)
  oncoming_lane    human incurs into the oncoming lane (DDC < 1)
  lane_drift       human holds an off-center offset long enough that LK=0
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import Polygon, Polyline, Pose, wrap_angle
from .seeding import stable_seed
from .kinematics import DENSE_TICKS, PLAN_DT, TICK_DT, EgoState, Trajectory
from .metrics import (
    PHASE_NAMES,
    PHASE_RED,
    Agent,
    Intersection,
    Lane,
    Scene,
    TrafficLight,
)

__all__ = [
    "SceneFormatError",
    "SyntheticSpec",
    "TEMPLATES",
    "save_scene",
    "load_scene",
    "generate_scene",
    "load_corpus",
    "transform_scene",
    "straight_plan",
    "load_trajectory_map",
    "save_trajectory_map",
    "load_proposal_set",
    "save_proposal_set",
    "load_proposal_frames",
    "load_score_frames",
]

SCHEMA_VERSION = 1

TEMPLATES = (
    "clean_straight",
    "parked_agent",
    "crossing_agent",
    "red_light",
    "oncoming_lane",
    "lane_drift",
)


class SceneFormatError(ValueError):
    """Raised when a scene file is malformed or violates an invariant."""


# ---------------------------------------------------------------------------
# JSON serialization


def _state_doc(s: EgoState) -> dict:
    return {
        "x_m": s.pose.x,
        "y_m": s.pose.y,
        "psi_rad": s.pose.psi,
        "speed_mps": s.v,
        "accel_mps2": s.a,
        "steer_rad": s.steer,
    }


def _state_from(doc: dict, where: str) -> EgoState:
    try:
        return EgoState(
            Pose(doc["x_m"], doc["y_m"], doc["psi_rad"]),
            doc["speed_mps"],
            doc["accel_mps2"],
            doc["steer_rad"],
        )
    except KeyError as exc:
        raise SceneFormatError(f"{where}: missing field {exc}") from None


def scene_to_doc(scene: Scene) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene.scene_id,
        "command": scene.command,
        "ego": {
            "half_length_m": scene.ego_half_length,
            "half_width_m": scene.ego_half_width,
            "init": _state_doc(scene.ego_init),
            "history": [_state_doc(s) for s in scene.ego_history],
        },
        "agents": [
            {
                "id": a.id,
                "half_length_m": a.half_length,
                "half_width_m": a.half_width,
                "is_static": a.is_static,
                "states": a.poses.tolist(),
            }
            for a in scene.agents
        ],
        "drivable_polygons_m": [p.vertices.tolist() for p in scene.drivable],
        "route_polyline_m": scene.route.points.tolist(),
        "route_polygon_m": scene.route_polygon.vertices.tolist(),
        "lanes": [
            {"centerline_m": lane.centerline.points.tolist(), "direction_sign": lane.direction_sign}
            for lane in scene.lanes
        ],
        "intersections": [
            {
                "polygon_m": inter.polygon.vertices.tolist(),
                "light": {
                    "intersection_id": inter.light.intersection_id,
                    "phase_per_tick": [PHASE_NAMES[p] for p in inter.light.phases],
                },
            }
            for inter in scene.intersections
        ],
        "human_trajectory_ego": {"waypoints": scene.human_trajectory.poses.tolist()},
    }


def scene_from_doc(doc: dict) -> Scene:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        ego = doc["ego"]
        agents = []
        for a in doc["agents"]:
            try:
                agents.append(
                    Agent(
                        id=a["id"],
                        half_length=a["half_length_m"],
                        half_width=a["half_width_m"],
                        states=np.asarray(a["states"], dtype=float),
                        is_static=a["is_static"],
                    )
                )
            except ValueError as exc:
                raise SceneFormatError(str(exc)) from None
        intersections = []
        for inter in doc["intersections"]:
            light = inter["light"]
            names = light["phase_per_tick"]
            try:
                phases = [PHASE_NAMES.index(n) for n in names]
            except ValueError:
                raise SceneFormatError(
                    f"intersection {light.get('intersection_id')!r}: bad phase in phase_per_tick"
                ) from None
            intersections.append(
                Intersection(
                    polygon=Polygon(inter["polygon_m"]),
                    light=TrafficLight(light["intersection_id"], phases),
                )
            )
        scene = Scene(
            scene_id=doc["scene_id"],
            ego_init=_state_from(ego["init"], "ego.init"),
            ego_history=[_state_from(s, "ego.history") for s in ego["history"]],
            agents=agents,
            drivable=[Polygon(v) for v in doc["drivable_polygons_m"]],
            route=Polyline(doc["route_polyline_m"]),
            route_polygon=Polygon(doc["route_polygon_m"]),
            lanes=[Lane(Polyline(l["centerline_m"]), l["direction_sign"]) for l in doc["lanes"]],
            intersections=intersections,
            human_trajectory=Trajectory(doc["human_trajectory_ego"]["waypoints"]),
            command=doc["command"],
            ego_half_length=ego["half_length_m"],
            ego_half_width=ego["half_width_m"],
        )
    except KeyError as exc:
        raise SceneFormatError(f"scene file missing field {exc}") from None
    except ValueError as exc:
        if isinstance(exc, SceneFormatError):
            raise
        raise SceneFormatError(str(exc)) from None
    return scene


def save_scene(scene: Scene, path) -> None:
    """Write a scene file; the write is atomic (temp file + rename)."""
    path = Path(path)
    data = json.dumps(scene_to_doc(scene), indent=2) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: not valid JSON ({exc})") from None
    return scene_from_doc(doc)


# ---------------------------------------------------------------------------
# rigid transforms


def _compose(frame: Pose, x, y, psi=None):
    c, s = math.cos(frame.psi), math.sin(frame.psi)
    nx = frame.x + c * np.asarray(x) - s * np.asarray(y)
    ny = frame.y + s * np.asarray(x) + c * np.asarray(y)
    if psi is None:
        return nx, ny
    return nx, ny, np.asarray(psi) + frame.psi


def _transform_points(frame: Pose, points: np.ndarray) -> np.ndarray:
    nx, ny = _compose(frame, points[:, 0], points[:, 1])
    return np.stack([nx, ny], axis=1)


def _transform_state(frame: Pose, st: EgoState) -> EgoState:
    nx, ny, npsi = _compose(frame, st.pose.x, st.pose.y, st.pose.psi)
    return EgoState(Pose(float(nx), float(ny), wrap_angle(float(npsi))), st.v, st.a, st.steer)


def transform_scene(scene: Scene, frame: Pose) -> Scene:
    """Rigidly transform all world-frame scene content by `frame`.

    The human trajectory is ego-frame and therefore unchanged.
    """
    agents = []
    for a in scene.agents:
        nx, ny, npsi = _compose(frame, a.x, a.y, a.psi)
        npsi = np.array([wrap_angle(p) for p in npsi])
        agents.append(Agent(a.id, a.half_length, a.half_width, np.stack([nx, ny, npsi], axis=1), a.is_static))
    return Scene(
        scene_id=scene.scene_id,
        ego_init=_transform_state(frame, scene.ego_init),
        ego_history=[_transform_state(frame, s) for s in scene.ego_history],
        agents=agents,
        drivable=[Polygon(_transform_points(frame, p.vertices)) for p in scene.drivable],
        route=Polyline(_transform_points(frame, scene.route.points)),
        route_polygon=Polygon(_transform_points(frame, scene.route_polygon.vertices)),
        lanes=[
            Lane(Polyline(_transform_points(frame, l.centerline.points)), l.direction_sign)
            for l in scene.lanes
        ],
        intersections=[
            Intersection(Polygon(_transform_points(frame, i.polygon.vertices)), i.light)
            for i in scene.intersections
        ],
        human_trajectory=scene.human_trajectory,
        command=scene.command,
        ego_half_length=scene.ego_half_length,
        ego_half_width=scene.ego_half_width,
    )


# ---------------------------------------------------------------------------
# synthetic templates


@dataclass(frozen=True)
class SyntheticSpec:
    """Template name, optional parameter pins, and the jitter seed.

    Pinned parameters must stay within each template's documented range;
    anything unpinned is drawn uniformly from that range.
    """

    template: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; known: {TEMPLATES}")


# documented parameter ranges per template
_RANGES = {
    "clean_straight": {"v0": (8.0, 12.0)},
    "parked_agent": {"v0": (7.0, 9.0), "gap_factor": (2.2, 3.0)},
    "crossing_agent": {"v0": (9.0, 11.0), "cross_x": (18.0, 22.0), "agent_y0": (18.0, 22.0), "agent_speed": (3.5, 4.5)},
    "red_light": {"v0": (7.0, 9.0), "stopline_x": (18.0, 22.0)},
    "oncoming_lane": {"v0": (8.0, 10.0), "incursion_t0": (0.8, 1.2)},
    "lane_drift": {"v0": (8.0, 10.0), "drift_m": (1.0, 1.4)},
}


def _draw_params(spec: SyntheticSpec, rng: np.random.Generator) -> dict:
    ranges = _RANGES[spec.template]
    unknown = set(spec.params) - set(ranges)
    if unknown:
        raise ValueError(f"unknown parameters for {spec.template}: {sorted(unknown)}")
    out = {}
    for name, (lo, hi) in ranges.items():
        if name in spec.params:
            val = float(spec.params[name])
            if not lo <= val <= hi:
                raise ValueError(f"{spec.template}.{name}={val} outside documented range [{lo}, {hi}]")
            out[name] = val
        else:
            out[name] = float(rng.uniform(lo, hi))
    return out


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _plan_from_profile(x_of_t, y_of_t, m: int = 8) -> Trajectory:
    """Sample waypoints from position profiles; headings from local tangents."""
    t = PLAN_DT * (np.arange(m) + 1)
    x = np.asarray(x_of_t(t), dtype=float)
    y = np.asarray(y_of_t(t), dtype=float)
    eps = 1e-3
    dx = np.asarray(x_of_t(t + eps)) - np.asarray(x_of_t(t - eps))
    dy = np.asarray(y_of_t(t + eps)) - np.asarray(y_of_t(t - eps))
    psi = np.arctan2(dy, dx)
    return Trajectory(np.stack([x, y, psi], axis=1))


def straight_plan(v: float, m: int = 8) -> Trajectory:
    """Constant-speed straight-ahead plan in the ego frame."""
    t = PLAN_DT * (np.arange(m) + 1)
    return Trajectory(np.stack([v * t, np.zeros(m), np.zeros(m)], axis=1))


def _history(v0: float, n: int = 16) -> list:
    """Constant-speed straight history ending one tick before t=0."""
    return [EgoState(Pose(-v0 * TICK_DT * j, 0.0, 0.0), v0, 0.0, 0.0) for j in range(n, 0, -1)]


def _road_polygon(x_lo, x_hi, y_lo, y_hi) -> Polygon:
    return Polygon([[x_lo, y_lo], [x_hi, y_lo], [x_hi, y_hi], [x_lo, y_hi]])


def _static_agent(agent_id, x, y, psi=0.0, hl=2.3, hw=0.95) -> Agent:
    states = np.tile([x, y, psi], (DENSE_TICKS, 1))
    return Agent(agent_id, hl, hw, states, is_static=True)


def _base_scene(scene_id, v0, human, lanes, drivable, route_band, agents=(), intersections=()):
    return Scene(
        scene_id=scene_id,
        ego_init=EgoState(Pose(0.0, 0.0, 0.0), v0, 0.0, 0.0),
        ego_history=_history(v0),
        agents=list(agents),
        drivable=drivable,
        route=Polyline([[-15.0, 0.0], [70.0, 0.0]]),
        route_polygon=route_band,
        lanes=lanes,
        intersections=list(intersections),
        human_trajectory=human,
        command="forward",
    )


def generate_scene(spec: SyntheticSpec) -> Scene:
    """Build a synthetic scene; deterministic for a fixed spec and seed.

    Scenes are constructed on a canonical straight road (ego at the origin
    heading +x) and then placed at a seed-dependent world pose, so world and
    ego frames never coincide by accident.
    """
    rng = np.random.default_rng(stable_seed("trajsim-scene", spec.template, spec.seed))
    p = _draw_params(spec, rng)
    builder = _BUILDERS[spec.template]
    scene = builder(f"{spec.template}-{spec.seed:05d}", p)
    world = Pose(rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0), rng.uniform(-math.pi, math.pi))
    return transform_scene(scene, world)


def _build_clean_straight(scene_id, p):
    v0 = p["v0"]
    human = straight_plan(v0)
    lanes = [Lane(Polyline([[-15.0, 0.0], [70.0, 0.0]]), 1)]
    drivable = [_road_polygon(-15.0, 70.0, -3.5, 3.5)]
    return _base_scene(scene_id, v0, human, lanes, drivable, _road_polygon(-15.0, 70.0, -3.5, 3.5))


def _build_parked_agent(scene_id, p):
    v0 = p["v0"]
    agent_x = p["gap_factor"] * v0
    lane_shift = 3.5
    t_change, t0 = 1.4, 0.0

    def y_of_t(t):
        return lane_shift * _smoothstep((np.asarray(t) - t0) / t_change)

    human = _plan_from_profile(lambda t: v0 * np.asarray(t), y_of_t)
    lanes = [
        Lane(Polyline([[-15.0, 0.0], [70.0, 0.0]]), 1),
        Lane(Polyline([[-15.0, lane_shift], [70.0, lane_shift]]), 1),
    ]
    drivable = [_road_polygon(-15.0, 70.0, -3.5, 7.0)]
    agent = _static_agent("parked-0", agent_x, 0.0)
    return _base_scene(
        scene_id, v0, human, lanes, drivable, _road_polygon(-15.0, 70.0, -3.5, 7.0), agents=[agent]
    )


def _build_crossing_agent(scene_id, p):
    v0 = p["v0"]
    cross_x, y0, va = p["cross_x"], p["agent_y0"], p["agent_speed"]
    human = straight_plan(v0)
    t = TICK_DT * np.arange(DENSE_TICKS)
    states = np.stack([np.full(DENSE_TICKS, cross_x), y0 - va * t, np.full(DENSE_TICKS, -math.pi / 2)], axis=1)
    agent = Agent("crossing-0", 2.3, 0.95, states, is_static=False)
    lanes = [Lane(Polyline([[-15.0, 0.0], [70.0, 0.0]]), 1)]
    drivable = [_road_polygon(-15.0, 70.0, -3.5, 3.5)]
    return _base_scene(
        scene_id, v0, human, lanes, drivable, _road_polygon(-15.0, 70.0, -3.5, 3.5), agents=[agent]
    )


def _build_red_light(scene_id, p):
    v0, stop_x = p["v0"], p["stopline_x"]
    x_stop = stop_x - 5.5  # rest position of the ego center, with controller overshoot margin
    decel = v0 * v0 / (2.0 * x_stop)
    t_stop = v0 / decel

    def x_of_t(t):
        t = np.asarray(t, dtype=float)
        moving = v0 * t - 0.5 * decel * t * t
        return np.where(t < t_stop, moving, x_stop)

    human = _plan_from_profile(x_of_t, lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    poly = _road_polygon(stop_x, stop_x + 12.0, -6.0, 6.0)
    light = TrafficLight("signal-0", np.full(DENSE_TICKS, PHASE_RED))
    lanes = [Lane(Polyline([[-15.0, 0.0], [70.0, 0.0]]), 1)]
    drivable = [_road_polygon(-15.0, 70.0, -6.0, 6.0)]
    return _base_scene(
        scene_id, v0, human, lanes, drivable, _road_polygon(-15.0, 70.0, -6.0, 6.0),
        intersections=[Intersection(poly, light)],
    )


def _build_oncoming_lane(scene_id, p):
    v0, t0 = p["v0"], p["incursion_t0"]
    lane_shift, t_change = 3.5, 1.0

    def y_of_t(t):
        return lane_shift * _smoothstep((np.asarray(t) - t0) / t_change)

    human = _plan_from_profile(lambda t: v0 * np.asarray(t), y_of_t)
    lanes = [
        Lane(Polyline([[-15.0, 0.0], [70.0, 0.0]]), 1),
        Lane(Polyline([[-15.0, lane_shift], [70.0, lane_shift]]), -1),
    ]
    drivable = [_road_polygon(-15.0, 70.0, -3.5, 7.0)]
    return _base_scene(scene_id, v0, human, lanes, drivable, _road_polygon(-15.0, 70.0, -3.5, 7.0))


def _build_lane_drift(scene_id, p):
    v0, drift = p["v0"], p["drift_m"]
    t0, t_change = 1.0, 0.8

    def y_of_t(t):
        return drift * _smoothstep((np.asarray(t) - t0) / t_change)

    human = _plan_from_profile(lambda t: v0 * np.asarray(t), y_of_t)
    lanes = [Lane(Polyline([[-15.0, 0.0], [70.0, 0.0]]), 1)]
    drivable = [_road_polygon(-15.0, 70.0, -3.5, 3.5)]
    return _base_scene(scene_id, v0, human, lanes, drivable, _road_polygon(-15.0, 70.0, -3.5, 3.5))


_BUILDERS = {
    "clean_straight": _build_clean_straight,
    "parked_agent": _build_parked_agent,
    "crossing_agent": _build_crossing_agent,
    "red_light": _build_red_light,
    "oncoming_lane": _build_oncoming_lane,
    "lane_drift": _build_lane_drift,
}


# ---------------------------------------------------------------------------
# corpus and auxiliary file formats


def load_corpus(directory):
    """Collect the ego-frame human trajectories of every scene under `directory`."""
    from .vocabulary import TrajectoryCorpus

    directory = Path(directory)
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no scene files (*.json) found under {directory}")
    return TrajectoryCorpus([load_scene(p).human_trajectory for p in paths])


def _traj_to_list(t: Trajectory):
    return t.poses.tolist()


def save_trajectory_map(trajs: dict, path) -> None:
    """Write a scene_id -> trajectory map ('*' applies to any scene)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "trajectories": {k: _traj_to_list(v) for k, v in trajs.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_trajectory_map(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported schema_version in {path}")
    return {k: Trajectory(v) for k, v in doc["trajectories"].items()}


def save_proposal_set(proposals, path) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "proposals": [_traj_to_list(p) for p in proposals]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_proposal_set(path) -> list:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported schema_version in {path}")
    return [Trajectory(p) for p in doc["proposals"]]


def load_proposal_frames(path) -> list:
    """[(scene_id, [Trajectory] proposals)] for frame-by-frame selection."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported schema_version in {path}")
    return [(f["scene_id"], [Trajectory(p) for p in f["proposals"]]) for f in doc["frames"]]


def load_score_frames(path) -> dict:
    """scene_id -> external score vector, aligned with proposal frames."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported schema_version in {path}")
    return {f["scene_id"]: np.asarray(f["scores"], dtype=float) for f in doc["frames"]}
