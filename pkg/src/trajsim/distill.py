"""Batch vocabulary scoring, pseudo-teacher mining, and the distillation loss.

score_vocabulary is the throughput-critical path: every (scene, center) cell
places the ego-frame center at the scene's ego pose, tracks it with the PID
bicycle, and aggregates the EPDMS subscores.  Work is distributed per scene
row across a process pool; rows land at fixed offsets keyed by scene index,
so the result is bitwise identical for any worker count, and an optional
checkpoint makes long runs resumable one scene row at a time.
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kinematics import KinematicsConfig, Trajectory, pid_track, trajectory_to_world
from .metrics import MetricConfig, Scene, ScoreContext, aggregate_epdms, evaluate_rollout
from .seeding import stable_seed
from .vocabulary import Vocabulary

__all__ = [
    "ScoreMatrix",
    "PseudoTeacherSet",
    "DistillConfig",
    "score_scene_row",
    "score_vocabulary",
    "resolve_workers",
    "select_pseudo_teachers",
    "distill_loss",
    "save_score_matrix",
    "load_score_matrix",
    "save_teacher_sets",
    "load_teacher_sets",
]

_MAGIC = b"TSCR"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class ScoreMatrix:
    """EPDMS of every vocabulary center against every scene, (S, K) in [0, 1]."""

    scene_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != len(self.scene_ids):
            raise ValueError("values must be (n_scenes, k)")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        v.setflags(write=False)

    @property
    def n_scenes(self) -> int:
        return self.values.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PseudoTeacherSet:
    """High-scoring vocabulary trajectories mined for one scene."""

    scene_id: str
    trajectories: tuple
    source_indices: tuple
    scores: tuple

    def __post_init__(self):
        if not (len(self.trajectories) == len(self.source_indices) == len(self.scores)):
            raise ValueError("teacher fields must have equal lengths")

    def __len__(self):
        return len(self.trajectories)


@dataclass(frozen=True)
class DistillConfig:
    threshold: float = 0.95
    n_pseudo: int = 4
    discount: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        if self.n_pseudo < 0:
            raise ValueError("n_pseudo must be non-negative")


# ---------------------------------------------------------------------------
# batch scoring


def score_scene_row(
    scene: Scene,
    vocab: Vocabulary,
    kin_cfg: KinematicsConfig | None = None,
    metric_cfg: MetricConfig | None = None,
) -> np.ndarray:
    """EPDMS of every center against one scene (the unit of parallel work)."""
    ctx = ScoreContext(scene, kin_cfg, metric_cfg)
    out = np.empty(vocab.k)
    for i, center in enumerate(vocab.centers):
        plan = trajectory_to_world(center, scene.ego_init.pose)
        rollout = pid_track(plan, scene.ego_init, ctx.kin_cfg)
        out[i] = aggregate_epdms(evaluate_rollout(rollout, ctx))
    return out


def resolve_workers(workers: int | None) -> int:
    """Effective worker count: an explicit value wins, else TRAJSIM_THREADS, else 1."""
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("TRAJSIM_THREADS")
    return max(1, int(env)) if env else 1


class _Checkpoint:
    """Row-granular resume state: the matrix file plus a .done sidecar."""

    def __init__(self, path, n_scenes: int, k: int):
        self.path = Path(path)
        self.done_path = self.path.with_name(self.path.name + ".done")
        self.n_scenes = n_scenes
        self.k = k
        self.row_bytes = k * 8

    def load_done(self) -> dict:
        """{scene_index: row} for rows already completed in a previous run."""
        if not (self.path.exists() and self.done_path.exists()):
            self.path.write_bytes(
                _HEADER.pack(_MAGIC, _VERSION, self.n_scenes, self.k)
                + b"\x00" * (self.n_scenes * self.row_bytes)
            )
            self.done_path.write_text("")
            return {}
        raw = self.path.read_bytes()
        magic, version, s, k = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION or s != self.n_scenes or k != self.k:
            raise ValueError(
                f"{self.path}: existing checkpoint does not match this run "
                f"(header {magic!r} v{version} {s}x{k}, expected {self.n_scenes}x{self.k})"
            )
        done = {}
        for line in self.done_path.read_text().split():
            idx = int(line)
            off = _HEADER.size + idx * self.row_bytes
            done[idx] = np.frombuffer(raw, dtype="<f8", count=self.k, offset=off).copy()
        return done

    def write_row(self, idx: int, row: np.ndarray) -> None:
        with open(self.path, "r+b") as f:
            f.seek(_HEADER.size + idx * self.row_bytes)
            f.write(row.astype("<f8").tobytes())
        with open(self.done_path, "a") as f:
            f.write(f"{idx}\n")


def score_vocabulary(
    scenes,
    vocab: Vocabulary,
    workers: int | None = None,
    checkpoint=None,
    kin_cfg: KinematicsConfig | None = None,
    metric_cfg: MetricConfig | None = None,
    progress=None,
) -> ScoreMatrix:
    """Score every (scene, center) pair; bitwise stable across worker counts.

    `checkpoint` names a score-matrix file to maintain incrementally; rerun
    with the same arguments to resume after an interruption.  `progress` is
    an optional callable invoked with (scene_index,) as rows complete.
    """
    scenes = list(scenes)
    if not scenes or vocab.k < 1:
        raise ValueError("need at least one scene and one vocabulary center")
    workers = resolve_workers(workers)

    ckpt = _Checkpoint(checkpoint, len(scenes), vocab.k) if checkpoint else None
    rows: dict[int, np.ndarray] = ckpt.load_done() if ckpt else {}
    todo = [i for i in range(len(scenes)) if i not in rows]

    def finish(idx: int, row: np.ndarray):
        rows[idx] = row
        if ckpt:
            ckpt.write_row(idx, row)
        if progress:
            progress(idx)

    if workers == 1:
        for idx in todo:
            finish(idx, score_scene_row(scenes[idx], vocab, kin_cfg, metric_cfg))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                idx: pool.submit(score_scene_row, scenes[idx], vocab, kin_cfg, metric_cfg)
                for idx in todo
            }
            for idx, fut in futures.items():
                finish(idx, fut.result())

    values = np.stack([rows[i] for i in range(len(scenes))])
    return ScoreMatrix(scene_ids=tuple(s.scene_id for s in scenes), values=values)


# ---------------------------------------------------------------------------
# pseudo-teacher mining


def select_pseudo_teachers(
    row: np.ndarray,
    vocab: Vocabulary,
    cfg: DistillConfig,
    scene_id: str,
) -> PseudoTeacherSet:
    """Rank-and-threshold mining of one scene's score row.

    All centers at or above the threshold are candidates.  When more than
    n_pseudo qualify, n_pseudo are drawn uniformly without replacement from a
    generator seeded by (rng_seed, scene_id); the draw never depends on call
    order.  No candidates gives an empty set (the human term stands alone).
    """
    row = np.asarray(row, dtype=float)
    if row.shape != (vocab.k,):
        raise ValueError(f"row length {row.shape} does not match vocabulary size {vocab.k}")
    candidates = np.flatnonzero(row >= cfg.threshold)
    if len(candidates) > cfg.n_pseudo:
        rng = np.random.default_rng(stable_seed("pseudo-teachers", cfg.rng_seed, scene_id))
        chosen = rng.choice(candidates, size=cfg.n_pseudo, replace=False)
        candidates = np.sort(chosen)
    return PseudoTeacherSet(
        scene_id=scene_id,
        trajectories=tuple(vocab.centers[i] for i in candidates),
        source_indices=tuple(int(i) for i in candidates),
        scores=tuple(float(row[i]) for i in candidates),
    )


# ---------------------------------------------------------------------------
# distillation loss


def _traj_xy(t: Trajectory, m: int) -> np.ndarray:
    if t.m != m:
        raise ValueError(f"trajectory has {t.m} waypoints, expected {m}")
    return t.xy.reshape(-1)


def distill_loss(proposals_per_iter, human: Trajectory, pseudo, discount: float = 0.1) -> float:
    """Discounted min-over-proposals distance to the human and each teacher.

    Per refinement iteration l (1..L, later iterations weighted discount^(L-l)),
    the minimum over proposals is taken independently for the human trajectory
    and for every pseudo-teacher; distances are Euclidean over the flattened
    (x, y) waypoints, headings excluded.
    """
    iters = [list(props) for props in proposals_per_iter]
    if not iters or any(not props for props in iters):
        raise ValueError("need at least one iteration with at least one proposal")
    m = human.m
    targets = [_traj_xy(human, m)]
    teachers = pseudo.trajectories if isinstance(pseudo, PseudoTeacherSet) else list(pseudo)
    targets.extend(_traj_xy(t, m) for t in teachers)
    target_mat = np.stack(targets)  # (1 + P, 2M)

    total = 0.0
    L = len(iters)
    for ell, props in enumerate(iters, start=1):
        prop_mat = np.stack([_traj_xy(p, m) for p in props])  # (N, 2M)
        diff = target_mat[:, None, :] - prop_mat[None, :, :]
        dists = np.sqrt(np.einsum("tnk,tnk->tn", diff, diff))
        total += discount ** (L - ell) * float(dists.min(axis=1).sum())
    return total


# ---------------------------------------------------------------------------
# persistence


def save_score_matrix(matrix: ScoreMatrix, path) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, matrix.n_scenes, matrix.vocab_size))
        f.write(matrix.values.astype("<f8").tobytes())


def load_score_matrix(path, scene_ids=None) -> ScoreMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated score matrix")
    magic, version, s, k = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported score-matrix version {version}")
    expected = _HEADER.size + s * k * 8
    if len(raw) != expected:
        raise ValueError(f"{path}: size {len(raw)} does not match header")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(s, k).copy()
    if scene_ids is None:
        scene_ids = tuple(str(i) for i in range(s))
    return ScoreMatrix(scene_ids=tuple(scene_ids), values=values)


def save_teacher_sets(teacher_sets, path) -> None:
    """One JSON record per line: {scene_id, indices, scores}."""
    with open(path, "w") as f:
        for ts in teacher_sets:
            f.write(
                json.dumps(
                    {
                        "scene_id": ts.scene_id,
                        "indices": list(ts.source_indices),
                        "scores": list(ts.scores),
                    }
                )
                + "\n"
            )


def load_teacher_sets(path, vocab: Vocabulary) -> list:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        idx = doc["indices"]
        out.append(
            PseudoTeacherSet(
                scene_id=doc["scene_id"],
                trajectories=tuple(vocab.centers[i] for i in idx),
                source_indices=tuple(idx),
                scores=tuple(doc["scores"]),
            )
        )
    return out
