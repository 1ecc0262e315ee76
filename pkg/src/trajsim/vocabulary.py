"""Trajectory vocabulary: k-means over flattened (x, y) waypoint embeddings.

Clustering works on positions only; headings are reconstructed on the final
centers from consecutive displacement tangents (mixing radians into a metric
of meters would need an arbitrary scale).  The implementation is k-means++
seeding plus Lloyd iterations, with a deterministic chunked assignment step:
chunks may be processed by a thread pool, but labels are order-free and the
per-cluster reduction always runs in chunk-index order, so the result is
bitwise identical for any worker count.
"""

from __future__ import annotations

import csv
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import Trajectory

__all__ = [
    "FULL_SCALE_K",
    "DESK_SCALE_K",
    "TrajectoryCorpus",
    "Vocabulary",
    "embed",
    "embed_corpus",
    "headings_from_tangents",
    "kmeans",
    "nearest_center",
    "save_vocabulary",
    "load_vocabulary",
    "export_vocabulary_csv",
]

_MAGIC = b"TVOC"
_VERSION = 1
_CHUNK = 4096  # fixed assignment chunk size; must not depend on worker count

# vocabulary sizes balancing coverage against batch-scoring cost
FULL_SCALE_K = 8192
DESK_SCALE_K = 256


class TrajectoryCorpus:
    """Ego-frame trajectories with a common waypoint count."""

    __slots__ = ("items",)

    def __init__(self, items):
        items = list(items)
        if not items:
            raise ValueError("corpus is empty")
        m = items[0].m
        if any(t.m != m for t in items):
            raise ValueError("corpus trajectories must share one waypoint count")
        self.items = items

    @property
    def count(self) -> int:
        return len(self.items)

    @property
    def m(self) -> int:
        return self.items[0].m

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class Vocabulary:
    """K cluster-center trajectories plus the clustering provenance."""

    centers: list
    k: int
    seed: int
    inertia: float
    inertia_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.k < 1 or len(self.centers) != self.k:
            raise ValueError("vocabulary must hold exactly k centers, k >= 1")

    @property
    def m(self) -> int:
        return self.centers[0].m

    def embeddings(self) -> np.ndarray:
        return np.stack([embed(c) for c in self.centers])


def embed(t: Trajectory) -> np.ndarray:
    """Flatten the M (x, y) waypoints into a length-2M feature vector."""
    return t.xy.reshape(-1).copy()


def embed_corpus(corpus: TrajectoryCorpus) -> np.ndarray:
    return np.stack([embed(t) for t in corpus.items])


def headings_from_tangents(xy: np.ndarray) -> np.ndarray:
    """Headings from consecutive displacements; the last copies its neighbor."""
    d = np.diff(xy, axis=0)
    psi = np.arctan2(d[:, 1], d[:, 0])
    return np.concatenate([psi, psi[-1:]]) if len(psi) else np.zeros(1)


def _center_to_trajectory(vec: np.ndarray, m: int) -> Trajectory:
    xy = vec.reshape(m, 2)
    return Trajectory(np.column_stack([xy, headings_from_tangents(xy)]))


def _chunk_ranges(n: int):
    return [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]


def _assign_chunk(x_chunk, centers, k):
    """Labels, per-cluster sums/counts, and inertia for one chunk."""
    d2 = (
        np.sum(x_chunk * x_chunk, axis=1)[:, None]
        - 2.0 * x_chunk @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    # recompute the chosen distance directly: the expansion above can go
    # slightly negative from cancellation
    chosen = x_chunk - centers[labels]
    dist2 = np.sum(chosen * chosen, axis=1)
    sums = np.zeros_like(centers)
    np.add.at(sums, labels, x_chunk)
    counts = np.bincount(labels, minlength=k)
    return labels, sums, counts, float(dist2.sum()), dist2


def kmeans(
    corpus: TrajectoryCorpus,
    k: int,
    max_iters: int = 100,
    seed: int = 0,
    workers: int = 1,
) -> Vocabulary:
    """k-means++ seeded Lloyd clustering, deterministic for a fixed seed.

    Stops at an assignment fixed point or after `max_iters`.  Clusters that
    empty out are re-seeded to the point currently farthest from its center
    (successive farthest points when several empty at once).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if corpus.count < k:
        raise ValueError(f"corpus has {corpus.count} trajectories but k={k}")
    x = embed_corpus(corpus)
    n = len(x)
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))

    ranges = _chunk_ranges(n)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        prev_labels = None
        history = []
        for _ in range(max_iters):
            if pool is None:
                parts = [_assign_chunk(x[lo:hi], centers, k) for lo, hi in ranges]
            else:
                parts = list(pool.map(lambda r: _assign_chunk(x[r[0] : r[1]], centers, k), ranges))
            labels = np.concatenate([p[0] for p in parts])
            # reduce in chunk-index order so results never depend on scheduling
            sums = np.zeros_like(centers)
            counts = np.zeros(k, dtype=np.int64)
            inertia = 0.0
            for _, s, c, part_inertia, _ in parts:
                sums += s
                counts += c
                inertia += part_inertia
            history.append(inertia)
            if prev_labels is not None and np.array_equal(labels, prev_labels):
                break
            prev_labels = labels

            empty = np.flatnonzero(counts == 0)
            if len(empty):
                dist2 = np.concatenate([p[4] for p in parts])
                order = np.argsort(-dist2, kind="stable")
                cursor = 0
                for cluster in empty:
                    # take the farthest point whose donor keeps >= 1 member
                    while counts[labels[order[cursor]]] <= 1:
                        cursor += 1
                    idx = int(order[cursor])
                    cursor += 1
                    old = labels[idx]
                    sums[old] -= x[idx]
                    counts[old] -= 1
                    sums[cluster] = x[idx]
                    counts[cluster] = 1
                    labels[idx] = cluster
                prev_labels = labels
            centers = sums / counts[:, None]
    finally:
        if pool is not None:
            pool.shutdown()

    m = corpus.m
    return Vocabulary(
        centers=[_center_to_trajectory(c, m) for c in centers],
        k=k,
        seed=seed,
        inertia=history[-1],
        inertia_history=tuple(history),
    )


def nearest_center(vocab: Vocabulary, t: Trajectory):
    """(index, distance) of the closest center in embed space; ties take the
    lowest index."""
    q = embed(t)
    c = vocab.embeddings()
    diff = c - q
    d2 = np.einsum("ij,ij->i", diff, diff)
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


# ---------------------------------------------------------------------------
# persistence: binary header {magic, version, K, M, seed} + K*M*3 float64 LE


_HEADER = struct.Struct("<4sIIIq")


def save_vocabulary(vocab: Vocabulary, path) -> None:
    data = np.stack([c.poses for c in vocab.centers]).astype("<f8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, vocab.k, vocab.m, vocab.seed))
        f.write(data.tobytes())


def load_vocabulary(path) -> Vocabulary:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated vocabulary file")
    magic, version, k, m, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported vocabulary version {version}")
    expected = _HEADER.size + k * m * 3 * 8
    if len(raw) != expected:
        raise ValueError(f"{path}: size {len(raw)} does not match header (expected {expected})")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(k, m, 3)
    centers = [Trajectory(data[i]) for i in range(k)]
    return Vocabulary(centers=centers, k=k, seed=seed, inertia=float("nan"))


def export_vocabulary_csv(vocab: Vocabulary, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["center", "waypoint", "x_m", "y_m", "psi_rad"])
        for ci, center in enumerate(vocab.centers):
            for wi, (x, y, psi) in enumerate(center.poses):
                writer.writerow([ci, wi, repr(float(x)), repr(float(y)), repr(float(psi))])
